"""Longer-training probe for the ordering experiment."""
import sys, time
import numpy as np
from ginet.data import build_prepared_dataset
from ginet.gru import GruConfig
from ginet.informer import InformerConfig
from ginet.model import GiNetConfig
from ginet.synthetic import generate_cycles
from ginet.training import TrainConfig, evaluate, train

T_IN, T_OUT = 100, 10

def prepare():
    cycles = generate_cycles(20, 220, seed=42)
    return build_prepared_dataset(cycles, T_IN, T_OUT, slot_seconds=1.0,
                                  stride=4, ratio=(10, 2, 5), seed=0)

def model_cfg(variant, attention="probsparse", distill=True):
    return GiNetConfig(
        t_in=T_IN, t_out=T_OUT, variant=variant,
        gru=GruConfig(input_dim=3, hidden_dim=32, num_layers=2, dropout=0.1),
        informer=InformerConfig(d_model=32, n_heads=4, d_ff=64, e_layers=2,
                                d_layers=1, use_probsparse=attention == "probsparse",
                                use_distill=distill, sampling_factor=5))

ds = prepare()
for variant in ("ginet", "informer", "gru"):
    for seed in (0, 1):
        tcfg = TrainConfig(batch_size=32, lr=2e-3, max_epochs=20, patience=5,
                           lr_decay=0.85, use_scheduler=True, seed=seed)
        t0 = time.time()
        result = train(model_cfg(variant), tcfg, ds.windows("train"),
                       ds.windows("val"), ds.norm_stats)
        report = evaluate(result.checkpoint.build_model(), ds.windows("test"),
                          batch_size=32)
        print(f"{variant:9s} seed={seed} epochs={len(result.history)} "
              f"val={result.checkpoint.best_val_loss:.5f} "
              f"test_mae={report.mae:.5f} ({time.time()-t0:.0f}s)", flush=True)
