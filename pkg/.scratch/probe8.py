import sys, time
import numpy as np
from ginet.data import build_prepared_dataset
from ginet.gru import GruConfig
from ginet.informer import InformerConfig
from ginet.model import GiNetConfig
from ginet.synthetic import generate_cycles
from ginet.training import TrainConfig, evaluate, train

cycles = generate_cycles(20, 220, seed=42)
ds = build_prepared_dataset(cycles, 100, 10, slot_seconds=1.0, stride=4,
                            ratio=(10, 2, 5), seed=0)

def run(variant, seed, attention="probsparse", distill=True):
    mcfg = GiNetConfig(t_in=100, t_out=10, variant=variant,
        gru=GruConfig(3, 32, 2, 0.1),
        informer=InformerConfig(d_model=32, n_heads=4, d_ff=64, e_layers=2,
                                d_layers=1, use_probsparse=attention == "probsparse",
                                use_distill=distill, sampling_factor=5))
    tcfg = TrainConfig(batch_size=8, lr=1e-2, max_epochs=50, patience=50,
                       lr_decay=0.97, use_scheduler=True, seed=seed)
    t0 = time.time()
    res = train(mcfg, tcfg, ds.windows("train"), ds.windows("val"), ds.norm_stats)
    model = res.checkpoint.build_model()
    test = evaluate(model, ds.windows("test"), batch_size=32)
    val = evaluate(model, ds.windows("val"), batch_size=32)
    print(f"{variant:9s} seed={seed} attn={attention:10s} distill={int(distill)} "
          f"best_val={res.checkpoint.best_val_loss:.5f} "
          f"val_mae={val.mae:.5f} test_mae={test.mae:.5f} ({time.time()-t0:.0f}s)",
          flush=True)
    return test.mae, val.mae

for seed in (0, 1, 2):
    run("ginet", seed)
