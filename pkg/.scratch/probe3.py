import time
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

def cfg(variant):
    return GiNetConfig(t_in=100, t_out=10, variant=variant,
        gru=GruConfig(3, 32, 2, 0.1),
        informer=InformerConfig(d_model=32, n_heads=4, d_ff=64, e_layers=2,
                                d_layers=1, sampling_factor=5))

for lr in (5e-3, 1e-2, 2e-2):
    tcfg = TrainConfig(batch_size=32, lr=lr, max_epochs=30, patience=8,
                       lr_decay=0.92, use_scheduler=True, seed=0)
    t0 = time.time()
    res = train(cfg("informer"), tcfg, ds.windows("train"), ds.windows("val"),
                ds.norm_stats)
    rep = evaluate(res.checkpoint.build_model(), ds.windows("test"), batch_size=32)
    print(f"informer lr={lr}: epochs={len(res.history)} "
          f"val={res.checkpoint.best_val_loss:.5f} mae={rep.mae:.5f} "
          f"({time.time()-t0:.0f}s)", flush=True)
