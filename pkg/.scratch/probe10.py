import sys
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


def run(variant, seed, batch, lr, epochs, dropout=0.0, decay=0.97):
    mcfg = GiNetConfig(t_in=100, t_out=10, variant=variant,
                       gru=GruConfig(3, 32, 2, dropout),
                       informer=InformerConfig(d_model=32, n_heads=4, d_ff=64,
                                               e_layers=2, d_layers=1,
                                               sampling_factor=5))
    tcfg = TrainConfig(batch_size=batch, lr=lr, max_epochs=epochs,
                       patience=epochs, lr_decay=decay, use_scheduler=True,
                       seed=seed)
    t0 = time.time()
    res = train(mcfg, tcfg, ds.windows("train"), ds.windows("val"), ds.norm_stats)
    model = res.checkpoint.build_model()
    test = evaluate(model, ds.windows("test"), batch_size=32)
    print(f"{variant:9s} seed={seed} b={batch} lr={lr} ep={epochs} "
          f"drop={dropout}: best_val={res.checkpoint.best_val_loss:.5f} "
          f"test_mae={test.mae:.5f} ({time.time()-t0:.0f}s)", flush=True)
    return test.mae


which = sys.argv[1]
if which == "b16":
    run("ginet", 1, 16, 1e-2, 60)
    run("ginet", 0, 16, 1e-2, 60)
    run("ginet", 2, 16, 1e-2, 60)
elif which == "b32":
    run("ginet", 1, 32, 1.5e-2, 80)
