import sys, time
import numpy as np
from ginet.data import build_prepared_dataset
from ginet.gru import GruConfig
from ginet.informer import InformerConfig
from ginet.model import GiNetConfig
from ginet.synthetic import generate_cycles
from ginet.training import TrainConfig, evaluate, train

which = sys.argv[1]
cycles = generate_cycles(20, 220, seed=42)

def run(t_in, batch, lr, epochs, attention="full", distill=True, seed=0):
    ds = build_prepared_dataset(cycles, t_in, 10, slot_seconds=1.0, stride=4,
                                ratio=(10, 2, 5), seed=0)
    mcfg = GiNetConfig(t_in=t_in, t_out=10, variant="informer",
        gru=GruConfig(3, 32, 2, 0.1),
        informer=InformerConfig(d_model=32, n_heads=4, d_ff=64, e_layers=2,
                                d_layers=1, use_probsparse=attention == "probsparse",
                                use_distill=distill, sampling_factor=5))
    tcfg = TrainConfig(batch_size=batch, lr=lr, max_epochs=epochs, patience=epochs,
                       lr_decay=0.97, use_scheduler=True, seed=seed)
    t0 = time.time()
    hist = []
    res = train(mcfg, tcfg, ds.windows("train"), ds.windows("val"), ds.norm_stats,
                log_hook=lambda e: hist.append(e.train_loss))
    rep = evaluate(res.checkpoint.build_model(), ds.windows("test"), batch_size=32)
    curve = [f"{v:.4f}" for v in hist[::max(1, len(hist)//8)]]
    print(f"t_in={t_in} batch={batch} lr={lr} ep={epochs}: curve {curve} "
          f"best_val={res.checkpoint.best_val_loss:.5f} test_mae={rep.mae:.5f} "
          f"({time.time()-t0:.0f}s)", flush=True)

if which == "A":
    run(100, 8, 1e-2, 50)
elif which == "B":
    run(100, 32, 3e-2, 80)
elif which == "C":
    run(12, 32, 1e-2, 40)
