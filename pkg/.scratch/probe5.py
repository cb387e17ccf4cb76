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

def run(attention, distill, label_len=None, epochs=25):
    mcfg = GiNetConfig(t_in=100, t_out=10, label_len=label_len, variant="informer",
        gru=GruConfig(3, 32, 2, 0.1),
        informer=InformerConfig(d_model=32, n_heads=4, d_ff=64, e_layers=2,
                                d_layers=1, use_probsparse=attention == "probsparse",
                                use_distill=distill, sampling_factor=5))
    tcfg = TrainConfig(batch_size=32, lr=1e-2, max_epochs=epochs, patience=epochs,
                       lr_decay=0.95, use_scheduler=True, seed=0)
    t0 = time.time()
    res = train(mcfg, tcfg, ds.windows("train"), ds.windows("val"), ds.norm_stats)
    rep = evaluate(res.checkpoint.build_model(), ds.windows("test"), batch_size=32)
    tr_first = res.history[0].train_loss
    tr_last = res.history[-1].train_loss
    print(f"attn={attention:10s} distill={int(distill)} label={label_len}: "
          f"train {tr_first:.4f}->{tr_last:.4f} best_val={res.checkpoint.best_val_loss:.5f} "
          f"test_mae={rep.mae:.5f} ({time.time()-t0:.0f}s)", flush=True)

run("full", False)
run("full", True)
run("probsparse", True)
