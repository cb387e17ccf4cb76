"""Probe: variant ordering and ablation direction on the synthetic set."""
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

def run(variant, seed, attention="probsparse", distill=True, epochs=8):
    ds = prepare()
    tcfg = TrainConfig(batch_size=32, lr=1e-3, max_epochs=epochs, patience=3,
                       lr_decay=0.7, use_scheduler=True, seed=seed)
    t0 = time.time()
    result = train(model_cfg(variant, attention, distill), tcfg,
                   ds.windows("train"), ds.windows("val"), ds.norm_stats)
    model = result.checkpoint.build_model()
    report = evaluate(model, ds.windows("test"), batch_size=32)
    dt = time.time() - t0
    print(f"{variant:9s} seed={seed} attn={attention:10s} distill={distill} "
          f"val={result.checkpoint.best_val_loss:.5f} test_mae={report.mae:.5f} "
          f"({dt:.0f}s)", flush=True)
    return report.mae, result.checkpoint.best_val_loss

if __name__ == "__main__":
    which = sys.argv[1] if len(sys.argv) > 1 else "order"
    seeds = [0, 1, 2]
    if which == "order":
        for variant in ("ginet", "informer", "gru"):
            maes = [run(variant, s)[0] for s in seeds]
            print(f"== {variant}: mean test MAE {np.mean(maes):.5f}", flush=True)
    else:
        for attention, distill in (("probsparse", True), ("full", False)):
            vals = [run("ginet", s, attention, distill)[1] for s in seeds]
            print(f"== {attention}/distill={distill}: mean val {np.mean(vals):.6f}",
                  flush=True)
