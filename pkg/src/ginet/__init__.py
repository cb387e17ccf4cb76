"""Battery state-of-charge forecasting with a GRU-enhanced attention model.

The package covers the whole pipeline: ingesting battery telemetry,
deriving labels, windowing, a from-scratch autodiff tensor engine, the
recurrent + sparse-attention forecasting model, training with evaluation
protocol, and a CLI with an attention cost benchmark.
"""

from .data import (BatteryRecord, Cycle, NormStats, PreparedDataset,
                   WindowSample, apply_normalize, build_prepared_dataset,
                   derive_soc, fit_normalize, load_dataset, make_windows,
                   parse_cycle_csv, parse_dataset, save_dataset, split_cycles)
from .gru import GruConfig, GruEncoder
from .informer import (InformerConfig, build_decoder_input, full_attention,
                       positional_encoding, probsparse_attention,
                       sparsity_measure)
from .model import GiNet, GiNetConfig, average_horizon, fuse
from .synthetic import generate_cycles
from .tensor import ComputeGraph, Tensor, active_graph, backward, no_grad
from .training import (Adam, Checkpoint, EvalReport, TrainConfig, evaluate,
                       load_checkpoint, mae, mse_loss, rmse, save_checkpoint,
                       train)

__version__ = "0.1.0"

__all__ = [
    "Adam", "BatteryRecord", "Checkpoint", "ComputeGraph", "Cycle",
    "EvalReport", "GiNet", "GiNetConfig", "GruConfig", "GruEncoder",
    "InformerConfig", "NormStats", "PreparedDataset", "Tensor", "TrainConfig",
    "WindowSample", "active_graph", "apply_normalize", "average_horizon",
    "backward", "build_decoder_input", "build_prepared_dataset", "derive_soc",
    "evaluate", "fit_normalize", "full_attention", "fuse", "generate_cycles",
    "load_checkpoint", "load_dataset", "mae", "make_windows", "mse_loss",
    "no_grad", "parse_cycle_csv", "parse_dataset", "positional_encoding",
    "probsparse_attention", "rmse", "save_checkpoint", "save_dataset",
    "sparsity_measure", "split_cycles", "train",
]
