"""Training loop, metrics, checkpointing and the evaluation protocol.

Training minimises mean squared error over the full horizon vector with
Adam, decaying the learning rate once per epoch when the scheduler is on,
and stops early once validation loss has not improved for `patience`
epochs.  Reported metrics compare horizon-averaged predictions against
horizon-averaged ground truth.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import NormStats, _read_container, _write_container
from .errors import ConfigError, DivergenceError, ShapeError
from .model import GiNet, GiNetConfig
from .tensor import Tensor

_MAGIC_CHECKPOINT = b"GINETCK1"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-4
    max_epochs: int = 20
    patience: int = 3
    lr_decay: float = 0.5
    use_scheduler: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")

    def to_dict(self) -> dict:
        return {"batch_size": self.batch_size, "lr": self.lr,
                "max_epochs": self.max_epochs, "patience": self.patience,
                "lr_decay": self.lr_decay, "use_scheduler": self.use_scheduler,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def epoch_lr(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch index."""
        if not self.use_scheduler:
            return self.lr
        return self.lr * self.lr_decay ** (epoch - 1)


# ---------------------------------------------------------------------------
# losses and metrics


def mse_loss(pred: Tensor, truth: Tensor) -> Tensor:
    """Differentiable mean of squared elementwise differences."""
    if pred.shape != truth.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {truth.shape}")
    return T.tmean(T.square(pred - truth))


def mae(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute error between two equal-length vectors."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ShapeError(f"mae needs equal non-empty vectors, got {pred.shape} "
                         f"vs {truth.shape}")
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Root mean squared error between two equal-length vectors."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ShapeError(f"rmse needs equal non-empty vectors, got {pred.shape} "
                         f"vs {truth.shape}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


# ---------------------------------------------------------------------------
# optimiser


class Adam:
    """Adaptive-moment gradient descent over a named parameter dict."""

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m += (1.0 - self.beta1) * (p.grad - m)
            v += (1.0 - self.beta2) * (p.grad * p.grad - v)
            p.data -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# checkpoint container


@dataclass
class Checkpoint:
    """Trained parameters with everything needed to reproduce evaluation."""

    params: dict[str, np.ndarray]
    norm_stats: NormStats
    model_config: GiNetConfig
    train_config: TrainConfig
    best_val_loss: float
    best_epoch: int
    config_digest: str = ""

    def build_model(self) -> GiNet:
        model = GiNet(self.model_config, np.random.default_rng(0))
        model.load_state_arrays(self.params)
        return model


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    header = {
        "format": "ginet-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config_digest": ckpt.config_digest,
        "model_config": ckpt.model_config.to_dict(),
        "train_config": ckpt.train_config.to_dict(),
        "norm_stats": ckpt.norm_stats.to_dict(),
        "best_val_loss": ckpt.best_val_loss,
        "best_epoch": ckpt.best_epoch,
    }
    names = sorted(ckpt.params)
    _write_container(Path(path), _MAGIC_CHECKPOINT, header,
                     [(n, ckpt.params[n]) for n in names])


def load_checkpoint(path: str | Path) -> Checkpoint:
    header, arrays = _read_container(Path(path), _MAGIC_CHECKPOINT)
    if header["version"] != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {header['version']}")
    return Checkpoint(
        params=arrays,
        norm_stats=NormStats.from_dict(header["norm_stats"]),
        model_config=GiNetConfig.from_dict(header["model_config"]),
        train_config=TrainConfig.from_dict(header["train_config"]),
        best_val_loss=header["best_val_loss"],
        best_epoch=header["best_epoch"],
        config_digest=header["config_digest"],
    )


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochLog] = field(default_factory=list)


def _batch_tensors(x: np.ndarray, y: np.ndarray, t0: np.ndarray,
                   model: GiNet) -> tuple[Tensor, Tensor, np.ndarray]:
    return Tensor(x), Tensor(y), model.window_timestamps(t0)


def _dataset_loss(model: GiNet, x: np.ndarray, y: np.ndarray, t0: np.ndarray,
                  batch_size: int) -> float:
    total, count = 0.0, 0
    with T.no_grad():
        for lo in range(0, len(x), batch_size):
            hi = min(lo + batch_size, len(x))
            bx, by, ts = _batch_tensors(x[lo:hi], y[lo:hi], t0[lo:hi], model)
            pred = model.forward(bx, ts, training=False)
            total += float(np.sum((pred.data - by.data) ** 2))
            count += by.data.size
    return total / count


def train(model_config: GiNetConfig, train_cfg: TrainConfig,
          train_windows: tuple[np.ndarray, np.ndarray, np.ndarray],
          val_windows: tuple[np.ndarray, np.ndarray, np.ndarray],
          norm_stats: NormStats, config_digest: str = "",
          log_hook=None) -> TrainResult:
    """Train from scratch; deterministic for a fixed seed.

    `train_windows` and `val_windows` are (x, y, t_origin) array triples.
    Returns the checkpoint of the best validation epoch.  Raises
    DivergenceError as soon as a non-finite loss shows up.
    """
    x_tr, y_tr, t0_tr = train_windows
    x_va, y_va, t0_va = val_windows
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ConfigError("training and validation splits must be non-empty")

    rng = np.random.default_rng(train_cfg.seed)
    model = GiNet(model_config, rng)
    optimiser = Adam(model.parameters())

    best_val = np.inf
    best_epoch = 0
    best_params = model.state_arrays()
    since_improvement = 0
    history: list[EpochLog] = []

    for epoch in range(1, train_cfg.max_epochs + 1):
        lr = train_cfg.epoch_lr(epoch)
        order = rng.permutation(len(x_tr))
        epoch_loss, n_batches = 0.0, 0
        for lo in range(0, len(order), train_cfg.batch_size):
            sel = order[lo:lo + train_cfg.batch_size]
            bx, by, ts = _batch_tensors(x_tr[sel], y_tr[sel], t0_tr[sel], model)
            optimiser.zero_grad()
            loss = mse_loss(model.forward(bx, ts, training=True), by)
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(f"epoch {epoch}: training loss became "
                                      f"{value}; aborting")
            T.backward(loss)
            optimiser.step(lr)
            epoch_loss += value
            n_batches += 1

        val_loss = _dataset_loss(model, x_va, y_va, t0_va, train_cfg.batch_size)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"epoch {epoch}: validation loss became "
                                  f"{val_loss}; aborting")
        entry = EpochLog(epoch, epoch_loss / n_batches, val_loss, lr)
        history.append(entry)
        if log_hook is not None:
            log_hook(entry)

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = model.state_arrays()
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= train_cfg.patience:
                break

    ckpt = Checkpoint(params=best_params, norm_stats=norm_stats,
                      model_config=model_config, train_config=train_cfg,
                      best_val_loss=float(best_val), best_epoch=best_epoch,
                      config_digest=config_digest)
    return TrainResult(checkpoint=ckpt, history=history)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    """Horizon-averaged metrics over a set of windows."""

    mae: float
    rmse: float
    n_windows: int
    config_digest: str
    t_origins: np.ndarray
    predictions: np.ndarray  # horizon-averaged soc per window
    truths: np.ndarray


def evaluate(model: GiNet, windows: tuple[np.ndarray, np.ndarray, np.ndarray],
             batch_size: int = 32, config_digest: str = "",
             threads: int | None = None) -> EvalReport:
    """Forward every window in eval mode and score the horizon means.

    Thread fan-out is capped by the GINET_THREADS environment variable
    (default 1); results are reduced in window order either way.
    """
    x, y, t0 = windows
    if len(x) == 0:
        raise ShapeError("cannot evaluate an empty window set")
    if x.shape[1] != model.config.t_in or y.shape[1] != model.config.t_out:
        raise ShapeError(f"windows ({x.shape[1]}, {y.shape[1]}) do not match model "
                         f"(t_in={model.config.t_in}, t_out={model.config.t_out})")
    if threads is None:
        threads = max(1, int(os.environ.get("GINET_THREADS", "1")))

    spans = [(lo, min(lo + batch_size, len(x))) for lo in range(0, len(x), batch_size)]

    def run(span):
        lo, hi = span
        bx, _, ts = _batch_tensors(x[lo:hi], y[lo:hi], t0[lo:hi], model)
        with T.no_grad():
            return model.forward(bx, ts, training=False).data

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            horizon = np.concatenate(list(pool.map(run, spans)), axis=0)
    else:
        horizon = np.concatenate([run(s) for s in spans], axis=0)

    pred_avg = horizon.mean(axis=1)
    truth_avg = y.mean(axis=1)
    return EvalReport(mae=mae(pred_avg, truth_avg), rmse=rmse(pred_avg, truth_avg),
                      n_windows=len(x), config_digest=config_digest,
                      t_origins=t0.copy(), predictions=pred_avg, truths=truth_avg)
