"""End-to-end model: GRU features fused with the raw window feed an
encoder/decoder attention stack that predicts the battery's state of charge
over the forecast horizon.

Three variants share the surface:

* ``ginet``     - fused features F = GRU(X) + X drive the attention stack;
* ``informer``  - the fusion branch is bypassed, F = X;
* ``gru``       - the recurrent stack's last hidden state feeds an affine
                  head straight to the horizon.

A window's horizon estimate is the arithmetic mean of its per-slot outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .gru import GruConfig, GruEncoder
from .informer import (DataEmbedding, Decoder, Encoder, InformerConfig,
                       OutputHead, build_decoder_input)
from .tensor import Tensor

VARIANTS = ("ginet", "informer", "gru")


@dataclass
class GiNetConfig:
    t_in: int = 100
    t_out: int = 10
    label_len: int | None = None  # defaults to t_in // 2
    slot_seconds: float = 1.0
    variant: str = "ginet"
    gru: GruConfig = field(default_factory=GruConfig)
    informer: InformerConfig = field(default_factory=InformerConfig)

    def __post_init__(self):
        if self.label_len is None:
            self.label_len = self.t_in // 2
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, "
                              f"expected one of {VARIANTS}")
        if not 0 <= self.label_len <= self.t_in:
            raise ConfigError(f"label_len {self.label_len} must lie in "
                              f"[0, t_in={self.t_in}]")
        if self.t_in < 1 or self.t_out < 1:
            raise ConfigError("t_in and t_out must be positive")

    def to_dict(self) -> dict:
        return {"t_in": self.t_in, "t_out": self.t_out,
                "label_len": self.label_len, "slot_seconds": self.slot_seconds,
                "variant": self.variant, "gru": self.gru.to_dict(),
                "informer": self.informer.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GiNetConfig":
        d = dict(d)
        d["gru"] = GruConfig.from_dict(d["gru"])
        d["informer"] = InformerConfig.from_dict(d["informer"])
        return cls(**d)


def fuse(gru_features: Tensor, window: Tensor) -> Tensor:
    """Elementwise sum of extracted features and the raw window."""
    if gru_features.shape != window.shape:
        raise ShapeError(f"fusion shapes differ: {gru_features.shape} vs "
                         f"{window.shape}")
    return gru_features + window


def average_horizon(horizon: np.ndarray) -> float:
    """Scalar state-of-charge estimate: the mean over the horizon slots."""
    horizon = np.asarray(horizon, dtype=np.float64)
    if horizon.size == 0:
        raise ShapeError("cannot average an empty horizon")
    return float(horizon.mean())


class GiNet:
    """Forecasting model; construction draws every weight from `rng`."""

    def __init__(self, config: GiNetConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(0)
        feats = config.gru.input_dim
        self.gru = (GruEncoder(config.gru, self.rng)
                    if config.variant in ("ginet", "gru") else None)
        if config.variant == "gru":
            bound = 1.0 / np.sqrt(config.gru.hidden_dim)
            self.head_w = T.uniform_param(self.rng,
                                          (config.gru.hidden_dim, config.t_out), bound)
            self.head_b = T.uniform_param(self.rng, (config.t_out,), bound)
            self.enc_embedding = self.dec_embedding = None
            self.encoder = self.decoder = self.output_head = None
        else:
            self.head_w = self.head_b = None
            self.enc_embedding = DataEmbedding(feats, config.informer.d_model, self.rng)
            self.dec_embedding = DataEmbedding(feats, config.informer.d_model, self.rng)
            self.encoder = Encoder(config.informer, self.rng)
            self.decoder = Decoder(config.informer, self.rng)
            self.output_head = OutputHead(config.informer.d_model, self.rng)

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        if self.gru is not None:
            params.update({f"gru.{k}": p for k, p in self.gru.parameters().items()})
        if self.config.variant == "gru":
            params["head.weight"] = self.head_w
            params["head.bias"] = self.head_b
            return params
        for prefix, part in (("enc_embedding", self.enc_embedding),
                             ("dec_embedding", self.dec_embedding),
                             ("encoder", self.encoder), ("decoder", self.decoder),
                             ("output", self.output_head)):
            params.update({f"{prefix}.{k}": p for k, p in part.parameters().items()})
        return params

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.parameters().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) ^ set(arrays)
        if missing:
            raise ConfigError(f"parameter names do not match: {sorted(missing)[:4]}")
        for name, p in params.items():
            if p.data.shape != arrays[name].shape:
                raise ShapeError(f"parameter {name}: shape {arrays[name].shape} "
                                 f"does not fit {p.data.shape}")
            p.data[...] = arrays[name]

    def window_timestamps(self, t_origins: np.ndarray) -> np.ndarray:
        """Slot timestamps (batch, t_in + t_out) covering window and horizon."""
        offsets = np.arange(-self.config.t_in, self.config.t_out)
        return (np.asarray(t_origins)[:, None] + offsets) * self.config.slot_seconds

    def forward(self, x: Tensor, timestamps: np.ndarray,
                training: bool = False) -> Tensor:
        """Predict (batch, t_out) horizon soc from a (batch, t_in, 3) window.

        `timestamps` is (batch, t_in + t_out): the window's slot times followed
        by the horizon's.  Targets are never an input to this path.
        """
        cfg = self.config
        batch, t_in, _ = x.shape
        if t_in != cfg.t_in:
            raise ShapeError(f"window length {t_in} does not match configured "
                             f"t_in {cfg.t_in}")
        timestamps = np.asarray(timestamps, dtype=np.float64)
        if timestamps.shape != (batch, cfg.t_in + cfg.t_out):
            raise ShapeError(f"timestamps shape {timestamps.shape}, expected "
                             f"({batch}, {cfg.t_in + cfg.t_out})")
        sample_rng = self.rng if training else None

        if cfg.variant == "gru":
            _, last_hidden = self.gru.hidden_sequence(x, training)
            return T.matmul(last_hidden, self.head_w) + self.head_b

        if cfg.variant == "ginet":
            fused = fuse(self.gru.forward(x, training), x)
        else:
            fused = x

        enc_ts = timestamps[:, :cfg.t_in]
        enc_in = self.enc_embedding(fused, enc_ts)
        enc_out = self.encoder(enc_in, rng=sample_rng)

        recent = T.slice_axis(fused, 1, cfg.t_in - cfg.label_len, cfg.t_in)
        dec_seq = build_decoder_input(recent, cfg.t_out)
        dec_ts = timestamps[:, cfg.t_in - cfg.label_len:]
        dec_in = self.dec_embedding(dec_seq, dec_ts)
        dec_out = self.decoder(dec_in, enc_out, rng=sample_rng)
        return self.output_head(dec_out, cfg.t_out)
