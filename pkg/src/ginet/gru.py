"""Gated recurrent unit feature extractor.

A stack of GRU layers runs over the input window and a weight-shared affine
map projects every slot's hidden state back to the raw feature width, so the
output aligns elementwise with the input for fusion.  Gate convention:

    z = sigmoid(x W_z + h U_z + b_z)
    r = sigmoid(x W_r + h U_r + b_r)
    h~ = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h + z * h~

Dropout is applied between stacked layers in training mode only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


@dataclass
class GruConfig:
    input_dim: int = 3
    hidden_dim: int = 1024
    num_layers: int = 2
    dropout: float = 0.2

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_dim": self.hidden_dim,
                "num_layers": self.num_layers, "dropout": self.dropout}

    @classmethod
    def from_dict(cls, d: dict) -> "GruConfig":
        return cls(**d)


class GruCell:
    """One GRU layer's parameters and its single-step transition."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(hidden_dim)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w_z = T.uniform_param(rng, (input_dim, hidden_dim), bound)
        self.u_z = T.uniform_param(rng, (hidden_dim, hidden_dim), bound)
        self.b_z = T.uniform_param(rng, (hidden_dim,), bound)
        self.w_r = T.uniform_param(rng, (input_dim, hidden_dim), bound)
        self.u_r = T.uniform_param(rng, (hidden_dim, hidden_dim), bound)
        self.b_r = T.uniform_param(rng, (hidden_dim,), bound)
        self.w_h = T.uniform_param(rng, (input_dim, hidden_dim), bound)
        self.u_h = T.uniform_param(rng, (hidden_dim, hidden_dim), bound)
        self.b_h = T.uniform_param(rng, (hidden_dim,), bound)

    def parameters(self) -> dict[str, Tensor]:
        return {"w_z": self.w_z, "u_z": self.u_z, "b_z": self.b_z,
                "w_r": self.w_r, "u_r": self.u_r, "b_r": self.b_r,
                "w_h": self.w_h, "u_h": self.u_h, "b_h": self.b_h}

    def step(self, x: Tensor, h_prev: Tensor) -> Tensor:
        """One transition; x is (batch, input_dim), h_prev is (batch, hidden)."""
        if x.shape[-1] != self.input_dim or h_prev.shape[-1] != self.hidden_dim:
            raise ShapeError(f"gru step: got x {x.shape}, h {h_prev.shape}, "
                             f"expected widths ({self.input_dim}, {self.hidden_dim})")
        z = T.sigmoid(T.matmul(x, self.w_z) + T.matmul(h_prev, self.u_z) + self.b_z)
        r = T.sigmoid(T.matmul(x, self.w_r) + T.matmul(h_prev, self.u_r) + self.b_r)
        cand = T.tanh(T.matmul(x, self.w_h) + T.matmul(r * h_prev, self.u_h) + self.b_h)
        return (1.0 - z) * h_prev + z * cand


class GruEncoder:
    """Stacked GRU with a per-slot projection back to the input feature width."""

    def __init__(self, config: GruConfig, rng: np.random.Generator):
        self.config = config
        self.cells = []
        in_dim = config.input_dim
        for _ in range(config.num_layers):
            self.cells.append(GruCell(in_dim, config.hidden_dim, rng))
            in_dim = config.hidden_dim
        # the projection starts at zero so the extracted features enter the
        # fusion sum as an identity-preserving branch and grow in as trained
        self.w_proj = T.zeros_param((config.hidden_dim, config.input_dim))
        self.b_proj = T.zeros_param((config.input_dim,))
        self.rng = rng

    def parameters(self) -> dict[str, Tensor]:
        params = {}
        for i, cell in enumerate(self.cells):
            for name, p in cell.parameters().items():
                params[f"layer{i}.{name}"] = p
        params["proj.weight"] = self.w_proj
        params["proj.bias"] = self.b_proj
        return params

    def hidden_sequence(self, x: Tensor, training: bool) -> tuple[Tensor, Tensor]:
        """Run the stack over (batch, t_in, input_dim).

        Returns the top layer's per-slot hidden states (batch, t_in, hidden)
        and its final hidden state (batch, hidden).  Layers hand whole
        per-slot tensors to each other so no intermediate sequence tensor is
        sliced apart again.
        """
        batch, t_in, in_dim = x.shape
        if t_in == 0:
            raise ShapeError("gru forward needs at least one time slot")
        steps = [T.reshape(T.slice_axis(x, 1, t, t + 1), (batch, in_dim))
                 for t in range(t_in)]
        h = None
        for layer, cell in enumerate(self.cells):
            h = Tensor(np.zeros((batch, cell.hidden_dim)))
            outs = []
            for x_t in steps:
                h = cell.step(x_t, h)
                outs.append(h)
            if layer < len(self.cells) - 1:
                outs = [T.dropout(o, self.config.dropout, training, self.rng)
                        for o in outs]
            steps = outs
        hidden = self.cells[-1].hidden_dim
        seq = T.concat([T.reshape(o, (batch, 1, hidden)) for o in steps], axis=1)
        return seq, h

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        """Per-slot features with the same shape as the input window."""
        seq, _ = self.hidden_sequence(x, training)
        return T.matmul(seq, self.w_proj) + self.b_proj
