"""Informer building blocks: embedding, sparse attention, encoder, decoder.

Attention comes in two flavours over (batch, heads, length, d_head) tensors:
full scaled dot-product attention, and a sparse variant that gives exact
attention only to the queries whose score distribution is most peaked (as
ranked by a max-minus-mean sparsity measure) while the remaining queries
fall back to the mean of the values (or the cumulative mean under a causal
mask).  The encoder can interleave a convolution + pooling stage between
layers that halves the sequence length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor

LAYER_NORM_EPS = 1e-5

# fixed source for key subsampling outside training, keeping inference
# deterministic; training passes its own generator
_EVAL_SAMPLE_SEED = 0x5EED


@dataclass
class InformerConfig:
    d_model: int = 512
    n_heads: int = 8
    d_ff: int = 2048
    e_layers: int = 2
    d_layers: int = 1
    use_probsparse: bool = True
    use_distill: bool = True
    sampling_factor: int = 5

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by "
                              f"n_heads {self.n_heads}")
        if self.e_layers < 1 or self.d_layers < 1:
            raise ConfigError("need at least one encoder and one decoder layer")

    def to_dict(self) -> dict:
        return {"d_model": self.d_model, "n_heads": self.n_heads,
                "d_ff": self.d_ff, "e_layers": self.e_layers,
                "d_layers": self.d_layers, "use_probsparse": self.use_probsparse,
                "use_distill": self.use_distill,
                "sampling_factor": self.sampling_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "InformerConfig":
        return cls(**d)


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.weight = T.fan_in_param(rng, (in_dim, out_dim), in_dim)
        self.bias = T.fan_in_param(rng, (out_dim,), in_dim)

    def __call__(self, x: Tensor) -> Tensor:
        return T.matmul(x, self.weight) + self.bias

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class LayerNorm:
    def __init__(self, dim: int):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = T.zeros_param(dim)

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, eps=LAYER_NORM_EPS)

    def parameters(self) -> dict[str, Tensor]:
        return {"gain": self.gain, "bias": self.bias}


# ---------------------------------------------------------------------------
# attention primitives


def full_attention(q: Tensor, k: Tensor, v: Tensor, causal_mask: bool = False) -> Tensor:
    """Softmax(q k^T / sqrt(d)) v over (batch, heads, length, d_head).

    Causal masking sends future positions to -inf before the softmax.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention shapes disagree: q {q.shape}, k {k.shape}, "
                         f"v {v.shape}")
    d_head = q.shape[-1]
    scores = T.scale(T.matmul(q, T.permute(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d_head))
    if causal_mask:
        l_q, l_k = q.shape[-2], k.shape[-2]
        mask = np.where(np.arange(l_k)[None, :] > np.arange(l_q)[:, None], -np.inf, 0.0)
        scores = scores + Tensor(mask)
    return T.matmul(T.softmax(scores), v)


def sparsity_measure(query: np.ndarray, keys: np.ndarray) -> float:
    """Max-minus-mean of one query's scaled scores against a key set.

    Zero iff every score is equal; large values mean a peaked, informative
    attention row.
    """
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] < 1:
        raise ShapeError(f"need a (length, d_head) key matrix, got {keys.shape}")
    scores = keys @ np.asarray(query, dtype=np.float64) / math.sqrt(keys.shape[1])
    return float(scores.max() - scores.mean())


def _top_queries(q_data: np.ndarray, k_data: np.ndarray, u: int, sample_k: int,
                 exact_m: bool, rng: np.random.Generator) -> np.ndarray:
    """Indices (batch, heads, u) of the queries with the largest sparsity
    measure, ties broken toward the lower index.  The measure is estimated on
    `sample_k` random keys per query unless exact_m is set."""
    b, h, l_q, d_head = q_data.shape
    l_k = k_data.shape[2]
    graph = T.active_graph()
    if exact_m or sample_k >= l_k:
        scores = q_data @ np.swapaxes(k_data, -1, -2) / math.sqrt(d_head)
        graph.add_macs(b * h * l_q * l_k * d_head)
    else:
        # one random key subset per query, shared across batch and heads
        idx = np.stack([rng.choice(l_k, size=sample_k, replace=False)
                        for _ in range(l_q)])
        k_sub = k_data[:, :, idx, :]                      # (b, h, l_q, sample_k, d)
        scores = np.einsum("bhld,bhlsd->bhls", q_data, k_sub,
                           optimize=True) / math.sqrt(d_head)
        graph.add_macs(b * h * l_q * sample_k * d_head)
    m = scores.max(axis=-1) - scores.mean(axis=-1)
    order = np.argsort(-m, axis=-1, kind="stable")
    return np.sort(order[..., :u], axis=-1)


def probsparse_attention(q: Tensor, k: Tensor, v: Tensor,
                         sampling_factor: int = 5, causal_mask: bool = False,
                         exact_m: bool = False,
                         rng: np.random.Generator | None = None) -> Tensor:
    """Sparse attention over (batch, heads, length, d_head).

    The top u = min(L_q, c * ceil(ln L_q)) queries by sparsity measure get
    exact attention; every other query's output row is the mean of the
    values, or the cumulative mean up to its position under a causal mask.
    With exact_m the measure uses all keys instead of a random subset of
    c * ceil(ln L_k) keys per query.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention shapes disagree: q {q.shape}, k {k.shape}, "
                         f"v {v.shape}")
    l_q, l_k = q.shape[-2], k.shape[-2]
    d_head = q.shape[-1]
    c = sampling_factor
    u = min(l_q, c * math.ceil(math.log(l_q)) if l_q > 1 else 0)
    sample_k = min(l_k, c * math.ceil(math.log(l_k)) if l_k > 1 else 1)

    if causal_mask:
        if l_q != l_k:
            raise ShapeError("causal sparse attention needs matching lengths")
        counts = Tensor((1.0 / np.arange(1, l_k + 1))[:, None])
        baseline = T.cumsum_rows(v) * counts
    else:
        baseline = T.tmean(v, axis=-2, keepdims=True) + Tensor(np.zeros((l_q, 1)))

    if u == 0:
        return baseline

    gen = rng if rng is not None else np.random.default_rng(_EVAL_SAMPLE_SEED)
    with T.no_grad():
        top_idx = _top_queries(q.data, k.data, u, sample_k, exact_m, gen)

    q_top = T.gather_rows(q, top_idx)
    scores = T.scale(T.matmul(q_top, T.permute(k, (0, 1, 3, 2))),
                     1.0 / math.sqrt(d_head))
    if causal_mask:
        mask = np.where(np.arange(l_k)[None, None, None, :] > top_idx[..., None],
                        -np.inf, 0.0)
        scores = scores + Tensor(mask)
    exact = T.matmul(T.softmax(scores), v)
    return T.scatter_rows(baseline, top_idx, exact)


class AttentionBlock:
    """Multi-head attention with learned q/k/v/output projections."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator, *,
                 use_probsparse: bool, sampling_factor: int, causal: bool):
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.use_probsparse = use_probsparse
        self.sampling_factor = sampling_factor
        self.causal = causal
        self.w_q = Linear(d_model, d_model, rng)
        self.w_k = Linear(d_model, d_model, rng)
        self.w_v = Linear(d_model, d_model, rng)
        self.w_o = Linear(d_model, d_model, rng)

    def parameters(self) -> dict[str, Tensor]:
        return {f"{name}.{k}": p
                for name, lin in (("w_q", self.w_q), ("w_k", self.w_k),
                                  ("w_v", self.w_v), ("w_o", self.w_o))
                for k, p in lin.parameters().items()}

    def _split(self, x: Tensor) -> Tensor:
        b, length, _ = x.shape
        return T.permute(T.reshape(x, (b, length, self.n_heads, self.d_head)),
                         (0, 2, 1, 3))

    def __call__(self, q_in: Tensor, k_in: Tensor, v_in: Tensor, *,
                 exact_m: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        q = self._split(self.w_q(q_in))
        k = self._split(self.w_k(k_in))
        v = self._split(self.w_v(v_in))
        if self.use_probsparse:
            mixed = probsparse_attention(q, k, v, self.sampling_factor,
                                         causal_mask=self.causal,
                                         exact_m=exact_m, rng=rng)
        else:
            mixed = full_attention(q, k, v, causal_mask=self.causal)
        b, _, l_q, _ = mixed.shape
        merged = T.reshape(T.permute(mixed, (0, 2, 1, 3)),
                           (b, l_q, self.n_heads * self.d_head))
        return self.w_o(merged)


# ---------------------------------------------------------------------------
# embedding


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal table (length, d_model); row 0 is (0, 1, 0, 1, ...)."""
    position = np.arange(length)[:, None]
    div = np.exp(np.arange(0, d_model, 2) * (-math.log(10000.0) / d_model))
    table = np.zeros((length, d_model))
    table[:, 0::2] = np.sin(position * div)
    table[:, 1::2] = np.cos(position * div[:d_model // 2])
    return table


class DataEmbedding:
    """Value (1-d conv), positional (sinusoid) and temporal (affine) embedding,
    summed into a single (batch, length, d_model) representation."""

    # timestamps are seconds since cycle start; hours keep magnitudes small
    TIME_SCALE = 3600.0

    def __init__(self, c_in: int, d_model: int, rng: np.random.Generator):
        self.c_in = c_in
        self.d_model = d_model
        self.value_kernel = T.fan_in_param(rng, (3, c_in, d_model), 3 * c_in)
        self.value_bias = T.zeros_param(d_model)
        self.temporal = Linear(1, d_model, rng)

    def parameters(self) -> dict[str, Tensor]:
        out = {"value.kernel": self.value_kernel, "value.bias": self.value_bias}
        out.update({f"temporal.{k}": p for k, p in self.temporal.parameters().items()})
        return out

    def __call__(self, x: Tensor, timestamps: np.ndarray) -> Tensor:
        if x.shape[-1] != self.c_in:
            raise ConfigError(f"embedding expects {self.c_in} features, "
                              f"got shape {x.shape}")
        batch, length, _ = x.shape
        timestamps = np.asarray(timestamps, dtype=np.float64)
        if timestamps.shape != (batch, length):
            raise ShapeError(f"timestamps shape {timestamps.shape} does not match "
                             f"input {x.shape}")
        value = T.conv1d(x, self.value_kernel, "circular", bias=self.value_bias)
        pos = Tensor(positional_encoding(length, self.d_model))
        t_feat = Tensor((timestamps / self.TIME_SCALE)[..., None])
        return value + pos + self.temporal(t_feat)


# ---------------------------------------------------------------------------
# encoder / decoder


class FeedForward:
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        self.lift = Linear(d_model, d_ff, rng)
        self.lower = Linear(d_ff, d_model, rng)

    def parameters(self) -> dict[str, Tensor]:
        out = {f"lift.{k}": p for k, p in self.lift.parameters().items()}
        out.update({f"lower.{k}": p for k, p in self.lower.parameters().items()})
        return out

    def __call__(self, x: Tensor) -> Tensor:
        return self.lower(T.relu(self.lift(x)))


class EncoderLayer:
    """Self-attention and feed-forward, each with residual + layer norm."""

    def __init__(self, config: InformerConfig, rng: np.random.Generator):
        self.attention = AttentionBlock(
            config.d_model, config.n_heads, rng,
            use_probsparse=config.use_probsparse,
            sampling_factor=config.sampling_factor, causal=False)
        self.norm1 = LayerNorm(config.d_model)
        self.ffn = FeedForward(config.d_model, config.d_ff, rng)
        self.norm2 = LayerNorm(config.d_model)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for prefix, part in (("attn", self.attention), ("norm1", self.norm1),
                             ("ffn", self.ffn), ("norm2", self.norm2)):
            out.update({f"{prefix}.{k}": p for k, p in part.parameters().items()})
        return out

    def __call__(self, x: Tensor, *, exact_m: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        h = self.norm1(x + self.attention(x, x, x, exact_m=exact_m, rng=rng))
        return self.norm2(h + self.ffn(h))


class DistillLayer:
    """Convolution, ELU and stride-2 max pooling; halves the length (ceil)."""

    def __init__(self, d_model: int, rng: np.random.Generator):
        self.kernel = T.fan_in_param(rng, (3, d_model, d_model), 3 * d_model)
        self.bias = T.zeros_param(d_model)

    def parameters(self) -> dict[str, Tensor]:
        return {"kernel": self.kernel, "bias": self.bias}

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] < 2:
            return x
        h = T.elu(T.conv1d(x, self.kernel, "circular", bias=self.bias))
        return T.max_pool1d(h, width=3, stride=2)


class Encoder:
    """Encoder stack; a distill stage sits between consecutive layers when
    enabled, so e_layers=2 shortens the sequence once."""

    def __init__(self, config: InformerConfig, rng: np.random.Generator):
        self.layers = [EncoderLayer(config, rng) for _ in range(config.e_layers)]
        self.distills = ([DistillLayer(config.d_model, rng)
                          for _ in range(config.e_layers - 1)]
                         if config.use_distill else [])

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            out.update({f"layer{i}.{k}": p for k, p in layer.parameters().items()})
        for i, dist in enumerate(self.distills):
            out.update({f"distill{i}.{k}": p for k, p in dist.parameters().items()})
        return out

    def __call__(self, x: Tensor, *, exact_m: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x, exact_m=exact_m, rng=rng)
            if self.distills and i < len(self.layers) - 1:
                x = self.distills[i](x)
        return x


def build_decoder_input(x_recent: Tensor, t_out: int) -> Tensor:
    """Recent slots followed by an all-zero placeholder for the horizon.

    x_recent is (batch, label_len, features); the result has length
    label_len + t_out with the trailing t_out rows exactly zero.
    """
    batch, label_len, feats = x_recent.shape
    placeholder = Tensor(np.zeros((batch, t_out, feats)))
    if label_len == 0:
        return placeholder
    return T.concat([x_recent, placeholder], axis=1)


class DecoderLayer:
    """Masked self-attention, cross-attention over the encoder output, and a
    feed-forward stage, each with residual + layer norm.  Cross-attention is
    always full attention."""

    def __init__(self, config: InformerConfig, rng: np.random.Generator):
        self.self_attention = AttentionBlock(
            config.d_model, config.n_heads, rng,
            use_probsparse=config.use_probsparse,
            sampling_factor=config.sampling_factor, causal=True)
        self.cross_attention = AttentionBlock(
            config.d_model, config.n_heads, rng,
            use_probsparse=False, sampling_factor=config.sampling_factor,
            causal=False)
        self.norm1 = LayerNorm(config.d_model)
        self.norm2 = LayerNorm(config.d_model)
        self.ffn = FeedForward(config.d_model, config.d_ff, rng)
        self.norm3 = LayerNorm(config.d_model)

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for prefix, part in (("self", self.self_attention),
                             ("cross", self.cross_attention),
                             ("norm1", self.norm1), ("norm2", self.norm2),
                             ("ffn", self.ffn), ("norm3", self.norm3)):
            out.update({f"{prefix}.{k}": p for k, p in part.parameters().items()})
        return out

    def __call__(self, x: Tensor, enc_out: Tensor, *, exact_m: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        h = self.norm1(x + self.self_attention(x, x, x, exact_m=exact_m, rng=rng))
        h = self.norm2(h + self.cross_attention(h, enc_out, enc_out))
        return self.norm3(h + self.ffn(h))


class Decoder:
    def __init__(self, config: InformerConfig, rng: np.random.Generator):
        self.layers = [DecoderLayer(config, rng) for _ in range(config.d_layers)]

    def parameters(self) -> dict[str, Tensor]:
        return {f"layer{i}.{k}": p
                for i, layer in enumerate(self.layers)
                for k, p in layer.parameters().items()}

    def __call__(self, x: Tensor, enc_out: Tensor, *, exact_m: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
        for layer in self.layers:
            x = layer(x, enc_out, exact_m=exact_m, rng=rng)
        return x


class OutputHead:
    """Affine d_model -> 1 per position, keeping the last t_out positions."""

    def __init__(self, d_model: int, rng: np.random.Generator):
        self.proj = Linear(d_model, 1, rng)

    def parameters(self) -> dict[str, Tensor]:
        return {f"proj.{k}": p for k, p in self.proj.parameters().items()}

    def __call__(self, dec_out: Tensor, t_out: int) -> Tensor:
        batch, length, _ = dec_out.shape
        y = self.proj(dec_out)
        tail = T.slice_axis(y, 1, length - t_out, length)
        return T.reshape(tail, (batch, t_out))
