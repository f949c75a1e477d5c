"""Neural building blocks: dense layers, layer norm, attention, dropout.

Blocks hold parameter tensors; the forward functions build the autograd
graph. Attention blocks are post-layer-norm residual pairs (attention
then feed-forward) and accept an optional additive bias on the attention
logits for graph spatial encodings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import Prng
from .tensor import Tensor, softmax, tanh


def uniform_init(prng: Prng, shape: tuple[int, ...], fan_in: int) -> Tensor:
    """Parameter tensor drawn uniformly from +/- 1/sqrt(fan_in)."""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return Tensor(prng.uniform(shape, -bound, bound), requires_grad=True)


@dataclass
class DenseLayer:
    """Affine map from in_dim to out_dim; weight stored as [out, in]."""

    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, prng: Prng, in_dim: int, out_dim: int) -> DenseLayer:
        return cls(
            weight=uniform_init(prng, (out_dim, in_dim), in_dim),
            bias=uniform_init(prng, (out_dim,), in_dim),
        )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}


def linear_forward(layer: DenseLayer, x: Tensor) -> Tensor:
    """Apply ``x @ W.T + b`` over the last axis of x."""
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"linear layer expects width {layer.in_dim}, got {x.shape[-1]}")
    return x @ layer.weight.swapaxes(0, 1) + layer.bias


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis with population variance, then scale and shift."""
    if gamma.shape != x.shape[-1:] or beta.shape != x.shape[-1:]:
        raise ValueError("layer norm scale/shift must match the last axis")
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return gamma * (centered * ((var + eps) ** -0.5)) + beta


@dataclass
class LayerNorm:
    gamma: Tensor
    beta: Tensor
    eps: float = 1e-5

    @classmethod
    def create(cls, dim: int, eps: float = 1e-5) -> LayerNorm:
        return cls(
            gamma=Tensor(np.ones(dim), requires_grad=True),
            beta=Tensor(np.zeros(dim), requires_grad=True),
            eps=eps,
        )

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


def layer_norm_forward(ln: LayerNorm, x: Tensor) -> Tensor:
    return layer_norm(x, ln.gamma, ln.beta, ln.eps)


def dropout(x: Tensor, p: float, prng: Prng, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (prng.uniform(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return x * Tensor(keep)


@dataclass
class AttentionBlock:
    """Post-LN residual block: multi-head self-attention then feed-forward."""

    heads: int
    wq: DenseLayer
    wk: DenseLayer
    wv: DenseLayer
    wo: DenseLayer
    ff1: DenseLayer
    ff2: DenseLayer
    ln1: LayerNorm
    ln2: LayerNorm

    @classmethod
    def create(cls, prng: Prng, dim: int, heads: int, ff_dim: int | None = None) -> AttentionBlock:
        if dim % heads != 0:
            raise ValueError(f"model dim {dim} not divisible by {heads} heads")
        ff_dim = ff_dim if ff_dim is not None else 2 * dim
        return cls(
            heads=heads,
            wq=DenseLayer.create(prng, dim, dim),
            wk=DenseLayer.create(prng, dim, dim),
            wv=DenseLayer.create(prng, dim, dim),
            wo=DenseLayer.create(prng, dim, dim),
            ff1=DenseLayer.create(prng, dim, ff_dim),
            ff2=DenseLayer.create(prng, ff_dim, dim),
            ln1=LayerNorm.create(dim),
            ln2=LayerNorm.create(dim),
        )

    def params(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in ("wq", "wk", "wv", "wo", "ff1", "ff2", "ln1", "ln2"):
            out.update(getattr(self, name).params(f"{prefix}.{name}"))
        return out


def multihead_attention(block: AttentionBlock, tokens: Tensor, bias: Tensor | None = None) -> Tensor:
    """Run one attention block over tokens shaped [..., T, d].

    Parameters
    ----------
    bias : Tensor or None
        Additive attention-logit bias shaped [heads, T, T]; broadcast over
        any leading batch axes.
    """
    *lead, t, d = tokens.shape
    h = block.heads
    if d != block.wq.in_dim:
        raise ValueError(f"attention block expects width {block.wq.in_dim}, got {d}")
    dh = d // h

    def split(z: Tensor) -> Tensor:
        return z.reshape(*lead, t, h, dh).swapaxes(-3, -2)

    q = split(linear_forward(block.wq, tokens))
    k = split(linear_forward(block.wk, tokens))
    v = split(linear_forward(block.wv, tokens))
    logits = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    if bias is not None:
        logits = logits + bias
    ctx = softmax(logits, axis=-1) @ v
    merged = ctx.swapaxes(-3, -2).reshape(*lead, t, d)
    x = layer_norm_forward(block.ln1, tokens + linear_forward(block.wo, merged))
    # tanh keeps the block smooth, which finite-difference checks need
    ff = linear_forward(block.ff2, tanh(linear_forward(block.ff1, x)))
    return layer_norm_forward(block.ln2, x + ff)


__all__ = [
    "AttentionBlock",
    "DenseLayer",
    "LayerNorm",
    "dropout",
    "layer_norm",
    "layer_norm_forward",
    "linear_forward",
    "multihead_attention",
    "tanh",
    "uniform_init",
]
