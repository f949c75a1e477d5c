"""Deterministic numerical core: autograd tensors, NN blocks, AdamW, checkpoints.

Everything runs on float64 numpy arrays with explicitly seeded initialization,
so identical seeds and call orders reproduce identical bytes.
"""
from __future__ import annotations

from .checkpoint import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    load_checkpoint,
    save_checkpoint,
)
from .gradcheck import grad_check
from .nn import (
    AttentionBlock,
    DenseLayer,
    LayerNorm,
    dropout,
    layer_norm,
    layer_norm_forward,
    linear_forward,
    multihead_attention,
    uniform_init,
)
from .optim import Adamw, AdamwConfig, OptimizerError, adamw_step
from .rng import Prng
from .tensor import Tensor, relu, softmax, tanh

__all__ = [
    "Adamw",
    "AdamwConfig",
    "AttentionBlock",
    "CheckpointError",
    "CheckpointMagicError",
    "CheckpointTruncatedError",
    "CheckpointVersionError",
    "DenseLayer",
    "LayerNorm",
    "OptimizerError",
    "Prng",
    "Tensor",
    "adamw_step",
    "dropout",
    "grad_check",
    "layer_norm",
    "layer_norm_forward",
    "linear_forward",
    "load_checkpoint",
    "multihead_attention",
    "relu",
    "save_checkpoint",
    "softmax",
    "tanh",
    "uniform_init",
]
