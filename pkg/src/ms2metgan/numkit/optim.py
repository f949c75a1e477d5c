"""AdamW with decoupled weight decay and bias-corrected moments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import Tensor


class OptimizerError(ValueError):
    pass


@dataclass(frozen=True)
class AdamwConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


class Adamw:
    """Tracks first/second moments per parameter and applies decoupled decay.

    The update, per step t (1-based):

        m = b1*m + (1-b1)*g        v = b2*v + (1-b2)*g^2
        mhat = m/(1-b1^t)          vhat = v/(1-b2^t)
        p -= lr * (mhat/(sqrt(vhat)+eps) + wd*p)
    """

    def __init__(self, params: Sequence[Tensor], cfg: AdamwConfig = AdamwConfig()):
        self.params = list(params)
        self.cfg = cfg
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adamw_step(self, self.params, [p.grad for p in self.params])


def adamw_step(state: Adamw, params: Sequence[Tensor], grads: Sequence[np.ndarray | None]) -> None:
    """Advance `state` one step, updating `params` in place from `grads`.

    A None gradient means the parameter did not appear in the loss; it is
    treated as zero (moments still decay, weight decay still applies).
    """
    if len(params) != len(grads):
        raise OptimizerError("params and grads differ in length")
    cfg = state.cfg
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for p, m, v, g in zip(params, state._m, state._v, grads):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise OptimizerError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError("non-finite gradient passed to AdamW step")
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data -= cfg.lr * (mhat / (np.sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.data)
