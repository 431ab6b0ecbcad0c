"""Adam with a per-epoch cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def cosine_lr(epoch: float, t_max: float, base_lr: float, min_lr: float = 0.0) -> float:
    return min_lr + (base_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / t_max)) / 2.0


@dataclass
class AdamState:
    base_lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t_max: int = 100
    min_lr: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def lr(self, epoch: float) -> float:
        return cosine_lr(epoch, self.t_max, self.base_lr, self.min_lr)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float | None = None,
) -> None:
    """One bias-corrected Adam update, in place on ``params``.

    Moments are kept in float64 regardless of parameter dtype.
    """
    lr = state.base_lr if lr is None else lr
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for name, g in grads.items():
        if g is None:
            continue
        g = np.asarray(g, dtype=np.float64)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(g.shape)
            state.v[name] = np.zeros(g.shape)
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        params[name] -= update.astype(params[name].dtype)
