"""AdaBelief with decoupled weight decay, and a periodic cosine schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import NumericError, Tensor


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-16
    weight_decay: float = 0.01
    lr: float = 1e-3
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            self.beta1, self.beta2, self.eps, self.weight_decay, self.lr, self.t,
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
        )


def adabelief_step(
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float | None = None,
) -> dict[str, Tensor]:
    """One in-place AdaBelief update; returns ``params``.

    No bias correction is applied.  The decoupled decay shrinks every
    parameter by ``1 - lr * weight_decay`` before the adaptive step.
    Non-finite gradients raise :class:`NumericError` before anything is
    modified.
    """
    lr = state.lr if lr is None else lr
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}; step skipped")
    b1, b2, eps = state.beta1, state.beta2, state.eps
    decay = 1.0 - lr * state.weight_decay
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g - m) ** 2
        state.m[name], state.v[name] = m, v
        p.data = p.data * decay - lr * m / (np.sqrt(v) + eps)
    state.t += 1
    return params


def cosine_lr(t: int, t_max: int, eta_max: float, eta_min: float | None = None) -> float:
    """Cosine annealing restarted every ``t_max`` steps."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if eta_min is None:
        eta_min = 0.01 * eta_max
    phase = (t % t_max) / t_max
    return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + math.cos(math.pi * phase))
