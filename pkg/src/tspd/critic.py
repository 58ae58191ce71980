"""Value network: its own encoder, mean pooling, then a small ReLU MLP."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .nn import tensor as T
from .nn.tensor import Tensor


@dataclass(frozen=True)
class CriticConfig:
    hidden: int = 128
    depth: int = 2

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("critic depth must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def init_critic_head(cfg: CriticConfig, d_h: int, rng: np.random.Generator, prefix: str = "critic.head.") -> dict[str, Tensor]:
    dims = [d_h] + [cfg.hidden] * (cfg.depth - 1) + [1]
    out = {}
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / math.sqrt(a)
        out[f"{prefix}W{i}"] = rng.uniform(-bound, bound, size=(a, b))
        out[f"{prefix}b{i}"] = rng.uniform(-bound, bound, size=(b,))
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in out.items()}


def critic_value(static, params: dict[str, Tensor], cfg: CriticConfig, prefix: str = "critic.head.") -> Tensor:
    """(B, N, D) node features -> (B,) scalar estimates.

    Mean pooling over nodes makes the result invariant to node order.
    """
    x = T.mean(T.as_tensor(static), axis=-2)
    for i in range(cfg.depth):
        x = T.linear(x, params[f"{prefix}W{i}"], params[f"{prefix}b{i}"])
        if i < cfg.depth - 1:
            x = T.relu(x)
    return T.reshape(x, x.shape[:-1])
