"""Shared test utilities: central finite differences and small fixtures."""

from __future__ import annotations

import numpy as np

from tspd.environment import JointAction, StepRecord, Trajectory, env_for
from tspd.instances import Instance
from tspd.model import ModelConfig
from tspd.nn.tensor import Tensor

FD_STEP = 1e-4
FD_TOL = 1e-5

TINY = ModelConfig(d_h=8, heads=2, layers=1, d_sparse=4, d_ff=16, dec_layers=1, critic_hidden=8, coord_scale=1.0)


def numeric_grad(f, p: Tensor, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to every entry of ``p``."""
    g = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = float(f().data)
        flat[i] = old - h
        down = float(f().data)
        flat[i] = old
        gf[i] = (up - down) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def gradcheck(f, params: dict[str, Tensor], h: float = FD_STEP) -> dict[str, float]:
    """Relative error between backprop and finite differences, per tensor."""
    for p in params.values():
        p.grad = None
    loss = f()
    loss.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    for p in params.values():
        p.grad = None
    return {k: rel_error(analytic[k], numeric_grad(f, p, h)) for k, p in params.items()}


def leaf(shape, rng, scale=1.0) -> Tensor:
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def line_instance(*xs, alpha=2.0) -> Instance:
    return Instance(tuple((float(x), 0.0) for x in xs), depot=0, alpha=alpha)


def random_episode(inst, rng, check=True) -> Trajectory:
    """Uniformly random feasible joint actions until the episode ends."""
    env = env_for(inst)
    s = env.reset()
    traj = Trajectory()
    while not env.is_terminal(s):
        tm = env.masks(s, "truck")
        a_t = int(rng.choice(np.flatnonzero(tm)))
        dm = env.masks(s, "drone", a_t)
        a_d = int(rng.choice(np.flatnonzero(dm)))
        nxt, dt = env.step(s, JointAction(a_t, a_d), check=check)
        traj.steps.append(StepRecord(s, JointAction(a_t, a_d), dt))
        s = nxt
        assert len(traj.steps) <= env.horizon
    traj.final_state = s
    return traj
