"""Autoregressive truck/drone decoder.

Each decision epoch makes two pointer calls through one shared recurrent
state: the truck picks a node under its mask, the drone mask is rebuilt
from that choice, then the drone picks.  The recurrence is a minimal gated
unit (one forget gate).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .environment import FeasibilityError, JointAction, State, StepRecord, Trajectory, env_for
from .instances import Instance
from .nn import tensor as T
from .nn.tensor import MaskError, NumericError, Tensor

TRUCK, DRONE = 0, 1
N_DYN = 4


class HorizonError(RuntimeError):
    """Episode did not terminate within the step budget."""


@dataclass(frozen=True)
class DecoderConfig:
    d_h: int = 128
    layers: int = 1
    c_init: float = 10.0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("decoder needs at least one recurrent layer")

    def to_dict(self) -> dict:
        return asdict(self)


def mgu_param_count(d_h: int, d_in: int) -> int:
    return 2 * (d_h + d_in + 1) * d_h


def lstm_param_count(d_h: int, d_in: int) -> int:
    return 4 * (d_h + d_in + 1) * d_h


def gru_param_count(d_h: int, d_in: int) -> int:
    return 3 * (d_h + d_in + 1) * d_h


def init_mgu_params(d_h: int, d_in: int, rng: np.random.Generator, prefix: str) -> dict[str, Tensor]:
    bound = 1.0 / math.sqrt(d_h + d_in)
    shapes = {"W_f": (d_h + d_in, d_h), "b_f": (d_h,), "W_h": (d_h + d_in, d_h), "b_h": (d_h,)}
    return {
        prefix + k: Tensor(rng.uniform(-bound, bound, size=s), requires_grad=True, name=prefix + k)
        for k, s in shapes.items()
    }


def init_decoder_params(cfg: DecoderConfig, rng: np.random.Generator, prefix: str = "decoder.") -> dict[str, Tensor]:
    D = cfg.d_h
    b = 1.0 / math.sqrt(D)
    raw = {
        "agent_embedding": rng.uniform(-b, b, size=(2, D)),
        "W_static": rng.uniform(-b, b, size=(D, D)),
        "b_static": rng.uniform(-b, b, size=(D,)),
        "W_dynamic": rng.uniform(-0.5, 0.5, size=(N_DYN, D)),
        "b_dynamic": rng.uniform(-0.5, 0.5, size=(D,)),
        "W_query": rng.uniform(-b, b, size=(D, D)),
        "v": rng.uniform(-b, b, size=(D,)),
        "C": np.array(cfg.c_init),
    }
    params = {prefix + k: Tensor(v, requires_grad=True, name=prefix + k) for k, v in raw.items()}
    for l in range(cfg.layers):
        params.update(init_mgu_params(D, D, rng, f"{prefix}mgu{l}."))
    return params


def mgu_cell(x, h, W_f, b_f, W_h, b_h) -> tuple[Tensor, Tensor]:
    """Minimal gated unit; returns ``(r, h_new)`` with ``r = h_new``.

    f = sigmoid([h; x] W_f + b_f), h~ = tanh([f*h; x] W_h + b_h),
    h' = (1 - f) * h + f * h~.
    """
    x, h = T.as_tensor(x), T.as_tensor(h)
    f = T.sigmoid(T.linear(T.concat([h, x], axis=-1), W_f, b_f))
    cand = T.tanh(T.linear(T.concat([T.mul(f, h), x], axis=-1), W_h, b_h))
    h_new = T.add(h, T.mul(f, T.sub(cand, h)))
    return h_new, h_new


def attention_logits(e, d, r, W_query, v, C) -> Tensor:
    """Clipped pointer scores ``C * tanh(v . tanh(e_i + q + d_i))``.

    ``e`` and ``d`` are projected static and dynamic features (B, N, D),
    ``r`` the recurrent output (B, D).
    """
    q = T.matmul(r, W_query)
    B, D = q.shape
    u = T.einsum("bnd,d->bn", T.tanh(T.add(T.add(e, d), T.reshape(q, (B, 1, D)))), v)
    return T.mul(C, T.tanh(u))


def _mask_add(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 0.0, -np.inf)


def select_action(logits, mask, mode: str = "greedy", rng: np.random.Generator | None = None) -> tuple[int, float]:
    """Pick one node from 1-D logits under a boolean mask."""
    logits = np.asarray(T.as_tensor(logits).data, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise FeasibilityError("empty action mask")
    logp = T.masked_log_softmax(logits, _mask_add(mask)).data
    node = _choose(logp, mode, rng)
    return node, float(logp[node])


def _choose(logp: np.ndarray, mode: str, rng) -> int:
    if mode == "greedy":
        return int(np.argmax(logp))  # first maximum
    if mode == "sample":
        if rng is None:
            raise ValueError("sampling needs an rng")
        p = np.exp(logp)
        cdf = np.cumsum(p)
        return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(p) - 1)
    raise ValueError(f"unknown decode mode {mode!r}")


def dynamic_features(states: list[State], n: int, truck_choice=None) -> np.ndarray:
    """(B, N, 4): unmet demand, truck destination, drone destination, drone
    detached.

    A stationary agent's destination is its own node.  For the drone phase
    pass ``truck_choice`` so the truck flag marks the node just chosen.
    """
    out = np.zeros((len(states), n, N_DYN))
    nodes = np.arange(n)
    for b, s in enumerate(states):
        out[b, :, 0] = (s.demand >> nodes) & 1
        out[b, s.truck_target if truck_choice is None else truck_choice[b], 1] = 1.0
        out[b, s.drone_target, 2] = 1.0
        out[b, :, 3] = s.drone_busy
    return out


@dataclass
class DecodeResult:
    trajectories: list[Trajectory]
    costs: np.ndarray  # (B,)
    log_prob: Tensor  # (B,) summed truck + drone log-probabilities


def decode_batch(
    insts: list[Instance],
    static: Tensor,
    params: dict[str, Tensor],
    cfg: DecoderConfig,
    mode: str = "greedy",
    rngs: list[np.random.Generator] | None = None,
    forced: list[list[JointAction]] | None = None,
    prefix: str = "decoder.",
    track_grad: bool = True,
) -> DecodeResult:
    """Run complete episodes for a batch sharing the node count.

    ``forced`` replays given joint actions (teacher forcing) and only
    evaluates their log-probabilities.  Decoding stops once every episode
    is terminal; the remaining horizon would only pad with no-ops.
    """
    P = lambda k: params[prefix + k]  # noqa: E731
    B, N, D = static.shape
    envs = [env_for(inst) for inst in insts]
    states = [env.reset() for env in envs]
    trajs = [Trajectory() for _ in range(B)]
    horizon = envs[0].horizon
    if mode == "sample" and forced is None and (rngs is None or len(rngs) != B):
        raise ValueError("sampling needs one rng per episode")

    e = T.linear(static, P("W_static"), P("b_static"))
    agent = P("agent_embedding")
    hidden = [Tensor(np.zeros((B, D))) for _ in range(cfg.layers)]
    rows = np.arange(B)
    total = Tensor(np.zeros(B))
    done = np.array([env.is_terminal(s) for env, s in zip(envs, states)])

    def pointer(nodes: np.ndarray, which: int, masks: np.ndarray, d: Tensor):
        nonlocal hidden
        x = T.add(static[rows, nodes], agent[which])
        new_hidden = []
        for l in range(cfg.layers):
            x, h = mgu_cell(x, hidden[l], P(f"mgu{l}.W_f"), P(f"mgu{l}.b_f"), P(f"mgu{l}.W_h"), P(f"mgu{l}.b_h"))
            new_hidden.append(h)
        hidden = new_hidden
        logits = attention_logits(e, d, x, P("W_query"), P("v"), P("C"))
        try:
            return T.masked_log_softmax(logits, _mask_add(masks))
        except MaskError as exc:
            raise FeasibilityError(str(exc)) from exc

    for t in range(horizon):
        if done.all():
            break
        d = T.linear(dynamic_features(states, N), P("W_dynamic"), P("b_dynamic"))
        truck_masks = np.stack([env.masks(s, "truck") for env, s in zip(envs, states)])
        logp_t = pointer(np.array([s.truck_loc for s in states]), TRUCK, truck_masks, d)
        a_t = _pick(logp_t.data, truck_masks, mode, rngs, forced, t, "truck")

        drone_masks = np.stack([env.masks(s, "drone", int(a)) for env, s, a in zip(envs, states, a_t)])
        d = T.linear(dynamic_features(states, N, a_t), P("W_dynamic"), P("b_dynamic"))
        logp_d = pointer(np.array([s.drone_loc for s in states]), DRONE, drone_masks, d)
        a_d = _pick(logp_d.data, drone_masks, mode, rngs, forced, t, "drone")

        step_lp = T.add(logp_t[rows, a_t], logp_d[rows, a_d])
        if not np.all(np.isfinite(step_lp.data)):
            raise NumericError(f"non-finite log-probability at step {t}")
        if track_grad:
            total = T.add(total, step_lp)
        else:
            total = Tensor(total.data + step_lp.data)
        for b, env in enumerate(envs):
            if done[b]:
                continue
            act = JointAction(int(a_t[b]), int(a_d[b]))
            nxt, dt = env.step(states[b], act)
            trajs[b].steps.append(StepRecord(states[b], act, dt, float(logp_t.data[b, a_t[b]]), float(logp_d.data[b, a_d[b]])))
            states[b] = nxt
            done[b] = env.is_terminal(nxt)

    if not done.all():
        raise HorizonError(f"episodes {np.flatnonzero(~done).tolist()} unfinished after {horizon} steps")
    for b in range(B):
        trajs[b].final_state = states[b]
    costs = np.array([tr.total_cost for tr in trajs])
    return DecodeResult(trajs, costs, total)


def _pick(logp: np.ndarray, masks: np.ndarray, mode, rngs, forced, t: int, agent: str) -> np.ndarray:
    out = np.empty(len(logp), dtype=np.int64)
    for b in range(len(logp)):
        if forced is not None:
            seq = forced[b]
            if t < len(seq):
                a = getattr(seq[t], agent)
            else:
                a = int(np.flatnonzero(masks[b])[0])  # terminal padding
            if not masks[b, a]:
                raise FeasibilityError(f"forced {agent} action {a} is masked (episode {b}, step {t})")
            out[b] = a
        elif masks[b].sum() == 1:
            out[b] = int(np.flatnonzero(masks[b])[0])
        else:
            out[b] = _choose(logp[b], mode, rngs[b] if rngs is not None else None)
    return out
