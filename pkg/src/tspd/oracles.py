"""Reference solvers over the MDP: exhaustive optimum, nearest-neighbour
greedy, and uniformly random rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .environment import JointAction, State, TSPDEnv, Trajectory, env_for, rollout_actions
from .instances import Instance, rng_stream

MAX_EXACT_N = 8


class InstanceSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Plan:
    operations: tuple[tuple[str, int], ...]
    cost: float

    @classmethod
    def from_actions(cls, actions, cost: float) -> "Plan":
        ops = []
        for a in actions:
            ops.append(("truck", a.truck))
            ops.append(("drone", a.drone))
        return cls(tuple(ops), cost)

    def joint_actions(self) -> list[JointAction]:
        ops = self.operations
        return [JointAction(ops[i][1], ops[i + 1][1]) for i in range(0, len(ops), 2)]

    def replay(self, inst: Instance) -> Trajectory:
        return rollout_actions(inst, self.joint_actions())


TIE_RTOL = 1e-12


def _lower_bound(env: TSPDEnv, s: State, fastest: list[list[float]]) -> float:
    """Admissible bound on the time still needed from ``s``."""
    depot = env.depot
    t_pos, t_rem = s.truck_target, s.truck_tau
    bound = t_rem + env.truck_time[t_pos][depot]
    if s.drone_busy:
        d_pos, d_rem = s.drone_target, s.drone_tau
    else:
        d_pos, d_rem = t_pos, t_rem
    bound = max(bound, d_rem + fastest[d_pos][depot])
    bits = s.demand
    i = 0
    while bits:
        if bits & 1:
            reach = min(t_rem + fastest[t_pos][i], d_rem + fastest[d_pos][i])
            bound = max(bound, reach + fastest[i][depot])
        bits >>= 1
        i += 1
    return bound


def exact_optimum(inst: Instance, prune: bool = True) -> Plan:
    """Minimum-cost plan by depth-first search over joint actions.

    With ``prune`` the search uses branch-and-bound on the incumbent and a
    memo of the earliest clock seen per (clock-free) state.  Costs within
    ``TIE_RTOL`` of the incumbent count as ties and never replace it, so
    pruned and exhaustive search return the same first-found plan instead
    of two mirror plans that differ only in rounding.
    """
    if inst.n > MAX_EXACT_N:
        raise InstanceSizeError(f"exact search limited to n <= {MAX_EXACT_N}, got {inst.n}")
    env = env_for(inst)
    fastest = [
        [min(a, b) for a, b in zip(rt, rd)]
        for rt, rd in zip(env.truck_time, env.drone_time)
    ]
    best_cost = math.inf
    best_path: list[JointAction] = []
    seen: dict[tuple, float] = {}
    path: list[JointAction] = []
    limit = 2 * env.horizon

    def dfs(s: State) -> None:
        nonlocal best_cost, best_path
        if env.is_terminal(s):
            if s.clock < best_cost * (1 - TIE_RTOL):
                best_cost, best_path = s.clock, list(path)
            return
        if len(path) >= limit:
            return
        if prune:
            if s.clock + _lower_bound(env, s, fastest) >= best_cost * (1 - TIE_RTOL):
                return
            k = s.key()
            prev = seen.get(k)
            if prev is not None and prev <= s.clock:
                return
            seen[k] = s.clock
        for a in env.joint_actions(s):
            nxt, _ = env.step(s, a, check=False)
            path.append(a)
            dfs(nxt)
            path.pop()

    dfs(env.reset())
    if not math.isfinite(best_cost):
        raise RuntimeError("no terminal plan found")
    return Plan.from_actions(best_path, best_cost)


def _nearest(times_row: list[float], candidates: list[int]) -> int:
    return min(candidates, key=lambda j: (times_row[j], j))


def greedy_nearest(inst: Instance) -> Plan:
    """Myopic baseline: truck to its nearest open customer, a launchable
    drone to the nearest other unmet customer.  With a single customer left
    and the drone on board, the faster of truck service and drone sortie is
    chosen."""
    env = env_for(inst)
    s = env.reset()
    actions = []
    while not env.is_terminal(s):
        t_opts = env.truck_options(s)
        customers = [j for j in t_opts if j != s.truck_loc and j != env.depot]
        waiting_allowed = s.truck_loc in t_opts and s.truck_tau == 0 and s.demand
        if customers:
            a_t = _nearest(env.truck_time[s.truck_loc], customers)
            if waiting_allowed and len(customers) == 1:
                j = customers[0]
                by_truck = env.truck_time[s.truck_loc][j] + env.truck_time[j][env.depot]
                by_drone = env.drone_time[s.truck_loc][j] + max(
                    env.truck_time[s.truck_loc][env.depot], env.drone_time[j][env.depot]
                )
                if by_drone < by_truck:
                    a_t = s.truck_loc
        else:
            a_t = t_opts[0]
        d_opts = env.drone_options(s, a_t)
        launch = [j for j in d_opts if j != a_t]
        if launch and not s.drone_busy and s.drone_tau == 0:
            a_d = _nearest(env.drone_time[s.drone_loc], launch)
        else:
            a_d = d_opts[0]
        act = JointAction(a_t, a_d)
        s, _ = env.step(s, act)
        actions.append(act)
        if len(actions) > 4 * env.horizon:
            raise RuntimeError("greedy baseline failed to terminate")
    return Plan.from_actions(actions, s.clock)


def random_rollout(inst: Instance, seed: int) -> Plan:
    """Uniformly random feasible actions until the episode ends."""
    env = env_for(inst)
    rng = rng_stream(seed)
    s = env.reset()
    actions = []
    while not env.is_terminal(s):
        t_opts = env.truck_options(s)
        a_t = t_opts[int(rng.random() * len(t_opts))]
        d_opts = env.drone_options(s, a_t)
        a_d = d_opts[int(rng.random() * len(d_opts))]
        act = JointAction(a_t, a_d)
        s, _ = env.step(s, act)
        actions.append(act)
        if len(actions) > env.horizon:
            raise RuntimeError(f"random rollout exceeded the horizon {env.horizon}")
    return Plan.from_actions(actions, s.clock)
