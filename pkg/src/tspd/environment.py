"""Deterministic truck-drone MDP.

Decision epochs occur whenever an agent finishes its current move.  At each
epoch the truck picks a target first, then the drone picks one given the
truck's choice.  The elapsed time is the smallest positive remaining travel
time among agents that are actually moving; the reward is minus that time.

Drone life cycle::

    docked --launch--> sortie (outbound) --serve--> detached --dock--> docked

* A docked drone rides on the truck (its target equals the truck's target
  and it never moves on its own).
* Launching is only possible from a stationary truck, and after a dock the
  drone stays on board until the truck has served another customer.
* A detached drone always heads for the truck's committed target (its
  pending destination, or the fresh choice made this epoch) and re-targets
  at the next epoch if the truck has moved on.  It docks when both agents
  are stationary on the same node.
* The truck may stay put (target = its own node) only to let a docked drone
  launch; once no open customer is left for it, its only move is the depot.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instances import Instance


class FeasibilityError(ValueError):
    """Action outside the feasible set."""


class LivelockError(RuntimeError):
    """No agent can make progress while demand remains."""


class InvariantError(RuntimeError):
    """A state violates the MDP invariants."""


class EpisodeStateError(ValueError):
    """Operation requires a terminal trajectory."""


@dataclass(frozen=True, slots=True)
class State:
    demand: int  # bit i set <=> customer i unmet
    truck_loc: int
    drone_loc: int
    drone_busy: int  # s_d: drone detached from the truck
    drone_unreturned: int  # r_d
    truck_target: int
    truck_tau: float
    drone_target: int
    drone_tau: float
    clock: float = 0.0
    launch_ready: bool = True
    sortie: bool = False  # drone flying out to serve drone_target

    def demands(self, inst: Instance) -> tuple[int, ...]:
        return tuple((self.demand >> i) & 1 for i in range(inst.n))

    @property
    def unmet(self) -> int:
        return bin(self.demand).count("1")

    def key(self) -> tuple:
        """Everything except the clock; the future depends only on this."""
        return (
            self.demand, self.truck_loc, self.drone_loc, self.drone_busy,
            self.drone_unreturned, self.truck_target, self.truck_tau,
            self.drone_target, self.drone_tau, self.launch_ready, self.sortie,
        )


@dataclass(frozen=True, slots=True)
class JointAction:
    truck: int
    drone: int


@dataclass(frozen=True)
class StepRecord:
    state: State
    action: JointAction
    dt: float
    logp_truck: float = 0.0
    logp_drone: float = 0.0


@dataclass
class Trajectory:
    steps: list[StepRecord] = field(default_factory=list)
    final_state: State | None = None

    @property
    def total_cost(self) -> float:
        return float(sum(s.dt for s in self.steps))

    @property
    def actions(self) -> list[JointAction]:
        return [s.action for s in self.steps]


class TSPDEnv:
    """Transition rules bound to one instance (distances precomputed)."""

    def __init__(self, inst: Instance):
        self.inst = inst
        self.n = inst.n
        self.depot = inst.depot
        dist = inst.distance_matrix()
        self.truck_time = (dist / inst.truck_speed).tolist()
        self.drone_time = (dist / (inst.alpha * inst.truck_speed)).tolist()
        self.all_customers = sum(1 << i for i in range(self.n) if i != self.depot)
        self.horizon = 2 * self.n + 2

    # -- construction ---------------------------------------------------------

    def reset(self) -> State:
        d = self.depot
        return State(self.all_customers, d, d, 0, 0, d, 0.0, d, 0.0, 0.0, True, False)

    def is_terminal(self, s: State) -> bool:
        return (
            s.demand == 0 and s.truck_loc == self.depot and s.truck_tau == 0.0
            and s.drone_busy == 0
        )

    # -- feasibility ----------------------------------------------------------

    def _nodes(self, bits: int) -> list[int]:
        return [i for i in range(self.n) if (bits >> i) & 1]

    def truck_options(self, s: State) -> list[int]:
        if s.truck_tau > 0:
            return [s.truck_target]
        open_bits = s.demand
        if s.sortie:
            open_bits &= ~(1 << s.drone_target)
        if not open_bits:
            return [self.depot]
        opts = self._nodes(open_bits)
        if s.drone_busy == 0 and s.launch_ready and s.demand:
            opts.append(s.truck_loc)
            opts.sort()
        return opts

    def drone_options(self, s: State, truck_choice: int) -> list[int]:
        if s.drone_tau > 0:
            return [s.drone_target]
        if s.drone_busy:
            return [truck_choice]
        truck_waits = truck_choice == s.truck_loc and s.truck_tau == 0 and s.demand != 0
        opts = [] if truck_waits else [truck_choice]
        if s.launch_ready and s.truck_tau == 0:
            launch = self._nodes(s.demand & ~(1 << truck_choice))
            opts = sorted(set(opts).union(launch))
        return opts

    def masks(self, s: State, phase: str, truck_choice: int | None = None) -> np.ndarray:
        if phase == "truck":
            opts = self.truck_options(s)
        elif phase == "drone":
            if truck_choice is None:
                raise ValueError("drone phase needs the truck's choice")
            if truck_choice not in self.truck_options(s):
                raise FeasibilityError(f"truck choice {truck_choice} is infeasible")
            opts = self.drone_options(s, truck_choice)
        else:
            raise ValueError(f"unknown phase {phase!r}")
        m = np.zeros(self.n, dtype=bool)
        m[opts] = True
        if not m.any():
            raise InvariantError(f"empty {phase} mask in state {s}")
        return m

    def joint_actions(self, s: State) -> list[JointAction]:
        return [
            JointAction(a, b)
            for a in self.truck_options(s)
            for b in self.drone_options(s, a)
        ]

    # -- transition -----------------------------------------------------------

    def step(self, s: State, act: JointAction, check: bool = True) -> tuple[State, float]:
        a_t, a_d = act.truck, act.drone
        if check:
            if a_t not in self.truck_options(s):
                raise FeasibilityError(f"truck action {a_t} infeasible in {s}")
            if a_d not in self.drone_options(s, a_t):
                raise FeasibilityError(f"drone action {a_d} infeasible in {s}")

        # remaining time of each agent that moves this epoch (None = not moving)
        if s.truck_tau > 0:
            rem_t = s.truck_tau
        elif a_t != s.truck_loc:
            rem_t = self.truck_time[s.truck_loc][a_t]
        else:
            rem_t = None

        launch = False
        riding = False
        if s.drone_tau > 0:
            rem_d = s.drone_tau
        elif s.drone_busy:
            rem_d = self.drone_time[s.drone_loc][a_d] if a_d != s.drone_loc else None
        elif a_d != a_t:
            launch = True
            rem_d = self.drone_time[s.drone_loc][a_d]
        else:
            riding = True
            rem_d = None

        movers = [r for r in (rem_t, rem_d) if r is not None]
        if not movers:
            if s.demand:
                raise LivelockError(f"no agent moves in {s} under {act}")
            return s, 0.0
        dt = min(movers)

        demand = s.demand
        launch_ready = s.launch_ready

        truck_loc, truck_tau = s.truck_loc, 0.0
        if rem_t is not None:
            if rem_t <= dt:
                truck_loc = a_t
                if (demand >> a_t) & 1:
                    demand &= ~(1 << a_t)
                    launch_ready = True
            else:
                truck_tau = rem_t - dt
        truck_target = a_t

        busy, unret, sortie = s.drone_busy, s.drone_unreturned, s.sortie
        if launch:
            busy, unret, sortie = 1, 1, True
        drone_loc, drone_tau, drone_target = s.drone_loc, 0.0, a_d
        if riding:
            drone_loc = drone_target = truck_loc
        elif rem_d is not None:
            if rem_d <= dt:
                drone_loc = a_d
                if sortie:
                    demand &= ~(1 << a_d)
                    sortie = False
            else:
                drone_tau = rem_d - dt

        if busy and not sortie and drone_tau == 0.0 and truck_tau == 0.0 and drone_loc == truck_loc:
            busy, unret, launch_ready = 0, 0, False

        nxt = State(
            demand, truck_loc, drone_loc, busy, unret, truck_target, truck_tau,
            drone_target, drone_tau, s.clock + dt, launch_ready, sortie,
        )
        return nxt, dt

    # -- checks ---------------------------------------------------------------

    def check_invariants(self, s: State) -> None:
        if s.truck_tau < 0 or s.drone_tau < 0:
            raise InvariantError("negative remaining time")
        if (s.demand >> self.depot) & 1:
            raise InvariantError("depot carries demand")
        if s.drone_busy == 0 and s.drone_loc != s.truck_loc:
            raise InvariantError(f"docked drone at {s.drone_loc} but truck at {s.truck_loc}")
        if s.drone_busy == 0 and (s.sortie or s.drone_tau > 0):
            raise InvariantError("docked drone with an active flight")
        if s.truck_tau == 0 and s.truck_target != s.truck_loc:
            raise InvariantError("stationary truck with a foreign target")
        if s.drone_tau == 0 and s.drone_target != s.drone_loc:
            raise InvariantError("stationary drone with a foreign target")


@functools.lru_cache(maxsize=256)
def env_for(inst: Instance) -> TSPDEnv:
    return TSPDEnv(inst)


def reset(inst: Instance) -> tuple[State, np.ndarray]:
    env = env_for(inst)
    s = env.reset()
    return s, env.masks(s, "truck")


def action_masks(state: State, inst: Instance, phase: str, truck_choice: int | None = None) -> np.ndarray:
    return env_for(inst).masks(state, phase, truck_choice)


def step(state: State, act: JointAction, inst: Instance) -> tuple[State, float]:
    return env_for(inst).step(state, act)


def rollout_actions(inst: Instance, actions, check: bool = True) -> Trajectory:
    """Replay a sequence of joint actions from the initial state."""
    env = env_for(inst)
    s = env.reset()
    traj = Trajectory()
    for a in actions:
        if not isinstance(a, JointAction):
            a = JointAction(*a)
        nxt, dt = env.step(s, a, check=check)
        traj.steps.append(StepRecord(s, a, dt))
        s = nxt
    traj.final_state = s
    return traj


def episode_cost(traj: Trajectory, inst: Instance | None = None) -> float:
    fs = traj.final_state
    if fs is None:
        raise EpisodeStateError("trajectory has no final state")
    if inst is not None:
        terminal = env_for(inst).is_terminal(fs)
    else:
        terminal = fs.demand == 0 and fs.drone_busy == 0 and fs.truck_tau == 0.0 and (
            not traj.steps or fs.truck_loc == traj.steps[0].state.truck_loc
        )
    if not terminal:
        raise EpisodeStateError("trajectory is not terminal")
    return traj.total_cost


# -- movements and independent replay ---------------------------------------


@dataclass(frozen=True)
class Movement:
    step: int
    agent: str
    origin: int
    target: int
    depart: float
    arrive: float


def movements(traj: Trajectory, inst: Instance) -> list[Movement]:
    """Legs actually travelled, derived from consecutive states."""
    out: list[Movement] = []
    open_leg: dict[str, tuple[int, int, float]] = {}
    for i, rec in enumerate(traj.steps):
        s, a = rec.state, rec.action
        post = traj.steps[i + 1].state if i + 1 < len(traj.steps) else traj.final_state
        if rec.dt == 0.0 and post == s:
            continue
        truck_moving = s.truck_tau > 0 or a.truck != s.truck_loc
        if s.truck_tau == 0 and truck_moving:
            open_leg["truck"] = (s.truck_loc, a.truck, s.clock)
        if truck_moving and post.truck_tau == 0.0:
            o, t, dep = open_leg.pop("truck")
            out.append(Movement(i, "truck", o, t, dep, post.clock))
        if s.drone_tau > 0:
            drone_moving = True
        elif s.drone_busy:
            drone_moving = a.drone != s.drone_loc
        else:
            drone_moving = a.drone != a.truck
        if s.drone_tau == 0 and drone_moving:
            open_leg["drone"] = (s.drone_loc, a.drone, s.clock)
        if drone_moving and post.drone_tau == 0.0:
            o, t, dep = open_leg.pop("drone")
            out.append(Movement(i, "drone", o, t, dep, post.clock))
    return out


def route_replay_cost(inst: Instance, moves: list[Movement], tol: float = 1e-9) -> float:
    """Completion time recomputed from leg geometry alone.

    Each leg's arrival is recomputed as departure plus distance over speed;
    legs of one agent must not overlap and the truck's legs must chain.  The
    result is the latest recomputed arrival of either vehicle.
    """
    pts = inst.points()
    finish = {"truck": 0.0, "drone": 0.0}
    last_truck_node = inst.depot
    for m in sorted(moves, key=lambda m: (m.depart, m.agent)):
        d = float(np.hypot(*(pts[m.target] - pts[m.origin])))
        speed = inst.truck_speed * (inst.alpha if m.agent == "drone" else 1.0)
        arrive = m.depart + d / speed
        if abs(arrive - m.arrive) > tol * max(1.0, abs(arrive)):
            raise InvariantError(f"leg {m} should arrive at {arrive}")
        if m.depart < finish[m.agent] - tol:
            raise InvariantError(f"overlapping {m.agent} legs at {m}")
        if m.agent == "truck":
            if m.origin != last_truck_node:
                raise InvariantError(f"truck leg {m} does not start at {last_truck_node}")
            last_truck_node = m.target
        finish[m.agent] = max(finish[m.agent], arrive)
    if moves and last_truck_node != inst.depot:
        raise InvariantError("truck does not end at the depot")
    return max(finish.values())


def dump_trajectory(traj: Trajectory, inst: Instance, path: str | Path | None = None) -> str:
    lines = [
        f"{m.step} {m.agent} {m.origin} {m.target} {m.depart!r} {m.arrive!r}"
        for m in movements(traj, inst)
    ]
    lines.append(f"cost {traj.total_cost!r}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
