"""Evaluation: optimality gaps, greedy and best-of-k decoding, reports and
SVG route drawings."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environment import InvariantError, Trajectory, movements, route_replay_cost
from .instances import Instance, rng_stream
from .model import Model
from .oracles import Plan

SAMPLE_CHUNK = 100


def gap(z: float, z_star: float) -> float:
    """Relative gap in percent of ``z`` over the reference ``z_star``."""
    if not z_star > 0:
        raise ValueError(f"reference cost must be positive, got {z_star!r}")
    return (z - z_star) / z_star * 100.0


@dataclass
class EvalRow:
    index: int
    cost: float
    seconds: float
    baseline: float | None = None

    @property
    def gap(self) -> float | None:
        return None if self.baseline is None else gap(self.cost, self.baseline)


@dataclass
class EvalReport:
    strategy: str  # "greedy" or "sampling_<k>"
    rows: list[EvalRow] = field(default_factory=list)
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    @property
    def mean_cost(self) -> float:
        return float(np.mean([r.cost for r in self.rows]))

    @property
    def mean_time(self) -> float:
        return float(np.mean([r.seconds for r in self.rows]))

    @property
    def mean_gap(self) -> float | None:
        gaps = [r.gap for r in self.rows]
        if any(g is None for g in gaps):
            return None
        return float(np.mean(gaps))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instance", "strategy", "cost", "baseline", "gap_percent", "seconds"])
        for r in self.rows:
            w.writerow([
                r.index, self.strategy, repr(r.cost),
                "" if r.baseline is None else repr(r.baseline),
                "" if r.gap is None else repr(r.gap), repr(r.seconds),
            ])
        return buf.getvalue()

    def to_text(self) -> str:
        g = self.mean_gap
        gap_txt = "-" if g is None else f"{g:.2f}%"
        head = f"{'Method':<16}{'Cost':>12}{'Gap':>10}{'Time(s)':>10}"
        line = f"{self.strategy:<16}{self.mean_cost:>12.2f}{gap_txt:>10}{self.mean_time:>10.3f}"
        return f"{head}\n{line}\n({len(self.rows)} instances)\n"

    def write(self, path) -> tuple[Path, Path]:
        """CSV at ``path`` and the text table next to it with ``.txt``."""
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        txt = path.with_suffix(".txt")
        txt.write_text(self.to_text(), encoding="utf-8")
        return path, txt


def sample_costs(model: Model, inst: Instance, k: int, seed: int = 0, index: int = 0):
    """Costs and trajectories of ``k`` sampled decodes.

    Sample ``j`` uses the stream keyed ``(seed, index, j)``, so the first
    ``k`` samples are the same for every larger ``k``.
    """
    costs, trajs = [], []
    for start in range(0, k, SAMPLE_CHUNK):
        js = range(start, min(k, start + SAMPLE_CHUNK))
        res = model.solve([inst] * len(js), "sample", [rng_stream(seed, index, j) for j in js])
        costs.extend(res.costs)
        trajs.extend(res.trajectories)
    return np.array(costs), trajs


def solve_one(model: Model, inst: Instance, strategy: str = "greedy", k: int = 1, seed: int = 0,
              index: int = 0) -> Trajectory:
    if strategy == "greedy":
        return model.solve([inst], "greedy").trajectories[0]
    if strategy in ("sample", "sampling"):
        if k < 1:
            raise ValueError("k must be >= 1")
        costs, trajs = sample_costs(model, inst, k, seed, index)
        return trajs[int(np.argmin(costs))]  # first minimum
    raise ValueError(f"unknown strategy {strategy!r}")


def evaluate(model: Model, instances, strategy: str = "greedy", k: int = 1, baselines=None,
             seed: int = 0, check_replay: bool = True) -> EvalReport:
    """Solve each instance in turn; the clock covers encode and decode only."""
    insts = list(instances)
    if baselines is not None and len(baselines) != len(insts):
        raise ValueError(f"{len(baselines)} baseline costs for {len(insts)} instances")
    label = "greedy" if strategy == "greedy" else f"sampling_{k}"
    report = EvalReport(label)
    for i, inst in enumerate(insts):
        t0 = time.perf_counter()
        traj = solve_one(model, inst, strategy, k, seed, i)
        dt = time.perf_counter() - t0
        cost = traj.total_cost
        if check_replay:
            replay = route_replay_cost(inst, movements(traj, inst))
            if abs(replay - cost) > 1e-9 * max(1.0, cost):
                raise InvariantError(f"instance {i}: reported cost {cost} but route replays to {replay}")
        base = None if baselines is None else float(baselines[i])
        report.rows.append(EvalRow(i, cost, dt, base))
        report.trajectories.append(traj)
    return report


def load_baselines(path) -> list[float]:
    out = []
    for no, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        try:
            out.append(float(ln))
        except ValueError:
            raise ValueError(f"{path}:{no}: not a cost: {ln!r}") from None
    return out


# -- drawing --------------------------------------------------------------------------

SVG_SIZE = 400
SVG_MARGIN = 30


def render_route(route, inst: Instance, path=None) -> str:
    """Draw nodes, the truck tour (solid) and drone legs (dashed) as SVG."""
    traj = route.replay(inst) if isinstance(route, Plan) else route
    if traj.final_state is None:
        raise ValueError("route has no final state")
    moves = movements(traj, inst)
    pts = inst.points()
    lo = pts.min(axis=0)
    span = float((pts.max(axis=0) - lo).max()) or 1.0
    scale = (SVG_SIZE - 2 * SVG_MARGIN) / span

    def xy(i):
        x, y = (pts[i] - lo) * scale
        return f"{SVG_MARGIN + x:.2f}", f"{SVG_SIZE - SVG_MARGIN - y:.2f}"

    h = SVG_SIZE + 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_SIZE}" height="{h}" viewBox="0 0 {SVG_SIZE} {h}">',
        f'<rect width="{SVG_SIZE}" height="{h}" fill="white"/>',
    ]
    truck_nodes = [inst.depot] + [m.target for m in moves if m.agent == "truck"]
    if len(truck_nodes) > 1:
        pl = " ".join(",".join(xy(i)) for i in truck_nodes)
        out.append(f'<polyline class="truck" points="{pl}" fill="none" stroke="black" stroke-width="2"/>')
    for m in moves:
        if m.agent == "drone":
            (x1, y1), (x2, y2) = xy(m.origin), xy(m.target)
            out.append(
                f'<line class="drone" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
                'stroke="#d95f02" stroke-width="1.5" stroke-dasharray="6,4"/>'
            )
    for i in range(inst.n):
        x, y = xy(i)
        if i == inst.depot:
            out.append(f'<circle class="depot" cx="{x}" cy="{y}" r="7" fill="#1b9e77" stroke="black"/>')
        else:
            out.append(f'<circle class="customer" cx="{x}" cy="{y}" r="4" fill="#7570b3"/>')
    out.append(f'<text x="{SVG_MARGIN}" y="{SVG_SIZE + 8}" font-family="monospace" font-size="14">'
               f"cost = {traj.total_cost:.4f}</text>")
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
