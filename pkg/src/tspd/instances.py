"""Problem instances: generation, text persistence and metric primitives.

Coordinates are drawn from a Philox4x64 counter-based generator (numpy's
``Philox``) so that instance sets are reproducible on any platform.  Each
uniform variate is ``(next_uint64 >> 11) * 2**-53``, which is what
``Generator.random`` produces.  Per instance the stream yields the ``2n``
coordinates in row-major order (x0, y0, x1, y1, ...), followed, for the
``uniform-random-depot`` family only, by one extra variate ``u`` mapped to
the depot index ``floor(u * n)``.  Instance ``i`` of a set uses the stream
seeded with ``[seed, i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

FAMILIES = ("random-corner-depot", "uniform-random-depot", "external")
SCALES = (1, 100)


class InstanceFormatError(ValueError):
    """Malformed instance or manifest file."""

    def __init__(self, message: str, path: str | Path | None = None, lineno: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if lineno is not None:
                loc += f":{lineno}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.lineno = lineno


class InstanceValidationError(ValueError):
    """An instance violates a structural invariant."""


@dataclass(frozen=True)
class Instance:
    coords: tuple[tuple[float, float], ...]
    depot: int = 0
    alpha: float = 2.0
    truck_speed: float = 1.0

    def __post_init__(self):
        coords = tuple((float(x), float(y)) for x, y in self.coords)
        object.__setattr__(self, "coords", coords)
        n = len(coords)
        if n < 2:
            raise InstanceValidationError(f"need at least 2 nodes, got {n}")
        if not (0 <= self.depot < n):
            raise InstanceValidationError(f"depot index {self.depot} outside [0, {n})")
        if not all(math.isfinite(v) for p in coords for v in p):
            raise InstanceValidationError("non-finite coordinate")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InstanceValidationError(f"alpha must be positive, got {self.alpha}")
        if not (self.truck_speed > 0 and math.isfinite(self.truck_speed)):
            raise InstanceValidationError(f"truck_speed must be positive, got {self.truck_speed}")

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def customers(self) -> list[int]:
        return [i for i in range(self.n) if i != self.depot]

    def points(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=np.float64)

    def distance_matrix(self) -> np.ndarray:
        p = self.points()
        diff = p[:, None, :] - p[None, :, :]
        return np.sqrt((diff**2).sum(-1))


@dataclass(frozen=True)
class InstanceSet:
    instances: tuple[Instance, ...]
    seed: int | None = None
    family: str = "external"
    scale: float = 100

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        if self.family not in FAMILIES:
            raise InstanceValidationError(f"unknown family {self.family!r}")
        if self.instances:
            n0, a0 = self.instances[0].n, self.instances[0].alpha
            for inst in self.instances:
                if inst.n != n0 or inst.alpha != a0:
                    raise InstanceValidationError("instances in a set must share n and alpha")

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]


def rng_stream(*keys: int) -> np.random.Generator:
    """Portable Philox stream keyed by a tuple of non-negative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(keys))))


def generate_instances(
    n: int,
    count: int,
    seed: int,
    family: str = "random-corner-depot",
    scale: float = 100,
    alpha: float = 2.0,
) -> InstanceSet:
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    if not isinstance(count, (int, np.integer)) or count < 1:
        raise ValueError(f"count must be an integer >= 1, got {count!r}")
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    if family not in FAMILIES[:2]:
        raise ValueError(f"cannot generate family {family!r}")
    if seed < 0:
        raise ValueError("seed must be non-negative")

    out = []
    for i in range(count):
        rng = rng_stream(seed, i)
        xy = rng.random(2 * n).reshape(n, 2) * scale
        if family == "random-corner-depot":
            depot = 0
            xy[0] = (0.0, 0.0)
        else:
            depot = min(int(rng.random() * n), n - 1)
        out.append(Instance(tuple(map(tuple, xy)), depot=depot, alpha=alpha))
    return InstanceSet(tuple(out), seed=seed, family=family, scale=scale)


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def travel_time(agent: str, d: float, inst: Instance) -> float:
    if d < 0:
        raise ValueError(f"negative distance {d}")
    if agent == "truck":
        return d / inst.truck_speed
    if agent == "drone":
        return d / (inst.alpha * inst.truck_speed)
    raise ValueError(f"unknown agent {agent!r}")


# -- text persistence -------------------------------------------------------


def format_instance(inst: Instance) -> str:
    header = f"{inst.n} {inst.depot} {inst.alpha!r}"
    if inst.truck_speed != 1.0:
        header += f" {inst.truck_speed!r}"
    lines = [header] + [f"{x!r} {y!r}" for x, y in inst.coords]
    return "\n".join(lines) + "\n"


def parse_instance(text: str, path: str | Path | None = None) -> Instance:
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(no, ln) for no, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise InstanceFormatError("empty instance file", path)
    no, head = lines[0]
    parts = head.split()
    if len(parts) not in (3, 4):
        raise InstanceFormatError("header must be 'n depot alpha [truck_speed]'", path, no)
    try:
        n, depot = int(parts[0]), int(parts[1])
        alpha = float(parts[2])
        speed = float(parts[3]) if len(parts) == 4 else 1.0
    except ValueError as exc:
        raise InstanceFormatError(f"bad header: {exc}", path, no) from None
    body = lines[1:]
    if len(body) != n:
        raise InstanceFormatError(f"expected {n} coordinate lines, found {len(body)}", path, no)
    coords = []
    for no, ln in body:
        xy = ln.split()
        if len(xy) != 2:
            raise InstanceFormatError("coordinate line must be 'x y'", path, no)
        try:
            coords.append((float(xy[0]), float(xy[1])))
        except ValueError:
            raise InstanceFormatError(f"non-numeric coordinate {ln!r}", path, no) from None
    try:
        return Instance(tuple(coords), depot=depot, alpha=alpha, truck_speed=speed)
    except InstanceValidationError as exc:
        raise InstanceValidationError(f"{path}: {exc}" if path else str(exc)) from None


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(format_instance(inst), encoding="utf-8")


def load_instance(path: str | Path) -> Instance:
    return parse_instance(Path(path).read_text(encoding="utf-8"), path)


def save_instances(iset: InstanceSet, path: str | Path) -> Path:
    """Write ``inst_0000.txt ...`` plus ``manifest.txt`` into directory ``path``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for i, inst in enumerate(iset):
        save_instance(inst, root / f"inst_{i:04d}.txt")
    manifest = [
        f"count {len(iset)}",
        f"seed {'none' if iset.seed is None else iset.seed}",
        f"family {iset.family}",
        f"scale {iset.scale!r}",
    ]
    (root / "manifest.txt").write_text("\n".join(manifest) + "\n", encoding="utf-8")
    return root


def load_instances(path: str | Path) -> InstanceSet:
    root = Path(path)
    meta = {}
    mpath = root / "manifest.txt"
    if mpath.exists():
        for no, ln in enumerate(mpath.read_text(encoding="utf-8").splitlines(), 1):
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            key, _, val = ln.partition(" ")
            if not val:
                raise InstanceFormatError(f"manifest line needs 'key value': {ln!r}", mpath, no)
            meta[key] = val.strip()
    files = sorted(root.glob("inst_*.txt"))
    if "count" in meta and int(meta["count"]) != len(files):
        raise InstanceFormatError(
            f"manifest lists {meta['count']} instances, found {len(files)}", mpath
        )
    seed = meta.get("seed", "none")
    scale = float(meta.get("scale", "100"))
    if scale.is_integer():
        scale = int(scale)
    return InstanceSet(
        tuple(load_instance(f) for f in files),
        seed=None if seed == "none" else int(seed),
        family=meta.get("family", "external"),
        scale=scale,
    )
