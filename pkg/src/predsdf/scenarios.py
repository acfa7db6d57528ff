"""Declarative dynamic worlds rendered into occupancy frames.

Shapes are axis-aligned boxes and z-axis cylinders. A voxel is occupied iff
its center lies inside (or on the surface of) a shape. The builtin catalog
places every shape face between voxel centers, so frames of objects moving
a whole number of cells are exact translations of each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import jsonschema
import numpy as np

from .voxelgrid import GridGeometry, OccupancyGrid

CELL = 0.04
_INSIDE_TOL = 1e-9
_TIME_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != (3,) or hi.shape != (3,) or not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("box corners must be finite 3-vectors")
        if np.any(hi < lo):
            raise ValueError(f"box hi {tuple(hi)} below lo {tuple(lo)}")
        object.__setattr__(self, "lo", tuple(lo.tolist()))
        object.__setattr__(self, "hi", tuple(hi.tolist()))

    def translated(self, d) -> "Box":
        d = np.asarray(d, float)
        return Box(tuple(np.asarray(self.lo) + d), tuple(np.asarray(self.hi) + d))

    def axis_masks(self, axes):
        return [(c >= lo - _INSIDE_TOL) & (c <= hi + _INSIDE_TOL) for c, lo, hi in zip(axes, self.lo, self.hi)]

    def mask(self, axes) -> np.ndarray:
        mx, my, mz = self.axis_masks(axes)
        return mx[:, None, None] & my[None, :, None] & mz[None, None, :]

    def contains(self, p) -> bool:
        p = np.asarray(p, float)
        return bool(np.all(p >= np.asarray(self.lo) - _INSIDE_TOL) and np.all(p <= np.asarray(self.hi) + _INSIDE_TOL))

    def to_json(self):
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Cylinder:
    center: Tuple[float, float]
    radius: float
    z_lo: float
    z_hi: float

    def __post_init__(self):
        c = np.asarray(self.center, float)
        vals = [*c, self.radius, self.z_lo, self.z_hi]
        if c.shape != (2,) or not all(math.isfinite(v) for v in vals):
            raise ValueError("cylinder parameters must be finite")
        if self.radius <= 0 or self.z_hi < self.z_lo:
            raise ValueError("cylinder needs positive radius and z_hi >= z_lo")
        object.__setattr__(self, "center", tuple(c.tolist()))

    def translated(self, d) -> "Cylinder":
        d = np.asarray(d, float)
        return Cylinder((self.center[0] + d[0], self.center[1] + d[1]), self.radius, self.z_lo + d[2], self.z_hi + d[2])

    def mask(self, axes) -> np.ndarray:
        x, y, z = axes
        r2 = (x[:, None] - self.center[0]) ** 2 + (y[None, :] - self.center[1]) ** 2
        mxy = r2 <= self.radius**2 + _INSIDE_TOL
        mz = (z >= self.z_lo - _INSIDE_TOL) & (z <= self.z_hi + _INSIDE_TOL)
        return mxy[:, :, None] & mz[None, None, :]

    def contains(self, p) -> bool:
        x, y, z = map(float, p)
        r2 = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2
        return r2 <= self.radius**2 + _INSIDE_TOL and self.z_lo - _INSIDE_TOL <= z <= self.z_hi + _INSIDE_TOL

    def to_json(self):
        return {"type": "cylinder", "center": list(self.center), "radius": self.radius,
                "z_lo": self.z_lo, "z_hi": self.z_hi}


Shape = Union[Box, Cylinder]


@dataclass(frozen=True)
class MovingShape:
    """A shape translating at constant ``velocity`` between ``t_start`` and ``t_stop``."""

    shape: Shape
    velocity: Tuple[float, float, float]
    t_start: float = 0.0
    t_stop: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.velocity, float)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError("velocity must be a finite 3-vector")
        object.__setattr__(self, "velocity", tuple(v.tolist()))

    def displacement(self, t: float) -> np.ndarray:
        stop = math.inf if self.t_stop is None else self.t_stop
        moving_time = min(max(t, self.t_start), stop) - self.t_start
        return np.asarray(self.velocity) * moving_time

    def at(self, t: float) -> Shape:
        return self.shape.translated(self.displacement(t))

    def to_json(self):
        out = {"shape": self.shape.to_json(), "velocity": list(self.velocity), "t_start": self.t_start}
        if self.t_stop is not None:
            out["t_stop"] = self.t_stop
        return out


@dataclass(frozen=True)
class RobotTask:
    """Robot description plus start/goal configurations.

    ``robot`` is a plain dict: ``{"kind": "point", "dim": 2, "z": .., "radius": ..}``
    or ``{"kind": "arm", "base": [..], "links": [..], "radius": .., "per_link": ..}``.
    ``plan_start`` is the scenario time of the first trajectory knot.
    """

    robot: dict
    start: Tuple[float, ...]
    goal: Tuple[float, ...]
    plan_start: float = 0.0

    def to_json(self):
        return {"robot": self.robot, "start": list(self.start), "goal": list(self.goal),
                "plan_start": self.plan_start}


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    geometry: GridGeometry
    static_shapes: Tuple[Shape, ...] = ()
    moving_shapes: Tuple[MovingShape, ...] = ()
    horizon: float = 3.1
    frame_dt: float = 0.1
    tasks: Dict[str, RobotTask] = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        if not self.frame_dt > 0:
            raise ValueError("frame_dt must be positive")
        if self.horizon < self.frame_dt:
            raise ValueError("horizon must be at least one frame_dt")
        object.__setattr__(self, "static_shapes", tuple(self.static_shapes))
        object.__setattr__(self, "moving_shapes", tuple(self.moving_shapes))

    @property
    def n_frames(self) -> int:
        return int(math.floor(self.horizon / self.frame_dt + _TIME_TOL)) + 1

    def frame_times(self) -> List[float]:
        return [k * self.frame_dt for k in range(self.n_frames)]

    def with_speed(self, speed: float) -> "ScenarioScript":
        """Rescale every moving shape's velocity to magnitude ``speed``."""
        moved = []
        for m in self.moving_shapes:
            v = np.asarray(m.velocity)
            n = np.linalg.norm(v)
            moved.append(replace(m, velocity=tuple(v / n * speed) if n > 0 else m.velocity))
        return replace(self, moving_shapes=tuple(moved))

    def to_json(self) -> dict:
        g = self.geometry
        return {
            "name": self.name,
            "description": self.description,
            "geometry": {"dims": list(g.dims), "cell_size": g.cell_size, "origin": list(g.origin)},
            "static_shapes": [s.to_json() for s in self.static_shapes],
            "moving_shapes": [m.to_json() for m in self.moving_shapes],
            "horizon": self.horizon,
            "frame_dt": self.frame_dt,
            "tasks": {k: t.to_json() for k, t in self.tasks.items()},
        }


def _axes(geometry: GridGeometry):
    return [geometry.origin[a] + geometry.cell_size * np.arange(geometry.dims[a]) for a in range(3)]


def render_frame(script: ScenarioScript, t: float) -> OccupancyGrid:
    """Voxelize static shapes and moving shapes at time ``t``."""
    if t < -_TIME_TOL or t > script.horizon + _TIME_TOL:
        raise ValueError(f"t={t} outside [0, {script.horizon}]")
    axes = _axes(script.geometry)
    occ = np.zeros(script.geometry.dims, dtype=bool)
    for s in script.static_shapes:
        occ |= s.mask(axes)
    for m in script.moving_shapes:
        occ |= m.at(t).mask(axes)
    return OccupancyGrid(script.geometry, occ)


def render_static(script: ScenarioScript) -> OccupancyGrid:
    axes = _axes(script.geometry)
    occ = np.zeros(script.geometry.dims, dtype=bool)
    for s in script.static_shapes:
        occ |= s.mask(axes)
    return OccupancyGrid(script.geometry, occ)


# ---------------------------------------------------------------- JSON I/O

def scenario_schema() -> dict:
    return json.loads(resources.files("predsdf").joinpath("scenario.schema.json").read_text())


def _shape_from_json(d) -> Shape:
    if d["type"] == "box":
        return Box(tuple(d["lo"]), tuple(d["hi"]))
    return Cylinder(tuple(d["center"]), d["radius"], d["z_lo"], d["z_hi"])


def scenario_from_json(doc: dict) -> ScenarioScript:
    jsonschema.validate(doc, scenario_schema())
    g = doc["geometry"]
    geometry = GridGeometry(tuple(g["dims"]), g["cell_size"], tuple(g.get("origin", (0.0, 0.0, 0.0))))
    moving = [MovingShape(_shape_from_json(m["shape"]), tuple(m["velocity"]), m.get("t_start", 0.0), m.get("t_stop"))
              for m in doc.get("moving_shapes", [])]
    tasks = {k: RobotTask(t["robot"], tuple(t["start"]), tuple(t["goal"]), t.get("plan_start", 0.0))
             for k, t in doc.get("tasks", {}).items()}
    return ScenarioScript(doc["name"], geometry, tuple(_shape_from_json(s) for s in doc.get("static_shapes", [])),
                          tuple(moving), doc["horizon"], doc["frame_dt"], tasks, doc.get("description", ""))


def load_scenario(path) -> ScenarioScript:
    with open(path) as fh:
        return scenario_from_json(json.load(fh))


def save_scenario(script: ScenarioScript, path) -> None:
    with open(path, "w") as fh:
        json.dump(script.to_json(), fh, indent=2)


# ---------------------------------------------------------------- builtin catalog

def _q(x: float) -> float:
    """Snap a length to a whole number of cells."""
    return round(x / CELL) * CELL


def _geometry(n: int) -> GridGeometry:
    # Voxel (0,0,0) is centered at half a cell, so the lattice spans [0, n*CELL] and
    # cell-multiple shape faces fall midway between voxel centers.
    return GridGeometry((n, n, n), CELL, (CELL / 2,) * 3)


def _table_and_cabinet(L: float) -> List[Shape]:
    top_z = _q(0.33 * L)
    x0, x1, y0, y1 = _q(0.12 * L), _q(0.40 * L), _q(0.62 * L), _q(0.92 * L)
    leg = 0.08
    shapes: List[Shape] = [Box((x0, y0, top_z - 0.04), (x1, y1, top_z))]
    for lx in (x0, x1 - leg):
        for ly in (y0, y1 - leg):
            shapes.append(Box((lx, ly, 0.0), (lx + leg, ly + leg, top_z - 0.04)))
    shapes.append(Box((_q(0.72 * L), _q(0.66 * L), 0.0), (_q(0.92 * L), _q(0.94 * L), _q(0.5 * L))))
    return shapes


def _point_task(L: float, plan_start: float = 0.1) -> RobotTask:
    z = _q(0.45 * L) + CELL / 2
    y = _q(0.4 * L)
    return RobotTask({"kind": "point", "dim": 2, "z": z, "radius": 0.1},
                     (_q(0.2 * L), y), (_q(0.8 * L), y), plan_start)


def _arm_task(L: float, plan_start: float = 0.1) -> RobotTask:
    base = [_q(0.5 * L) - 0.7, _q(0.4 * L), _q(0.45 * L) + CELL / 2]
    return RobotTask({"kind": "arm", "base": base, "links": [0.45, 0.4, 0.3], "radius": 0.06, "per_link": 3},
                     (-1.2, 0.3, 0.3), (1.2, 0.3, 0.1), plan_start)


def _pillar(x_center: float, y_center: float, L: float, half: float = 0.1) -> Box:
    return Box((x_center - half, y_center - half, CELL), (x_center + half, y_center + half, _q(0.75 * L)))


def _crossing_start(y_line: float, speed: float, t_cross: float) -> float:
    """Pillar center at t=0 so that it reaches ``y_line`` at ``t_cross``, snapped to cells."""
    return _q(y_line - speed * t_cross)


def _empty_block(n: int, speed: Optional[float]) -> ScenarioScript:
    L = n * CELL
    v = np.array([0.2, 0.12, 0.0])
    if speed is not None:
        v = v / np.linalg.norm(v) * speed
    block = Box((_q(0.15 * L), _q(0.15 * L), _q(0.25 * L)), (_q(0.15 * L) + 0.48, _q(0.15 * L) + 0.48, _q(0.25 * L) + 0.48))
    return ScenarioScript(f"empty-block-{n}", _geometry(n), (), (MovingShape(block, tuple(v)),),
                          tasks={"point": _point_task(L), "arm": _arm_task(L)},
                          description="empty workspace with one large moving block")


def _one_box(n: int, speed: Optional[float]) -> ScenarioScript:
    L = n * CELL
    s = 0.3 if speed is None else speed
    box = Box((_q(0.16 * L), _q(0.2 * L), _q(0.1 * L)), (_q(0.16 * L) + 0.16, _q(0.2 * L) + 0.16, _q(0.1 * L) + 0.16))
    return ScenarioScript(f"one-box-{n}", _geometry(n), tuple(_table_and_cabinet(L)), (MovingShape(box, (s, 0.0, 0.0)),),
                          tasks={"point": _point_task(L), "arm": _arm_task(L)},
                          description="table and cabinet with one small moving box")


def _two_box(n: int, speed: Optional[float]) -> ScenarioScript:
    L = n * CELL
    one = _one_box(n, speed)
    s = 0.25 if speed is None else speed
    box = Box((_q(0.8 * L), _q(0.3 * L), _q(0.45 * L)), (_q(0.8 * L) + 0.16, _q(0.3 * L) + 0.16, _q(0.45 * L) + 0.16))
    v = np.array([-0.25, 0.05, 0.0])
    moving = one.moving_shapes + (MovingShape(box, tuple(v / np.linalg.norm(v) * s)),)
    return replace(one, name=f"two-box-{n}", moving_shapes=moving,
                   description="table and cabinet with two small moving boxes")


def _one_pillar(n: int, speed: Optional[float]) -> ScenarioScript:
    L = n * CELL
    s = 0.4 if speed is None else speed
    task = _point_task(L)
    t_cross = task.plan_start + 1.5
    y0 = _crossing_start(task.start[1], s, t_cross)
    pillar = _pillar(_q(0.5 * L), y0, L)
    return ScenarioScript(f"one-pillar-{n}", _geometry(n), tuple(_table_and_cabinet(L)),
                          (MovingShape(pillar, (0.0, s, 0.0)),),
                          tasks={"point": task, "arm": _arm_task(L)},
                          description="table and cabinet with a tall pillar crossing the robot's path")


def _two_pillar(n: int, speed: Optional[float]) -> ScenarioScript:
    L = n * CELL
    one = _one_pillar(n, speed)
    s = 0.3 if speed is None else speed
    second = MovingShape(_pillar(_q(0.62 * L) + 0.06, _q(0.8 * L), L), (0.0, -s, 0.0))
    return replace(one, name=f"two-pillar-{n}", moving_shapes=one.moving_shapes + (second,),
                   description="table and cabinet with two tall pillars moving in opposite directions")


def _gap_crossing(n: int, speed: Optional[float]) -> ScenarioScript:
    L = n * CELL
    s = 0.4 if speed is None else speed
    top = _q(0.3 * L)
    tables = (Box((_q(0.1 * L), _q(0.2 * L), 0.0), (_q(0.4 * L), _q(0.8 * L), top)),
              Box((_q(0.6 * L), _q(0.2 * L), 0.0), (_q(0.9 * L), _q(0.8 * L), top)))
    walker = Box((_q(0.5 * L) - 0.2, CELL, CELL), (_q(0.5 * L) + 0.2, CELL + 0.4, _q(0.6 * L)))
    arm = RobotTask({"kind": "arm", "base": [_q(0.3 * L), _q(0.5 * L), top + 0.3 + CELL / 2],
                     "links": [0.45, 0.4, 0.3], "radius": 0.06, "per_link": 3},
                    (np.pi / 2, 0.4, 0.3), (0.0, 0.0, 0.0), 0.1)
    point = RobotTask({"kind": "point", "dim": 2, "z": top + 0.3 + CELL / 2, "radius": 0.1},
                      (_q(0.3 * L), _q(0.5 * L)), (_q(0.72 * L), _q(0.5 * L)), 0.1)
    return ScenarioScript(f"gap-crossing-{n}", _geometry(n), tables, (MovingShape(walker, (0.0, s, 0.0)),),
                          tasks={"arm": arm, "point": point},
                          description="two tables separated by a walkway with a block travelling along it")


def _toy_discs(n: int, speed: Optional[float]) -> ScenarioScript:
    L = n * CELL
    s = 0.15 if speed is None else speed
    zl, zh = _q(0.3 * L), _q(0.7 * L)
    static = (Cylinder((_q(0.5 * L), _q(0.5 * L)), 0.2 * L + 0.3 * CELL, zl, zh),)
    c = _q(0.5 * L)
    starts = [((_q(0.12 * L), c), (1.0, 0.0)), ((c, _q(0.88 * L)), (0.0, -1.0)), ((_q(0.85 * L), _q(0.15 * L)), (-0.6, 0.8))]
    moving = tuple(MovingShape(Cylinder(p, 0.07 * L + 0.3 * CELL, zl, zh), (d[0] * s, d[1] * s, 0.0))
                   for p, d in starts)
    return ScenarioScript(f"toy-discs-{n}", _geometry(n), static, moving, horizon=1.5,
                          tasks={"point": _point_task(L)},
                          description="large static disc with three smaller discs moving toward it")


FAMILIES: Dict[str, Callable[[int, Optional[float]], ScenarioScript]] = {
    "empty-block": _empty_block,
    "one-box": _one_box,
    "two-box": _two_box,
    "one-pillar": _one_pillar,
    "two-pillar": _two_pillar,
    "gap-crossing": _gap_crossing,
    "toy-discs": _toy_discs,
}

BENCHMARK_FAMILIES = ("empty-block", "one-box", "two-box", "one-pillar", "two-pillar")
CATALOG_SIZES = (64, 96)


RANDOM_FAMILY = "random"


def _padded_overlap(a, b, pad: int) -> bool:
    return all(a[0][i] - pad <= b[1][i] and b[0][i] - pad <= a[1][i] for i in range(3))


def random_scenario(n: int, seed: int = 0, n_static: Tuple[int, int] = (1, 3), n_moving: Tuple[int, int] = (1, 3),
                    horizon: float = 1.0, frame_dt: float = 0.1, max_tries: int = 2000) -> ScenarioScript:
    """Random boxes, some moving a whole number of cells (0 or 1 per axis) every frame.

    Boxes are kept two cells off the outer layer and the boxes swept over the
    horizon stay at least three cells apart, so components never touch.
    """
    if n < 16:
        raise ValueError("random scenarios need at least 16 voxels per side")
    rng = np.random.default_rng(seed)
    geom = _geometry(n)
    steps = int(round(horizon / frame_dt))
    placed: List[tuple] = []
    static: List[Shape] = []
    moving: List[MovingShape] = []
    want_static = int(rng.integers(n_static[0], n_static[1] + 1))
    want_moving = int(rng.integers(n_moving[0], n_moving[1] + 1))
    tries = 0
    while len(static) + len(moving) < want_static + want_moving:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not place {want_static + want_moving} separated boxes in a {n}^3 grid")
        is_moving = len(moving) < want_moving
        size = rng.integers(2, max(3, n // 6), size=3)
        step = rng.integers(-1, 2, size=3) if is_moving else np.zeros(3, dtype=int)
        if is_moving and not step.any():
            step[rng.integers(3)] = 1
        lo = np.array([int(rng.integers(2, n - 2 - sz - abs(st) * steps + 1)) if n - 2 - sz - abs(st) * steps >= 2
                       else -1 for sz, st in zip(size, step)])
        if np.any(lo < 0):
            continue
        lo = lo + np.where(step < 0, -step * steps, 0)
        sweep_lo = np.minimum(lo, lo + step * steps)
        sweep_hi = np.maximum(lo, lo + step * steps) + size - 1
        box = (sweep_lo, sweep_hi)
        if any(_padded_overlap(box, other, 3) for other in placed):
            continue
        placed.append(box)
        shape = Box(tuple(lo * CELL), tuple((lo + size) * CELL))
        if is_moving:
            moving.append(MovingShape(shape, tuple(float(v) for v in step * CELL / frame_dt)))
        else:
            static.append(shape)
    return ScenarioScript(f"{RANDOM_FAMILY}-{n}", geom, tuple(static), tuple(moving), horizon=horizon,
                          frame_dt=frame_dt, description=f"random boxes (seed {seed})")


def split_name(name: str) -> Tuple[str, Optional[int]]:
    """``"one-pillar-96"`` -> ``("one-pillar", 96)``; a bare family name gives size ``None``."""
    known = set(FAMILIES) | {RANDOM_FAMILY}
    family, _, tail = name.rpartition("-")
    if tail.isdigit() and family in known:
        return family, int(tail)
    if name in known:
        return name, None
    raise KeyError(name)


def builtin_scenarios() -> Dict[str, Callable[..., ScenarioScript]]:
    """Catalog of named builtin scenarios (``<family>-64`` and ``<family>-96``)."""
    return {f"{fam}-{n}": (lambda fam=fam, n=n, speed=None: FAMILIES[fam](n, speed))
            for fam in FAMILIES for n in CATALOG_SIZES}


def get_scenario(name: str, size: Optional[int] = None, speed: Optional[float] = None,
                 seed: int = 0) -> ScenarioScript:
    """Build a builtin scenario by name; ``size`` overrides the voxels-per-side suffix.

    ``seed`` only matters for the ``random`` family, which ignores ``speed``.
    """
    try:
        family, n = split_name(name)
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known families: {', '.join(FAMILIES)}, {RANDOM_FAMILY}") from None
    n = size or n or 64
    if n < 16:
        raise ValueError("builtin scenarios need at least 16 voxels per side")
    if family == RANDOM_FAMILY:
        return random_scenario(n, seed)
    return FAMILIES[family](n, speed)
