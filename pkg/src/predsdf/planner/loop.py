"""Closed-loop execution under four perception modes.

``static``: one plan against the first observation. ``full_prior``: one plan
with the true SDF of every knot time. ``execute_and_update``: replan every
step with all current and future factors set to the latest observation.
``predicted``: replan every step with composite SDFs predicted per knot.

Knot ``i`` happens at scenario time ``task.plan_start + i * dt``. In
predicted mode, when ``plan_start >= dt`` the first loop iteration is an
observation-only warm-up at ``plan_start - dt`` so velocities are known
before the robot moves.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..composite import compute_static_sdf, predict_sdf, refresh_object_sdfs
from ..edt import compute_exact_sdf
from ..scenarios import RobotTask, ScenarioScript, render_frame
from ..tracking import SceneDecomposition, classify_motion, initial_decomposition
from ..voxelgrid import SignedDistanceField
from .factors import gp_cost
from .problem import FactorGraphProblem, PlannerConfig
from .query import sdf_query_batch
from .robots import PlanarArm, PointRobot, RobotModel
from .solver import PlanResult, optimize

MODES = ("static", "execute_and_update", "full_prior", "predicted")


def robot_from_task(task: RobotTask) -> RobotModel:
    params = dict(task.robot)
    kind = params.pop("kind")
    if kind == "point":
        return PointRobot(dim=params.get("dim", 2), radius=params.get("radius", 0.1), z=params.get("z", 0.0),
                          offsets=params.get("offsets", ((0.0, 0.0, 0.0),)))
    if kind == "arm":
        return PlanarArm.desk_arm(params["base"], params.get("links", (0.45, 0.4, 0.3)), params.get("radius", 0.06),
                                  params.get("per_link", 3))
    raise ValueError(f"unknown robot kind {kind!r}")


class WorldOracle:
    """Ground-truth frames and exact SDFs of a scenario, cached per time."""

    def __init__(self, script: ScenarioScript):
        self.script = script
        self._frames: Dict[float, object] = {}
        self._sdfs: Dict[float, SignedDistanceField] = {}

    @staticmethod
    def _key(t: float) -> float:
        return round(t, 9)

    def frame(self, t: float):
        k = self._key(t)
        if k not in self._frames:
            self._frames[k] = render_frame(self.script, t)
        return self._frames[k]

    def exact_sdf(self, t: float) -> SignedDistanceField:
        k = self._key(t)
        if k not in self._sdfs:
            self._sdfs[k] = compute_exact_sdf(self.frame(t))
        return self._sdfs[k]


@dataclass
class StepRecord:
    step: int
    t: float
    observe_ms: float = 0.0
    track_ms: float = 0.0
    predict_ms: float = 0.0
    update_ms: float = 0.0
    optimize_ms: float = 0.0
    collision: bool = False
    clearance: float = math.inf
    gp_cost: float = 0.0
    obstacle_cost: float = 0.0
    theta: Optional[np.ndarray] = None
    executed: bool = True

    @property
    def loop_ms(self) -> float:
        """Planner-side time: tracking, prediction, factor updates and optimization."""
        return self.track_ms + self.predict_ms + self.update_ms + self.optimize_ms


@dataclass
class ExecutionLog:
    mode: str
    scenario: str
    config: PlannerConfig
    records: List[StepRecord]
    executed: np.ndarray
    plans: List[PlanResult] = field(default_factory=list)
    factor_sdfs: List[List[SignedDistanceField]] = field(default_factory=list)

    @property
    def collisions(self) -> int:
        return sum(r.collision for r in self.records if r.executed)

    @property
    def executed_gp_cost(self) -> float:
        cfg = self.config
        return sum(gp_cost(a, b, cfg.dt, cfg.qc) for a, b in zip(self.executed[:-1], self.executed[1:]))

    @property
    def min_clearance(self) -> float:
        return min(r.clearance for r in self.records if r.executed)

    def loop_rates_hz(self) -> List[float]:
        """Update rate of every replanning iteration (warm-up included)."""
        return [1000.0 / r.loop_ms for r in self.records if r.loop_ms > 0]

    def summary(self) -> dict:
        rates = self.loop_rates_hz()
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "collisions": self.collisions,
            "gp_cost": self.executed_gp_cost,
            "min_clearance": self.min_clearance,
            "median_loop_hz": float(np.median(rates)) if rates else float("nan"),
        }

    def to_csv(self, path) -> None:
        dof = self.executed.shape[1] // 2
        cols = ["step", "t", "observe_ms", "track_ms", "predict_ms", "update_ms", "optimize_ms", "loop_ms",
                "collision", "clearance", "gp_cost", "obstacle_cost"] + [f"q{j}" for j in range(dof)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.records:
                theta = r.theta if r.theta is not None else [float("nan")] * dof
                w.writerow([r.step, f"{r.t:.6f}", f"{r.observe_ms:.3f}", f"{r.track_ms:.3f}", f"{r.predict_ms:.3f}",
                            f"{r.update_ms:.3f}", f"{r.optimize_ms:.3f}", f"{r.loop_ms:.3f}", int(r.collision),
                            f"{r.clearance:.6f}", f"{r.gp_cost:.9g}", f"{r.obstacle_cost:.9g}"]
                           + [f"{q:.9f}" for q in theta])


def check_collision(oracle: WorldOracle, robot: RobotModel, theta, t: float):
    """Collision flag and clearance (min over spheres of exact distance minus radius)."""
    centers, _ = robot.fk(theta)
    d = sdf_query_batch(oracle.exact_sdf(t), centers).distance
    margin = d - robot.radii
    return bool(np.any(margin < 0.0)), float(margin.min())


def composite_band(config: PlannerConfig, robot: RobotModel, cell_size: float) -> float:
    """Band the composite fields must be exact within for the hinge to see exact values.

    The hinge is active up to ``eps + r`` from a sphere center; trilinear
    interpolation reads corners up to two cells further.
    """
    return config.eps + float(robot.radii.max()) + 2.0 * cell_size


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


class _Predictor:
    """Tracking state and SDF caches of the predicted mode."""

    def __init__(self, geometry, band: float, dt: float, v_min: float):
        self.geometry = geometry
        self.band = band
        self.dt = dt
        self.v_min = v_min
        self.decomp: Optional[SceneDecomposition] = None
        self.object_cache = {}
        self._static_key = None
        self.static_sdf: Optional[SignedDistanceField] = None

    def observe(self, frame) -> None:
        if self.decomp is None:
            self.decomp = initial_decomposition(frame)
        else:
            self.decomp = classify_motion(self.decomp, frame, self.dt, self.v_min)

    def refresh(self) -> None:
        key = self.decomp.static_grid.checksum()
        if key != self._static_key:
            self.static_sdf = compute_static_sdf(self.decomp.static_grid)
            self._static_key = key
        refresh_object_sdfs(self.object_cache, self.decomp.moving, self.geometry, self.band)

    def predict(self, ahead: float) -> SignedDistanceField:
        moving = self.decomp.moving
        sdfs = [self.object_cache[o.id] for o in moving]
        return predict_sdf(ahead, moving, sdfs, self.static_sdf)


def run_update_loop(script: ScenarioScript, mode: str, config: PlannerConfig, task: Optional[RobotTask] = None,
                    robot: Optional[RobotModel] = None, keep_fields: bool = False, v_min: float = 0.05,
                    oracle: Optional[WorldOracle] = None) -> ExecutionLog:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if task is None:
        if not script.tasks:
            raise ValueError(f"scenario {script.name} defines no robot task")
        task = script.tasks.get("point") or next(iter(script.tasks.values()))
    robot = robot or robot_from_task(task)
    oracle = oracle or WorldOracle(script)
    n, dt = config.n_knots, config.dt
    times = [task.plan_start + i * dt for i in range(n)]
    if times[-1] > script.horizon + 1e-9:
        raise ValueError(f"planning horizon ends at {times[-1]:.3f}s, past the scenario horizon {script.horizon}s")

    records: List[StepRecord] = []
    plans: List[PlanResult] = []
    history: List[List[SignedDistanceField]] = []

    if mode in ("static", "full_prior"):
        rec = StepRecord(0, times[0])
        t0 = time.perf_counter()
        if mode == "static":
            sdfs = [oracle.exact_sdf(times[0])] * n
        else:
            sdfs = [oracle.exact_sdf(t) for t in times]
        rec.observe_ms = _ms(t0)
        problem = FactorGraphProblem(robot, config, task.start, task.goal, sdfs)
        t0 = time.perf_counter()
        plan = optimize(problem)
        rec.optimize_ms = _ms(t0)
        plans.append(plan)
        if keep_fields:
            history.append(list(sdfs))
        executed = plan.states.copy()
        for i in range(n):
            r = rec if i == 0 else StepRecord(i, times[i])
            r.gp_cost, r.obstacle_cost = plan.gp_cost, plan.obstacle_cost
            _finish_record(r, oracle, robot, executed[i])
            records.append(r)
        return ExecutionLog(mode, script.name, config, records, executed, plans, history)

    first = oracle.exact_sdf(times[0]) if mode == "execute_and_update" else None
    problem = FactorGraphProblem(robot, config, task.start, task.goal,
                                 first if first is not None else _placeholder(script))
    executed = np.zeros_like(problem.states)
    executed[0] = problem.states[0]

    predictor = None
    if mode == "predicted":
        predictor = _Predictor(script.geometry, composite_band(config, robot, script.geometry.cell_size), dt, v_min)
        t_warm = task.plan_start - dt
        if t_warm >= -1e-9:
            rec = StepRecord(-1, t_warm, executed=False)
            t0 = time.perf_counter()
            frame = oracle.frame(max(t_warm, 0.0))
            rec.observe_ms = _ms(t0)
            t0 = time.perf_counter()
            predictor.observe(frame)
            predictor.refresh()
            rec.track_ms = _ms(t0)
            rec.theta = np.asarray(task.start, float)
            records.append(rec)

    for k in range(n):
        rec = StepRecord(k, times[k])
        if k == n - 1:
            # Final knot: nothing left to plan.
            _finish_record(rec, oracle, robot, executed[k])
            rec.gp_cost, rec.obstacle_cost = records[-1].gp_cost, records[-1].obstacle_cost
            records.append(rec)
            break

        t0 = time.perf_counter()
        frame = oracle.frame(times[k])
        rec.observe_ms = _ms(t0)
        if mode == "execute_and_update":
            t0 = time.perf_counter()
            obs = oracle.exact_sdf(times[k])
            rec.predict_ms = _ms(t0)
            t0 = time.perf_counter()
            for i in range(k, n):
                problem.set_factor_sdf(i, obs)
            rec.update_ms = _ms(t0)
        else:
            t0 = time.perf_counter()
            predictor.observe(frame)
            predictor.refresh()
            rec.track_ms = _ms(t0)
            t0 = time.perf_counter()
            predicted = [predictor.predict(times[i] - times[k]) for i in range(k, n)]
            rec.predict_ms = _ms(t0)
            t0 = time.perf_counter()
            for i, sdf in zip(range(k, n), predicted):
                problem.set_factor_sdf(i, sdf)
            rec.update_ms = _ms(t0)
        if keep_fields:
            history.append([f.sdf for f in problem.factors[k:]])

        if k > 0:
            problem.fix_prefix(k, executed[k])
        t0 = time.perf_counter()
        plan = optimize(problem)
        rec.optimize_ms = _ms(t0)
        plans.append(plan)
        rec.gp_cost, rec.obstacle_cost = plan.gp_cost, plan.obstacle_cost
        if k == 0:
            executed[0] = plan.states[0]
        executed[k + 1] = plan.states[k + 1]
        _finish_record(rec, oracle, robot, executed[k])
        records.append(rec)

    return ExecutionLog(mode, script.name, config, records, executed, plans, history)


def _placeholder(script: ScenarioScript) -> SignedDistanceField:
    g = script.geometry
    vals = np.full(g.dims, np.inf)
    vals.flags.writeable = False
    return SignedDistanceField(g, vals)


def _finish_record(rec: StepRecord, oracle: WorldOracle, robot: RobotModel, state) -> None:
    theta = np.asarray(state[: robot.dof], float)
    rec.theta = theta
    rec.collision, rec.clearance = check_collision(oracle, robot, theta, rec.t)
