"""Time-indexed trajectory problem with one SDF per obstacle factor."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np

from ..voxelgrid import SignedDistanceField
from .factors import (gp_covariance, interpolation_weights, interpolated_obstacle_errors,
                      obstacle_errors_batch, transition)
from .robots import RobotModel


@dataclass(frozen=True)
class PlannerConfig:
    n_knots: int = 31
    dt: float = 0.1
    n_int: int = 4
    eps: float = 0.2
    sigma_cost: float = 0.2
    qc: float = 1.0
    prior_sigma: float = 1e-4
    max_iters: int = 100
    convergence_tol: float = 1e-12
    lambda0: float = 1e-4

    def __post_init__(self):
        if self.n_knots < 2:
            raise ValueError("n_knots must be at least 2")
        if self.n_int < 0:
            raise ValueError("n_int must be non-negative")
        for name in ("dt", "eps", "sigma_cost", "qc", "prior_sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def tau(self) -> float:
        """Spacing of the dense collision checks."""
        return self.dt / (self.n_int + 1)

    @property
    def horizon(self) -> float:
        return self.dt * (self.n_knots - 1)


@dataclass(frozen=True)
class TrajectoryState:
    theta: np.ndarray
    theta_dot: np.ndarray
    index: int
    dt: float

    @property
    def t(self) -> float:
        return self.index * self.dt

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.theta, self.theta_dot])


class ObstacleFactor:
    """Hinge-loss factor at one knot; its SDF reference is swapped in O(1)."""

    __slots__ = ("index", "sdf")

    def __init__(self, index: int, sdf: SignedDistanceField):
        self.index = index
        self.sdf = sdf


class Linearization(NamedTuple):
    residual: np.ndarray
    jacobian: Optional[np.ndarray]
    prior_cost: float
    gp_cost: float
    obstacle_cost: float
    extrapolated: bool

    @property
    def total_cost(self) -> float:
        return self.prior_cost + self.gp_cost + self.obstacle_cost


class FactorGraphProblem:
    """Start/goal priors, GP smoothness between knots and per-knot obstacle factors.

    Knots before ``first_free`` are frozen (already executed). When an
    ``anchor`` state is set, knot ``first_free`` is held exactly at it and
    only later knots are optimized; otherwise the start configuration is
    pinned by a tight prior.
    """

    def __init__(self, robot: RobotModel, config: PlannerConfig, start, goal,
                 sdfs: Union[SignedDistanceField, Sequence[SignedDistanceField]]):
        self.robot = robot
        self.config = config
        self.start = np.asarray(start, dtype=float)
        self.goal = np.asarray(goal, dtype=float)
        if self.start.shape != (robot.dof,) or self.goal.shape != (robot.dof,):
            raise ValueError(f"start/goal must have {robot.dof} components")
        n = config.n_knots
        if isinstance(sdfs, SignedDistanceField):
            sdfs = [sdfs] * n
        if len(sdfs) != n:
            raise ValueError(f"need one SDF per knot ({n}), got {len(sdfs)}")
        self.factors: List[ObstacleFactor] = [ObstacleFactor(i, s) for i, s in enumerate(sdfs)]
        self.states = self.straight_line()
        self.first_free = 0
        self.anchor: Optional[np.ndarray] = None

        d = robot.dof
        self._phi = transition(config.dt, d)
        q = gp_covariance(config.dt, config.qc, d)
        self._whiten = np.linalg.inv(np.linalg.cholesky(q))

    @property
    def dof(self) -> int:
        return self.robot.dof

    @property
    def n_knots(self) -> int:
        return self.config.n_knots

    def straight_line(self) -> np.ndarray:
        """Constant-velocity line from start to goal over the horizon."""
        n, d = self.config.n_knots, self.robot.dof
        s = np.linspace(0.0, 1.0, n)[:, None]
        X = np.zeros((n, 2 * d))
        X[:, :d] = (1 - s) * self.start + s * self.goal
        X[:, d:] = (self.goal - self.start) / self.config.horizon
        return X

    def set_factor_sdf(self, index: int, sdf: SignedDistanceField) -> None:
        self.factors[index].sdf = sdf

    def fix_prefix(self, k: int, measured_state) -> None:
        """Freeze knots before ``k`` and pin knot ``k`` to the measured state."""
        if not 0 <= k < self.n_knots:
            raise IndexError(f"knot {k} out of range")
        self.first_free = k
        self.anchor = np.asarray(measured_state, dtype=float).copy()
        self.states[k] = self.anchor

    def trajectory(self, X: Optional[np.ndarray] = None) -> List[TrajectoryState]:
        X = self.states if X is None else X
        d = self.dof
        return [TrajectoryState(x[:d].copy(), x[d:].copy(), i, self.config.dt) for i, x in enumerate(X)]

    @property
    def first_variable(self) -> int:
        """Index of the first knot the solver may move."""
        return self.first_free + (self.anchor is not None)

    def n_free_vars(self) -> int:
        return (self.n_knots - self.first_variable) * 2 * self.dof

    def evaluate(self, X: np.ndarray, jacobian: bool = True) -> Linearization:
        """Whitened residuals (and their Jacobian w.r.t. the variable knots) at trajectory ``X``."""
        cfg = self.config
        d, D = self.dof, 2 * self.dof
        k = self.first_free
        Xf = X[k:]
        F = len(Xf)
        S = self.robot.n_spheres
        sp = cfg.prior_sigma

        n_obs_rows = F * S + (F - 1) * cfg.n_int * S
        n_prior = 2 * d
        n_rows = n_prior + (F - 1) * D + n_obs_rows
        r = np.empty(n_rows)
        J = np.zeros((n_rows, F * D)) if jacobian else None

        # Priors. An anchored knot is a constant, so its prior is dropped (zero residual).
        if self.anchor is not None:
            r[:d] = 0.0
        else:
            r[:d] = (Xf[0, :d] - self.start) / sp
            if jacobian:
                J[:d, :d] = np.eye(d) / sp
        row = d
        r[row:row + d] = (Xf[-1, :d] - self.goal) / sp
        if jacobian:
            J[row:row + d, (F - 1) * D:(F - 1) * D + d] = np.eye(d) / sp
        row += d
        prior_cost = 0.5 * float(r[:row] @ r[:row])

        # GP smoothness.
        W = self._whiten
        E = Xf[:-1] @ self._phi.T - Xf[1:]
        r[row:row + (F - 1) * D] = (E @ W.T).ravel()
        if jacobian:
            A, B = W @ self._phi, -W
            for a in range(F - 1):
                rr = row + a * D
                J[rr:rr + D, a * D:(a + 1) * D] = A
                J[rr:rr + D, (a + 1) * D:(a + 2) * D] = B
        gp_rows = slice(row, row + (F - 1) * D)
        gp_cost = 0.5 * float(r[gp_rows] @ r[gp_rows])
        row += (F - 1) * D

        # Obstacles: each knot's own config plus the interior blends toward the next knot.
        n_int = cfg.n_int
        w = interpolation_weights(n_int)
        groups = defaultdict(list)
        for a in range(F):
            groups[id(self.factors[k + a].sdf)].append(a)
        extrap = False
        inv_sigma = 1.0 / cfg.sigma_cost
        obs_start = row
        for knots in groups.values():
            sdf = self.factors[k + knots[0]].sdf
            thetas, owners = [], []
            for a in knots:
                thetas.append(Xf[a, :d][None, :])
                owners.append((a, 0, 1))
                if a < F - 1 and n_int:
                    thetas.append((1 - w)[:, None] * Xf[a, :d] + w[:, None] * Xf[a + 1, :d])
                    owners.append((a, 1, n_int))
            ev = obstacle_errors_batch(np.concatenate(thetas), sdf, self.robot, cfg.eps)
            extrap |= bool(np.any(ev.extrapolated))
            pos = 0
            for a, is_interp, count in owners:
                err = ev.error[pos:pos + count] * inv_sigma
                base = obs_start + self._obstacle_row(a, is_interp, F)
                r[base:base + count * S] = err.ravel()
                if jacobian:
                    jac = ev.jacobian[pos:pos + count] * inv_sigma
                    if is_interp:
                        for m in range(count):
                            rows = slice(base + m * S, base + (m + 1) * S)
                            J[rows, a * D:a * D + d] = (1 - w[m]) * jac[m]
                            J[rows, (a + 1) * D:(a + 1) * D + d] = w[m] * jac[m]
                    else:
                        J[base:base + S, a * D:a * D + d] = jac[0]
                pos += count
        obstacle_cost = 0.5 * float(r[obs_start:] @ r[obs_start:])
        if jacobian and self.anchor is not None:
            J = J[:, D:]
        return Linearization(r, J, prior_cost, gp_cost, obstacle_cost, extrap)

    def _obstacle_row(self, a: int, is_interp: int, F: int) -> int:
        """Row offset (within the obstacle block) of knot ``a``'s knot or interior residuals."""
        S = self.robot.n_spheres
        per = (1 + self.config.n_int) * S
        return a * per + (S if is_interp else 0)

    def linearize_factor(self, index: int, X: Optional[np.ndarray] = None):
        """Errors/Jacobians of the knot factor at ``index`` and of its interval's interior checks."""
        X = self.states if X is None else X
        cfg = self.config
        sdf = self.factors[index].sdf
        d = self.dof
        knot = obstacle_errors_batch(X[index, :d][None, :], sdf, self.robot, cfg.eps)
        if index + 1 < self.n_knots:
            interior = interpolated_obstacle_errors(X[index], X[index + 1], cfg.n_int, sdf, self.robot, cfg.eps)
        else:
            interior = None
        return knot, interior
