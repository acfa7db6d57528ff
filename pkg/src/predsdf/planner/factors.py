"""Error terms of the trajectory problem and their Jacobians.

States are stacked as ``x = [theta, theta_dot]`` (length ``2 * dof``).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..voxelgrid import SignedDistanceField
from .query import hinge_cost, hinge_slope, sdf_query_batch
from .robots import RobotModel


class ObstacleEval(NamedTuple):
    error: np.ndarray
    jacobian: np.ndarray
    extrapolated: np.ndarray


def obstacle_errors_batch(thetas, sdf: SignedDistanceField, robot: RobotModel, eps: float) -> ObstacleEval:
    """Hinge errors ``(M, S)`` and their Jacobians ``(M, S, dof)`` for ``M`` configurations."""
    centers, jac = robot.fk_batch(np.atleast_2d(thetas))
    q = sdf_query_batch(sdf, centers)
    err = hinge_cost(q.distance, robot.radii, eps)
    slope = hinge_slope(q.distance, robot.radii, eps)
    # d(err)/d(theta) = slope * grad(sdf) . d(center)/d(theta)
    J = slope[..., None] * np.einsum("msa,msad->msd", q.gradient, jac)
    return ObstacleEval(err, J, np.any(q.extrapolated, axis=1))


def obstacle_factor_error(theta, sdf: SignedDistanceField, robot: RobotModel, eps: float) -> ObstacleEval:
    """Per-sphere hinge errors at one configuration (unweighted; the solver divides by sigma_cost)."""
    ev = obstacle_errors_batch(np.asarray(theta, dtype=float)[None, :], sdf, robot, eps)
    return ObstacleEval(ev.error[0], ev.jacobian[0], bool(ev.extrapolated[0]))


def transition(dt: float, dof: int) -> np.ndarray:
    eye = np.eye(dof)
    return np.block([[eye, dt * eye], [np.zeros((dof, dof)), eye]])


def gp_covariance(dt: float, qc: float, dof: int) -> np.ndarray:
    """White-noise-on-acceleration process covariance over one interval."""
    eye = np.eye(dof)
    return qc * np.block([[dt**3 / 3 * eye, dt**2 / 2 * eye], [dt**2 / 2 * eye, dt * eye]])


class GpEval(NamedTuple):
    error: np.ndarray
    jac_i: np.ndarray
    jac_j: np.ndarray


def gp_prior_error(x_i, x_j, dt: float, qc: float = 1.0) -> GpEval:
    """Constant-velocity prior error ``Phi(dt) x_i - x_j``; weight with ``gp_covariance``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    dof = len(x_i) // 2
    phi = transition(dt, dof)
    return GpEval(phi @ x_i - x_j, phi, -np.eye(2 * dof))


def gp_cost(x_i, x_j, dt: float, qc: float = 1.0) -> float:
    """``0.5 * e^T Q^-1 e`` for one interval."""
    e = gp_prior_error(x_i, x_j, dt, qc).error
    q = gp_covariance(dt, qc, len(e) // 2)
    return 0.5 * float(e @ np.linalg.solve(q, e))


class InterpEval(NamedTuple):
    error: np.ndarray
    jac_i: np.ndarray
    jac_j: np.ndarray
    extrapolated: np.ndarray


def interpolation_weights(n_int: int) -> np.ndarray:
    return np.arange(1, n_int + 1) / (n_int + 1)


def interpolated_obstacle_errors(x_i, x_j, n_int: int, sdf: SignedDistanceField, robot: RobotModel,
                                 eps: float) -> InterpEval:
    """Hinge errors at ``n_int`` evenly spaced interior times of one interval.

    Interior states are linear blends of the endpoint states, so each
    Jacobian splits between the endpoints by the blend weights.
    """
    if n_int < 0:
        raise ValueError("n_int must be non-negative")
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    dof = robot.dof
    S = robot.n_spheres
    if n_int == 0:
        empty = np.zeros((0, S, 2 * dof))
        return InterpEval(np.zeros((0, S)), empty, empty.copy(), np.zeros(0, dtype=bool))
    w = interpolation_weights(n_int)[:, None]
    thetas = (1 - w) * x_i[:dof] + w * x_j[:dof]
    ev = obstacle_errors_batch(thetas, sdf, robot, eps)
    J_i = np.zeros((n_int, S, 2 * dof))
    J_j = np.zeros((n_int, S, 2 * dof))
    J_i[..., :dof] = (1 - w)[:, :, None] * ev.jacobian
    J_j[..., :dof] = w[:, :, None] * ev.jacobian
    return InterpEval(ev.error, J_i, J_j, ev.extrapolated)
