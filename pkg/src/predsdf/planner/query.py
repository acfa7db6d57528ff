"""Trilinear SDF queries and the hinge-loss obstacle cost."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..voxelgrid import SignedDistanceField

_HULL_TOL = 1e-9  # in cells


class SdfSample(NamedTuple):
    distance: np.ndarray
    gradient: np.ndarray
    extrapolated: np.ndarray


def sdf_query_batch(sdf: SignedDistanceField, points) -> SdfSample:
    """Trilinear distance and its analytic gradient at world points ``(..., 3)``.

    Queries outside the voxel-center hull are clamped onto it and flagged.
    """
    geom = sdf.geometry
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 3)
    dims = np.asarray(geom.dims)
    upper = np.maximum(dims - 1, 0).astype(float)

    u = (pts - np.asarray(geom.origin)) / geom.cell_size
    uc = np.clip(u, 0.0, upper)
    # Round-off at the outermost centers is not extrapolation.
    outside = (u < -_HULL_TOL) | (u > upper + _HULL_TOL)
    extrapolated = np.any(outside, axis=1)
    i0 = np.minimum(np.floor(uc).astype(np.int64), np.maximum(dims - 2, 0))
    f = uc - i0
    i1 = np.minimum(i0 + 1, dims - 1)

    v = sdf.values
    x0, y0, z0 = i0.T
    x1, y1, z1 = i1.T
    c000, c100 = v[x0, y0, z0], v[x1, y0, z0]
    c010, c110 = v[x0, y1, z0], v[x1, y1, z0]
    c001, c101 = v[x0, y0, z1], v[x1, y0, z1]
    c011, c111 = v[x0, y1, z1], v[x1, y1, z1]
    fx, fy, fz = f.T
    gx, gy, gz = 1 - fx, 1 - fy, 1 - fz

    # Interpolate along x, then y, then z.
    c00 = gx * c000 + fx * c100
    c10 = gx * c010 + fx * c110
    c01 = gx * c001 + fx * c101
    c11 = gx * c011 + fx * c111
    c0 = gy * c00 + fy * c10
    c1 = gy * c01 + fy * c11
    d = gz * c0 + fz * c1

    ddx = gz * (gy * (c100 - c000) + fy * (c110 - c010)) + fz * (gy * (c101 - c001) + fy * (c111 - c011))
    ddy = gz * (c10 - c00) + fz * (c11 - c01)
    ddz = c1 - c0
    grad = np.stack([ddx, ddy, ddz], axis=1) / geom.cell_size
    # Clamped directions do not vary with the query point.
    grad[outside] = 0.0
    return SdfSample(d.reshape(shape), grad.reshape(shape + (3,)), extrapolated.reshape(shape))


def sdf_query(sdf: SignedDistanceField, p):
    """Distance, gradient and extrapolation flag at one world point."""
    s = sdf_query_batch(sdf, np.asarray(p, dtype=float)[None, :])
    return float(s.distance[0]), s.gradient[0], bool(s.extrapolated[0])


def hinge_cost(d, r, eps):
    """``max(0, eps - (d - r))``: zero once the sphere surface clears the obstacle by ``eps``."""
    return np.maximum(0.0, eps - (np.asarray(d) - r))


def hinge_slope(d, r, eps):
    """Subgradient of ``hinge_cost`` with respect to ``d``: -1 when active, else 0."""
    return np.where(eps - (np.asarray(d) - r) > 0.0, -1.0, 0.0)
