"""Exact Euclidean signed-distance transform on voxel lattices.

Squared distances are computed with three separable lower-envelope passes
(one per axis) over integer voxel offsets, so results are exact integers in
squared-voxel space before the square root and scaling.
"""

from __future__ import annotations

import numba
import numpy as np

from .voxelgrid import OccupancyGrid, SignedDistanceField

INF = np.inf


@numba.njit(cache=True, nogil=True)
def _envelope_line(f, out, v, z):
    # Parabolas are only seeded at finite samples; an all-infinite line stays infinite.
    n = f.shape[0]
    k = -1
    for q in range(n):
        fq = f[q]
        if fq == np.inf:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        while True:
            p = v[k]
            s = ((fq + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
                if k < 0:
                    break
            else:
                break
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = np.inf
        return
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]


@numba.njit(cache=True, nogil=True)
def _envelope_rows(a):
    rows, n = a.shape
    out = np.empty_like(a)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    for r in range(rows):
        _envelope_line(a[r], out[r], v, z)
    return out


def sq_edt_1d(row) -> np.ndarray:
    """``out[i] = min_j row[j] + (i - j)**2`` for non-negative (possibly infinite) ``row``."""
    f = np.asarray(row, dtype=np.float64)
    if f.ndim != 1:
        raise ValueError("row must be one-dimensional")
    if f.size == 0:
        return f.copy()
    return _envelope_rows(f.reshape(1, -1).copy())[0]


@numba.njit(cache=True, nogil=True)
def _envelope_3d(d):
    nx, ny, nz = d.shape
    n = max(nx, ny, nz)
    f = np.empty(n, dtype=np.float64)
    out = np.empty(n, dtype=np.float64)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    # z is the contiguous axis: process in place.
    for i in range(nx):
        for j in range(ny):
            _envelope_line(d[i, j, :], out[:nz], v, z)
            d[i, j, :] = out[:nz]
    for i in range(nx):
        for k in range(nz):
            for j in range(ny):
                f[j] = d[i, j, k]
            _envelope_line(f[:ny], out[:ny], v, z)
            for j in range(ny):
                d[i, j, k] = out[j]
    for j in range(ny):
        for k in range(nz):
            for i in range(nx):
                f[i] = d[i, j, k]
            _envelope_line(f[:nx], out[:nx], v, z)
            for i in range(nx):
                d[i, j, k] = out[i]
    return d


def squared_distance_to(seeds: np.ndarray) -> np.ndarray:
    """Squared voxel distance from every voxel center to the nearest ``True`` voxel.

    Returns ``inf`` everywhere when there are no seeds.
    """
    seeds = np.asarray(seeds, dtype=bool)
    if seeds.ndim != 3:
        raise ValueError("seeds must be a 3-D array")
    d = np.where(seeds, 0.0, INF)
    return _envelope_3d(np.ascontiguousarray(d))


def compute_exact_sdf(grid: OccupancyGrid) -> SignedDistanceField:
    """Exact signed distance: distance-to-occupied minus distance-to-free, in meters.

    Occupied voxel centers get values <= -cell_size, free ones >= +cell_size
    next to obstacles. When a phase is absent its distance term is the lattice
    diagonal plus one cell instead of infinity.
    """
    geom = grid.geometry
    occ = grid.occupied
    sentinel = geom.diagonal_cells() + 1.0
    n_occ = int(occ.sum())

    if n_occ == 0:
        to_occ = np.full(geom.dims, sentinel)
    else:
        to_occ = np.sqrt(squared_distance_to(occ))
    if n_occ == occ.size:
        to_free = np.full(geom.dims, sentinel)
    else:
        to_free = np.sqrt(squared_distance_to(~occ))

    values = geom.cell_size * (to_occ - to_free)
    values.flags.writeable = False
    return SignedDistanceField(geom, values)


def degenerate_magnitude(grid_or_geometry) -> float:
    """Magnitude (meters) reported everywhere on all-free or all-occupied lattices."""
    geom = getattr(grid_or_geometry, "geometry", grid_or_geometry)
    return geom.cell_size * (geom.diagonal_cells() + 1.0)

