"""World-aligned voxel lattices for occupancy and signed-distance data.

Arrays are indexed ``[i, j, k]`` along world x, y, z. The serialized
linear order is x fastest, then y, then z (Fortran order on ``[i, j, k]``).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

FULL_BAND = "full"

# Tie tolerance (in voxels) so that a point sitting on a half-cell boundary
# up to float noise still snaps toward +inf deterministically.
_SNAP_TOL = 1e-9

_HEADER = struct.Struct("<3i3dd")


@dataclass(frozen=True)
class GridGeometry:
    """Lattice shape and placement. ``origin`` is the center of voxel (0, 0, 0)."""

    dims: Tuple[int, int, int]
    cell_size: float
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(origin) != 3:
            raise ValueError("dims and origin must have three components")
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def n_voxels(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def extent(self) -> Tuple[np.ndarray, np.ndarray]:
        """World-space (lo, hi) corners of the lattice volume."""
        o = np.asarray(self.origin)
        half = 0.5 * self.cell_size
        return o - half, o + (np.asarray(self.dims) - 1) * self.cell_size + half

    def diagonal_cells(self) -> float:
        """Length of the lattice diagonal between corner voxel centers, in cells."""
        return float(np.sqrt(sum((d - 1) ** 2 for d in self.dims)))

    def continuous_index(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - np.asarray(self.origin)) / self.cell_size

    def snap(self, p) -> np.ndarray:
        """Nearest voxel index to world point(s) ``p``, without a bounds check."""
        u = self.continuous_index(p)
        return np.floor(u + 0.5 + _SNAP_TOL).astype(np.int64)

    def in_bounds(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= 0) and np.all(idx < np.asarray(self.dims)))

    def world_points(self) -> np.ndarray:
        """World coordinates of every voxel center, shape ``dims + (3,)``."""
        axes = [self.origin[a] + self.cell_size * np.arange(self.dims[a]) for a in range(3)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def world_to_index(geometry: GridGeometry, p) -> Optional[Tuple[int, int, int]]:
    """Index of the voxel whose center is nearest ``p``; ``None`` outside the lattice.

    Ties (points exactly half-way between centers) round toward +inf.
    """
    p = np.asarray(p, dtype=float)
    lo, hi = geometry.extent
    if np.any(p < lo) or np.any(p > hi):
        return None
    idx = np.minimum(geometry.snap(p), np.asarray(geometry.dims) - 1)
    return tuple(int(i) for i in idx)


def index_to_world(geometry: GridGeometry, idx) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.shape != (3,) or not geometry.in_bounds(idx):
        raise IndexError(f"voxel index {tuple(idx.tolist())} outside dims {geometry.dims}")
    return np.asarray(geometry.origin) + idx * geometry.cell_size


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    geometry: GridGeometry
    occupied: np.ndarray

    def __post_init__(self):
        occ = _frozen(self.occupied, bool)
        if occ.shape != self.geometry.dims:
            raise ValueError(f"occupancy shape {occ.shape} does not match dims {self.geometry.dims}")
        object.__setattr__(self, "occupied", occ)

    @classmethod
    def empty(cls, geometry: GridGeometry) -> "OccupancyGrid":
        return cls(geometry, np.zeros(geometry.dims, dtype=bool))

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())

    def checksum(self) -> str:
        return _checksum(self.geometry, np.asfortranarray(self.occupied).view(np.uint8))

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.occupied, other.occupied)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SignedDistanceField:
    """Signed distances in meters; negative inside obstacles.

    ``band`` is either ``"full"`` (exact everywhere) or the distance in meters
    up to which the stored values are exact.
    """

    geometry: GridGeometry
    values: np.ndarray
    band: Union[float, str] = FULL_BAND

    def __post_init__(self):
        vals = _frozen(self.values, np.float64)
        if vals.shape != self.geometry.dims:
            raise ValueError(f"values shape {vals.shape} does not match dims {self.geometry.dims}")
        if self.band != FULL_BAND and not float(self.band) > 0:
            raise ValueError(f"band must be 'full' or positive, got {self.band!r}")
        object.__setattr__(self, "values", vals)

    @property
    def is_full(self) -> bool:
        return self.band == FULL_BAND

    @property
    def band_value(self) -> float:
        return np.inf if self.is_full else float(self.band)

    def checksum(self) -> str:
        return _checksum(self.geometry, np.asfortranarray(self.values).astype("<f8"))


def _frozen(a, dtype) -> np.ndarray:
    """Read-only view of ``a``; writeable inputs are copied so callers keep theirs."""
    arr = np.asarray(a, dtype=dtype)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.flags.writeable = False
    return arr


def _checksum(geometry: GridGeometry, payload: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(_HEADER.pack(*geometry.dims, *geometry.origin, geometry.cell_size))
    h.update(np.ascontiguousarray(payload.reshape(-1, order="F")).tobytes())
    return h.hexdigest()


def dump_grid(grid: Union[OccupancyGrid, SignedDistanceField], path) -> None:
    """Write a grid in the little-endian binary layout (header + x-fastest payload)."""
    g = grid.geometry
    if isinstance(grid, OccupancyGrid):
        payload = grid.occupied.astype(np.uint8)
    else:
        payload = grid.values.astype("<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*g.dims, *g.origin, g.cell_size))
        fh.write(payload.reshape(-1, order="F").tobytes())


def load_grid(path) -> Union[OccupancyGrid, SignedDistanceField]:
    """Read a grid dump; the payload size tells occupancy (1 B/voxel) from SDF (8 B/voxel)."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    *dims, ox, oy, oz, cell = _HEADER.unpack_from(data)
    geometry = GridGeometry(tuple(dims), cell, (ox, oy, oz))
    body = data[_HEADER.size:]
    n = geometry.n_voxels
    if len(body) == n:
        occ = np.frombuffer(body, dtype=np.uint8).reshape(geometry.dims, order="F")
        return OccupancyGrid(geometry, occ.astype(bool))
    if len(body) == 8 * n:
        vals = np.frombuffer(body, dtype="<f8").reshape(geometry.dims, order="F")
        return SignedDistanceField(geometry, vals.astype(np.float64))
    raise ValueError(f"{path}: payload of {len(body)} bytes matches neither layout for {n} voxels")
