"""Object segmentation, frame-to-frame matching and constant-velocity prediction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Sequence, Union

import numpy as np
from scipy import ndimage

from .voxelgrid import GridGeometry, OccupancyGrid

DEFAULT_V_MIN = 0.05  # m/s
COUNT_RATIO_GATE = (0.5, 2.0)

_STRUCTURE_26 = np.ones((3, 3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class TrackedObject:
    """A connected occupied region with its centroid (m) and velocity (m/s).

    ``voxels`` holds absolute lattice indices, shape ``(n, 3)``.
    """

    id: int
    voxels: np.ndarray
    centroid: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def voxel_count(self) -> int:
        return len(self.voxels)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))

    def bbox(self):
        return self.voxels.min(axis=0), self.voxels.max(axis=0)


@dataclass(frozen=True, eq=False)
class SceneDecomposition:
    """Static occupancy plus the moving objects of one frame.

    ``static_objects`` keeps the slow components (already folded into
    ``static_grid``) so their ids survive to the next frame.
    """

    static_grid: OccupancyGrid
    moving: List[TrackedObject]
    static_objects: List[TrackedObject] = field(default_factory=list)
    next_id: int = 0

    @property
    def geometry(self) -> GridGeometry:
        return self.static_grid.geometry

    @property
    def objects(self) -> List[TrackedObject]:
        return sorted(self.moving + self.static_objects, key=lambda o: o.id)

    def frame(self) -> OccupancyGrid:
        """Reassemble the full occupancy the decomposition was built from."""
        occ = self.static_grid.occupied.copy()
        for obj in self.moving:
            occ[tuple(obj.voxels.T)] = True
        return OccupancyGrid(self.geometry, occ)


def segment_objects(grid: OccupancyGrid, first_id: int = 0) -> List[TrackedObject]:
    """Split occupied voxels into 26-connected components, ordered by lowest linear index."""
    labels, n = ndimage.label(grid.occupied, structure=_STRUCTURE_26)
    if n == 0:
        return []
    geom = grid.geometry
    idx = np.argwhere(labels)  # C order, so each component's first row is its lowest index
    lab = labels[tuple(idx.T)]
    order = np.argsort(lab, kind="stable")
    idx, lab = idx[order], lab[order]
    splits = np.flatnonzero(np.diff(lab)) + 1
    objects = []
    for k, vox in enumerate(np.split(idx, splits)):
        centroid = np.asarray(geom.origin) + vox.mean(axis=0) * geom.cell_size
        objects.append(TrackedObject(first_id + k, vox, centroid))
    return objects


def _match(prev: Sequence[TrackedObject], curr: Sequence[TrackedObject]):
    """Greedy nearest-centroid matching gated by voxel-count ratio. Returns {curr_idx: prev_idx}."""
    pairs = []
    lo, hi = COUNT_RATIO_GATE
    for ci, c in enumerate(curr):
        for pi, p in enumerate(prev):
            ratio = c.voxel_count / p.voxel_count
            if lo <= ratio <= hi:
                pairs.append((float(np.linalg.norm(c.centroid - p.centroid)), ci, pi))
    pairs.sort()
    assigned, used = {}, set()
    for _, ci, pi in pairs:
        if ci in assigned or pi in used:
            continue
        assigned[ci] = pi
        used.add(pi)
    return assigned


def classify_motion(
    prev: Union[SceneDecomposition, OccupancyGrid],
    curr: OccupancyGrid,
    dt: float,
    v_min: float = DEFAULT_V_MIN,
) -> SceneDecomposition:
    """Match components between frames, estimate velocities and split static/moving.

    Velocities are raw centroid differences over ``dt``; objects slower than
    ``v_min`` (and unmatched newcomers) are treated as static.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if isinstance(prev, OccupancyGrid):
        prev = initial_decomposition(prev)
    if prev.geometry != curr.geometry:
        raise ValueError("frames do not share grid geometry")

    prev_objs = prev.objects
    curr_objs = segment_objects(curr)
    assigned = _match(prev_objs, curr_objs)

    next_id = prev.next_id
    moving, static_objs = [], []
    static_occ = np.zeros(curr.geometry.dims, dtype=bool)
    for ci, obj in enumerate(curr_objs):
        if ci in assigned:
            p = prev_objs[assigned[ci]]
            obj = replace(obj, id=p.id, velocity=(obj.centroid - p.centroid) / dt)
        else:
            obj = replace(obj, id=next_id)
            next_id += 1
        if obj.speed >= v_min:
            moving.append(obj)
        else:
            static_objs.append(obj)
            static_occ[tuple(obj.voxels.T)] = True
    return SceneDecomposition(OccupancyGrid(curr.geometry, static_occ), moving, static_objs, next_id)


def initial_decomposition(frame: OccupancyGrid) -> SceneDecomposition:
    """Decomposition of a first frame: every component static with zero velocity."""
    objs = segment_objects(frame)
    return SceneDecomposition(frame, [], objs, len(objs))


def predict_positions(objects: Sequence[TrackedObject], dt: float) -> List[np.ndarray]:
    """Constant-velocity centroid extrapolation ``x + v * dt``."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    return [obj.centroid + obj.velocity * dt for obj in objects]
