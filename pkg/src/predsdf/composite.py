"""Per-object truncated SDFs and composite predicted workspace SDFs.

A composite field starts from the static scene SDF and takes the voxelwise
minimum with each object's SDF placed at its predicted position. Within the
band ``eps`` it equals the exact SDF of the predicted occupancy as long as
the placed objects lie inside the lattice (off its outermost layer) and do
not touch each other or the static geometry; see ``placement_is_separated``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .edt import compute_exact_sdf
from .tracking import TrackedObject
from .voxelgrid import GridGeometry, OccupancyGrid, SignedDistanceField

# Slack on the band comparison so voxels sitting exactly at eps survive float rounding.
_BAND_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class ObjectSdf:
    """Cropped SDF of one isolated object.

    ``anchor`` is the voxel offset from the object's centroid voxel to the
    crop's (0, 0, 0) voxel; placing the crop only needs the (predicted)
    centroid voxel.
    """

    sdf: SignedDistanceField
    anchor: np.ndarray
    source_object: int

    @property
    def eps(self) -> float:
        return float(self.sdf.band)

    @property
    def shape(self):
        return self.sdf.geometry.dims


def extract_object_sdf(obj: TrackedObject, geometry: GridGeometry, eps: float) -> ObjectSdf:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    cell = geometry.cell_size
    pad = math.ceil(eps / cell) + 1
    lo, hi = obj.bbox()
    box_lo = lo - pad
    dims = tuple(int(d) for d in (hi - lo + 1 + 2 * pad))
    box_geom = GridGeometry(dims, cell, tuple(np.asarray(geometry.origin) + box_lo * cell))
    occ = np.zeros(dims, dtype=bool)
    occ[tuple((obj.voxels - box_lo).T)] = True
    full = compute_exact_sdf(OccupancyGrid(box_geom, occ)).values

    inside = np.argwhere(full <= eps + _BAND_SLACK)
    c_lo, c_hi = inside.min(axis=0), inside.max(axis=0) + 1
    crop = full[c_lo[0]:c_hi[0], c_lo[1]:c_hi[1], c_lo[2]:c_hi[2]].copy()
    crop_geom = GridGeometry(crop.shape, cell, tuple(np.asarray(box_geom.origin) + c_lo * cell))
    centroid_voxel = geometry.snap(obj.centroid)
    anchor = (box_lo + c_lo) - centroid_voxel
    return ObjectSdf(SignedDistanceField(crop_geom, crop, band=float(eps)), anchor.astype(np.int64), obj.id)


def extract_object_sdfs(objects: Sequence[TrackedObject], geometry: GridGeometry, eps: float) -> List[ObjectSdf]:
    return [extract_object_sdf(o, geometry, eps) for o in objects]


def compute_static_sdf(static_grid: OccupancyGrid) -> SignedDistanceField:
    return compute_exact_sdf(static_grid)


def _pair_sdfs(objects: Sequence[TrackedObject], object_sdfs: Sequence[ObjectSdf]):
    by_id: Dict[int, ObjectSdf] = {s.source_object: s for s in object_sdfs}
    if len(by_id) != len(object_sdfs):
        raise ValueError("duplicate source_object ids among object SDFs")
    try:
        return [(o, by_id[o.id]) for o in objects]
    except KeyError as exc:
        raise ValueError(f"no object SDF for object id {exc.args[0]}") from None


def placement_offsets(geometry: GridGeometry, obj: TrackedObject, dt: float) -> np.ndarray:
    """Snapped voxel shift between the object's current and predicted centroid voxels."""
    return geometry.snap(obj.centroid + obj.velocity * dt) - geometry.snap(obj.centroid)


def _clip_box(lo: np.ndarray, shape, dims):
    """Intersect box [lo, lo+shape) with [0, dims); returns (dst, src) slices or None."""
    hi = lo + np.asarray(shape)
    d_lo = np.maximum(lo, 0)
    d_hi = np.minimum(hi, dims)
    if np.any(d_hi <= d_lo):
        return None
    dst = tuple(slice(int(a), int(b)) for a, b in zip(d_lo, d_hi))
    src = tuple(slice(int(a - l), int(b - l)) for a, b, l in zip(d_lo, d_hi, lo))
    return dst, src


def predict_sdf(
    dt: float,
    objects: Sequence[TrackedObject],
    object_sdfs: Sequence[ObjectSdf],
    static_sdf: SignedDistanceField,
) -> SignedDistanceField:
    """Composite SDF ``dt`` seconds ahead: static SDF min-composed with moved object SDFs."""
    geom = static_sdf.geometry
    pairs = _pair_sdfs(objects, object_sdfs)
    for _, osdf in pairs:
        if not math.isclose(osdf.sdf.geometry.cell_size, geom.cell_size, rel_tol=1e-12):
            raise ValueError("object SDF cell size differs from the static SDF")

    placed = [(osdf, geom.snap(obj.centroid + obj.velocity * dt)) for obj, osdf in pairs]
    out = compose(static_sdf, placed)

    band = min((s.eps for _, s in pairs), default=None)
    out.flags.writeable = False
    return SignedDistanceField(geom, out, static_sdf.band if band is None else band)


def build_predicted_occupancy(dt: float, objects: Sequence[TrackedObject], static_grid: OccupancyGrid) -> OccupancyGrid:
    """Static occupancy plus every object's voxels shifted by its snapped displacement."""
    geom = static_grid.geometry
    occ = static_grid.occupied.copy()
    dims = np.asarray(geom.dims)
    for obj in objects:
        vox = obj.voxels + placement_offsets(geom, obj, dt)
        keep = np.all((vox >= 0) & (vox < dims), axis=1)
        occ[tuple(vox[keep].T)] = True
    return OccupancyGrid(geom, occ)


def placement_is_separated(dt: float, objects: Sequence[TrackedObject], static_grid: OccupancyGrid) -> bool:
    """True when the predicted placement meets the conditions for band exactness.

    Every shifted object must lie off the lattice's outer layer and no two
    components (objects or static geometry) may overlap or be 26-adjacent.
    """
    geom = static_grid.geometry
    dims = np.asarray(geom.dims)
    owner = np.where(static_grid.occupied, 0, -1).astype(np.int64)
    for k, obj in enumerate(objects, start=1):
        vox = obj.voxels + placement_offsets(geom, obj, dt)
        if np.any(vox < 1) or np.any(vox > dims - 2):
            return False
        # Any foreign label within the 3x3x3 neighbourhood means touching.
        for off in np.ndindex(3, 3, 3):
            nb = vox + (np.asarray(off) - 1)
            labels = owner[tuple(nb.T)]
            if np.any((labels != -1) & (labels != k)):
                return False
        owner[tuple(vox.T)] = k
    return True


def compose(static_sdf: SignedDistanceField, placed: Sequence[tuple]) -> np.ndarray:
    """Min-compose ``(ObjectSdf, centroid_voxel)`` placements onto a copy of ``static_sdf``.

    Lower-level than ``predict_sdf``: placements are given as voxels, not
    as objects and a look-ahead time.
    """
    out = static_sdf.values.copy()
    dims = np.asarray(static_sdf.geometry.dims)
    for osdf, voxel in placed:
        boxes = _clip_box(np.asarray(voxel) + osdf.anchor, osdf.shape, dims)
        if boxes is not None:
            dst, src = boxes
            np.minimum(out[dst], osdf.sdf.values[src], out=out[dst])
    return out


def refresh_object_sdfs(
    cache: Dict[int, ObjectSdf], objects: Sequence[TrackedObject], geometry: GridGeometry, eps: float,
    force: bool = False,
) -> List[ObjectSdf]:
    """Object SDFs for ``objects``, extracting only ids missing from ``cache`` (or all if ``force``)."""
    result = []
    for obj in objects:
        osdf: Optional[ObjectSdf] = None if force else cache.get(obj.id)
        if osdf is None or osdf.eps != eps:
            osdf = extract_object_sdf(obj, geometry, eps)
            cache[obj.id] = osdf
        result.append(osdf)
    return result
