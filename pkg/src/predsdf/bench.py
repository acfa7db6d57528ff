"""Timing harness for composite prediction versus full recomputation, plus memory arithmetic."""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .composite import (build_predicted_occupancy, compute_static_sdf, extract_object_sdfs,
                        placement_is_separated, predict_sdf)
from .edt import compute_exact_sdf
from .scenarios import get_scenario, render_frame
from .tracking import SceneDecomposition, classify_motion, initial_decomposition

DEFAULT_SIZES = tuple(range(64, 321, 32))
WARMUP = 3
BAND_TOL = 1e-9

ROWS = (("init", "Composite init (ms)"), ("full", "Full computation (ms)"),
        ("predict", "Composite prediction (ms)"))


def estimate_memory(size: int, n_fields: int) -> int:
    """Bytes needed to hold ``n_fields`` dense float64 fields of ``size`` voxels per side."""
    if size <= 0 or n_fields <= 0:
        raise ValueError("size and n_fields must be positive")
    return int(size) ** 3 * 8 * int(n_fields)


def format_gib(n_bytes: int, digits: int = 2) -> str:
    """Binary gigabytes (2**30 bytes), e.g. ``"6.24 GB"``."""
    return f"{n_bytes / 2**30:.{digits}f} GB"


@dataclass
class TimingStats:
    median: float
    q1: float
    q3: float
    mean: float
    std: float
    n: int

    @classmethod
    def of(cls, samples_ms: Sequence[float]) -> "TimingStats":
        a = np.asarray(samples_ms, dtype=float)
        q1, med, q3 = np.percentile(a, [25, 50, 75])
        return cls(float(med), float(q1), float(q3), float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0,
                   len(a))

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


@dataclass
class BenchmarkRow:
    size: int
    scenario: str
    init: TimingStats
    full: TimingStats
    predict: TimingStats
    band_exact: bool
    separated: bool
    checksum: str

    @property
    def speedup(self) -> float:
        return self.full.median / self.predict.median

    @property
    def mean_speedup(self) -> float:
        return self.full.mean / self.predict.mean


@dataclass
class BenchmarkTable:
    rows: List[BenchmarkRow]
    scenario: str
    n_frames: int
    repetitions: int
    seed: int
    meta: Dict[str, object] = field(default_factory=dict)

    def row(self, size: int) -> BenchmarkRow:
        for r in self.rows:
            if r.size == size:
                return r
        raise KeyError(size)

    def checksums(self) -> Dict[int, str]:
        return {r.size: r.checksum for r in self.rows}

    def to_csv(self, path) -> None:
        """Long format: one line per (size, quantity)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "scenario", "quantity", "median_ms", "q1_ms", "q3_ms", "mean_ms", "std_ms", "n"])
            for r in self.rows:
                for key, _ in ROWS:
                    s: TimingStats = getattr(r, key)
                    w.writerow([r.size, r.scenario, key, f"{s.median:.6f}", f"{s.q1:.6f}", f"{s.q3:.6f}",
                                f"{s.mean:.6f}", f"{s.std:.6f}", s.n])
                w.writerow([r.size, r.scenario, "speedup", f"{r.speedup:.6f}", "", "", f"{r.mean_speedup:.6f}", "", ""])

    def summary_csv(self, path) -> None:
        """Wide format: one line per size."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "init_median_ms", "full_median_ms", "predict_median_ms", "speedup",
                        "band_exact", "separated", "checksum"])
            for r in self.rows:
                w.writerow([r.size, f"{r.init.median:.6f}", f"{r.full.median:.6f}", f"{r.predict.median:.6f}",
                            f"{r.speedup:.4f}", int(r.band_exact), int(r.separated), r.checksum])

    def format_text(self) -> str:
        """Aligned table: sizes as columns, one row per quantity (median [IQR] and mean +- sd)."""
        head = ["Workspace size (voxels per side)"] + [str(r.size) for r in self.rows]
        lines = [head]
        for key, label in ROWS:
            med = [label + " median [IQR]"]
            mean = [label + " mean +- sd"]
            for r in self.rows:
                s: TimingStats = getattr(r, key)
                med.append(f"{s.median:.2f} [{s.iqr:.2f}]")
                mean.append(f"{s.mean:.2f} +- {s.std:.2f}")
            lines += [med, mean]
        lines.append(["Repeat prediction speed-up"] + [f"{r.speedup:.1f}x" for r in self.rows])
        lines.append(["Band exact"] + ["yes" if r.band_exact else "NO" for r in self.rows])
        widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
        out = []
        for j, row in enumerate(lines):
            out.append("  ".join(c.ljust(widths[0]) if i == 0 else c.rjust(widths[i]) for i, c in enumerate(row)))
            if j == 0:
                out.append("-" * len(out[0]))
        return "\n".join(out)


def observe_scene(scenario: str, size: int, seed: int = 0) -> tuple:
    """Decomposition after the first two frames of ``scenario`` at ``size`` voxels per side."""
    script = get_scenario(scenario, size=size, seed=seed)
    f0 = render_frame(script, 0.0)
    f1 = render_frame(script, script.frame_dt)
    return script, classify_motion(initial_decomposition(f0), f1, script.frame_dt)


def band_check(composite, exact, eps: float, tol: float = BAND_TOL) -> bool:
    """Composite equals exact wherever exact <= eps, and never underestimates it."""
    c, e = composite.values, exact.values
    inside = e <= eps
    return bool(np.all(np.abs(c[inside] - e[inside]) <= tol) and np.all(c >= e - tol))


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, (time.perf_counter() - t0) * 1000.0


def _bench_size(scenario: str, size: int, n_frames: int, repetitions: int, eps: float, seed: int,
                warmup: int) -> BenchmarkRow:
    script, decomp = observe_scene(scenario, size, seed)
    geom = script.geometry
    moving = decomp.moving
    dts = [script.frame_dt * (j + 1) for j in range(n_frames)]
    predicted_occ = [build_predicted_occupancy(dt, moving, decomp.static_grid) for dt in dts]

    init_ms, full_ms, pred_ms = [], [], []
    fields = None
    for rep in range(warmup + repetitions):
        # (a) composite initialization: static field plus every object's cropped field
        t0 = time.perf_counter()
        static_sdf = compute_static_sdf(decomp.static_grid)
        object_sdfs = extract_object_sdfs(moving, geom, eps)
        t_init = (time.perf_counter() - t0) * 1000.0
        # (b) full exact transform of each predicted occupancy grid
        exact, t_full = [], 0.0
        for occ in predicted_occ:
            sdf, ms = _timed(compute_exact_sdf, occ)
            exact.append(sdf)
            t_full += ms
        # (c) composite prediction for the remaining time steps
        comp, t_pred = [], 0.0
        for dt in dts:
            sdf, ms = _timed(predict_sdf, dt, moving, object_sdfs, static_sdf)
            comp.append(sdf)
            t_pred += ms
        if rep >= warmup:
            init_ms.append(t_init)
            full_ms.append(t_full / n_frames)
            pred_ms.append(t_pred / n_frames)
        fields = (comp, exact)

    comp, exact = fields
    exact_ok = all(band_check(c, e, eps) for c, e in zip(comp, exact))
    separated = all(placement_is_separated(dt, moving, decomp.static_grid) for dt in dts)
    h = hashlib.sha256()
    for c in comp:
        h.update(c.checksum().encode())
    return BenchmarkRow(size, script.name, TimingStats.of(init_ms), TimingStats.of(full_ms), TimingStats.of(pred_ms),
                        exact_ok, separated, h.hexdigest())


def run_sdf_benchmark(sizes: Optional[Sequence[int]] = None, scenario: str = "one-pillar", n_frames: int = 10,
                      repetitions: int = 10, eps: float = 0.4, seed: int = 0, warmup: int = WARMUP) -> BenchmarkTable:
    """Time composite initialization, full recomputation and composite prediction per workspace size.

    Each repetition predicts ``n_frames`` future frames; the full and
    prediction timings are per field. ``seed`` drives randomized scenarios.
    """
    sizes = list(DEFAULT_SIZES if sizes is None else sizes)
    if not sizes or any(s < 16 for s in sizes):
        raise ValueError("sizes must be non-empty and at least 16 voxels per side")
    if n_frames < 1 or repetitions < 1:
        raise ValueError("n_frames and repetitions must be positive")
    rows = [_bench_size(scenario, s, n_frames, repetitions, eps, seed, warmup) for s in sizes]
    meta = {"eps": eps, "warmup": warmup, "timer": "time.perf_counter", "threads": 1}
    return BenchmarkTable(rows, scenario, n_frames, repetitions, seed, meta)


def table_to_dict(table: BenchmarkTable) -> dict:
    d = asdict(table)
    for r, row in zip(d["rows"], table.rows):
        r["speedup"] = row.speedup
    return d
