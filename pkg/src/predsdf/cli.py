"""Command-line entry point: ``predsdf {bench,plan,slice,export}``.

Exit status is 0 on success, 1 on usage errors and 2 on runtime failures.
Every command writes ``manifest.json`` into its output directory. The default
output directory is taken from ``$PREDSDF_OUT`` (falling back to ``./out``).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .voxelgrid import OccupancyGrid, SignedDistanceField, dump_grid, load_grid

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
# Obstacle-cost scale per robot kind; the arm's joint-space GP cost is much
# larger than the point robot's, so its obstacle factors need more weight.
DEFAULT_SIGMA_COST = {"point": 0.2, "arm": 0.02}
OUT_ENV = "PREDSDF_OUT"

log = logging.getLogger("predsdf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _versions() -> dict:
    import numba
    import scipy
    return {"predsdf": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, args: argparse.Namespace, outputs: List[Path], fields: Optional[dict] = None) -> Path:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {
        "command": args.command,
        "argv": sys.argv[1:],
        "flags": flags,
        "seed": flags.get("seed"),
        "versions": _versions(),
        "outputs": {p.name: _sha256(p) for p in outputs},
        "fields": fields or {},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str))
    return path


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args, speed=None):
    from .scenarios import get_scenario, load_scenario
    if args.scenario.endswith(".json"):
        script = load_scenario(args.scenario)
        return script if speed is None else script.with_speed(speed)
    try:
        return get_scenario(args.scenario, speed=speed, seed=getattr(args, "seed", 0) or 0)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    from .bench import run_sdf_benchmark
    from .scenarios import split_name
    try:
        family, size = split_name(args.scenario)
    except KeyError:
        raise UsageError(f"unknown scenario {args.scenario!r}") from None
    sizes = args.sizes or ([size] if size else None)
    if sizes is not None and any(s < 16 for s in sizes):
        raise UsageError("sizes must be at least 16")
    out = _out_dir(args)
    table = run_sdf_benchmark(sizes, family, n_frames=args.frames, repetitions=args.reps, eps=args.eps,
                              seed=args.seed)
    stem = f"bench_{family}"
    paths = [out / f"{stem}.csv", out / f"{stem}_summary.csv", out / f"{stem}.txt"]
    table.to_csv(paths[0])
    table.summary_csv(paths[1])
    text = table.format_text()
    paths[2].write_text(text + "\n")
    print(text)
    write_manifest(out, args, paths, {str(k): v for k, v in table.checksums().items()})
    if not all(r.band_exact for r in table.rows):
        log.error("composite fields left the exact band; see %s", paths[1])
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------- plan

def _mode_name(text: str) -> str:
    return text.replace("-", "_")


def cmd_plan(args) -> int:
    import csv
    from .planner import PlannerConfig
    from .planner.loop import MODES, run_update_loop
    mode = _mode_name(args.mode)
    if mode not in MODES:
        raise UsageError(f"unknown mode {args.mode!r}")
    speeds = args.speeds or [args.speed]
    try:
        sigma = args.sigma_cost if args.sigma_cost is not None else DEFAULT_SIGMA_COST[args.robot]
        config = PlannerConfig(n_knots=args.n_knots, eps=args.eps, sigma_cost=sigma, n_int=args.n_int)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    rows, paths = [], []
    for speed in speeds:
        script = _scenario(args, speed)
        if args.robot not in script.tasks:
            raise UsageError(f"scenario {script.name} has no {args.robot!r} task "
                             f"(available: {', '.join(script.tasks)})")
        lg = run_update_loop(script, mode, config, task=script.tasks[args.robot])
        tag = f"{script.name}_{mode}" + ("" if speed is None else f"_v{speed:g}")
        p = out / f"log_{tag}.csv"
        lg.to_csv(p)
        paths.append(p)
        row = lg.summary()
        row["speed"] = speed
        rows.append(row)
        print(f"{script.name:<20} mode={mode:<18} speed={speed if speed is not None else 'default'}  "
              f"collisions={row['collisions']}  gp_cost={row['gp_cost']:.6g}  "
              f"min_clearance={row['min_clearance']:.4f}  median_loop_hz={row['median_loop_hz']:.1f}")
    summary = out / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["scenario", "mode", "speed", "collisions", "gp_cost", "min_clearance",
                                           "median_loop_hz"])
        w.writeheader()
        w.writerows(rows)
    paths.append(summary)
    write_manifest(out, args, paths)
    return EXIT_OK


# ---------------------------------------------------------------- slice

def _slice_field(args):
    """The grid (occupancy or SDF) a slice is taken from."""
    if args.grid:
        return load_grid(args.grid)
    if not args.scenario:
        raise UsageError("slice needs --grid or --scenario")
    from .composite import build_predicted_occupancy, compute_static_sdf, extract_object_sdfs, predict_sdf
    from .edt import compute_exact_sdf
    from .scenarios import render_frame
    from .tracking import classify_motion, initial_decomposition
    script = _scenario(args)
    if not 0.0 <= args.time <= script.horizon:
        raise UsageError(f"--time must lie in [0, {script.horizon}]")
    if args.field == "occupancy":
        return render_frame(script, args.time)
    if args.field == "exact":
        return compute_exact_sdf(render_frame(script, args.time))
    # Predictions are made from the first two frames.
    t_obs = script.frame_dt
    if args.time < t_obs:
        raise UsageError(f"predicted fields need --time >= {t_obs}")
    decomp = classify_motion(initial_decomposition(render_frame(script, 0.0)), render_frame(script, t_obs), t_obs)
    ahead = args.time - t_obs
    if args.field == "predicted-exact":
        return compute_exact_sdf(build_predicted_occupancy(ahead, decomp.moving, decomp.static_grid))
    objs = extract_object_sdfs(decomp.moving, script.geometry, args.eps)
    return predict_sdf(ahead, decomp.moving, objs, compute_static_sdf(decomp.static_grid))


def slice_to_gray(grid, z: int, vrange: float) -> np.ndarray:
    """8-bit image (rows = y, columns = x) of the z-slice; SDF values map linearly from -vrange..vrange."""
    if isinstance(grid, OccupancyGrid):
        img = np.where(grid.occupied[:, :, z], 0, 255).astype(np.uint8)
    else:
        v = np.clip(grid.values[:, :, z], -vrange, vrange)
        img = np.round((v + vrange) / (2 * vrange) * 255).astype(np.uint8)
    return img.T[::-1]


def band_contour(values: np.ndarray, eps: float) -> np.ndarray:
    """Pixels with value <= eps that have a 4-neighbour above eps."""
    inside = values <= eps
    edge = np.zeros_like(inside)
    for ax in (0, 1):
        for sh in (1, -1):
            nb = np.roll(values, sh, axis=ax) > eps
            # do not wrap around the border
            idx = [slice(None)] * 2
            idx[ax] = 0 if sh == 1 else -1
            nb[tuple(idx)] = False
            edge |= inside & nb
    return edge


def write_pgm(path: Path, img: np.ndarray) -> None:
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def write_ppm(path: Path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM written by this module."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    magic, w, h = parts[0], int(parts[1]), int(parts[2])
    px = np.frombuffer(parts[4], dtype=np.uint8)
    return px.reshape(h, w) if magic == b"P5" else px.reshape(h, w, 3)


def cmd_slice(args) -> int:
    grid = _slice_field(args)
    nz = grid.geometry.dims[2]
    z = nz // 2 if args.z is None else args.z
    if not 0 <= z < nz:
        raise UsageError(f"slice index {z} out of range [0, {nz})")
    out = _out_dir(args)
    stem = args.name or (f"{Path(args.grid).stem}" if args.grid else f"{args.scenario}_{args.field}_t{args.time:g}")
    stem = f"{stem}_z{z}"
    gray = slice_to_gray(grid, z, args.range)
    pgm = out / f"{stem}.pgm"
    write_pgm(pgm, gray)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    if isinstance(grid, SignedDistanceField):
        edge = band_contour(grid.values[:, :, z], args.eps).T[::-1]
        rgb[edge] = (255, 0, 0)
    ppm = out / f"{stem}_overlay.ppm"
    write_ppm(ppm, rgb)
    fields = {"source": grid.checksum()}
    write_manifest(out, args, [pgm, ppm], fields)
    print(pgm)
    return EXIT_OK


# ---------------------------------------------------------------- export

def cmd_export(args) -> int:
    from .edt import compute_exact_sdf
    from .scenarios import render_frame, save_scenario
    script = _scenario(args, args.speed)
    out = _out_dir(args)
    paths = [out / f"{script.name}.json"]
    save_scenario(script, paths[0])
    fields = {}
    for i, t in enumerate(script.frame_times()):
        frame = render_frame(script, t)
        p = out / f"frame_{i:03d}.vox"
        dump_grid(frame, p)
        paths.append(p)
        fields[p.name] = frame.checksum()
        if args.sdf:
            sdf = compute_exact_sdf(frame)
            q = out / f"sdf_{i:03d}.vox"
            dump_grid(sdf, q)
            paths.append(q)
            fields[q.name] = sdf.checksum()
    write_manifest(out, args, paths, fields)
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="predsdf", description="Composite signed-distance fields for planning among moving obstacles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bench", help="time composite prediction against full recomputation")
    b.add_argument("--scenario", required=True, help="scenario family or name, e.g. one-pillar-96")
    b.add_argument("--sizes", type=_int_list, help="comma-separated voxels per side (default 64..320 step 32)")
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--frames", type=int, default=10, help="predicted frames per repetition")
    b.add_argument("--eps", type=float, default=0.4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plan", help="run the closed planning loop")
    pl.add_argument("--scenario", required=True)
    pl.add_argument("--mode", default="predicted",
                    choices=["static", "execute-and-update", "full-prior", "predicted",
                             "execute_and_update", "full_prior"])
    pl.add_argument("--robot", default="point", choices=["point", "arm"])
    pl.add_argument("--speed", type=float, help="moving obstacle speed (m/s)")
    pl.add_argument("--speeds", type=_float_list, help="comma-separated speed sweep; one summary row per speed")
    pl.add_argument("--eps", type=float, default=0.2)
    pl.add_argument("--sigma-cost", type=float, help="obstacle cost scale (default 0.2 point, 0.02 arm)")
    pl.add_argument("--n-int", type=int, default=4)
    pl.add_argument("--n-knots", type=int, default=31)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plan)

    s = sub.add_parser("slice", help="export a z-slice as PGM plus an eps-contour overlay")
    s.add_argument("--grid", help=".vox file written by export")
    s.add_argument("--scenario")
    s.add_argument("--time", type=float, default=0.0)
    s.add_argument("--field", default="exact", choices=["occupancy", "exact", "composite", "predicted-exact"])
    s.add_argument("--z", type=int)
    s.add_argument("--eps", type=float, default=0.2)
    s.add_argument("--range", type=float, default=1.0, help="SDF magnitude mapped to black/white")
    s.add_argument("--name", help="output file stem")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_slice)

    e = sub.add_parser("export", help="write a scenario as JSON plus voxel frames")
    e.add_argument("--scenario", required=True)
    e.add_argument("--speed", type=float)
    e.add_argument("--sdf", action="store_true", help="also write exact SDF frames")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"predsdf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure: report and map to exit status 2
        log.debug("command failed", exc_info=True)
        print(f"predsdf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
