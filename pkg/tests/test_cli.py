import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from predsdf.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, band_contour, main, read_pnm
from predsdf.edt import compute_exact_sdf
from predsdf.voxelgrid import GridGeometry, OccupancyGrid, dump_grid, load_grid


def _run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def _manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_bench_outputs(tmp_path, capsys):
    assert _run(tmp_path, "bench", "--scenario", "one-pillar", "--sizes", "16,24", "--reps", "2",
                "--frames", "2") == EXIT_OK
    for name in ("bench_one-pillar.csv", "bench_one-pillar_summary.csv", "bench_one-pillar.txt"):
        assert (tmp_path / name).stat().st_size > 0
    assert "Repeat prediction speed-up" in capsys.readouterr().out
    m = _manifest(tmp_path)
    assert m["command"] == "bench" and set(m["fields"]) == {"16", "24"}
    assert set(m["outputs"]) == {"bench_one-pillar.csv", "bench_one-pillar_summary.csv", "bench_one-pillar.txt"}


def test_bench_seed_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert _run(out, "bench", "--scenario", "random", "--sizes", "20", "--reps", "1", "--frames", "2",
                    "--seed", "7") == EXIT_OK
    assert _manifest(a)["fields"] == _manifest(b)["fields"]
    assert _manifest(a)["seed"] == 7


def test_usage_errors(tmp_path, capsys):
    assert _run(tmp_path, "bench", "--scenario", "no-such-scene") == EXIT_USAGE
    assert _run(tmp_path, "bench") == EXIT_USAGE  # missing required flag
    assert _run(tmp_path, "bench", "--scenario", "one-box", "--sizes", "8") == EXIT_USAGE
    assert _run(tmp_path, "plan", "--scenario", "one-pillar-64", "--mode", "telepathic") == EXIT_USAGE
    assert _run(tmp_path, "plan", "--scenario", "one-pillar-64", "--eps", "-1") == EXIT_USAGE
    assert _run(tmp_path, "slice", "--scenario", "one-box-32", "--z", "99") == EXIT_USAGE
    assert _run(tmp_path, "slice") == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    capsys.readouterr()


def test_runtime_error_exit_code(tmp_path, capsys):
    assert _run(tmp_path, "slice", "--grid", str(tmp_path / "missing.vox")) == EXIT_RUNTIME
    assert "FileNotFoundError" in capsys.readouterr().err


def _summary(path):
    return list(csv.DictReader(open(path / "summary.csv")))


def test_plan_predicted_avoids_and_static_collides(tmp_path):
    assert _run(tmp_path / "p", "plan", "--scenario", "one-pillar-64", "--mode", "predicted",
                "--speed", "0.3") == EXIT_OK
    assert _run(tmp_path / "s", "plan", "--scenario", "one-pillar-64", "--mode", "static",
                "--speed", "0.3") == EXIT_OK
    assert int(_summary(tmp_path / "p")[0]["collisions"]) == 0
    assert int(_summary(tmp_path / "s")[0]["collisions"]) >= 1
    assert (tmp_path / "p" / "log_one-pillar-64_predicted_v0.3.csv").exists()


def test_plan_speed_sweep(tmp_path):
    assert _run(tmp_path, "plan", "--scenario", "one-pillar-64", "--mode", "full-prior",
                "--speeds", "0.2,0.4,0.8") == EXIT_OK
    rows = _summary(tmp_path)
    assert [float(r["speed"]) for r in rows] == [0.2, 0.4, 0.8]
    assert {r["mode"] for r in rows} == {"full_prior"}
    assert len(list(tmp_path.glob("log_*.csv"))) == 3


def test_plan_arm_task(tmp_path):
    assert _run(tmp_path, "plan", "--scenario", "one-pillar-64", "--robot", "arm", "--mode", "static",
                "--n-knots", "6") == EXIT_OK
    header = open(next(tmp_path.glob("log_*.csv"))).readline().strip().split(",")
    assert header[-3:] == ["q0", "q1", "q2"]
    assert _manifest(tmp_path)["flags"]["sigma_cost"] is None


def test_slice_composite_matches_predicted_exact_inside_band(tmp_path):
    common = ["slice", "--scenario", "toy-discs-64", "--time", "0.8", "--z", "20", "--eps", "0.2"]
    assert _run(tmp_path, *common, "--field", "composite", "--name", "comp") == EXIT_OK
    assert _run(tmp_path, *common, "--field", "predicted-exact", "--name", "ref") == EXIT_OK
    comp = read_pnm(tmp_path / "comp_z20.pgm")
    ref = read_pnm(tmp_path / "ref_z20.pgm")
    overlay = read_pnm(tmp_path / "ref_z20_overlay.ppm")
    contour = np.all(overlay == (255, 0, 0), axis=2)
    assert contour.any()
    # Gray level 0.2 m on the default +-1 m scale; pixels at or below it are inside the band.
    inside = ref <= np.round((0.2 + 1.0) / 2.0 * 255)
    assert inside.sum() > contour.sum()
    np.testing.assert_array_equal(comp[inside], ref[inside])
    assert np.all(comp >= ref)


def test_slice_empty_occupancy_is_white(tmp_path):
    g = GridGeometry((12, 10, 8), 0.1)
    dump_grid(OccupancyGrid.empty(g), tmp_path / "empty.vox")
    assert _run(tmp_path, "slice", "--grid", str(tmp_path / "empty.vox")) == EXIT_OK
    img = read_pnm(tmp_path / "empty_z4.pgm")
    assert img.shape == (10, 12) and np.all(img == 255)


def test_slice_single_voxel_rings(tmp_path):
    g = GridGeometry((21, 21, 21), 0.1)
    occ = np.zeros(g.dims, dtype=bool)
    occ[10, 10, 10] = True
    dump_grid(compute_exact_sdf(OccupancyGrid(g, occ)), tmp_path / "dot.vox")
    assert _run(tmp_path, "slice", "--grid", str(tmp_path / "dot.vox"), "--range", "1.5") == EXIT_OK
    img = read_pnm(tmp_path / "dot_z10.pgm").astype(int)
    yy, xx = np.mgrid[0:21, 0:21]
    r2 = (yy - 10) ** 2 + (xx - 10) ** 2
    assert img[10, 10] == img.min()
    for value in np.unique(r2):
        ring = img[r2 == value]
        assert np.all(ring == ring[0])  # equal distance, equal gray
    by_radius = [img[r2 == v][0] for v in np.unique(r2)]
    assert np.all(np.diff(by_radius) >= 0)


def test_band_contour():
    v = np.array([[0.0, 0.1, 0.5], [0.1, 0.3, 0.6], [0.5, 0.6, 0.7]])
    edge = band_contour(v, 0.2)
    assert edge.tolist() == [[False, True, False], [True, False, False], [False, False, False]]


def test_export_round_trip(tmp_path):
    assert _run(tmp_path, "export", "--scenario", "one-box-32", "--sdf") == EXIT_OK
    frames = sorted(tmp_path.glob("frame_*.vox"))
    sdfs = sorted(tmp_path.glob("sdf_*.vox"))
    assert len(frames) == len(sdfs) == 32
    m = _manifest(tmp_path)
    assert m["fields"]["frame_005.vox"] == load_grid(frames[5]).checksum()
    assert m["fields"]["sdf_005.vox"] == compute_exact_sdf(load_grid(frames[5])).checksum()
    assert (tmp_path / "one-box-32.json").exists()
    # Exported scenarios load back through --scenario.
    assert main(["export", "--scenario", str(tmp_path / "one-box-32.json"), "--out", str(tmp_path / "again")]) == 0
    assert _manifest(tmp_path / "again")["fields"]["frame_005.vox"] == m["fields"]["frame_005.vox"]


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PREDSDF_OUT", str(tmp_path / "envout"))
    assert main(["slice", "--scenario", "one-box-32", "--field", "occupancy"]) == EXIT_OK
    assert (tmp_path / "envout" / "manifest.json").exists()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "predsdf.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
    res = subprocess.run([sys.executable, "-m", "predsdf.cli", "plan"], capture_output=True, text=True)
    assert res.returncode == 1
