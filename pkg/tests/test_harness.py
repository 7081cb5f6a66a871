import json

import numpy as np
import pytest

from labeled_sbm import cli, harness
from labeled_sbm.em import EMConfig
from labeled_sbm.harness import (
    SweepConfig,
    aligned_corner,
    em_boundary_on_line,
    known_param_boundary_on_line,
    line_bracket,
    run_overlap_histogram,
    run_phase_sweep,
    split_seed,
)
from labeled_sbm.phase import em_threshold, known_param_threshold, phase_verdict
from labeled_sbm.sampler import EnsembleParams

SMALL = dict(mean_degrees=[3.0, 5.0], num_vertices=800, samples_per_point=2, max_em_steps=30)


def test_split_seed_stable_and_distinct():
    assert split_seed(1, 2, 3, 0) == split_seed(1, 2, 3, 0)
    seeds = {split_seed(0, p, s, k) for p in range(10) for s in range(10) for k in range(2)}
    assert len(seeds) == 200
    assert all(0 <= s < 2**63 for s in seeds)


def test_aligned_corner():
    assert aligned_corner((0.1, 0.6, 0.5)).tolist() == pytest.approx([0.1, 0.9, 0.9])


def test_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(mean_degrees=[1.0])
    with pytest.raises(ValueError):
        SweepConfig(mean_degrees=[1.0], points=[[0.5]], samples_per_point=0)
    with pytest.raises(ValueError):
        SweepConfig(mean_degrees=[1.0], grid=[[]])
    with pytest.raises(ValueError, match="bogus"):
        SweepConfig.from_dict({"mean_degrees": [1.0], "points": [[0.5]], "bogus": 1})


def test_grid_expansion():
    cfg = SweepConfig(mean_degrees=[1.0, 2.0], grid=[[0.1, 0.2], [0.3, 0.4, 0.5]])
    assert len(cfg.strength_points()) == 6
    assert cfg.strength_points()[1] == (0.1, 0.4)


def _read(out):
    return {name: (out / name).read_bytes() for name in ("points.csv", "samples.csv", "summary.json", "config.json")}


def test_byte_identical_reruns(tmp_path):
    cfg = SweepConfig(points=[[0.1, 0.6], [0.5, 0.5]], seed_base=9, **SMALL)
    run_phase_sweep(cfg).write(tmp_path / "a")
    run_phase_sweep(cfg).write(tmp_path / "b")
    run_phase_sweep(cfg, threads=2).write(tmp_path / "c")
    assert _read(tmp_path / "a") == _read(tmp_path / "b") == _read(tmp_path / "c")


def test_counts_and_verdicts_consistent():
    cfg = SweepConfig(grid=[[0.1, 0.5], [0.6]], **SMALL)
    res = run_phase_sweep(cfg)
    assert len(res.points) == 2
    for pt in res.points:
        assert len(pt.samples) == cfg.samples_per_point
        fresh = phase_verdict(pt.params)
        assert pt.verdict.as_dict() == fresh.as_dict()


def test_failures_recorded_and_flagged(tmp_path):
    cfg = SweepConfig(mean_degrees=[5.0], points=[[1.0]], num_vertices=3, samples_per_point=2)
    res = run_phase_sweep(cfg)
    assert res.points[0].all_failed
    assert all(s.error and "ParameterError" in s.error for s in res.points[0].samples)
    res.write(tmp_path)
    assert json.loads((tmp_path / "summary.json").read_text())["flagged_points"] == [0]


def test_uniform_point_has_no_overlap():
    cfg = SweepConfig(mean_degrees=[3.0, 5.0], points=[[0.5, 0.5]], num_vertices=10_000, samples_per_point=5)
    assert run_phase_sweep(cfg, threads=5).points[0].median_overlap < 0.05


def test_line_bracket():
    assert line_bracket([1, 2, 3, 4], [False, False, True, True]) == (2.0, 3.0)
    assert line_bracket([1, 2, 3], [True, True, True]) is None
    assert line_bracket([1, 2, 3], [False, False, False]) is None
    assert line_bracket([1, 2, 3, 4], [False, True, False, True]) is None


def test_boundaries_on_line():
    c = (3.0, 5.0)
    x1 = em_boundary_on_line(c, {2: 0.45}, 1)
    t = em_threshold(EnsembleParams(c, (x1, 0.45)))
    assert t.lhs == pytest.approx(t.rhs, abs=1e-14)
    x2 = known_param_boundary_on_line(c, {1: 0.45}, 2)
    t = known_param_threshold(EnsembleParams(c, (0.45, x2)))
    assert t.lhs == pytest.approx(t.rhs, abs=1e-12)


def test_histogram_uniform_single_value(tmp_path):
    table = run_overlap_histogram((0.5, 0.5), (3.0, 1.0), [2.0], samples=3, num_vertices=2000,
                                  em_config=EMConfig(max_em_steps=40))
    assert len(table.overlaps) == 1 and len(table.overlaps[0]) == 3
    assert max(table.overlaps[0]) < 0.1
    table.write(tmp_path)
    rows = (tmp_path / "histogram.csv").read_text().splitlines()
    assert rows[0] == "c_2,sample_idx,overlap" and len(rows) == 4
    assert (tmp_path / "medians.csv").read_text().startswith("c_2,median_overlap")


def test_trajectory_bundle(tmp_path):
    planted = EnsembleParams((3.0, 5.0), (0.1, 0.6))
    bundle = harness.run_trajectory_experiment(planted, [(0.1, 0.9)], 1500, [0], em_config=EMConfig(max_em_steps=25),
                                               snapshots=["initial", (0.323, 0.677)], spectrum_vertices=150)
    assert len(bundle.runs) == 1 and len(bundle.spectra) == 2
    run = bundle.runs[0]
    assert run.history.shape == (26, 2) and run.band_radius.shape == (26,)
    bundle.write(tmp_path)
    head = (tmp_path / "trajectory_0.csv").read_text().splitlines()[0]
    assert head == "step,x_hat_1,x_hat_2,lambda_b,lambda_iso"
    assert (tmp_path / "spectrum_1.json").exists()


# --- CLI -----------------------------------------------------------------


def _cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_verdict(capsys):
    code, out, _ = _cli(capsys, "verdict", "--degrees", "3,3", "--strengths", "0.85,0.45")
    rec = json.loads(out)
    assert code == 0 and rec["infeasible"] is True and rec["em_detectable"] is False


def test_cli_sample_then_em(capsys, tmp_path):
    code, _, _ = _cli(capsys, "sample", "--degrees", "3,5", "--strengths", "0.1,0.6", "-N", 1500,
                      "--seed", 2, "--write-planted", "--out-dir", tmp_path / "s")
    assert code == 0
    assert (tmp_path / "s/planted.tsv").exists() and (tmp_path / "s/config.json").exists()
    code, out, _ = _cli(capsys, "em", "--graph-in", tmp_path / "s/graph.tsv", "--planted-in",
                        tmp_path / "s/planted.tsv", "--init", "0.1,0.9", "--max-em-steps", 10,
                        "--out-dir", tmp_path / "e")
    assert code == 0 and "overlap" in json.loads(out)
    assert (tmp_path / "e/trajectory.csv").read_text().startswith("step,x_hat_1,x_hat_2,bp_sweeps,bp_delta")


def test_cli_sweep_with_figure(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"points": [[0.5, 0.5]], **SMALL}))
    code, _, _ = _cli(capsys, "sweep", "--config", cfg, "--out-dir", tmp_path / "o")
    assert code == 0
    assert (tmp_path / "o/points.csv").exists() and (tmp_path / "o/phase.png").stat().st_size > 0


def test_cli_spectrum(capsys, tmp_path):
    code, out, _ = _cli(capsys, "spectrum", "--degrees", "3,5", "--strengths", "0.1,0.9", "-N", 120,
                        "--out-dir", tmp_path, "--no-plot")
    assert code == 0 and json.loads(out)["iso_analytic"] > 0
    assert (tmp_path / "spectrum.csv").exists() and not (tmp_path / "spectrum.png").exists()


def test_cli_error_record(capsys, tmp_path):
    code, _, err = _cli(capsys, "spectrum", "--graph-in", tmp_path / "missing.tsv", "--out-dir", tmp_path)
    rec = json.loads(err)
    assert code != 0 and rec["status"] == "error" and rec["error"] == "FileNotFoundError"
    assert json.loads((tmp_path / "error.json").read_text()) == rec
