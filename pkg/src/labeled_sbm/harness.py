"""Experiment runners: phase sweeps, learning trajectories, overlap histograms.

Every unit of work (one grid point, one sample) draws its seeds from
``split_seed(seed_base, point_index, sample_index, stream)``, a 64-bit
BLAKE2b hash, so the output does not depend on worker count or completion
order.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .bp import BPConfig, EstimatedAffinities
from .em import EMConfig, run_em
from .phase import PhaseVerdict, em_threshold, overlap, phase_verdict
from .sampler import EnsembleParams, sample_instance
from .spectral import band_radius, build_nb_operator, empirical_spectrum, iso_eigenvalue

log = logging.getLogger(__name__)

GRAPH_STREAM, MESSAGE_STREAM = 0, 1


def split_seed(seed_base: int, *keys: int) -> int:
    """Deterministic 63-bit seed for a work unit."""
    payload = struct.pack(f"<{1 + len(keys)}q", int(seed_base), *map(int, keys))
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little") >> 1


def aligned_corner(strengths: Sequence[float], offset: float = 0.4) -> np.ndarray:
    """Initial estimate ``1/2 +- offset`` on the same side of 1/2 as each planted strength."""
    x = np.asarray(strengths, dtype=float)
    return 0.5 + offset * np.where(x >= 0.5, 1.0, -1.0)


@dataclass
class SweepConfig:
    mean_degrees: list[float]
    grid: list[list[float]] | None = None  # per-label strength values, Cartesian product
    points: list[list[float]] | None = None  # explicit strength vectors
    num_vertices: int = 10_000
    samples_per_point: int = 5
    seed_base: int = 0
    init_strengths: list[float] | None = None  # None: aligned corner per point
    corner_offset: float = 0.4
    init_mode: str = "uniform-random"
    balanced: bool = True
    overlap_cutoff: float = 0.05
    em_tol: float = 1e-6
    max_em_steps: int = 300
    sweeps_per_step: int | None = 1
    bp_tol: float = 1e-6
    max_sweeps: int = 200
    damping: float = 0.0
    schedule: str = "random"

    def __post_init__(self):
        if (self.grid is None) == (self.points is None):
            raise ValueError("give exactly one of grid or points")
        if not self.strength_points():
            raise ValueError("empty grid")
        if self.samples_per_point < 1:
            raise ValueError("samples_per_point must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> SweepConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> SweepConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def strength_points(self) -> list[tuple[float, ...]]:
        if self.points is not None:
            return [tuple(map(float, p)) for p in self.points]
        return [tuple(map(float, p)) for p in itertools.product(*self.grid)]

    def em_config(self) -> EMConfig:
        bp = BPConfig(tol=self.bp_tol, max_sweeps=self.max_sweeps, damping=self.damping, schedule=self.schedule)
        return EMConfig(em_tol=self.em_tol, max_em_steps=self.max_em_steps,
                        sweeps_per_step=self.sweeps_per_step, bp=bp)

    def init_for(self, strengths) -> np.ndarray:
        if self.init_strengths is not None:
            return np.asarray(self.init_strengths, dtype=float)
        return aligned_corner(strengths, self.corner_offset)


@dataclass
class SampleOutcome:
    point_index: int
    sample_index: int
    graph_seed: int
    message_seed: int
    overlap: float | None
    termination: str
    em_steps: int
    final_strengths: list[float]
    error: str | None = None


def _run_unit(args) -> SampleOutcome:
    pi, si, params, n, init, init_mode, em_cfg, balanced, seed_base = args
    gseed = split_seed(seed_base, pi, si, GRAPH_STREAM)
    mseed = split_seed(seed_base, pi, si, MESSAGE_STREAM)
    try:
        inst = sample_instance(params, n, gseed, balanced=balanced)
        est = EstimatedAffinities.for_graph(inst.graph, init)
        traj = run_em(inst.graph, est, init_mode, mseed, em_cfg)
        ov = overlap(traj.final_marginals, inst.assignment)
        return SampleOutcome(pi, si, gseed, mseed, ov, traj.termination_reason,
                             len(traj.estimates_history) - 1, traj.final_estimates.strengths.tolist())
    except Exception as err:  # recorded per sample, never fatal
        log.warning("point %d sample %d failed: %s", pi, si, err)
        return SampleOutcome(pi, si, gseed, mseed, None, "error", 0, [], f"{type(err).__name__}: {err}")


def run_units(units: list, threads: int = 1, fn: Callable = _run_unit) -> list:
    """Execute work units, returning results in submission order."""
    if threads <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, units))


@dataclass
class PointResult:
    index: int
    params: EnsembleParams
    init_strengths: list[float]
    samples: list[SampleOutcome]
    verdict: PhaseVerdict

    @property
    def overlaps(self) -> np.ndarray:
        return np.array([s.overlap for s in self.samples if s.overlap is not None])

    @property
    def all_failed(self) -> bool:
        return self.overlaps.size == 0

    @property
    def mean_overlap(self) -> float:
        return float(self.overlaps.mean()) if self.overlaps.size else float("nan")

    @property
    def median_overlap(self) -> float:
        return float(np.median(self.overlaps)) if self.overlaps.size else float("nan")


@dataclass
class SweepResult:
    config: SweepConfig
    points: list[PointResult]

    def empirical_detectable(self, cutoff: float | None = None) -> np.ndarray:
        cut = self.config.overlap_cutoff if cutoff is None else cutoff
        return np.array([p.median_overlap > cut for p in self.points])

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_config_echo(out, "sweep", asdict(self.config))
        p = len(self.config.mean_degrees)
        det = self.empirical_detectable()
        with open(out / "points.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point", *[f"x_{a}" for a in range(1, p + 1)], *[f"c_{a}" for a in range(1, p + 1)],
                        "samples", "failed", "overlap_mean", "overlap_median", "empirical_detectable",
                        "em_detectable", "em_margin", "known_param_detectable", "known_param_margin", "infeasible"])
            for pt, d in zip(self.points, det):
                v = pt.verdict
                w.writerow([pt.index, *_fmt(pt.params.strengths), *_fmt(pt.params.mean_degrees),
                            len(pt.samples), sum(s.overlap is None for s in pt.samples),
                            _f(pt.mean_overlap), _f(pt.median_overlap), int(d),
                            int(v.em_detectable), _f(v.em_symmetric_init.margin),
                            int(v.known_param_detectable), _f(v.known_param.margin), int(v.infeasible)])
        with open(out / "samples.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point", "sample", "graph_seed", "message_seed", "overlap", "termination", "em_steps",
                        *[f"x_hat_{a}" for a in range(1, p + 1)], "error"])
            for pt in self.points:
                for s in pt.samples:
                    xs = _fmt(s.final_strengths) if s.final_strengths else [""] * p
                    w.writerow([s.point_index, s.sample_index, s.graph_seed, s.message_seed,
                                "" if s.overlap is None else _f(s.overlap), s.termination, s.em_steps,
                                *xs, s.error or ""])
        summary = {
            "points": len(self.points),
            "flagged_points": [pt.index for pt in self.points if pt.all_failed],
            "empirical_detectable": [bool(d) for d in det],
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def _f(v: float) -> str:
    return f"{v:.10g}"


def _fmt(vals) -> list[str]:
    return [_f(float(v)) for v in vals]


def write_config_echo(out: Path, command: str, config: dict) -> None:
    (out / "config.json").write_text(json.dumps({"command": command, **config}, indent=2, default=str) + "\n")


def run_phase_sweep(config: SweepConfig, threads: int = 1) -> SweepResult:
    em_cfg = config.em_config()
    pts = [EnsembleParams(tuple(config.mean_degrees), x) for x in config.strength_points()]
    inits = [config.init_for(p.strengths) for p in pts]
    units = [
        (pi, si, params, config.num_vertices, inits[pi], config.init_mode, em_cfg, config.balanced, config.seed_base)
        for pi, params in enumerate(pts)
        for si in range(config.samples_per_point)
    ]
    outcomes = run_units(units, threads)
    results = []
    for pi, params in enumerate(pts):
        samples = [o for o in outcomes if o.point_index == pi]
        results.append(PointResult(pi, params, inits[pi].tolist(), samples, phase_verdict(params)))
        if results[-1].all_failed:
            log.error("every sample of point %d failed", pi)
    return SweepResult(config, results)


def line_bracket(coords: Sequence[float], detectable: Sequence[bool]) -> tuple[float, float] | None:
    """Interval between the last undetectable and the first detectable point along a line.

    ``coords`` must be ordered so that structure strengthens along the line.
    Returns ``None`` when the line never switches or switches back.
    """
    det = list(map(bool, detectable))
    if all(det) or not any(det):
        return None
    first = det.index(True)
    if not all(det[first:]) or any(det[:first]):
        return None
    return float(coords[first - 1]), float(coords[first])


def em_boundary_on_line(mean_degrees, fixed: dict[int, float], free: int) -> float:
    """Strength of label ``free`` (1-based, taken above 1/2) where the EM criterion is met with equality."""
    c = np.asarray(mean_degrees, float)
    P = c / c.sum()
    rhs = 1 / (2 * np.sqrt(c.sum()))
    rest = sum(P[a - 1] * abs(x - 0.5) for a, x in fixed.items())
    return 0.5 + (rhs - rest) / P[free - 1]


def known_param_boundary_on_line(mean_degrees, fixed: dict[int, float], free: int) -> float:
    c = np.asarray(mean_degrees, float)
    P = c / c.sum()
    rest = sum((4 * c[a - 1] * (x - 0.5)) ** 2 / P[a - 1] for a, x in fixed.items())
    dc = np.sqrt((4 * c.sum() - rest) * P[free - 1])
    return 0.5 + dc / (4 * c[free - 1])


# --- trajectories -----------------------------------------------------------


@dataclass
class TrajectoryRun:
    init: list[float]
    seed: int
    history: np.ndarray
    termination: str
    overlap: float
    band_radius: np.ndarray  # analytic lambda_b along the trajectory
    iso: np.ndarray  # analytic lambda_iso along the trajectory


@dataclass
class SpectrumSnapshot:
    label: str
    strengths: list[float]
    summary: Any


@dataclass
class TrajectoryBundle:
    planted: EnsembleParams
    runs: list[TrajectoryRun]
    spectra: list[SpectrumSnapshot] = field(default_factory=list)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        p = self.planted.num_labels
        rows = []
        for r, run in enumerate(self.runs):
            with open(out / f"trajectory_{r}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step", *[f"x_hat_{a}" for a in range(1, p + 1)], "lambda_b", "lambda_iso"])
                for t, x in enumerate(run.history):
                    w.writerow([t, *_fmt(x), _f(run.band_radius[t]), _f(run.iso[t])])
            rows.append({"run": r, "init": run.init, "seed": run.seed, "termination": run.termination,
                         "final": run.history[-1].tolist(), "overlap": run.overlap, "steps": len(run.history) - 1})
        spectra = []
        for k, snap in enumerate(self.spectra):
            snap.summary.write(out / f"spectrum_{k}.csv", out / f"spectrum_{k}.json")
            spectra.append({"index": k, "label": snap.label, "strengths": snap.strengths, **snap.summary.to_dict()})
        summary = {"planted": list(self.planted.strengths), "mean_degrees": list(self.planted.mean_degrees),
                   "runs": rows, "spectra": spectra}
        (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")


def _analytic_along(history, planted: EnsembleParams, c_emp):
    dh = 4 * c_emp * (history - 0.5)
    lb = np.array([band_radius(c_emp, d) for d in dh])
    li = np.array([iso_eigenvalue(planted.delta_c, d, planted.c) for d in dh])
    return lb, li


def run_trajectory_experiment(
    planted: EnsembleParams,
    inits: Sequence[Sequence[float]],
    num_vertices: int = 10_000,
    seeds: Sequence[int] = (0,),
    *,
    em_config: EMConfig = EMConfig(),
    snapshots: Sequence[Sequence[float] | str] = (),
    spectrum_vertices: int = 500,
    spectrum_mode: str = "dense",
    threads: int = 1,
) -> TrajectoryBundle:
    """One EM trajectory per ``(init, seed)``.

    ``snapshots`` lists estimate vectors at which the non-backtracking
    spectrum is computed on a companion graph of ``spectrum_vertices``
    vertices.  The strings ``"initial"``, ``"crossing"`` and ``"final"``
    refer to points of the first trajectory; the crossing is the first
    estimate with analytic band radius <= 1, or the one with the smallest
    radius if the trajectory never gets there.
    """
    units = [(i, s, planted, num_vertices, np.asarray(x0, float), em_config)
             for i, x0 in enumerate(inits) for s in seeds]
    runs = run_units(units, threads, _trajectory_unit)
    bundle = TrajectoryBundle(planted, runs)
    if snapshots:
        companion = sample_instance(planted, spectrum_vertices, split_seed(seeds[0], 0, 0, 2))
        g = companion.graph
        for snap in snapshots:
            label, x = _resolve_snapshot(snap, runs[0])
            est = EstimatedAffinities.for_graph(g, x)
            op = build_nb_operator(g, est)
            summ = empirical_spectrum(op, spectrum_mode, iso_ref=iso_eigenvalue(planted.delta_c, est.delta_c, planted.c))
            bundle.spectra.append(SpectrumSnapshot(label, list(map(float, x)), summ))
    return bundle


def _resolve_snapshot(snap, run: TrajectoryRun):
    if isinstance(snap, str):
        if snap == "initial":
            return snap, run.history[0]
        if snap == "final":
            return snap, run.history[-1]
        if snap == "crossing":
            idx = np.flatnonzero(run.band_radius <= 1.0)
            return snap, run.history[idx[0] if idx.size else int(np.argmin(run.band_radius))]
        raise ValueError(f"unknown snapshot {snap!r}")
    return "explicit", np.asarray(snap, float)


def single_run_bundle(planted: EnsembleParams, traj, init, seed: int = 0, graph=None) -> TrajectoryBundle:
    """Wrap one finished EM run (without overlap) so it can be written or plotted."""
    hist = traj.history
    c_emp = graph.mean_degrees() if graph is not None else np.asarray(planted.mean_degrees, float)
    lb, li = _analytic_along(hist, planted, c_emp)
    return TrajectoryBundle(planted, [TrajectoryRun(list(map(float, init)), seed, hist, traj.termination_reason,
                                                    float("nan"), lb, li)])


def _trajectory_unit(args) -> TrajectoryRun:
    i, s, planted, n, x0, em_cfg = args
    inst = sample_instance(planted, n, split_seed(s, i, 0, GRAPH_STREAM))
    g = inst.graph
    traj = run_em(g, EstimatedAffinities.for_graph(g, x0), "uniform-random", split_seed(s, i, 0, MESSAGE_STREAM), em_cfg)
    hist = traj.history
    lb, li = _analytic_along(hist, planted, g.mean_degrees())
    return TrajectoryRun(x0.tolist(), int(s), hist, traj.termination_reason,
                         overlap(traj.final_marginals, inst.assignment), lb, li)


# --- overlap histograms -----------------------------------------------------


@dataclass
class HistogramTable:
    label: int
    values: list[float]
    overlaps: list[list[float | None]]
    strengths: list[float]
    base_degrees: list[float]

    @property
    def medians(self) -> list[float]:
        return [float(np.median([o for o in ovs if o is not None])) for ovs in self.overlaps]

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        col = f"c_{self.label}"
        with open(out / "histogram.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([col, "sample_idx", "overlap"])
            for v, ovs in zip(self.values, self.overlaps):
                for k, o in enumerate(ovs):
                    w.writerow([_f(v), k, "" if o is None else _f(o)])
        with open(out / "medians.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([col, "median_overlap", "em_detectable", "em_margin"])
            for v, med in zip(self.values, self.medians):
                t = em_threshold(self._params(v))
                w.writerow([_f(v), _f(med), int(t.detectable), _f(t.margin)])

    def _params(self, value) -> EnsembleParams:
        c = list(self.base_degrees)
        c[self.label - 1] = value
        return EnsembleParams(tuple(c), tuple(self.strengths))


def run_overlap_histogram(
    strengths: Sequence[float],
    base_degrees: Sequence[float],
    values: Sequence[float],
    samples: int = 30,
    num_vertices: int = 10_000,
    *,
    label: int = 2,
    seed_base: int = 0,
    init_strengths: Sequence[float] | None = None,
    em_config: EMConfig = EMConfig(),
    threads: int = 1,
) -> HistogramTable:
    """Overlap samples while the mean degree of ``label`` runs over ``values``."""
    strengths = list(map(float, strengths))
    init = np.asarray(init_strengths, float) if init_strengths is not None else aligned_corner(strengths)
    units = []
    for vi, v in enumerate(values):
        c = list(map(float, base_degrees))
        c[label - 1] = float(v)
        params = EnsembleParams(tuple(c), tuple(strengths))
        units += [(vi, si, params, num_vertices, init, "uniform-random", em_config, True, seed_base)
                  for si in range(samples)]
    outcomes = run_units(units, threads)
    table = [[o.overlap for o in outcomes if o.point_index == vi] for vi in range(len(values))]
    return HistogramTable(label, list(map(float, values)), table, strengths, list(map(float, base_degrees)))
