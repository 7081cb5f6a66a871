"""Command line entry point: ``labeled-sbm <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import harness, plotting
from .bp import BPConfig, EstimatedAffinities
from .em import EMConfig, run_em
from .graph import read_edge_list, write_edge_list
from .phase import overlap, phase_verdict
from .sampler import EnsembleParams, read_assignment, sample_instance, write_assignment
from .spectral import build_nb_operator, empirical_spectrum, iso_eigenvalue

log = logging.getLogger("labeled_sbm")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v).__name__}")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _load_config(args) -> dict:
    return json.loads(Path(args.config).read_text()) if args.config else {}


def _pick(args, cfg: dict, name: str, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def _em_config(args, cfg: dict) -> EMConfig:
    spp = _pick(args, cfg, "sweeps_per_step", 1)
    bp = BPConfig(
        tol=_pick(args, cfg, "bp_tol", 1e-6),
        max_sweeps=_pick(args, cfg, "max_sweeps", 200),
        damping=_pick(args, cfg, "damping", 0.0),
        schedule=_pick(args, cfg, "schedule", "random"),
    )
    return EMConfig(
        em_tol=_pick(args, cfg, "em_tol", 1e-6),
        max_em_steps=_pick(args, cfg, "max_em_steps", 300),
        sweeps_per_step=None if spp in (0, None) else int(spp),
        bp=bp,
    )


def _params(args, cfg) -> EnsembleParams:
    c = _pick(args, cfg, "mean_degrees")
    x = _pick(args, cfg, "strengths")
    if c is None or x is None:
        raise ValueError("--degrees and --strengths (or config keys mean_degrees/strengths) are required")
    return EnsembleParams(tuple(c), tuple(x))


def _seed(args, cfg: dict) -> int:
    return int(_pick(args, cfg, "seed", 0))


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sample(args) -> dict:
    cfg = _load_config(args)
    params = _params(args, cfg)
    n = _pick(args, cfg, "num_vertices", 10_000)
    seed = _seed(args, cfg)
    inst = sample_instance(params, n, seed, balanced=not args.iid)
    out = _out(args)
    write_edge_list(inst.graph, out / "graph.tsv")
    if args.write_planted:
        write_assignment(inst.assignment, out / "planted.tsv")
    harness.write_config_echo(out, "sample", {"mean_degrees": params.mean_degrees, "strengths": params.strengths,
                                              "num_vertices": n, "seed": seed, "balanced": not args.iid})
    return {"edges": inst.graph.num_edges, "edges_per_label": inst.graph.edge_counts.tolist()}


def _graph_and_planted(args, cfg):
    if args.graph_in:
        g = read_edge_list(args.graph_in)
        planted = read_assignment(args.planted_in) if args.planted_in else None
        params = None
    else:
        params = _params(args, cfg)
        inst = sample_instance(params, _pick(args, cfg, "num_vertices", 10_000), harness.split_seed(_seed(args, cfg), 0, 0, 0))
        g, planted = inst.graph, inst.assignment
    return g, planted, params


def cmd_em(args) -> dict:
    cfg = _load_config(args)
    g, planted, params = _graph_and_planted(args, cfg)
    init = _pick(args, cfg, "init_strengths")
    if init is None:
        if params is None:
            raise ValueError("--init is required with --graph-in")
        init = harness.aligned_corner(params.strengths).tolist()
    em_cfg = _em_config(args, cfg)
    traj = run_em(g, EstimatedAffinities.for_graph(g, init), seed=harness.split_seed(_seed(args, cfg), 0, 0, 1), config=em_cfg)
    out = _out(args)
    traj.to_csv(out / "trajectory.csv")
    np.savetxt(out / "marginals.csv", traj.final_marginals, delimiter=",", header="psi_1,psi_2", comments="", fmt="%.10g")
    res = {"termination": traj.termination_reason, "steps": len(traj.estimates_history) - 1,
           "final_strengths": traj.final_estimates.strengths.tolist()}
    if planted is not None:
        res["overlap"] = overlap(traj.final_marginals, planted)
    harness.write_config_echo(out, "em", {"init_strengths": list(init), "seed": _seed(args, cfg), **asdict(em_cfg)})
    (out / "summary.json").write_text(json.dumps(res, indent=2) + "\n")
    if not args.no_plot and params is not None and g.num_labels == 2:
        plotting.plot_trajectories(harness.single_run_bundle(params, traj, init, graph=g), out / "trajectory.png")
    return res


def cmd_sweep(args) -> dict:
    cfg = _load_config(args)
    if args.seed is not None:
        cfg["seed_base"] = args.seed
    cfg.pop("seed", None)
    config = harness.SweepConfig.from_dict(cfg)
    result = harness.run_phase_sweep(config, args.threads)
    out = _out(args)
    result.write(out)
    if not args.no_plot:
        plotting.plot_phase_sweep(result, out / "phase.png")
    return {"points": len(result.points), "detectable": result.empirical_detectable().tolist()}


def cmd_trajectory(args) -> dict:
    cfg = _load_config(args)
    params = _params(args, cfg)
    inits = cfg.get("inits") or ([args.init] if args.init else [[0.1, 0.9]])
    snaps = cfg.get("snapshots", args.snapshots.split(",") if args.snapshots else [])
    bundle = harness.run_trajectory_experiment(
        params, inits, _pick(args, cfg, "num_vertices", 10_000), cfg.get("seeds", [_seed(args, cfg)]),
        em_config=_em_config(args, cfg), snapshots=snaps,
        spectrum_vertices=cfg.get("spectrum_vertices", 500), threads=args.threads,
    )
    out = _out(args)
    bundle.write(out)
    harness.write_config_echo(out, "trajectory", {**cfg, "inits": inits, "snapshots": snaps})
    if not args.no_plot:
        plotting.plot_trajectories(bundle, out / "trajectories.png")
        for k, s in enumerate(bundle.spectra):
            plotting.plot_spectrum(s.summary, out / f"spectrum_{k}.png", f"{s.label} {np.round(s.strengths, 3)}")
    return {"runs": [r.history[-1].tolist() for r in bundle.runs]}


def cmd_histogram(args) -> dict:
    cfg = _load_config(args)
    params = _params(args, cfg)
    values = cfg.get("values") or _floats(args.values)
    table = harness.run_overlap_histogram(
        params.strengths, params.mean_degrees, values, _pick(args, cfg, "samples", 30),
        _pick(args, cfg, "num_vertices", 10_000), label=_pick(args, cfg, "label", 2), seed_base=_seed(args, cfg),
        init_strengths=_pick(args, cfg, "init_strengths"), em_config=_em_config(args, cfg), threads=args.threads,
    )
    out = _out(args)
    table.write(out)
    harness.write_config_echo(out, "histogram", {**cfg, "values": values, "seed": _seed(args, cfg)})
    if not args.no_plot:
        plotting.plot_overlap_histogram(table, out / "histogram.png")
    return {"medians": dict(zip(map(str, table.values), table.medians))}


def cmd_spectrum(args) -> dict:
    cfg = _load_config(args)
    est_x = _pick(args, cfg, "estimates")
    if args.graph_in:
        g = read_edge_list(args.graph_in)
        params = None
    else:
        params = _params(args, cfg)
        g = sample_instance(params, _pick(args, cfg, "num_vertices", 500), _seed(args, cfg)).graph
    if est_x is None:
        if params is None:
            raise ValueError("--estimates is required with --graph-in")
        est_x = list(params.strengths)
    est = EstimatedAffinities.for_graph(g, est_x)
    op = build_nb_operator(g, est)
    iso = iso_eigenvalue(params.delta_c, est.delta_c, params.c) if params else None
    summ = empirical_spectrum(op, args.mode, args.k, iso_ref=iso, seed=_seed(args, cfg))
    out = _out(args)
    summ.write(out / "spectrum.csv", out / "spectrum.json")
    if not args.no_plot:
        plotting.plot_spectrum(summ, out / "spectrum.png")
    return summ.to_dict()


def cmd_verdict(args) -> dict:
    cfg = _load_config(args)
    return phase_verdict(_params(args, cfg)).as_dict()


COMMANDS = {
    "sample": cmd_sample,
    "em": cmd_em,
    "sweep": cmd_sweep,
    "trajectory": cmd_trajectory,
    "histogram": cmd_histogram,
    "spectrum": cmd_spectrum,
    "verdict": cmd_verdict,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with command options")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", default="out")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--no-plot", action="store_true", help="skip PNG figures")
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--degrees", dest="mean_degrees", type=_floats, help="c_1,...,c_p")
    model.add_argument("--strengths", type=_floats, help="x_1,...,x_p")
    model.add_argument("-N", "--num-vertices", dest="num_vertices", type=int)
    em = argparse.ArgumentParser(add_help=False)
    em.add_argument("--em-tol", type=float)
    em.add_argument("--max-em-steps", type=int)
    em.add_argument("--sweeps-per-step", type=int, help="BP sweeps between M-steps; 0 = run BP to convergence")
    em.add_argument("--bp-tol", type=float)
    em.add_argument("--max-sweeps", type=int)
    em.add_argument("--damping", type=float)
    em.add_argument("--schedule", choices=["random", "parallel"])

    p = argparse.ArgumentParser(prog="labeled-sbm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", parents=[common, model], help="draw a labeled SBM graph")
    s.add_argument("--write-planted", action="store_true")
    s.add_argument("--iid", action="store_true", help="i.i.d. module assignment instead of exact balance")

    s = sub.add_parser("em", parents=[common, model, em], help="single EM run")
    s.add_argument("--graph-in")
    s.add_argument("--planted-in")
    s.add_argument("--init", dest="init_strengths", type=_floats)

    sub.add_parser("sweep", parents=[common], help="phase-diagram sweep (needs --config)")

    s = sub.add_parser("trajectory", parents=[common, model, em], help="EM trajectories with spectra")
    s.add_argument("--init", type=_floats)
    s.add_argument("--snapshots", help="comma list of initial,crossing,final")

    s = sub.add_parser("histogram", parents=[common, model, em], help="overlap histogram over a degree sweep")
    s.add_argument("--values", default="1,2,3,4", help="swept mean degrees")
    s.add_argument("--label", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--init", dest="init_strengths", type=_floats)

    s = sub.add_parser("spectrum", parents=[common, model], help="weighted non-backtracking spectrum")
    s.add_argument("--graph-in")
    s.add_argument("--estimates", type=_floats)
    s.add_argument("--mode", choices=["dense", "krylov"], default="dense")
    s.add_argument("-k", type=int, default=20)

    sub.add_parser("verdict", parents=[common, model], help="closed-form detectability criteria")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except Exception as err:
        record = {"status": "error", "command": args.command, "error": type(err).__name__, "message": str(err)}
        print(json.dumps(record), file=sys.stderr)
        try:
            _out(args).joinpath("error.json").write_text(json.dumps(record, indent=2) + "\n")
        except OSError:
            pass
        return 2
    print(json.dumps({"status": "ok", "command": args.command, **result}, default=_jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
