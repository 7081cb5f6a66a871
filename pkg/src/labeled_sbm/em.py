"""EM learning of the structure strengths with BP as the E-step."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .bp import (
    BPConfig,
    EstimatedAffinities,
    InitMode,
    MessageState,
    bp_sweep,
    edge_correlators,
    init_messages,
    run_bp,
    update_marginals,
)
from .graph import LabeledGraph

CLAMP = 1e-4

Termination = Literal["estimates-converged", "max-em-steps", "bp-diverged"]


def strength_update(x_hat: float, correlators: np.ndarray) -> float:
    """Unclamped M-step for one label: ``x * < (1 + 2d) / (1 + 4 (x - 1/2) d) >`` with ``d = X - 1/2``."""
    d = np.asarray(correlators, dtype=float) - 0.5
    return float(x_hat * np.mean((1 + 2 * d) / (1 + 4 * (x_hat - 0.5) * d)))


def m_step(
    graph: LabeledGraph,
    state: MessageState,
    current: EstimatedAffinities,
    clamp: float = CLAMP,
) -> EstimatedAffinities:
    """New strength estimates from the cavity messages in ``state``.

    Labels without edges keep their current strength.  Mean degrees are
    never touched.
    """
    new = current.copy()
    for a, xs in enumerate(edge_correlators(graph, state)):
        if xs.size == 0:
            continue
        new.strengths[a] = strength_update(current.strengths[a], xs)
    np.clip(new.strengths, clamp, 1 - clamp, out=new.strengths)
    return new


@dataclass
class BPRecord:
    sweeps: int
    converged: bool
    max_delta: float


@dataclass
class EmTrajectory:
    estimates_history: list[np.ndarray]
    bp_history: list[BPRecord]
    final_estimates: EstimatedAffinities
    final_marginals: np.ndarray
    termination_reason: Termination
    frozen_labels: list[int] = field(default_factory=list)

    @property
    def history(self) -> np.ndarray:
        """``(steps + 1, p)`` array of strength estimates, initial row first."""
        return np.array(self.estimates_history)

    def to_csv(self, path) -> None:
        p = len(self.estimates_history[0])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", *[f"x_hat_{a}" for a in range(1, p + 1)], "bp_sweeps", "bp_delta"])
            for t, x in enumerate(self.estimates_history):
                rec = self.bp_history[t - 1] if t > 0 else None
                w.writerow([t, *[f"{v:.10g}" for v in x],
                            rec.sweeps if rec else 0, f"{rec.max_delta:.6g}" if rec else ""])


@dataclass(frozen=True)
class EMConfig:
    em_tol: float = 1e-6
    max_em_steps: int = 300
    sweeps_per_step: int | None = 1  # None: run BP to convergence before each M-step
    clamp: float = CLAMP
    bp: BPConfig = BPConfig()


def run_em(
    graph: LabeledGraph,
    init_estimates: EstimatedAffinities,
    init_mode: InitMode = "uniform-random",
    seed=None,
    config: EMConfig = EMConfig(),
    *,
    state: MessageState | None = None,
) -> EmTrajectory:
    """Alternate BP and the M-step until the strengths stop moving.

    By default the M-step follows every single BP sweep, which lets the
    estimates relax towards 1/2 while the messages are still uninformative.
    ``config.sweeps_per_step = None`` gives classical EM (BP to convergence
    before each M-step).  In the interleaved mode the stopping test also
    requires the last sweep to have moved messages by less than the BP
    tolerance, so that a slowly growing BP instability is not mistaken for
    convergence.
    """
    if not config.em_tol > 0:
        raise ValueError("em_tol must be positive")
    est = init_estimates.copy()
    np.clip(est.strengths, config.clamp, 1 - config.clamp, out=est.strengths)
    if state is None:
        state = init_messages(graph, seed, init_mode)
    bpc = config.bp
    frozen = [a + 1 for a, n in enumerate(graph.edge_counts) if n == 0]
    history = [est.strengths.copy()]
    records: list[BPRecord] = []
    reason: Termination = "max-em-steps"

    for _ in range(config.max_em_steps):
        before = state.iteration_count
        if config.sweeps_per_step is None:
            _, converged = run_bp(graph, est, state, bpc.tol, bpc.max_sweeps,
                                  damping=bpc.damping, use_field=bpc.use_field, schedule=bpc.schedule)
        else:
            for _ in range(config.sweeps_per_step):
                bp_sweep(graph, est, state, damping=bpc.damping, use_field=bpc.use_field, schedule=bpc.schedule)
            converged = state.last_max_delta < bpc.tol
        records.append(BPRecord(state.iteration_count - before, converged, state.last_max_delta))
        if not np.isfinite(state.cavity).all():
            reason = "bp-diverged"
            break
        new = m_step(graph, state, est, config.clamp)
        moved = float(np.max(np.abs(new.strengths - est.strengths)))
        est = new
        history.append(est.strengths.copy())
        if moved < config.em_tol and (config.sweeps_per_step is None or converged):
            reason = "estimates-converged"
            break

    update_marginals(graph, est, state, use_field=bpc.use_field)
    return EmTrajectory(history, records, est, state.marginals.copy(), reason, frozen)


def transient_attraction_rate(trajectory: EmTrajectory | np.ndarray) -> np.ndarray:
    """Per-step contraction factors ``|x_{t+1} - 1/2| / |x_t - 1/2|`` for every label.

    Steps where the estimate sits exactly at 1/2 give no rate and are
    reported as 1.
    """
    hist = trajectory.history if isinstance(trajectory, EmTrajectory) else np.asarray(trajectory, float)
    if hist.shape[0] < 3:
        raise ValueError("need at least three recorded estimates")
    dist = np.abs(hist - 0.5)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = dist[1:] / dist[:-1]
    rate[~np.isfinite(rate)] = 1.0
    return rate
