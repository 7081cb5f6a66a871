"""Belief propagation for the two-module labeled SBM.

Cavity messages live on directed edges: ``cavity[e]`` is the belief of the
tail of ``e`` with the head removed.  Non-edges enter through a global
field ``h_sigma = (1/N) sum_l sum_s psi^l_s C_{s sigma}`` where ``C`` is the
label-summed affinity; only the marginal sums are stored so the field can
be re-evaluated for any estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numba
import numpy as np

from .graph import LabeledGraph

log = logging.getLogger(__name__)

InitMode = Literal["uniform-random", "factorized", "planted-biased"]


@dataclass
class EstimatedAffinities:
    """Current estimate: fixed mean degrees ``c_alpha`` and strengths ``x_hat``."""

    mean_degrees: np.ndarray
    strengths: np.ndarray

    def __post_init__(self):
        self.mean_degrees = np.asarray(self.mean_degrees, dtype=float).copy()
        self.strengths = np.asarray(self.strengths, dtype=float).copy()
        if self.mean_degrees.shape != self.strengths.shape:
            raise ValueError("mean_degrees and strengths must have the same length")

    @classmethod
    def for_graph(cls, graph: LabeledGraph, strengths) -> EstimatedAffinities:
        """Estimates with ``c_alpha`` pinned to the empirical ``2 L_alpha / N``."""
        strengths = np.broadcast_to(np.asarray(strengths, dtype=float), (graph.num_labels,))
        return cls(graph.mean_degrees(), strengths)

    @property
    def num_labels(self) -> int:
        return len(self.strengths)

    @property
    def c_in(self) -> np.ndarray:
        return 2 * self.mean_degrees * self.strengths

    @property
    def c_out(self) -> np.ndarray:
        return 2 * self.mean_degrees * (1 - self.strengths)

    @property
    def delta_c(self) -> np.ndarray:
        return self.c_in - self.c_out

    def copy(self) -> EstimatedAffinities:
        return EstimatedAffinities(self.mean_degrees, self.strengths)


@dataclass
class MessageState:
    cavity: np.ndarray  # (2L, 2)
    marginals: np.ndarray  # (N, 2)
    marginal_sum: np.ndarray  # (2,)
    rng: np.random.Generator
    iteration_count: int = 0
    last_max_delta: float = np.inf
    underflow_count: int = 0
    field: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def copy(self) -> MessageState:
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return MessageState(
            self.cavity.copy(), self.marginals.copy(), self.marginal_sum.copy(), rng,
            self.iteration_count, self.last_max_delta, self.underflow_count, self.field.copy(),
        )


def compute_field(marginal_sum: np.ndarray, estimates: EstimatedAffinities, num_vertices: int) -> np.ndarray:
    cin, cout = estimates.c_in.sum(), estimates.c_out.sum()
    s0, s1 = marginal_sum
    return np.array([s0 * cin + s1 * cout, s0 * cout + s1 * cin]) / num_vertices


def init_messages(
    graph: LabeledGraph,
    seed=None,
    mode: InitMode = "uniform-random",
    *,
    assignment: np.ndarray | None = None,
    bias: float = 0.1,
) -> MessageState:
    """Starting messages.

    ``planted-biased`` tilts every message and marginal of vertex ``i``
    towards ``assignment[i]`` by ``bias``; it exists for tests.
    """
    rng = np.random.default_rng(seed)
    n, m = graph.num_vertices, graph.num_directed
    if mode == "factorized":
        cavity = np.full((m, 2), 0.5)
        marg = np.full((n, 2), 0.5)
    elif mode == "uniform-random":
        u = rng.random(m)
        cavity = np.stack([u, 1 - u], axis=1)
        u = rng.random(n)
        marg = np.stack([u, 1 - u], axis=1)
    elif mode == "planted-biased":
        if assignment is None:
            raise ValueError("planted-biased initialization needs an assignment")
        if not 0 <= bias <= 0.5:
            raise ValueError("bias must lie in [0, 1/2]")
        sign = np.where(np.asarray(assignment) == 0, 1.0, -1.0)
        marg = np.stack([0.5 + bias * sign, 0.5 - bias * sign], axis=1)
        cavity = marg[graph.source].copy()
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return MessageState(cavity, marg, marg.sum(axis=0), rng)


@numba.njit(cache=True)
def _sweep_kernel(order, in_ptr, in_edges, dlabel, cavity, marg, msum, cin, cout,
                  n, damping, use_field, prior, has_prior):
    max_delta = 0.0
    underflow = 0
    cin_tot = 0.0
    cout_tot = 0.0
    for a in range(cin.shape[0]):
        cin_tot += cin[a]
        cout_tot += cout[a]
    maxdeg = 0
    for i in range(n):
        d = in_ptr[i + 1] - in_ptr[i]
        if d > maxdeg:
            maxdeg = d
    t = np.empty((maxdeg, 2))

    for idx in range(order.shape[0]):
        i = order[idx]
        lo = in_ptr[i]
        d = in_ptr[i + 1] - lo
        if use_field:
            h0 = (msum[0] * cin_tot + msum[1] * cout_tot) / n
            h1 = (msum[0] * cout_tot + msum[1] * cin_tot) / n
            hm = min(h0, h1)
            b0 = np.exp(-(h0 - hm))
            b1 = np.exp(-(h1 - hm))
        else:
            b0 = 1.0
            b1 = 1.0
        if has_prior:
            b0 *= prior[i, 0]
            b1 *= prior[i, 1]
        for k in range(d):
            e = in_edges[lo + k]
            a = dlabel[e] - 1
            p0 = cavity[e, 0]
            p1 = cavity[e, 1]
            t[k, 0] = p0 * cin[a] + p1 * cout[a]
            t[k, 1] = p0 * cout[a] + p1 * cin[a]

        # outgoing messages i -> j, one per incoming edge j -> i
        for j in range(d):
            q0 = b0
            q1 = b1
            for k in range(d):
                if k == j:
                    continue
                q0 *= t[k, 0]
                q1 *= t[k, 1]
                s = q0 + q1
                if s > 0.0:
                    q0 /= s
                    q1 /= s
            s = q0 + q1
            if not (s > 0.0) or not np.isfinite(s):
                q0 = 0.5
                q1 = 0.5
                underflow += 1
            else:
                q0 /= s
                q1 /= s
            out = in_edges[lo + j] ^ 1
            if damping > 0.0:
                q0 = (1.0 - damping) * q0 + damping * cavity[out, 0]
                q1 = 1.0 - q0
            diff = abs(q0 - cavity[out, 0])
            if diff > max_delta:
                max_delta = diff
            cavity[out, 0] = q0
            cavity[out, 1] = q1

        q0 = b0
        q1 = b1
        for k in range(d):
            q0 *= t[k, 0]
            q1 *= t[k, 1]
            s = q0 + q1
            if s > 0.0:
                q0 /= s
                q1 /= s
        s = q0 + q1
        if not (s > 0.0) or not np.isfinite(s):
            q0 = 0.5
            q1 = 0.5
            underflow += 1
        else:
            q0 /= s
            q1 /= s
        msum[0] += q0 - marg[i, 0]
        msum[1] += q1 - marg[i, 1]
        marg[i, 0] = q0
        marg[i, 1] = q1
    return max_delta, underflow


@numba.njit(cache=True)
def _sync_kernel(in_ptr, in_edges, dlabel, old, cavity, marg, msum, cin, cout,
                 n, damping, use_field, prior, has_prior):
    # every message and marginal computed from the previous iterate
    max_delta = 0.0
    underflow = 0
    cin_tot = 0.0
    cout_tot = 0.0
    for a in range(cin.shape[0]):
        cin_tot += cin[a]
        cout_tot += cout[a]
    if use_field:
        h0 = (msum[0] * cin_tot + msum[1] * cout_tot) / n
        h1 = (msum[0] * cout_tot + msum[1] * cin_tot) / n
        hm = min(h0, h1)
        f0 = np.exp(-(h0 - hm))
        f1 = np.exp(-(h1 - hm))
    else:
        f0 = 1.0
        f1 = 1.0
    maxdeg = 0
    for i in range(n):
        d = in_ptr[i + 1] - in_ptr[i]
        if d > maxdeg:
            maxdeg = d
    t = np.empty((maxdeg, 2))
    for i in range(n):
        lo = in_ptr[i]
        d = in_ptr[i + 1] - lo
        b0 = f0
        b1 = f1
        if has_prior:
            b0 *= prior[i, 0]
            b1 *= prior[i, 1]
        for k in range(d):
            e = in_edges[lo + k]
            a = dlabel[e] - 1
            t[k, 0] = old[e, 0] * cin[a] + old[e, 1] * cout[a]
            t[k, 1] = old[e, 0] * cout[a] + old[e, 1] * cin[a]
        for j in range(d + 1):
            q0 = b0
            q1 = b1
            for k in range(d):
                if k == j:
                    continue
                q0 *= t[k, 0]
                q1 *= t[k, 1]
                s = q0 + q1
                if s > 0.0:
                    q0 /= s
                    q1 /= s
            s = q0 + q1
            if not (s > 0.0) or not np.isfinite(s):
                q0 = 0.5
                q1 = 0.5
                underflow += 1
            else:
                q0 /= s
                q1 /= s
            if j == d:
                marg[i, 0] = q0
                marg[i, 1] = q1
                continue
            out = in_edges[lo + j] ^ 1
            if damping > 0.0:
                q0 = (1.0 - damping) * q0 + damping * old[out, 0]
                q1 = 1.0 - q0
            diff = abs(q0 - old[out, 0])
            if diff > max_delta:
                max_delta = diff
            cavity[out, 0] = q0
            cavity[out, 1] = q1
    return max_delta, underflow


def _label_arrays(graph: LabeledGraph, estimates: EstimatedAffinities):
    if estimates.num_labels < graph.num_labels:
        raise ValueError(f"estimates cover {estimates.num_labels} labels, graph has {graph.num_labels}")
    return np.ascontiguousarray(estimates.c_in, float), np.ascontiguousarray(estimates.c_out, float)


_NO_PRIOR = np.ones((1, 2))


def bp_sweep(
    graph: LabeledGraph,
    estimates: EstimatedAffinities,
    state: MessageState,
    *,
    damping: float = 0.0,
    use_field: bool = True,
    prior: np.ndarray | None = None,
    schedule: str = "random",
) -> MessageState:
    """One asynchronous sweep over the vertices in a fresh random order.

    Visiting vertex ``i`` recomputes all of its outgoing cavity messages and
    its marginal; the marginal sum behind the field is updated immediately.
    ``prior`` optionally multiplies a per-vertex factor into every belief.
    """
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")
    cin, cout = _label_arrays(graph, estimates)
    has_prior = prior is not None
    pr = np.ascontiguousarray(prior, float) if has_prior else _NO_PRIOR
    if schedule == "random":
        order = state.rng.permutation(graph.num_vertices)
        delta, under = _sweep_kernel(
            order, graph.in_ptr, graph.in_edges, graph.directed_labels, state.cavity, state.marginals,
            state.marginal_sum, cin, cout, graph.num_vertices, float(damping), bool(use_field), pr, has_prior,
        )
    elif schedule == "parallel":
        delta, under = _sync_kernel(
            graph.in_ptr, graph.in_edges, graph.directed_labels, state.cavity.copy(), state.cavity,
            state.marginals, state.marginal_sum, cin, cout, graph.num_vertices, float(damping),
            bool(use_field), pr, has_prior,
        )
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    # resync the running sum to keep rounding drift out of the field
    state.marginal_sum[:] = state.marginals.sum(axis=0)
    state.iteration_count += 1
    state.last_max_delta = float(delta)
    state.underflow_count += int(under)
    state.field = compute_field(state.marginal_sum, estimates, graph.num_vertices) if use_field else np.zeros(2)
    if under:
        log.debug("sweep %d: %d underflowed updates reset to uniform", state.iteration_count, under)
    return state


@numba.njit(cache=True)
def _marginal_kernel(in_ptr, in_edges, dlabel, cavity, marg, cin, cout, b, prior, has_prior):
    n = marg.shape[0]
    for i in range(n):
        q0 = b[0]
        q1 = b[1]
        if has_prior:
            q0 *= prior[i, 0]
            q1 *= prior[i, 1]
        for k in range(in_ptr[i], in_ptr[i + 1]):
            e = in_edges[k]
            a = dlabel[e] - 1
            p0 = cavity[e, 0]
            p1 = cavity[e, 1]
            q0 *= p0 * cin[a] + p1 * cout[a]
            q1 *= p0 * cout[a] + p1 * cin[a]
            s = q0 + q1
            if s > 0.0:
                q0 /= s
                q1 /= s
        s = q0 + q1
        if s > 0.0:
            marg[i, 0] = q0 / s
            marg[i, 1] = q1 / s
        else:
            marg[i, 0] = 0.5
            marg[i, 1] = 0.5


def update_marginals(
    graph: LabeledGraph,
    estimates: EstimatedAffinities,
    state: MessageState,
    *,
    use_field: bool = True,
    prior: np.ndarray | None = None,
) -> MessageState:
    """Recompute every complete marginal from the current cavity messages."""
    cin, cout = _label_arrays(graph, estimates)
    if use_field:
        h = compute_field(state.marginal_sum, estimates, graph.num_vertices)
        b = np.exp(-(h - h.min()))
    else:
        b = np.ones(2)
    has_prior = prior is not None
    pr = np.ascontiguousarray(prior, float) if has_prior else _NO_PRIOR
    _marginal_kernel(graph.in_ptr, graph.in_edges, graph.directed_labels, state.cavity, state.marginals,
                     cin, cout, b, pr, has_prior)
    state.marginal_sum[:] = state.marginals.sum(axis=0)
    state.field = compute_field(state.marginal_sum, estimates, graph.num_vertices) if use_field else np.zeros(2)
    return state


@dataclass(frozen=True)
class BPConfig:
    tol: float = 1e-6
    max_sweeps: int = 200
    damping: float = 0.0
    use_field: bool = True
    schedule: str = "random"


def run_bp(
    graph: LabeledGraph,
    estimates: EstimatedAffinities,
    state: MessageState,
    tol: float = 1e-6,
    max_sweeps: int = 200,
    *,
    damping: float = 0.0,
    use_field: bool = True,
    prior: np.ndarray | None = None,
    schedule: str = "random",
) -> tuple[MessageState, bool]:
    if not tol > 0:
        raise ValueError("tol must be positive")
    converged = False
    for _ in range(max_sweeps):
        bp_sweep(graph, estimates, state, damping=damping, use_field=use_field, prior=prior, schedule=schedule)
        if state.last_max_delta < tol:
            converged = True
            break
    update_marginals(graph, estimates, state, use_field=use_field, prior=prior)
    return state, converged


def edge_correlators(graph: LabeledGraph, state: MessageState) -> list[np.ndarray]:
    """``X_ij = sum_s psi^{i->j}_s psi^{j->i}_s`` for every undirected edge, grouped by label."""
    x = np.einsum("ks,ks->k", state.cavity[0::2], state.cavity[1::2])
    return [x[graph.labels == a] for a in range(1, graph.num_labels + 1)]


def pair_marginals(graph: LabeledGraph, estimates: EstimatedAffinities, state: MessageState) -> np.ndarray:
    """Joint belief of the two endpoints of every undirected edge, shape ``(L, 2, 2)``."""
    fwd, bwd = state.cavity[0::2], state.cavity[1::2]
    a = graph.labels - 1
    cin, cout = estimates.c_in[a], estimates.c_out[a]
    aff = np.stack([np.stack([cin, cout], -1), np.stack([cout, cin], -1)], -2)
    joint = fwd[:, :, None] * aff * bwd[:, None, :]
    return joint / joint.sum(axis=(1, 2), keepdims=True)
