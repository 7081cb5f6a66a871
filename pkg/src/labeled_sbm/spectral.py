"""Weighted non-backtracking operator and its spectral predictions.

``B'[i->i', j->j'] = w_alpha`` when ``j' == i`` and ``i' != j``, with
``alpha`` the label of ``j -> j'`` and ``w_alpha = dc_hat_alpha / (q c_alpha)``.
The bulk of its spectrum has radius

    lambda_b = sqrt(sum_a dc_hat_a^2 / P_a) / (2 sqrt(c))

and a planted partition adds the real eigenvalue

    lambda_iso = sum_a (dc_a / (2 sqrt(c_a))) (dc_hat_a / (2 sqrt(c_a))).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .bp import EstimatedAffinities
from .graph import LabeledGraph

MAX_DENSE = 6000
ISOLATION_MARGIN = 1.05


class SpectralError(ValueError):
    pass


class NbOperator:
    def __init__(self, graph: LabeledGraph, label_weights: np.ndarray):
        self.graph = graph
        self.label_weights = np.asarray(label_weights, dtype=float)
        if self.label_weights.shape[0] < graph.num_labels:
            raise SpectralError("missing weight for some label present in the graph")
        self.edge_weights = self.label_weights[graph.directed_labels - 1]
        self.dimension = graph.num_directed

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``B' @ x`` in O(L): sum the weighted inflow at the tail, minus the reversed edge."""
        g = self.graph
        wx = self.edge_weights * x
        inflow = np.zeros(g.num_vertices, dtype=np.result_type(wx, float))
        np.add.at(inflow, g.target, wx)
        rev = np.arange(self.dimension) ^ 1
        return inflow[g.source] - wx[rev]

    __matmul__ = apply

    def sparse(self) -> sp.csr_matrix:
        g = self.graph
        in_edges, in_ptr = g.in_edges, g.in_ptr
        head = g.target[in_edges]
        reps = g.degrees[head]
        f = np.repeat(in_edges, reps)
        base = np.repeat(in_ptr[head], reps)
        offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
        e = in_edges[base + offs] ^ 1
        keep = e != (f ^ 1)
        e, f = e[keep], f[keep]
        return sp.csr_matrix((self.edge_weights[f], (e, f)), shape=(self.dimension, self.dimension))

    def dense(self, max_dim: int = MAX_DENSE) -> np.ndarray:
        if self.dimension > max_dim:
            raise SpectralError(f"dense B' of size {self.dimension} exceeds limit {max_dim}")
        return self.sparse().toarray()

    def linear_operator(self) -> LinearOperator:
        return LinearOperator((self.dimension, self.dimension), matvec=self.apply, dtype=float)


def build_nb_operator(graph: LabeledGraph, estimates: EstimatedAffinities, q: int = 2) -> NbOperator:
    if estimates.num_labels < graph.num_labels:
        raise SpectralError(f"estimates cover {estimates.num_labels} labels, graph has {graph.num_labels}")
    c = estimates.mean_degrees
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(c > 0, estimates.delta_c / (q * c), 0.0)
    return NbOperator(graph, w)


def _check(mean_degrees, *deltas):
    c = np.asarray(mean_degrees, dtype=float)
    if (c < 0).any():
        raise SpectralError("mean degrees must be nonnegative")
    for d in deltas:
        if np.any((c == 0) & (np.asarray(d) != 0)):
            raise SpectralError("nonzero structure strength on a label with zero mean degree")
    return c


def band_radius(mean_degrees, delta_hat) -> float:
    c = _check(mean_degrees, delta_hat)
    d = np.asarray(delta_hat, dtype=float)
    total = c.sum()
    pos = c > 0
    return float(np.sqrt(np.sum(d[pos] ** 2 / (c[pos] / total))) / (2 * np.sqrt(total)))


def iso_eigenvalue(delta_planted, delta_hat, mean_degrees) -> float:
    c = _check(mean_degrees, delta_planted, delta_hat)
    pos = c > 0
    dc, dh = np.asarray(delta_planted, float)[pos], np.asarray(delta_hat, float)[pos]
    return float(np.sum(dc / (2 * np.sqrt(c[pos])) * dh / (2 * np.sqrt(c[pos]))))


def j_matrix(c_in, c_out, delta_hat, mean_degrees, q: int = 2) -> np.ndarray:
    """``J[s, s'] = (1/q) sum_a c^a_{s s'} dc_hat_a / (q c_a)`` for the symmetric two-block affinity."""
    c = _check(mean_degrees, delta_hat)
    w = np.where(c > 0, np.asarray(delta_hat, float) / (q * np.where(c > 0, c, 1)), 0.0)
    jin = np.sum(np.asarray(c_in, float) * w) / q
    jout = np.sum(np.asarray(c_out, float) * w) / q
    return np.array([[jin, jout], [jout, jin]])


def iso_from_j(c_in, c_out, delta_hat, mean_degrees, q: int = 2) -> float:
    """Eigenvalue of ``J`` on the antisymmetric vector (1, -1)."""
    J = j_matrix(c_in, c_out, delta_hat, mean_degrees, q)
    v = np.array([1.0, -1.0])
    return float((J @ v) @ v / (v @ v))


@dataclass
class SpectralSummary:
    band_radius_analytic: float
    iso_analytic: float | None
    empirical_eigenvalues: np.ndarray = field(repr=False)
    empirical_band_radius: float
    empirical_leading_real: float | None
    isolated: list[float]
    converged: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("empirical_eigenvalues")
        d["num_eigenvalues"] = int(len(self.empirical_eigenvalues))
        return d

    def write(self, csv_path, json_path=None) -> None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["re", "im"])
            for z in self.empirical_eigenvalues:
                w.writerow([f"{z.real:.12g}", f"{z.imag:.12g}"])
        if json_path is not None:
            with open(json_path, "w") as fh:
                json.dump(self.to_dict(), fh, indent=2)


def split_spectrum(eigenvalues: np.ndarray, band_radius_ref: float, margin: float = ISOLATION_MARGIN):
    """Separate real outliers beyond ``margin * band_radius_ref`` from the bulk.

    Returns ``(bulk_radius, isolated)`` with isolated values sorted by magnitude.
    """
    z = np.asarray(eigenvalues, dtype=complex)
    if z.size == 0:
        return 0.0, []
    mag = np.abs(z)
    scale = max(mag.max(), 1e-300)
    real = np.abs(z.imag) < 1e-8 * scale
    iso = real & (mag >= margin * band_radius_ref) & (mag > 0)
    bulk = mag[~iso]
    isolated = sorted(z.real[iso].tolist(), key=abs, reverse=True)
    return float(bulk.max()) if bulk.size else 0.0, isolated


def empirical_spectrum(
    op: NbOperator,
    mode: str = "dense",
    k: int = 20,
    *,
    band_radius_ref: float | None = None,
    iso_ref: float | None = None,
    max_dense: int = MAX_DENSE,
    seed=None,
) -> SpectralSummary:
    """Eigenvalues of ``op`` and the bulk/outlier split.

    ``band_radius_ref`` defaults to the analytic radius evaluated with the
    operator's own weights and the graph's empirical label degrees.
    """
    g = op.graph
    c_emp = g.mean_degrees()
    if band_radius_ref is None:
        dh = op.label_weights[: g.num_labels] * 2 * c_emp
        band_radius_ref = band_radius(c_emp, dh) if c_emp.sum() > 0 else 0.0
    converged = True
    if op.dimension == 0:
        vals = np.zeros(0, dtype=complex)
    elif mode == "dense":
        vals = np.linalg.eigvals(op.dense(max_dense))
    elif mode == "krylov":
        kk = min(k, op.dimension - 2)
        if kk < 1:
            vals = np.linalg.eigvals(op.dense(max_dense))
        else:
            v0 = np.random.default_rng(seed).standard_normal(op.dimension)
            try:
                vals = eigs(op.linear_operator(), k=kk, which="LM", v0=v0, return_eigenvectors=False)
            except ArpackNoConvergence as err:
                vals, converged = err.eigenvalues, False
    else:
        raise SpectralError(f"unknown mode {mode!r}")
    vals = np.asarray(vals, dtype=complex)
    vals = vals[np.argsort(-np.abs(vals), kind="stable")]
    radius, isolated = split_spectrum(vals, band_radius_ref)
    return SpectralSummary(
        band_radius_analytic=float(band_radius_ref),
        iso_analytic=iso_ref,
        empirical_eigenvalues=vals,
        empirical_band_radius=radius,
        empirical_leading_real=isolated[0] if isolated else None,
        isolated=isolated,
        converged=converged,
    )
