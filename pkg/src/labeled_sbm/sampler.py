"""Labeled stochastic blockmodel with two planted modules.

Every unordered pair of vertices independently takes label ``alpha > 0``
with probability ``c^alpha_{sigma_i sigma_j} / N`` and stays a non-edge
otherwise.  Within a module the affinity is ``c_in = 2 c x`` and across
modules ``c_out = 2 c (1 - x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import LabeledGraph, build_graph

NUM_MODULES = 2


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleParams:
    """Per-label mean degrees ``c_alpha`` and normalized strengths ``x_alpha``."""

    mean_degrees: tuple[float, ...]
    strengths: tuple[float, ...]
    num_modules: int = NUM_MODULES

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.mean_degrees))
        x = tuple(float(v) for v in np.atleast_1d(self.strengths))
        object.__setattr__(self, "mean_degrees", c)
        object.__setattr__(self, "strengths", x)
        if len(c) != len(x) or not c:
            raise ParameterError("need one strength per label and at least one label")
        if self.num_modules != NUM_MODULES:
            raise ParameterError("only two modules are supported")
        for a, (ca, xa) in enumerate(zip(c, x), start=1):
            if not ca > 0:
                raise ParameterError(f"mean degree of label {a} must be positive, got {ca}")
            if not 0.0 <= xa <= 1.0:
                raise ParameterError(f"strength of label {a} must lie in [0, 1], got {xa}")

    @classmethod
    def from_affinities(cls, c_in: Sequence[float], c_out: Sequence[float]) -> EnsembleParams:
        c_in, c_out = np.asarray(c_in, float), np.asarray(c_out, float)
        c = (c_in + c_out) / 2
        return cls(tuple(c), tuple(c_in / (2 * c)))

    @property
    def num_labels(self) -> int:
        return len(self.mean_degrees)

    @property
    def c(self) -> np.ndarray:
        return np.array(self.mean_degrees)

    @property
    def x(self) -> np.ndarray:
        return np.array(self.strengths)

    @property
    def c_in(self) -> np.ndarray:
        return 2 * self.c * self.x

    @property
    def c_out(self) -> np.ndarray:
        return 2 * self.c * (1 - self.x)

    @property
    def delta_c(self) -> np.ndarray:
        return 4 * self.c * (self.x - 0.5)

    @property
    def total_degree(self) -> float:
        return float(sum(self.mean_degrees))

    @property
    def fractions(self) -> np.ndarray:
        return self.c / self.total_degree

    def affinity_matrix(self, alpha: int) -> np.ndarray:
        """2x2 affinity ``c^alpha_{sigma sigma'}`` for label ``alpha`` (1-based)."""
        cin, cout = self.c_in[alpha - 1], self.c_out[alpha - 1]
        return np.array([[cin, cout], [cout, cin]])

    def with_strengths(self, strengths: Sequence[float]) -> EnsembleParams:
        return EnsembleParams(self.mean_degrees, tuple(strengths), self.num_modules)


@dataclass(frozen=True)
class Affinities:
    c_in: np.ndarray
    c_out: np.ndarray
    delta_c: np.ndarray
    total_degree: float
    fractions: np.ndarray

    def strengths(self) -> np.ndarray:
        return self.c_in / (self.c_in + self.c_out)


def derive_affinities(params: EnsembleParams) -> Affinities:
    return Affinities(params.c_in, params.c_out, params.delta_c, params.total_degree, params.fractions)


def strength_from_delta(delta_c, mean_degree):
    return 0.5 + np.asarray(delta_c) / (4 * np.asarray(mean_degree))


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    graph: LabeledGraph
    assignment: np.ndarray  # module of each vertex, 0 or 1
    params: EnsembleParams
    seed: int | None = None
    extras: dict = field(default_factory=dict)


def planted_assignment(num_vertices: int, rng: np.random.Generator, balanced: bool = True) -> np.ndarray:
    if balanced:
        sigma = np.zeros(num_vertices, dtype=np.int64)
        sigma[num_vertices // 2 :] = 1
        return rng.permutation(sigma)
    return rng.integers(0, 2, size=num_vertices, dtype=np.int64)


def _block_probs(params: EnsembleParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    p_in, p_out = params.c_in / n, params.c_out / n
    for name, probs in (("within-module", p_in), ("cross-module", p_out)):
        for a, pa in enumerate(probs, start=1):
            if pa > 1:
                raise ParameterError(f"label {a}: {name} edge probability {pa:.3g} > 1; N={n} is too small")
        if probs.sum() > 1:
            raise ParameterError(f"{name} edge probabilities sum to {probs.sum():.3g} > 1; N={n} is too small")
    return p_in, p_out


def _decode_triangle(idx: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    # row-major upper-triangle index -> (a, b), a < b < m
    idx = np.asarray(idx, dtype=np.int64)
    k = 2 * m - 1
    a = np.floor((k - np.sqrt(float(k) ** 2 - 8.0 * idx)) / 2).astype(np.int64)
    row_start = lambda r: r * (2 * m - r - 1) // 2
    a = np.where(row_start(a) > idx, a - 1, a)
    a = np.where(row_start(a + 1) <= idx, a + 1, a)
    return a, idx - row_start(a) + a + 1


def _block_edges(rng, probs, num_pairs, decode):
    counts = rng.multinomial(num_pairs, np.append(probs, max(0.0, 1 - probs.sum())))[:-1]
    total = int(counts.sum())
    if total == 0:
        return np.empty((0, 3), dtype=np.int64)
    picks = rng.choice(num_pairs, size=total, replace=False)
    a, b = decode(picks)
    labels = np.repeat(np.arange(1, len(probs) + 1), counts)
    return np.stack([a, b, labels], axis=1)


def sample_instance(
    params: EnsembleParams,
    num_vertices: int,
    seed: int | None = None,
    *,
    balanced: bool = True,
    exact: bool = False,
) -> PlantedInstance:
    """Draw a labeled SBM graph together with its planted assignment.

    The default sampler draws the multinomial label counts of each block
    (two within-module blocks, one cross-module block) and places them on
    distinct uniformly chosen pairs, which is distributionally identical to
    the per-pair categorical draw but costs O(L).  ``exact=True`` runs the
    literal O(N^2) per-pair draw and is meant for small N.
    """
    n = int(num_vertices)
    if n < 2:
        raise ParameterError("need at least two vertices")
    p_in, p_out = _block_probs(params, n)
    rng = np.random.default_rng(seed)
    sigma = planted_assignment(n, rng, balanced)

    if exact:
        iu, ju = np.triu_indices(n, k=1)
        same = sigma[iu] == sigma[ju]
        cum_in, cum_out = np.cumsum(p_in), np.cumsum(p_out)
        r = rng.random(iu.size)
        lab = np.where(same, np.searchsorted(cum_in, r, side="right"), np.searchsorted(cum_out, r, side="right")) + 1
        hit = lab <= params.num_labels
        triples = np.stack([iu[hit], ju[hit], lab[hit]], axis=1)
    else:
        members = [np.flatnonzero(sigma == s) for s in (0, 1)]
        parts = []
        for mem in members:
            m = mem.size
            if m >= 2:
                e = _block_edges(rng, p_in, m * (m - 1) // 2, lambda idx, m=m: _decode_triangle(idx, m))
                e[:, 0], e[:, 1] = mem[e[:, 0]], mem[e[:, 1]]
                parts.append(e)
        m0, m1 = members[0].size, members[1].size
        if m0 and m1:
            e = _block_edges(rng, p_out, m0 * m1, lambda idx: (idx // m1, idx % m1))
            e[:, 0], e[:, 1] = members[0][e[:, 0]], members[1][e[:, 1]]
            parts.append(e)
        triples = np.concatenate(parts) if parts else np.empty((0, 3), dtype=np.int64)
        triples = triples[rng.permutation(len(triples))]
        # canonical orientation i < j for byte-stable output
        lo = np.minimum(triples[:, 0], triples[:, 1])
        hi = np.maximum(triples[:, 0], triples[:, 1])
        triples = np.stack([lo, hi, triples[:, 2]], axis=1)

    graph = build_graph(n, triples, num_labels=params.num_labels)
    return PlantedInstance(graph, sigma, params, seed)


def write_assignment(sigma: np.ndarray, path) -> None:
    """Sidecar file ``i<TAB>sigma`` with 1-based module labels."""
    with open(path, "w") as fh:
        for i, s in enumerate(np.asarray(sigma).tolist()):
            fh.write(f"{i}\t{s + 1}\n")


def read_assignment(path) -> np.ndarray:
    rows = [line.split() for line in open(path) if line.strip() and not line.startswith("#")]
    sigma = np.zeros(len(rows), dtype=np.int64)
    for i, s in rows:
        sigma[int(i)] = int(s) - 1
    return sigma
