"""Immutable edge-labeled sparse graphs with a directed-edge index.

Undirected edge ``k`` owns the two directed ids ``2k`` (u -> v) and
``2k + 1`` (v -> u), so reversing a directed edge is ``e ^ 1``.
Labels run from 1 to ``num_labels``; label 0 means "no edge" and is never
stored.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed edge lists."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabeledGraph:
    num_vertices: int
    num_labels: int
    edges: np.ndarray  # (L, 2) int64, undirected edge k = (u, v)
    labels: np.ndarray  # (L,) int64 in 1..num_labels
    in_ptr: np.ndarray  # (N + 1,) CSR offsets into in_edges
    in_edges: np.ndarray  # (2L,) directed ids ending at each vertex

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def num_directed(self) -> int:
        return 2 * self.num_edges

    @cached_property
    def source(self) -> np.ndarray:
        """Tail vertex of every directed edge."""
        src = np.empty(self.num_directed, dtype=np.int64)
        src[0::2] = self.edges[:, 0]
        src[1::2] = self.edges[:, 1]
        return _frozen(src)

    @cached_property
    def target(self) -> np.ndarray:
        """Head vertex of every directed edge."""
        dst = np.empty(self.num_directed, dtype=np.int64)
        dst[0::2] = self.edges[:, 1]
        dst[1::2] = self.edges[:, 0]
        return _frozen(dst)

    @cached_property
    def directed_labels(self) -> np.ndarray:
        return _frozen(np.repeat(self.labels, 2))

    @cached_property
    def degrees(self) -> np.ndarray:
        return _frozen(np.diff(self.in_ptr))

    @cached_property
    def edge_counts(self) -> np.ndarray:
        """``L_alpha`` for alpha = 1..p (index 0 of the result is label 1)."""
        return _frozen(np.bincount(self.labels - 1, minlength=self.num_labels)[: self.num_labels])

    def edges_by_label(self, alpha: int) -> np.ndarray:
        return self.edges[self.labels == alpha]

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.num_vertices)]
        for (u, v), a in zip(self.edges.tolist(), self.labels.tolist()):
            adj[u].append((v, a))
            adj[v].append((u, a))
        return adj

    def reverse_edge(self, e: int) -> int:
        if not 0 <= e < self.num_directed:
            raise GraphError(f"directed edge id {e} out of range [0, {self.num_directed})")
        return e ^ 1

    def edge_label(self, e: int) -> int:
        if not 0 <= e < self.num_directed:
            raise GraphError(f"directed edge id {e} out of range [0, {self.num_directed})")
        return int(self.labels[e >> 1])

    def directed_pair(self, e: int) -> tuple[int, int]:
        k = self.edges[e >> 1]
        return (int(k[0]), int(k[1])) if e % 2 == 0 else (int(k[1]), int(k[0]))

    def mean_degrees(self) -> np.ndarray:
        """Empirical per-label mean degree ``2 L_alpha / N``."""
        return 2.0 * self.edge_counts / self.num_vertices

    def drop_label(self, alpha: int) -> LabeledGraph:
        """Graph with every ``alpha`` edge removed; remaining labels are renumbered."""
        keep = self.labels != alpha
        labels = self.labels[keep]
        labels = np.where(labels > alpha, labels - 1, labels)
        return _assemble(self.num_vertices, self.num_labels - 1, self.edges[keep].copy(), labels)


def _assemble(n: int, p: int, edges: np.ndarray, labels: np.ndarray) -> LabeledGraph:
    edges = np.ascontiguousarray(edges, dtype=np.int64).reshape(-1, 2)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    dst = np.empty(2 * len(edges), dtype=np.int64)
    dst[0::2] = edges[:, 1]
    dst[1::2] = edges[:, 0]
    in_edges = np.argsort(dst, kind="stable").astype(np.int64)
    in_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(dst, minlength=n), out=in_ptr[1:])
    return LabeledGraph(n, p, _frozen(edges), _frozen(labels), _frozen(in_ptr), _frozen(in_edges))


def build_graph(
    num_vertices: int,
    labeled_edges: Iterable[Sequence[int]] | np.ndarray,
    num_labels: int | None = None,
) -> LabeledGraph:
    """Validate ``(i, j, alpha)`` triples and build a :class:`LabeledGraph`.

    ``num_labels`` defaults to the largest label present (at least 1).
    """
    n = int(num_vertices)
    if n < 1:
        raise GraphError("graph needs at least one vertex")
    if not isinstance(labeled_edges, np.ndarray):
        labeled_edges = list(labeled_edges)
    arr = np.asarray(labeled_edges, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GraphError("edges must be (i, j, alpha) triples")
    i, j, a = arr[:, 0], arr[:, 1], arr[:, 2]
    p = int(num_labels) if num_labels is not None else max(1, int(a.max(initial=1)))

    bad = (i < 0) | (i >= n) | (j < 0) | (j >= n)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise GraphError(f"vertex out of range in edge ({i[k]}, {j[k]}) for N={n}")
    loops = i == j
    if loops.any():
        k = int(np.flatnonzero(loops)[0])
        raise GraphError(f"self-loop at vertex {i[k]}")
    bad = (a < 1) | (a > p)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise GraphError(f"label {a[k]} of edge ({i[k]}, {j[k]}) outside 1..{p}")

    lo, hi = np.minimum(i, j), np.maximum(i, j)
    key = lo * n + hi
    order = np.argsort(key, kind="stable")
    dup = np.flatnonzero(np.diff(key[order]) == 0)
    if dup.size:
        k = int(order[dup[0]])
        raise GraphError(f"duplicate pair ({lo[k]}, {hi[k]})")
    return _assemble(n, p, np.stack([i, j], axis=1), a)


def read_edge_list(path: str | Path, num_vertices: int | None = None) -> LabeledGraph:
    """Read the tab-separated ``i  j  alpha`` format; ``#`` lines are comments.

    A ``# N=<count>`` comment line, when present, fixes the vertex count so that
    trailing isolated vertices survive a round trip.
    """
    triples = []
    n_header = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("N="):
                n_header = int(body[2:])
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GraphError(f"bad edge line: {raw!r}")
        triples.append([int(x) for x in parts])
    n = num_vertices or n_header
    if n is None:
        n = 1 + max((max(t[0], t[1]) for t in triples), default=0)
    return build_graph(n, np.array(triples, dtype=np.int64).reshape(-1, 3))


def write_edge_list(graph: LabeledGraph, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# N={graph.num_vertices}\n# p={graph.num_labels}\n")
        for (u, v), a in zip(graph.edges.tolist(), graph.labels.tolist()):
            fh.write(f"{u}\t{v}\t{a}\n")
