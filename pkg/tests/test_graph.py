import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labeled_sbm.graph import GraphError, build_graph, read_edge_list, write_edge_list

from conftest import random_graph


def test_two_labels_counts():
    g = build_graph(3, [(0, 1, 1), (1, 2, 2)])
    assert g.num_edges == 2
    assert g.edge_counts.tolist() == [1, 1]
    assert g.num_directed == 4


def test_duplicate_pair_rejected_with_pair_named():
    with pytest.raises(GraphError, match=r"\(0, 1\)"):
        build_graph(2, [(0, 1, 1), (0, 1, 2)])


def test_duplicate_in_reverse_orientation():
    with pytest.raises(GraphError, match="duplicate"):
        build_graph(3, [(0, 1, 1), (1, 0, 1)])


def test_isolated_vertex():
    g = build_graph(4, [(0, 1, 1), (1, 2, 1), (2, 0, 1)])
    assert g.adjacency[3] == []
    assert g.num_directed == 6
    assert g.degrees.tolist() == [2, 2, 2, 0]


@pytest.mark.parametrize(
    "edges, match",
    [([(1, 1, 1)], "self-loop"), ([(0, 5, 1)], "range"), ([(0, 1, 0)], "label"), ([(0, 1, 3)], "label")],
)
def test_invalid_edges(edges, match):
    with pytest.raises(GraphError, match=match):
        build_graph(3, edges, num_labels=2)


def test_reverse_edge_of_first_pair():
    g = build_graph(2, [(0, 1, 1)])
    e = next(e for e in range(2) if g.directed_pair(e) == (0, 1))
    assert g.directed_pair(g.reverse_edge(e)) == (1, 0)


def test_reverse_edge_out_of_range():
    g = build_graph(2, [(0, 1, 1)])
    with pytest.raises(GraphError):
        g.reverse_edge(2)
    with pytest.raises(GraphError):
        g.reverse_edge(-1)


def test_reverse_involution_and_label(rng):
    g = random_graph(rng, n=50, m=120, p=3)
    for e in range(g.num_directed):
        r = g.reverse_edge(e)
        assert g.reverse_edge(r) == e
        assert g.edge_label(r) == g.edge_label(e)
        assert g.directed_pair(r) == g.directed_pair(e)[::-1]


def test_graph_is_read_only(rng):
    g = random_graph(rng)
    with pytest.raises(ValueError):
        g.edges[0, 0] = 5
    with pytest.raises(Exception):
        g.num_vertices = 3


def test_edge_list_round_trip(tmp_path, rng):
    g = random_graph(rng, n=40, m=70, p=3)
    path = tmp_path / "g.tsv"
    write_edge_list(g, path)
    h = read_edge_list(path)
    assert h.num_vertices == g.num_vertices and h.num_labels == g.num_labels
    assert np.array_equal(h.edges, g.edges) and np.array_equal(h.labels, g.labels)


def test_edge_list_comments_and_explicit_n(tmp_path):
    path = tmp_path / "g.tsv"
    path.write_text("# a comment\n0\t1\t2\n\n1\t2\t1\n")
    g = read_edge_list(path, num_vertices=5)
    assert g.num_vertices == 5 and g.num_edges == 2 and g.num_labels == 2


def test_drop_label_renumbers():
    g = build_graph(4, [(0, 1, 1), (1, 2, 2), (2, 3, 3)])
    h = g.drop_label(2)
    assert h.num_labels == 2
    assert sorted(map(tuple, h.edges.tolist())) == [(0, 1), (2, 3)]
    assert h.labels.tolist() == [1, 2]


@st.composite
def edge_lists(draw):
    n = draw(st.integers(2, 12))
    p = draw(st.integers(1, 4))
    pairs = draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda t: t[0] < t[1]),
                         max_size=n * (n - 1) // 2))
    labels = draw(st.lists(st.integers(1, p), min_size=len(pairs), max_size=len(pairs)))
    flips = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    edges = [((j, i) if f else (i, j)) + (a,) for (i, j), a, f in zip(sorted(pairs), labels, flips)]
    return n, p, edges


@settings(max_examples=200, deadline=None)
@given(edge_lists())
def test_structural_invariants(data):
    n, p, edges = data
    g = build_graph(n, edges, num_labels=p)
    assert 2 * g.edge_counts.sum() == g.num_directed
    assert sum(len(g.edges_by_label(a)) for a in range(1, p + 1)) == len(edges)
    adj = g.adjacency
    for i in range(n):
        for j, a in adj[i]:
            assert (i, a) in adj[j]
    for e in range(g.num_directed):
        assert g.reverse_edge(g.reverse_edge(e)) == e
    # every directed edge appears once among the incoming lists
    assert sorted(g.in_edges.tolist()) == list(range(g.num_directed))
    assert all(g.target[e] == i for i in range(n) for e in g.in_edges[g.in_ptr[i]:g.in_ptr[i + 1]])
