import numpy as np
import pytest
from hypothesis import given, settings
from scipy.spatial.distance import cdist

from schatten_consensus.graph import (
    Graph,
    GraphError,
    diameter,
    edge_subgraph,
    generate_er,
    generate_rgg,
    hop_distances,
    is_connected,
    k_hop_subgraph,
    laplacian,
    load_edge_list,
)

from conftest import complete, connected_graphs, path


def test_graph_canonical_edges():
    g = Graph.from_edges(3, [(2, 1), (0, 1)])
    assert g.edges == ((0, 1), (1, 2))
    assert g.index_of(2, 1) == 1
    assert g.neighbors == ((1,), (0, 2), (1,))
    assert list(g.degrees) == [1, 2, 1]
    assert g.max_degree == 2


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 1), (1, 0)], [(0, 5)]])
def test_graph_rejects_bad_edges(edges):
    with pytest.raises(GraphError):
        Graph.from_edges(3, edges)


def test_er_extremes():
    assert generate_er(5, 1.0, 3).m == 10
    assert generate_er(5, 0.0, 3).m == 0


def test_er_density():
    dens = [generate_er(20, 0.3, s).m / 190 for s in range(1000)]
    assert abs(np.mean(dens) - 0.3) < 0.02


def test_er_reproducible():
    assert generate_er(30, 0.2, 9).edges == generate_er(30, 0.2, 9).edges


@pytest.mark.parametrize("bad", [dict(n=1, pr=0.5), dict(n=4, pr=1.5)])
def test_er_rejects(bad):
    with pytest.raises(GraphError):
        generate_er(seed=0, **bad)


def test_rgg_extremes():
    assert generate_rgg(2, 1.5, 4).m == 1
    assert generate_rgg(10, 1e-4, 1).m == 0


def test_rgg_matches_distance_recount():
    degs = []
    for s in range(20):
        g, pts = generate_rgg(100, 0.1517, s, return_points=True)
        D = cdist(pts, pts)
        recount = int(((D <= 0.1517).sum() - 100) // 2)
        assert g.m == recount
        degs.append(2 * g.m / 100)
    # interior approximation n pi r^2 overestimates because of the boundary
    bulk = 100 * np.pi * 0.1517**2
    assert 0.75 * bulk < np.mean(degs) < bulk


def test_rgg_reproducible():
    assert generate_rgg(50, 0.2, 5).edges == generate_rgg(50, 0.2, 5).edges


def test_load_edge_list_basic():
    g = load_edge_list(b"a b\nb c")
    assert (g.n, g.m) == (3, 2)
    assert g.labels == ("a", "b", "c")


def test_load_edge_list_dedupe_and_comments():
    g = load_edge_list("a b\nb a\n# x\n\n")
    assert (g.n, g.m) == (2, 1)


@pytest.mark.parametrize("text,lineno", [("a b\nc c", 2), ("a b\nlonely\n", 2)])
def test_load_edge_list_errors(text, lineno):
    with pytest.raises(GraphError, match=f"line {lineno}"):
        load_edge_list(text)


def test_is_connected_examples():
    assert is_connected(complete(5))
    assert not is_connected(Graph.from_edges(3, []))
    assert not is_connected(Graph.from_edges(4, [(0, 1), (2, 3)]))


def test_k_hop_examples():
    h = k_hop_subgraph(path(3), 0, 1)
    assert h.nodes == (0, 1) and h.edges == ((0, 1),)
    h0 = k_hop_subgraph(complete(4), 2, 0)
    assert h0.nodes == (2,) and h0.edges == ()
    assert len(k_hop_subgraph(complete(5), 0, 1).edges) == 10


def test_edge_subgraph_union():
    h = edge_subgraph(path(6), 2, 1)  # edge (2, 3)
    assert h.nodes == (1, 2, 3, 4)
    assert h.center == 2


def test_laplacian_examples():
    assert np.array_equal(laplacian(path(2)), [[1, -1], [-1, 1]])
    L = laplacian(complete(3))
    assert np.array_equal(np.diag(L), [2, 2, 2])
    assert np.all(L[~np.eye(3, dtype=bool)] == -1)


def test_diameter():
    assert diameter(path(7)) == 6
    assert diameter(complete(4)) == 1
    with pytest.raises(GraphError):
        diameter(Graph.from_edges(3, [(0, 1)]))


@settings(max_examples=60, deadline=None)
@given(connected_graphs(max_n=12))
def test_laplacian_is_incidence_product(g):
    B = g.incidence()
    assert np.array_equal(laplacian(g), B @ B.T)
    assert np.all(laplacian(g).sum(axis=1) == 0)


@settings(max_examples=60, deadline=None)
@given(connected_graphs(max_n=12))
def test_large_radius_returns_component(g):
    ecc = int(hop_distances(g, 0).max())
    h = k_hop_subgraph(g, 0, ecc)
    assert h.nodes == tuple(range(g.n))
    assert len(h.edge_ids) == g.m


@settings(max_examples=60, deadline=None)
@given(connected_graphs(max_n=12))
def test_edge_index_bijection(g):
    assert sorted(g.edge_index.values()) == list(range(g.m))
    for l, (i, j) in enumerate(g.edges):
        assert g.index_of(j, i) == l
        assert j in g.neighbors[i] and i in g.neighbors[j]
    assert sum(g.degrees) == 2 * g.m
