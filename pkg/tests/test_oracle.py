import numpy as np
import pytest

from schatten_consensus.graph import Graph
from schatten_consensus.oracle import (
    OracleError,
    fdla_oracle_small,
    smoothed_descent,
    solve_fdla,
    solve_fdla_bundle,
)
from schatten_consensus.spectral import mu
from schatten_consensus.weights import local_degree_weights, weights_to_matrix

from conftest import complete, path, random_connected, star

# six nodes, link (1, 2) is the one whose weight is not determined by the optimum
FIG_EDGES = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4), (3, 5), (4, 5)]


def test_complete_graph():
    w, m = fdla_oracle_small(complete(4))
    assert m == pytest.approx(0, abs=1e-6)
    assert np.allclose(w, 0.25, atol=1e-4)


def test_single_edge():
    w, m = fdla_oracle_small(path(2))
    assert m == pytest.approx(0, abs=1e-6)
    assert w[0] == pytest.approx(0.5, abs=1e-6)


def test_star_closed_form():
    # by symmetry the optimum is constant; W = I - wL has eigenvalues 1, 1-w and
    # 1-(k+1)w, and balancing the last two gives w = 2/(k+2), mu* = k/(k+2)
    k = 4
    res = solve_fdla(star(k))
    assert res.mu == pytest.approx(k / (k + 2), abs=1e-6)


def test_pinned_link_invariance():
    full = solve_fdla(Graph.from_edges(6, FIG_EDGES))
    pinned = solve_fdla(Graph.from_edges(6, [e for e in FIG_EDGES if e != (1, 2)]))
    assert full.mu == pytest.approx(pinned.mu, abs=1e-5)
    assert full.mu == pytest.approx(1 / np.sqrt(3), abs=1e-5)


@pytest.mark.parametrize("seed", range(6))
def test_bracket_and_cross_check(seed):
    g = random_connected(8, seed, 0.3)
    res = solve_fdla(g)
    assert res.lower_bound <= res.mu + 1e-12
    assert res.gap <= 1e-5
    assert mu(weights_to_matrix(g, res.w)) == pytest.approx(res.mu, abs=1e-12)
    # the two routes agree: bundle alone from LD, smoothing alone
    bundle_only = solve_fdla_bundle(g, local_degree_weights(g), tol=1e-6, max_iter=1000)
    smooth_only = mu(weights_to_matrix(g, smoothed_descent(g, local_degree_weights(g))))
    assert bundle_only.mu == pytest.approx(res.mu, abs=2e-5)
    assert smooth_only == pytest.approx(res.mu, abs=1e-4)
    assert res.mu <= mu(weights_to_matrix(g, local_degree_weights(g))) + 1e-12


def test_rejects_large_and_disconnected():
    with pytest.raises(OracleError):
        solve_fdla(random_connected(13, 0))
    with pytest.raises(OracleError):
        solve_fdla(Graph.from_edges(4, [(0, 1), (2, 3)]))
    # the size cap can be lifted explicitly
    assert solve_fdla(random_connected(13, 0), max_nodes=13, max_iter=30).mu < 1
