import numpy as np
import pytest
from hypothesis import strategies as st

from schatten_consensus.graph import Graph, generate_er, generate_rgg, is_connected


def random_connected(n, seed, extra=0.3):
    """Random spanning tree plus each remaining pair with probability ``extra``."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra:
                edges.add((i, j))
    return Graph.from_edges(n, edges)


def connected_er(n, pr, seed):
    for t in range(1000):
        g = generate_er(n, pr, np.random.SeedSequence([seed, t]))
        if is_connected(g):
            return g
    raise RuntimeError("no connected draw")


def connected_rgg(n, r, seed):
    for t in range(1000):
        g = generate_rgg(n, r, np.random.SeedSequence([seed, t]))
        if is_connected(g):
            return g
    raise RuntimeError("no connected draw")


def path(n):
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete(n):
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def star(leaves):
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


@st.composite
def connected_graphs(draw, min_n=2, max_n=10):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**31 - 1))
    extra = draw(st.floats(0.0, 0.8))
    return random_connected(n, seed, extra)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid_qp_row(w_hat, delta, cap=1.0, levels=(1e-2, 1e-3, 1e-4, 1e-5)):
    """Brute-force minimiser of (x-w)^T (I + 11^T) (x-w) on {x >= delta, sum x <= cap}.

    Exhaustive grid at the first resolution, then exhaustive grids of finer
    resolution in a window around the incumbent (the objective is strictly
    convex, so the window always contains the minimiser).
    """
    w = np.asarray(w_hat, dtype=float)
    d = w.size
    lo = np.full(d, delta)
    hi = np.full(d, cap - delta * (d - 1))
    best = None
    for step in levels:
        axes = [np.arange(lo[k], hi[k] + step / 2, step) for k in range(d)]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        X = X[X.sum(axis=1) <= cap + 1e-12]
        D = X - w
        r = np.sum(D * D, axis=1) + D.sum(axis=1) ** 2
        best = X[np.argmin(r)]
        lo = np.maximum(best - 3 * step, delta)
        hi = best + 3 * step
    return best


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
