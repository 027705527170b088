"""Link weight vectors, the matrices they induce, and the classic heuristics.

A weight vector ``w`` has one entry per edge index.  The induced matrix is
``W = I - B diag(w) B^T`` with ``B`` the incidence matrix, i.e. ``W_ij = w_l``
on each link and ``W_ii = 1 - sum of the incident link weights``.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .graph import Graph, GraphError, is_connected, laplacian
from .spectral import symmetric_eigenvalues


def weights_to_matrix(g: Graph, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (g.m,):
        raise ValueError(f"expected {g.m} link weights, got shape {w.shape}")
    a, b = g.endpoints
    W = np.zeros((g.n, g.n))
    W[a, b] = w
    W[b, a] = w
    W[np.diag_indices(g.n)] = 1.0 - W.sum(axis=1)
    return W


def matrix_to_weights(g: Graph, W) -> np.ndarray:
    a, b = g.endpoints
    return np.asarray(W, dtype=float)[a, b].copy()


def self_weights(g: Graph, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    a, b = g.endpoints
    s = np.zeros(g.n)
    np.add.at(s, a, w)
    np.add.at(s, b, w)
    return 1.0 - s


def _require_connected(g: Graph):
    if not is_connected(g):
        raise GraphError("weight heuristics need a connected graph")


def max_degree_weights(g: Graph) -> np.ndarray:
    """MD: every link gets 1/(max degree + 1)."""
    _require_connected(g)
    return np.full(g.m, 1.0 / (g.max_degree + 1))


def local_degree_weights(g: Graph) -> np.ndarray:
    """LD (Metropolis): link (i, j) gets 1/(max(d_i, d_j) + 1)."""
    _require_connected(g)
    a, b = g.endpoints
    d = g.degrees
    return 1.0 / (np.maximum(d[a], d[b]) + 1.0)


def optimal_constant_weights(g: Graph) -> np.ndarray:
    """OC: constant 2/(lambda_1(L) + lambda_{n-1}(L)) from the Laplacian spectrum."""
    if g.n < 2:
        raise GraphError("need at least two nodes")
    lam = symmetric_eigenvalues(laplacian(g))
    fiedler = lam[-2]
    if fiedler <= 1e-12 * max(1.0, lam[0]):
        raise GraphError("graph is disconnected (algebraic connectivity is zero)")
    return np.full(g.m, 2.0 / (lam[0] + fiedler))


HEURISTICS = {
    "MD": max_degree_weights,
    "LD": local_degree_weights,
    "OC": optimal_constant_weights,
}


def write_weights_csv(g: Graph, w, fh) -> None:
    """Write ``u,v,weight`` rows using the graph's node labels."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["u", "v", "weight"])
    for (i, j), x in zip(g.edges, np.asarray(w, dtype=float)):
        writer.writerow([g.label(i), g.label(j), repr(float(x))])


def weights_csv(g: Graph, w) -> str:
    buf = io.StringIO()
    write_weights_csv(g, w, buf)
    return buf.getvalue()


def read_weights_csv(g: Graph, fh) -> np.ndarray:
    lookup = {g.label(i): i for i in range(g.n)}
    w = np.full(g.m, np.nan)
    reader = csv.DictReader(fh)
    if reader.fieldnames != ["u", "v", "weight"]:
        raise ValueError(f"bad weights header {reader.fieldnames!r}")
    for row in reader:
        l = g.index_of(lookup[row["u"]], lookup[row["v"]])
        w[l] = float(row["weight"])
    if np.isnan(w).any():
        raise ValueError("weights file does not cover every edge")
    return w
