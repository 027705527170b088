"""Trace minimisation: projected gradient descent on Tr(W^p) over link weights.

For ``W = I - B diag(w) B^T`` and an even ``p`` the partial derivative with
respect to the weight of link ``l = (i, j)`` is

    g_l = p * (2 (W^{p-1})_ij - (W^{p-1})_ii - (W^{p-1})_jj)

and only depends on weights within ``p/2`` hops of ``i`` or ``j``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, GraphError, Subgraph, hop_distances, is_connected
from .spectral import mu as spectral_mu
from .weights import local_degree_weights, weights_to_matrix

DEFAULT_GTOL = 0.02
BOX = (-1.0, 1.0)


class OptimizerError(RuntimeError):
    pass


def _check_p(p) -> int:
    if not isinstance(p, (int, np.integer)) or p < 2 or p % 2:
        raise ValueError(f"p must be an even integer >= 2, got {p!r}")
    return int(p)


@dataclass(frozen=True)
class StepSchedule:
    """gamma(k) = a / (b + k)."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.b < 0:
            raise ValueError("b must be non-negative")
        if self.b == 0:
            # gamma(0) would be infinite
            object.__setattr__(self, "_shift", 1.0)
        else:
            object.__setattr__(self, "_shift", 0.0)

    def __call__(self, k: int) -> float:
        return self.a / (self.b + k + self._shift)

    @classmethod
    def default(cls, p: int) -> "StepSchedule":
        return cls(10.0 / p, 100.0)

    @classmethod
    def scaled(cls, p: int, mu0: float, b: float = 100.0) -> "StepSchedule":
        """``default(p)`` with ``a`` divided by ``mu0^(p-2)``.

        The curvature of Tr(W^p) near a minimiser scales like ``mu^(p-2)``, so
        the default numerator stalls for large ``p`` once ``mu`` is well below
        one.  ``mu0`` is the convergence factor of the starting point; for
        ``mu0`` close to one this is the default schedule.
        """
        if not 0 < mu0 <= 1:
            raise ValueError("mu0 must lie in (0, 1]")
        return cls(10.0 / p / mu0 ** (_check_p(p) - 2), b)

    @classmethod
    def jco(cls, p: int) -> "StepSchedule":
        """1 / (p (1 + k)), the schedule used when optimising during consensus."""
        return cls(1.0 / p, 1.0)


def messages_per_round(g: Graph, p: int) -> int:
    """Messages one optimisation round costs: ``p/2`` per directed link."""
    return (_check_p(p) // 2) * 2 * g.m


def power_minus_one(W: np.ndarray, p: int) -> np.ndarray:
    return np.linalg.matrix_power(W, p - 1)


def gradient(g: Graph, w, p: int) -> np.ndarray:
    """Full gradient of Tr(W(w)^p) with respect to the link weights."""
    p = _check_p(p)
    W = weights_to_matrix(g, w)
    return _gradient_from_power(g, power_minus_one(W, p), p)


def _gradient_from_power(g: Graph, P: np.ndarray, p: int) -> np.ndarray:
    a, b = g.endpoints
    return p * (P[a, b] + P[b, a] - P[a, a] - P[b, b])


def local_gradient(g: Graph, W, l: int, p: int) -> float:
    """Partial derivative of Tr(W^p) in the weight of edge ``l`` from a dense W."""
    p = _check_p(p)
    if not 0 <= l < g.m:
        raise GraphError(f"edge index {l} out of range")
    i, j = g.edges[l]
    P = power_minus_one(np.asarray(W, dtype=float), p)
    return float(p * (P[j, i] + P[i, j] - P[i, i] - P[j, j]))


def _ball(g: Graph, node: int, k: int) -> set[int]:
    d = hop_distances(g, node)
    return set(np.flatnonzero((d >= 0) & (d <= k)).tolist())


def local_gradient_from_subgraph(h: Subgraph, w, l: int, p: int, self_weights=None) -> float:
    """Gradient entry for edge ``l`` using only data held inside ``h``.

    Only the link weights of edges in ``h`` are read from ``w`` (indexed by the
    parent's edge indices).  Without ``self_weights`` every node's self weight
    is rebuilt from its links inside ``h``, which needs the ``p/2``-hop
    neighbourhood of both endpoints.  When the self weights of the nodes in
    ``h`` are supplied as node data (a mapping or a parent-length array), the
    ``(p/2 - 1)``-hop neighbourhood suffices.
    """
    p = _check_p(p)
    g = h.parent
    i, j = g.edges[l]
    need = p // 2 - (1 if self_weights is not None else 0)
    missing = (_ball(g, i, need) | _ball(g, j, need)) - set(h.nodes)
    if missing:
        raise GraphError(
            f"subgraph misses {len(missing)} node(s) within {need} hops of edge {l}"
        )
    w = np.asarray(w, dtype=float)
    pos = {v: k for k, v in enumerate(h.nodes)}
    M = np.zeros((len(pos), len(pos)))
    for e in h.edge_ids:
        s, t = g.edges[e]
        M[pos[s], pos[t]] = M[pos[t], pos[s]] = w[e]
    if self_weights is None:
        M[np.diag_indices_from(M)] = 1.0 - M.sum(axis=1)
    else:
        for v, k in pos.items():
            M[k, k] = self_weights[v]
    P = np.linalg.matrix_power(M, p - 1)
    a, b = pos[i], pos[j]
    return float(p * (P[b, a] + P[a, b] - P[a, a] - P[b, b]))


def project_box(w, lo: float = BOX[0], hi: float = BOX[1]) -> np.ndarray:
    if lo > hi:
        raise ValueError("empty box")
    return np.clip(np.asarray(w, dtype=float), lo, hi)


@dataclass
class OptimizerState:
    k: int
    w: np.ndarray
    grad: np.ndarray
    grad_norm: float
    rounds: int
    messages: int
    converged: bool
    history: list[tuple] = field(default_factory=list, repr=False)

    @property
    def messages_per_link(self) -> float:
        m = self.w.size
        return self.messages / m if m else 0.0


def tm_optimize(
    g: Graph,
    p: int,
    sched: StepSchedule | None = None,
    gtol: float = DEFAULT_GTOL,
    max_iter: int = 100_000,
    w0=None,
    record: bool = False,
):
    """Projected gradient descent on Tr(W^p) over ``[-1, 1]^m``.

    Stops once the Euclidean norm of the gradient drops below ``gtol`` or after
    ``max_iter`` updates.  Every gradient evaluation counts as one protocol
    round for the message tally.  With ``record=True`` the state carries rows
    ``(k, Tr(W^p), mu, |g|, cumulative messages)`` for each round.

    Returns ``(w, state)``.
    """
    p = _check_p(p)
    if not is_connected(g):
        raise GraphError("trace minimisation needs a connected graph")
    sched = sched or StepSchedule.default(p)
    w = local_degree_weights(g) if w0 is None else project_box(np.array(w0, dtype=float))
    if w.shape != (g.m,):
        raise ValueError(f"w0 must have {g.m} entries")
    per_round = messages_per_round(g, p)
    history = []
    msgs = 0
    k = 0
    while True:
        W = weights_to_matrix(g, w)
        P = power_minus_one(W, p)
        grad = _gradient_from_power(g, P, p)
        msgs += per_round
        if not np.all(np.isfinite(grad)):
            raise OptimizerError(f"non-finite gradient at iteration {k}")
        gnorm = float(np.linalg.norm(grad))
        if record:
            history.append((k, float(np.sum(P * W)), spectral_mu(W), gnorm, msgs))
        if gnorm < gtol or k >= max_iter:
            break
        w = project_box(w - sched(k) * grad)
        k += 1
    state = OptimizerState(
        k=k, w=w, grad=grad, grad_norm=gnorm, rounds=k + 1, messages=msgs,
        converged=gnorm < gtol, history=history,
    )
    return w, state


def write_trace_csv(state: OptimizerState, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["k", "trace_p", "mu", "grad_norm", "msgs_cumulative"])
    for k, tr, m, gn, msgs in state.history:
        writer.writerow([k, repr(tr), repr(m), repr(gn), msgs])


def objective(g: Graph, w, p: int) -> float:
    W = weights_to_matrix(g, w)
    half = np.linalg.matrix_power(W, _check_p(p) // 2)
    return float(np.sum(half * half))


def error_bound_factor(n: int, p: int) -> float:
    """(n-1)^(1/p): worst-case ratio between mu(W_(p)) and the optimal mu."""
    return math.pow(n - 1, 1.0 / p)
