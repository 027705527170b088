"""Safety nets around the optimised weights.

Repair: project each node's incident weights onto ``{x >= delta, sum x <= cap}``
in the metric ``(I + 11^T)``, then keep the smaller of the two endpoint values
per link.  The result has strictly positive link and self weights and is
therefore convergent on a connected graph.

Detection: in JCO each node broadcasts its new estimate together with the
estimates it heard last round and the incident weights it used.  A neighbour
can then recompute the update and cross-check the entries that concern
itself.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .consensus import DEFAULT_THRESHOLD, run_consensus
from .graph import Graph, GraphError, is_connected
from .schatten import (
    StepSchedule,
    _check_p,
    _gradient_from_power,
    power_minus_one,
    project_box,
    tm_optimize,
)
from .spectral import mu as spectral_mu
from .weights import local_degree_weights, matrix_to_weights, self_weights, weights_to_matrix

DETECT_EPS = 1e-9
AGREEMENT_FACTOR = 10.0


class RepairError(ValueError):
    pass


@dataclass(frozen=True)
class RepairParams:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise RepairError("delta must be strictly positive")

    @classmethod
    def default(cls, n: int) -> "RepairParams":
        return cls(1.0 / (2 * n))


def _solve_breakpoints(a: np.ndarray, delta: float, slope: float, target: float) -> float:
    """Solve ``F(t) = sum_k max(a_k - t, delta) + slope * t = target``.

    ``F`` is continuous, piecewise linear and non-increasing for ``slope <= 0``
    with kinks at ``a_k - delta``; the root is found by locating the bracketing
    pair of kinks and interpolating.  For ``slope == 0`` and a target equal to
    the all-clamped value the last kink is returned.
    """
    bps = np.sort(a - delta)
    F = np.array([np.maximum(a - b, delta).sum() + slope * b for b in bps])
    d = a.size
    if target >= F[0]:
        # left of every kink all terms are free
        return (a.sum() - target) / (d - slope)
    if target <= F[-1]:
        if slope == 0:
            return bps[-1]
        return bps[-1] + (F[-1] - target) / (-slope)
    idx = int(np.flatnonzero(F >= target)[-1])
    b0, b1, f0, f1 = bps[idx], bps[idx + 1], F[idx], F[idx + 1]
    if f0 == f1:
        return b0
    return b0 + (f0 - target) * (b1 - b0) / (f0 - f1)


def project_node_row(w_hat, delta: float, cap: float = 1.0) -> np.ndarray:
    """Minimise ``(x - w)^T (I + 11^T) (x - w)`` over ``x >= delta, sum x <= cap``.

    KKT gives ``x_k = max(w_k - t, delta)`` for a scalar ``t``.  Either the
    sum constraint is slack and ``t = sum(x - w)``, or it is tight and
    ``sum x = cap``; both are one-dimensional piecewise linear equations
    solved exactly over their breakpoints.
    """
    w = np.atleast_1d(np.asarray(w_hat, dtype=float))
    if w.size == 0:
        return w.copy()
    if not delta > 0:
        raise RepairError("delta must be strictly positive")
    if delta * w.size > cap + 1e-15:
        raise RepairError(f"infeasible: {w.size} links of at least {delta} exceed {cap}")
    # slack case: sum max(w_k - t, delta) - t = sum w
    t = _solve_breakpoints(w, delta, -1.0, w.sum())
    x = np.maximum(w - t, delta)
    if x.sum() <= cap + 1e-15:
        return x
    t = _solve_breakpoints(w, delta, 0.0, cap)
    return np.maximum(w - t, delta)


def build_convergent(g: Graph, W_hat, delta: float | None = None) -> np.ndarray:
    """Turn any symmetric weight matrix on ``g`` into a convergent one.

    Rows are projected with the sum capped at ``1 - delta`` so every self
    weight also stays at least ``delta``; each link then takes the smaller of
    its two projected values.
    """
    if not is_connected(g):
        raise GraphError("repair needs a connected graph")
    delta = RepairParams.default(g.n).delta if delta is None else RepairParams(delta).delta
    W_hat = np.asarray(W_hat, dtype=float)
    rows = {}
    for i in range(g.n):
        nb = list(g.neighbors[i])
        rows[i] = dict(zip(nb, project_node_row(W_hat[i, nb], delta, cap=1.0 - delta)))
    w = np.array([min(rows[i][j], rows[j][i]) for i, j in g.edges])
    return weights_to_matrix(g, w)


def _close(a: float, b: float, scale: float, eps: float) -> bool:
    return abs(a - b) <= eps * max(1.0, scale)


@dataclass
class Bundle:
    """What node ``sender`` broadcasts at round ``k``.

    ``x`` is its new estimate, ``heard`` maps each neighbour to the estimate
    it received from it in round ``k-1``, and ``weights`` maps each neighbour
    to the link weight used for this update.
    """

    sender: int
    round: int
    x: float
    heard: dict[int, float]
    weights: dict[int, float]


@dataclass
class NodeView:
    """Node-local state for detection."""

    node: int
    x: float
    x_prev: float
    weights: dict[int, float]
    last_heard: dict[int, float] = field(default_factory=dict)
    blacklist: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class Declaration:
    round: int
    detector: int
    declared: int
    reason: str


class ProtocolFault(RuntimeError):
    pass


def detect_misbehaving(view: NodeView, bundle: Bundle, eps: float = DETECT_EPS) -> str | None:
    """Return the failed check's name, or None if ``bundle`` is consistent.

    ``view`` must hold the estimates the detector received last round in
    ``last_heard`` and its own previous estimate in ``x_prev``.
    """
    j, i = bundle.sender, view.node
    if bundle.heard is None or bundle.weights is None or bundle.x is None:
        raise ProtocolFault(f"incomplete bundle from node {j}")
    if j not in view.last_heard:
        raise ProtocolFault(f"node {i} has no previous estimate of node {j}")
    if i not in bundle.heard or i not in bundle.weights:
        return "missing_entry"
    xj_prev = view.last_heard[j]
    w_jj = 1.0 - sum(bundle.weights.values())
    terms = [w_jj * xj_prev] + [bundle.weights[t] * bundle.heard.get(t, math.nan) for t in bundle.weights]
    expected = math.fsum(terms)
    scale = max(abs(bundle.x), math.fsum(abs(v) for v in terms))
    if not (math.isfinite(expected) and _close(bundle.x, expected, scale, eps)):
        return "update"
    if not _close(bundle.heard[i], view.x_prev, abs(view.x_prev), eps):
        return "estimate"
    if not _close(bundle.weights[i], view.weights.get(j, 0.0), abs(bundle.weights[i]), eps):
        return "weight"
    return None


@dataclass
class Adversary:
    """Misbehaviour of one node from round ``start`` on.

    ``kind`` is ``"stubborn"`` (repeats its previous estimate), ``"forge_estimate"``
    (shifts the estimate it reports having heard from ``target`` by ``amount``
    and updates consistently with the lie) or ``"forge_weight"`` (reports a
    shifted weight on its link to ``target``).
    """

    kind: str
    start: int = 1
    target: int | None = None
    amount: float = 1.0
    once: bool = False

    def active(self, k: int) -> bool:
        return k == self.start if self.once else k >= self.start


@dataclass
class GuardedRun:
    x: np.ndarray
    w: np.ndarray
    events: list[Declaration]
    rounds: int
    removed: set[tuple[int, int]]

    def write_csv(self, fh) -> None:
        write_detection_csv(self.events, fh)


def write_detection_csv(events, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["round", "detector", "declared", "reason"])
    for ev in events:
        writer.writerow([ev.round, ev.detector, ev.declared, ev.reason])


def simulate_guarded_jco(
    g: Graph,
    p: int,
    x0,
    rounds: int,
    w0=None,
    adversaries: dict[int, Adversary] | None = None,
    sched: StepSchedule | None = None,
    eps: float = DETECT_EPS,
) -> GuardedRun:
    """JCO with every node checking every neighbour's bundle each round.

    A declared link is zeroed on both sides from the next round on (the weight
    moves into the self weights) and is frozen for the optimiser.
    """
    p = _check_p(p)
    adversaries = adversaries or {}
    sched = sched or StepSchedule.jco(p)
    w = local_degree_weights(g) if w0 is None else np.array(w0, dtype=float)
    x = np.array(x0, dtype=float)
    active = np.ones(g.m, dtype=bool)
    views = [NodeView(i, x[i], x[i], {}) for i in range(g.n)]
    for i in range(g.n):
        views[i].last_heard = {j: x[j] for j in g.neighbors[i]}
    events: list[Declaration] = []
    removed: set[tuple[int, int]] = set()
    nbrs = g.neighbors
    for k in range(1, rounds + 1):
        W = weights_to_matrix(g, w)
        grad = _gradient_from_power(g, power_minus_one(W, p), p)
        w = np.where(active, project_box(w - sched(k - 1) * grad), 0.0)
        W = weights_to_matrix(g, w)
        x_prev = x.copy()
        x = W @ x_prev
        bundles = []
        for j in range(g.n):
            heard = {t: x_prev[t] for t in nbrs[j]}
            wrow = {t: W[j, t] for t in nbrs[j]}
            xj = x[j]
            adv = adversaries.get(j)
            if adv is not None and adv.active(k):
                if adv.kind == "stubborn":
                    xj = x_prev[j]
                elif adv.kind == "forge_estimate":
                    heard[adv.target] += adv.amount
                    xj = W[j, j] * x_prev[j] + sum(wrow[t] * heard[t] for t in nbrs[j])
                elif adv.kind == "forge_weight":
                    wrow[adv.target] += adv.amount
                else:
                    raise ValueError(f"unknown adversary kind {adv.kind!r}")
                x[j] = xj
            bundles.append(Bundle(j, k, xj, heard, wrow))
        newly = []
        for i in range(g.n):
            v = views[i]
            v.x_prev, v.x = x_prev[i], x[i]
            v.weights = {t: W[i, t] for t in nbrs[i]}
            for j in nbrs[i]:
                if j in v.blacklist:
                    continue
                reason = detect_misbehaving(v, bundles[j], eps)
                if reason is not None:
                    events.append(Declaration(k, i, j, reason))
                    newly.append((i, j))
            v.last_heard = {j: bundles[j].x for j in nbrs[i]}
        for i, j in newly:
            views[i].blacklist.add(j)
            l = g.index_of(i, j)
            active[l] = False
            w[l] = 0.0
            removed.add((min(i, j), max(i, j)))
    return GuardedRun(x, w, events, rounds, removed)


@dataclass
class GuardResult:
    dual: bool
    x: np.ndarray
    w_opt: np.ndarray
    mu_opt: float
    conv_time: float
    W_conv: np.ndarray | None = None
    x_conv: np.ndarray | None = None
    conv_time_conv: float | None = None
    diverged: bool = False

    @property
    def estimate(self) -> np.ndarray:
        if self.dual and self.diverged:
            return self.x_conv
        return self.x


def parallel_consensus_guard(
    g: Graph,
    p: int,
    x0,
    delta: float | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    max_iter: int = 100_000,
    agreement: float = AGREEMENT_FACTOR,
    **tm_kw,
) -> GuardResult:
    """Run consensus with the optimised matrix, backed by a repaired copy when needed.

    If every link and self weight of the optimised matrix is positive it is
    used alone.  Otherwise consensus runs under both matrices; when the two
    final states differ by more than ``agreement * threshold`` (relative to
    the initial disagreement) the optimised branch is flagged as divergent
    and the repaired branch's estimate is the one to use.
    """
    w, _ = tm_optimize(g, p, **tm_kw)
    W = weights_to_matrix(g, w)
    mu_opt = spectral_mu(W)
    x0 = np.asarray(x0, dtype=float)
    x, tr = run_consensus(W, x0, threshold, max_iter)
    if np.all(w > 0) and np.all(self_weights(g, w) > 0):
        return GuardResult(False, x, w, mu_opt, tr.conv_time)
    Wc = build_convergent(g, W, delta)
    xc, trc = run_consensus(Wc, x0, threshold, max_iter)
    e0 = np.linalg.norm(x0 - x0.mean())
    gap = np.linalg.norm(x - xc) / e0 if e0 > 0 else 0.0
    diverged = not (np.isfinite(gap) and gap <= agreement * threshold)
    return GuardResult(True, x, w, mu_opt, tr.conv_time, Wc, xc, trc.conv_time, diverged)


def star_barbell(k1: int, k2: int) -> Graph:
    """Two stars with ``k1`` and ``k2`` nodes whose centres are joined by a link."""
    if k1 < 2 or k2 < 2:
        raise GraphError("each star needs at least two nodes")
    edges = [(0, i) for i in range(1, k1)]
    edges += [(k1, k1 + i) for i in range(1, k2)]
    edges.append((0, k1))
    return Graph.from_edges(k1 + k2, edges)


def clique_barbell(k1: int, k2: int) -> Graph:
    edges = [(i, j) for i in range(k1) for j in range(i + 1, k1)]
    edges += [(k1 + i, k1 + j) for i in range(k2) for j in range(i + 1, k2)]
    edges.append((0, k1))
    return Graph.from_edges(k1 + k2, edges)


def barbell_search(max_size: int = 8, p: int = 2, kinds=("star", "clique"), **tm_kw):
    """Barbell graphs on which the optimiser returns a nonpositive link weight.

    Yields ``(graph, w, bridge_index)`` for every size pair up to ``max_size``
    per side where the minimum optimised link weight is at most zero.
    """
    make = {"star": star_barbell, "clique": clique_barbell}
    for kind in kinds:
        for k1 in range(2, max_size + 1):
            for k2 in range(k1, max_size + 1):
                g = make[kind](k1, k2)
                w, _ = tm_optimize(g, p, **tm_kw)
                if w.min() <= 0:
                    yield g, w, g.index_of(0, k1)


def repair_report(g: Graph, W_hat, delta: float | None = None) -> dict:
    """Spectral summary before and after repair."""
    Wc = build_convergent(g, W_hat, delta)
    return {
        "mu_before": spectral_mu(np.asarray(W_hat, dtype=float)),
        "mu_after": spectral_mu(Wc),
        "min_weight_before": float(matrix_to_weights(g, W_hat).min()),
        "min_weight_after": float(matrix_to_weights(g, Wc).min()),
        "W": Wc,
    }
