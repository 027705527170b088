"""Message-level simulation of the distributed trace-minimisation round.

Each node starts a round knowing only its incident link weights.  It then
spends ``p/2 - 1`` sub-rounds flooding the weight rows it knows, which gives it
the full weight rows of every node within ``p/2 - 1`` hops.  That is enough to
compute ``(W^{p-1})_ii`` and ``(W^{p-1})_ij`` for each neighbour ``j``
exactly.  A last sub-round broadcasts the scalar ``(W^{p-1})_ii`` so both
endpoints of a link can evaluate its gradient.  Every directed link therefore
carries ``p/2`` messages per round.

The two endpoints of a link compute its update independently.  They agree up
to floating point rounding (different summation order), so the symmetry check
uses a small tolerance and the reported weight vector takes each link's value
from its lower-numbered endpoint.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, is_connected
from .schatten import DEFAULT_GTOL, StepSchedule, _check_p, project_box
from .weights import local_degree_weights

SYMMETRY_TOL = 1e-9


class ProtocolFault(RuntimeError):
    """Raised when two copies of a link weight disagree."""


@dataclass
class NodeView:
    """What node ``node`` holds between rounds: its incident link weights."""

    node: int
    weights: dict[int, float]
    local_grad_max: float = float("inf")

    @property
    def self_weight(self) -> float:
        return 1.0 - sum(self.weights.values())


@dataclass(frozen=True, slots=True)
class RoundMessage:
    round: int
    subround: int
    sender: int
    receiver: int
    kind: str
    size: int


@dataclass
class MessageLog:
    """Per directed link counts plus per-kind totals; full records are optional."""

    keep_records: bool = False
    records: list[RoundMessage] = field(default_factory=list)
    per_link: Counter = field(default_factory=Counter)
    per_kind: Counter = field(default_factory=Counter)
    payload: Counter = field(default_factory=Counter)

    def add(self, msg: RoundMessage):
        key = (msg.sender, msg.receiver)
        self.per_link[key] += 1
        self.payload[key] += msg.size
        self.per_kind[msg.kind] += 1
        if self.keep_records:
            self.records.append(msg)

    @property
    def total(self) -> int:
        return sum(self.per_link.values())


def init_views(g: Graph, w) -> list[NodeView]:
    w = np.asarray(w, dtype=float)
    views = [NodeView(i, {}) for i in range(g.n)]
    for l, (i, j) in enumerate(g.edges):
        views[i].weights[j] = float(w[l])
        views[j].weights[i] = float(w[l])
    return views


def views_to_weights(g: Graph, views: list[NodeView]) -> np.ndarray:
    return np.array([views[i].weights[j] for i, j in g.edges])


def _flood_kind(p: int) -> str:
    return "weight_row" if p == 4 else "relay"


def _diag_kind(p: int) -> str:
    return "self_weight" if p == 2 else "power_diag"


def _check_pair(rows: dict[int, dict[int, float]], s: int, t: int):
    a, b = rows[s].get(t), rows[t].get(s)
    if a is None or b is None:
        raise ProtocolFault(f"link ({s}, {t}) known to only one endpoint")
    if abs(a - b) > SYMMETRY_TOL:
        raise ProtocolFault(f"asymmetric weight on link ({s}, {t}): {a!r} vs {b!r}")


def _local_power(i: int, rows: dict[int, dict[int, float]], p: int):
    """(W^{p-1})_ii and row ``i`` of W^{p-1} restricted to i's neighbours."""
    nodes = set(rows)
    for r in rows.values():
        nodes.update(r)
    order = sorted(nodes)
    pos = {v: k for k, v in enumerate(order)}
    M = np.zeros((len(order), len(order)))
    for s, r in rows.items():
        M[pos[s], pos[s]] = 1.0 - sum(r.values())
        for t, x in r.items():
            M[pos[s], pos[t]] = x
            M[pos[t], pos[s]] = x
    # Rows of nodes at the edge of the known region are incomplete but never
    # reach entry (i, .) of W^{p-1} within p-1 steps.
    P = np.linalg.matrix_power(M, p - 1)
    a = pos[i]
    return P[a, a], {j: P[a, pos[j]] for j in rows[i]}


def distributed_round(
    g: Graph,
    views: list[NodeView],
    p: int,
    k: int,
    sched: StepSchedule,
    log: MessageLog | None = None,
) -> list[NodeView]:
    """One synchronous optimisation round; returns the updated node views."""
    p = _check_p(p)
    log = log if log is not None else MessageLog()
    known = [{i: dict(views[i].weights)} for i in range(g.n)]
    for sub in range(p // 2 - 1):
        inbox = [[] for _ in range(g.n)]
        for i in range(g.n):
            payload = {s: dict(r) for s, r in known[i].items()}
            size = sum(len(r) for r in payload.values())
            for j in g.neighbors[i]:
                log.add(RoundMessage(k, sub, i, j, _flood_kind(p), size))
                inbox[j].append(payload)
        for j in range(g.n):
            for payload in inbox[j]:
                for s, r in payload.items():
                    known[j].setdefault(s, r)
            for s in known[j]:
                for t in known[j][s]:
                    if t in known[j] and s < t:
                        _check_pair(known[j], s, t)
    diag = np.empty(g.n)
    offd = []
    for i in range(g.n):
        c, row = _local_power(i, known[i], p)
        diag[i] = c
        offd.append(row)
    last = p // 2 - 1
    for i in range(g.n):
        for j in g.neighbors[i]:
            log.add(RoundMessage(k, last, i, j, _diag_kind(p), 1))
    step = sched(k)
    out = []
    for i in range(g.n):
        new = {}
        gmax = 0.0
        for j, x in views[i].weights.items():
            grad = p * (2.0 * offd[i][j] - diag[i] - diag[j])
            gmax = max(gmax, abs(grad))
            new[j] = float(project_box(x - step * grad))
        out.append(NodeView(i, new, gmax))
    for s, t in g.edges:
        if abs(out[s].weights[t] - out[t].weights[s]) > SYMMETRY_TOL:
            raise ProtocolFault(f"endpoints of link ({s}, {t}) diverged")
    return out


@dataclass
class DistributedResult:
    w: np.ndarray
    rounds: int
    converged: bool
    log: MessageLog


def distributed_optimize(
    g: Graph,
    p: int,
    sched: StepSchedule | None = None,
    gtol: float = DEFAULT_GTOL,
    max_iter: int = 10_000,
    w0=None,
    keep_records: bool = False,
    sync: bool = True,
    log: MessageLog | None = None,
) -> DistributedResult:
    """Run rounds until every node's largest incident |g_l| is at most ``gtol``.

    The local test is checked on the gradient computed in the round; as in
    the centralised optimiser the update of the final round is not applied.
    With ``sync=True`` the endpoint copies are reconciled after every round by
    keeping the lower-numbered endpoint's value, so the run tracks the
    centralised iterates exactly up to rounding.  Messages are appended to
    ``log`` when one is given.
    """
    p = _check_p(p)
    if not is_connected(g):
        raise ValueError("distributed optimisation needs a connected graph")
    sched = sched or StepSchedule.default(p)
    w = local_degree_weights(g) if w0 is None else np.asarray(w0, dtype=float)
    views = init_views(g, w)
    log = log if log is not None else MessageLog(keep_records=keep_records)
    converged = False
    rounds = 0
    while rounds < max_iter:
        new = distributed_round(g, views, p, rounds, sched, log)
        rounds += 1
        if max(v.local_grad_max for v in new) <= gtol:
            converged = True
            break
        views = new
        if sync:
            views = init_views(g, views_to_weights(g, views))
    return DistributedResult(views_to_weights(g, views), rounds, converged, log)
