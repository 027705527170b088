"""Undirected simple graphs with a fixed edge index.

Nodes are ``0..n-1``.  Edges are stored once as ``(i, j)`` with ``i < j`` and
sorted lexicographically; the position of an edge in :attr:`Graph.edges` is
its edge index ``l`` and never changes for the lifetime of the object.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import pdist


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]
    labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one node")
        canon = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            canon.add((min(i, j), max(i, j)))
        if len(canon) != len(self.edges):
            raise GraphError("duplicate edges")
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        if self.labels is not None and len(self.labels) != self.n:
            raise GraphError("one label per node required")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], labels=None) -> "Graph":
        return cls(n, tuple((int(i), int(j)) for i, j in edges), labels)

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: l for l, e in enumerate(self.edges)}

    def index_of(self, i: int, j: int) -> int:
        """Edge index of the link between ``i`` and ``j`` (either order)."""
        try:
            return self.edge_index[(min(i, j), max(i, j))]
        except KeyError:
            raise GraphError(f"({i}, {j}) is not an edge") from None

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            d[i] += 1
            d[j] += 1
        d.setflags(write=False)
        return d

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    @cached_property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``(a, b)`` with ``edges[l] == (a[l], b[l])``."""
        e = np.array(self.edges, dtype=int).reshape(-1, 2)
        return e[:, 0].copy(), e[:, 1].copy()

    def label(self, i: int) -> str:
        return self.labels[i] if self.labels is not None else str(i)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        a, b = self.endpoints
        A[a, b] = 1.0
        A[b, a] = 1.0
        return A

    def incidence(self) -> np.ndarray:
        """n x m incidence matrix, +1 at the smaller endpoint and -1 at the larger."""
        B = np.zeros((self.n, self.m))
        a, b = self.endpoints
        cols = np.arange(self.m)
        B[a, cols] = 1.0
        B[b, cols] = -1.0
        return B

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class Subgraph:
    """Nodes within ``radius`` hops of any of ``centers`` plus the parent edges among them."""

    parent: Graph
    centers: tuple[int, ...]
    radius: int
    nodes: tuple[int, ...]
    edge_ids: tuple[int, ...]

    @property
    def center(self) -> int:
        return self.centers[0]

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return tuple(self.parent.edges[l] for l in self.edge_ids)

    def __contains__(self, node: int) -> bool:
        return node in self._node_set

    @cached_property
    def _node_set(self) -> frozenset[int]:
        return frozenset(self.nodes)


def laplacian(g: Graph) -> np.ndarray:
    return np.diag(g.degrees.astype(float)) - g.adjacency()


def generate_er(n: int, pr: float, seed) -> Graph:
    """Erdos-Renyi graph: each of the n(n-1)/2 pairs kept with probability ``pr``."""
    if n < 2:
        raise GraphError("n must be at least 2")
    if not 0.0 <= pr <= 1.0:
        raise GraphError("pr must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < pr
    return Graph.from_edges(n, zip(iu[keep], ju[keep]))


def generate_rgg(n: int, radius: float, seed, *, return_points: bool = False):
    """Random geometric graph on the unit square with connection radius ``radius``."""
    if n < 2:
        raise GraphError("n must be at least 2")
    if radius <= 0:
        raise GraphError("radius must be positive")
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    iu, ju = np.triu_indices(n, 1)
    keep = pdist(pts) <= radius
    g = Graph.from_edges(n, zip(iu[keep], ju[keep]))
    return (g, pts) if return_points else g


def load_edge_list(text: bytes | str) -> Graph:
    """Parse whitespace separated ``u v`` lines into a graph.

    Labels are arbitrary tokens, numbered in order of first appearance.  ``#``
    starts a comment.  Repeated and reversed edges collapse to one.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    ids: dict[str, int] = {}
    edges: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) < 2:
            raise GraphError(f"line {lineno}: expected two node labels, got {line!r}")
        u, v = tok[0], tok[1]
        if u == v:
            raise GraphError(f"line {lineno}: self-loop on {u!r}")
        for t in (u, v):
            if t not in ids:
                ids[t] = len(ids)
        i, j = ids[u], ids[v]
        edges.add((min(i, j), max(i, j)))
    if not ids:
        raise GraphError("no edges found")
    return Graph(len(ids), tuple(edges), tuple(ids))


def read_edge_list(path) -> Graph:
    with open(path, "rb") as fh:
        return load_edge_list(fh.read())


def hop_distances(g: Graph, source: int) -> np.ndarray:
    """BFS distances from ``source``; unreachable nodes get -1."""
    dist = np.full(g.n, -1, dtype=int)
    dist[source] = 0
    queue = deque([source])
    nbrs = g.neighbors
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def is_connected(g: Graph) -> bool:
    return bool((hop_distances(g, 0) >= 0).all())


def diameter(g: Graph) -> int:
    if not is_connected(g):
        raise GraphError("diameter of a disconnected graph is undefined")
    return max(int(hop_distances(g, s).max()) for s in range(g.n))


def k_hop_subgraph(g: Graph, center: int | Sequence[int], k: int) -> Subgraph:
    """Ball of radius ``k`` around one node (or the union of balls around several)."""
    centers = (center,) if np.isscalar(center) else tuple(center)
    if k < 0:
        raise GraphError("hop count must be non-negative")
    for c in centers:
        if not 0 <= c < g.n:
            raise GraphError(f"center {c} not in graph")
    keep = set()
    for c in centers:
        d = hop_distances(g, int(c))
        keep.update(np.flatnonzero((d >= 0) & (d <= k)).tolist())
    eids = tuple(l for l, (i, j) in enumerate(g.edges) if i in keep and j in keep)
    return Subgraph(g, tuple(int(c) for c in centers), k, tuple(sorted(keep)), eids)


def edge_subgraph(g: Graph, l: int, k: int) -> Subgraph:
    """Union of the ``k``-hop balls around both endpoints of edge ``l``."""
    return k_hop_subgraph(g, g.edges[l], k)
