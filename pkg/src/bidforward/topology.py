"""Network graphs: generation, shortest-hop queries, restricted k-hop views, churn.

Graphs are simple and undirected over dense integer node ids. The backbone
is not part of the adjacency; the gateway set marks nodes adjacent to it.
"""

from __future__ import annotations

import math
import random
from collections import deque
from typing import Iterable, Sequence

from .model import NodeId

GEOMETRIC_MAX_ATTEMPTS = 50


class TopologyError(ValueError):
    """Raised for invalid graph parameters or failed generation."""


class TopologyGraph:
    """Immutable simple graph plus its gateway set.

    Shortest-hop distances are BFS results cached per source node.
    """

    __slots__ = ("n", "_adj", "gateways", "_dist")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]], gateways: Iterable[int]):
        if n < 2:
            raise TopologyError("graph needs at least 2 nodes")
        adj: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise TopologyError(f"edge ({u},{v}) out of range")
            if u == v:
                raise TopologyError(f"self-loop at {u}")
            adj[u].add(v)
            adj[v].add(u)
        self.n = n
        self._adj: tuple[frozenset[int], ...] = tuple(frozenset(s) for s in adj)
        self.gateways: frozenset[int] = frozenset(gateways)
        if not self.gateways:
            raise TopologyError("gateway set must be non-empty")
        if any(not (0 <= g < n) for g in self.gateways):
            raise TopologyError("gateway id out of range")
        self._dist: dict[int, list[int | None]] = {}

    def neighbors(self, u: NodeId) -> frozenset[int]:
        return self._adj[u]

    def edges(self) -> list[tuple[int, int]]:
        """Edge list with u < v, sorted."""
        out = []
        for u in range(self.n):
            for v in self._adj[u]:
                if u < v:
                    out.append((u, v))
        return sorted(out)

    def distances_from(self, src: NodeId) -> Sequence[int | None]:
        """All-nodes hop distances from ``src`` (``None`` where unreachable)."""
        cached = self._dist.get(src)
        if cached is None:
            cached = _bfs(self._adj, self.n, src)
            self._dist[src] = cached
        return cached

    def hop_distance(self, a: NodeId, b: NodeId) -> int | None:
        """Shortest-path length in hops; 0 iff a == b; None if unreachable."""
        return self.distances_from(a)[b]

    def is_connected(self) -> bool:
        return all(d is not None for d in self.distances_from(0))

    def to_edge_list(self) -> str:
        lines = [f"n {self.n}"]
        lines.extend(f"{u} {v}" for u, v in self.edges())
        lines.append("gateways " + " ".join(str(g) for g in sorted(self.gateways)))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text: str) -> "TopologyGraph":
        n = None
        edges = []
        gateways: list[int] = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("n "):
                n = int(line.split()[1])
            elif line.startswith("gateways"):
                gateways = [int(tok) for tok in line.split()[1:]]
            else:
                u, v = line.split()
                edges.append((int(u), int(v)))
        if n is None:
            raise TopologyError("edge list missing 'n <count>' line")
        return cls(n, edges, gateways)


def _bfs(adj: Sequence[frozenset[int]], n: int, src: int) -> list[int | None]:
    dist: list[int | None] = [None] * n
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        du = dist[u]
        for v in adj[u]:
            if dist[v] is None:
                dist[v] = du + 1  # type: ignore[operator]
                queue.append(v)
    return dist


def generate(
    kind: str,
    n: int,
    *,
    seed: int = 0,
    radius: float | None = None,
    cols: int | None = None,
    gateways: Iterable[int] = (0,),
) -> TopologyGraph:
    """Build a connected graph of the requested family, deterministically.

    ``ring`` is a cycle, ``grid`` a rows x cols lattice (cols defaults to the
    smallest divisor of n at least sqrt(n); pass cols=1 for a path), and
    ``geometric`` places points uniformly in the unit square, connecting
    pairs within ``radius``, redrawing up to a bounded attempt count until
    connected.
    """
    if n < 2:
        raise TopologyError("n must be >= 2")
    if kind == "ring":
        edges = [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)]
        return TopologyGraph(n, edges, gateways)
    if kind == "grid":
        c = cols if cols is not None else _default_cols(n)
        if c < 1 or n % c != 0:
            raise TopologyError(f"grid: {n} nodes do not factor into columns of {c}")
        rows = n // c
        edges = []
        for r in range(rows):
            for col in range(c):
                node = r * c + col
                if col + 1 < c:
                    edges.append((node, node + 1))
                if r + 1 < rows:
                    edges.append((node, node + c))
        return TopologyGraph(n, edges, gateways)
    if kind == "geometric":
        if radius is None:
            raise TopologyError("geometric graphs need a connection radius")
        rng = random.Random(seed)
        for _ in range(GEOMETRIC_MAX_ATTEMPTS):
            points = [(rng.random(), rng.random()) for _ in range(n)]
            edges = [
                (u, v)
                for u in range(n)
                for v in range(u + 1, n)
                if math.dist(points[u], points[v]) <= radius
            ]
            graph = TopologyGraph(n, edges, gateways)
            if graph.is_connected():
                return graph
        raise TopologyError(
            f"geometric: no connected graph with n={n}, radius={radius} "
            f"after {GEOMETRIC_MAX_ATTEMPTS} attempts"
        )
    raise TopologyError(f"unknown topology kind {kind!r}")


def _default_cols(n: int) -> int:
    start = math.isqrt(n)
    if start * start < n:
        start += 1
    for c in range(start, n + 1):
        if n % c == 0:
            return c
    return n


class NodeView:
    """One node's restricted knowledge of the graph.

    Contains every edge with at least one endpoint within k-1 hops of the
    owner; with k at least the diameter this is the whole graph.
    """

    __slots__ = ("owner", "k", "_adj", "_radius_dist", "_dist")

    def __init__(self, owner: NodeId, k: int, adjacency: dict[int, frozenset[int]],
                 radius_dist: dict[int, int]):
        self.owner = owner
        self.k = k
        self._adj = adjacency
        self._radius_dist = radius_dist  # distance from owner, within k
        self._dist: dict[int, dict[int, int]] = {}

    def knows(self, node: NodeId) -> bool:
        return node in self._adj

    def neighbors(self, node: NodeId) -> frozenset[int]:
        """Known neighbors of ``node``; empty when the node is unknown."""
        return self._adj.get(node, frozenset())

    def covers_neighborhood(self, node: NodeId) -> bool:
        """True when every edge incident to ``node`` is in the view."""
        d = self._radius_dist.get(node)
        return d is not None and d <= self.k - 1

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(
            (u, v) for u, nbrs in self._adj.items() for v in nbrs if u < v
        )

    def distance(self, a: NodeId, b: NodeId) -> int | None:
        """Shortest-hop distance using known edges only; None when unknown."""
        if a not in self._adj or b not in self._adj:
            return None
        from_a = self._dist.get(a)
        if from_a is None:
            from_a = _bfs_dict(self._adj, a)
            self._dist[a] = from_a
        return from_a.get(b)


def _bfs_dict(adj: dict[int, frozenset[int]], src: int) -> dict[int, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def view_of(g: TopologyGraph, owner: NodeId, k: int) -> NodeView:
    """The owner's k-hop view of ``g``."""
    if k < 1:
        raise TopologyError("view radius k must be >= 1")
    dist = g.distances_from(owner)
    radius_dist = {node: d for node, d in enumerate(dist) if d is not None and d <= k}
    adjacency: dict[int, set[int]] = {owner: set()}
    for u in range(g.n):
        du = dist[u]
        if du is None or du > k - 1:
            continue
        for v in g.neighbors(u):
            adjacency.setdefault(u, set()).add(v)
            adjacency.setdefault(v, set()).add(u)
    return NodeView(
        owner, k,
        {node: frozenset(nbrs) for node, nbrs in adjacency.items()},
        radius_dist,
    )


def churn(g: TopologyGraph, p: float, seed: int) -> TopologyGraph:
    """Toggle each non-gateway node pair with probability ``p``.

    Pairs touching a gateway are left alone, and any toggle that would
    disconnect the graph is reverted. Deterministic for a given seed.
    """
    if not 0.0 <= p <= 1.0:
        raise TopologyError("churn probability must be in [0, 1]")
    if p == 0.0:
        return g
    rng = random.Random(seed)
    adj = [set(g.neighbors(u)) for u in range(g.n)]
    for u in range(g.n):
        for v in range(u + 1, g.n):
            if u in g.gateways or v in g.gateways:
                continue
            if rng.random() >= p:
                continue
            if v in adj[u]:
                adj[u].discard(v)
                adj[v].discard(u)
                if not _connected(adj):
                    adj[u].add(v)
                    adj[v].add(u)
            else:
                adj[u].add(v)
                adj[v].add(u)
    edges = [(u, v) for u in range(g.n) for v in adj[u] if u < v]
    return TopologyGraph(g.n, edges, g.gateways)


def _connected(adj: Sequence[set[int]]) -> bool:
    n = len(adj)
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n
