"""Undirected problem graphs, node sets, and overlapping decompositions.

Node ids are dense integers 0..n-1. BFS is the single source of truth for
graph distances; every boundary set of a decomposition is derived from BFS
neighborhoods by plain set algebra.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from .errors import DegenerateSubdomainError, InputValidationError

INFINITY = math.inf


@dataclass(frozen=True)
class Graph:
    """Undirected graph with sorted adjacency lists and no self-loops."""

    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.adjacency)
        for i, neigh in enumerate(self.adjacency):
            prev = -1
            for j in neigh:
                if not 0 <= j < n:
                    raise InputValidationError(f"node {i}: neighbor {j} out of range")
                if j == i:
                    raise InputValidationError(f"node {i}: self-loop")
                if j <= prev:
                    raise InputValidationError(f"node {i}: adjacency not strictly ascending")
                if i not in self.adjacency[j]:
                    raise InputValidationError(f"edge ({i},{j}) not symmetric")
                prev = j

    @property
    def node_count(self) -> int:
        return len(self.adjacency)

    def neighbors(self, i: int) -> tuple[int, ...]:
        self.check_node(i)
        return self.adjacency[i]

    def check_node(self, i: int) -> None:
        if not 0 <= i < self.node_count:
            raise InputValidationError(f"invalid node id {i}")

    @property
    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    @staticmethod
    def from_edges(node_count: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        adj: list[set[int]] = [set() for _ in range(node_count)]
        for i, j in edges:
            if not (0 <= i < node_count and 0 <= j < node_count):
                raise InputValidationError(f"edge ({i},{j}) out of range")
            if i == j:
                raise InputValidationError(f"self-loop at node {i}")
            adj[i].add(j)
            adj[j].add(i)
        return Graph(tuple(tuple(sorted(s)) for s in adj))


@dataclass(frozen=True)
class NodeSet:
    """Strictly ascending, duplicate-free set of node ids of a parent graph."""

    graph: Graph = field(repr=False)
    nodes: tuple[int, ...]

    def __post_init__(self):
        prev = -1
        for i in self.nodes:
            self.graph.check_node(i)
            if i <= prev:
                raise InputValidationError("node set not strictly ascending")
            prev = i

    @staticmethod
    def of(graph: Graph, nodes: Iterable[int]) -> "NodeSet":
        return NodeSet(graph, tuple(sorted(set(nodes))))

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[int]:
        return iter(self.nodes)

    def __contains__(self, i: int) -> bool:
        return i in self._as_set

    @property
    def _as_set(self) -> frozenset:
        # cached on first use; frozen dataclass so stash via object.__setattr__
        cached = self.__dict__.get("_set_cache")
        if cached is None:
            cached = frozenset(self.nodes)
            object.__setattr__(self, "_set_cache", cached)
        return cached

    def union(self, other: "NodeSet") -> "NodeSet":
        return NodeSet.of(self.graph, self._as_set | other._as_set)

    def intersection(self, other: "NodeSet") -> "NodeSet":
        return NodeSet.of(self.graph, self._as_set & other._as_set)

    def difference(self, other: "NodeSet") -> "NodeSet":
        return NodeSet.of(self.graph, self._as_set - other._as_set)

    def issubset(self, other: "NodeSet") -> bool:
        return self._as_set <= other._as_set


def grid_graph(rows: int, cols: int) -> Graph:
    """4-neighbor lattice; node id = row * cols + col."""
    if rows < 1 or cols < 1:
        raise InputValidationError("grid dimensions must be positive")
    adj: list[list[int]] = []
    for r in range(rows):
        for c in range(cols):
            neigh = []
            if r > 0:
                neigh.append((r - 1) * cols + c)
            if c > 0:
                neigh.append(r * cols + c - 1)
            if c < cols - 1:
                neigh.append(r * cols + c + 1)
            if r < rows - 1:
                neigh.append((r + 1) * cols + c)
            adj.append(sorted(neigh))
    return Graph(tuple(tuple(a) for a in adj))


def bhop_neighborhood(g: Graph, seed: NodeSet, b: int) -> NodeSet:
    """All nodes within BFS distance b of the seed set. b = 0 returns the seed."""
    if len(seed) == 0:
        raise InputValidationError("seed set is empty")
    if b < 0:
        raise InputValidationError("b must be nonnegative")
    dist = {i: 0 for i in seed}
    frontier = deque(seed)
    while frontier:
        i = frontier.popleft()
        d = dist[i]
        if d == b:
            continue
        for j in g.adjacency[i]:
            if j not in dist:
                dist[j] = d + 1
                frontier.append(j)
    return NodeSet.of(g, dist)


def open_neighborhood(g: Graph, s: NodeSet) -> NodeSet:
    """Nodes adjacent to s but not in s."""
    return bhop_neighborhood(g, s, 1).difference(s)


def closed_neighborhood(g: Graph, s: NodeSet) -> NodeSet:
    return bhop_neighborhood(g, s, 1)


def graph_distance(g: Graph, i: int, target: NodeSet) -> float:
    """BFS distance from node i to the nearest node of target; inf if unreachable."""
    g.check_node(i)
    if i in target:
        return 0
    goal = target._as_set
    seen = {i}
    frontier = deque([(i, 0)])
    while frontier:
        k, d = frontier.popleft()
        for j in g.adjacency[k]:
            if j in goal:
                return d + 1
            if j not in seen:
                seen.add(j)
                frontier.append((j, d + 1))
    return INFINITY


@dataclass(frozen=True)
class OverlapDecomposition:
    """Disjoint partition {V_l} expanded into overlapping subdomains {W_l}.

    For each subdomain W the derived boundary sets are, in set algebra over
    BFS neighborhoods N(.) / N[.]:

      open_boundary       N(W)
      internal_boundary   N(N(W)) & W
      combined_boundary   N(W) | internal_boundary
      external_depth2     N(W) | N(N[W])
      internal_depth2     (N(internal_boundary) & W) | internal_boundary
    """

    graph: Graph
    overlap_b: int
    disjoint_parts: tuple[NodeSet, ...]
    subdomains: tuple[NodeSet, ...]
    open_boundary: tuple[NodeSet, ...]
    internal_boundary: tuple[NodeSet, ...]
    combined_boundary: tuple[NodeSet, ...]
    external_depth2: tuple[NodeSet, ...]
    internal_depth2: tuple[NodeSet, ...]

    @property
    def num_subdomains(self) -> int:
        return len(self.disjoint_parts)

    def exclusive_interior(self, ell: int) -> NodeSet:
        """W_l minus its internal boundary: the nodes whose constraints stay hard."""
        return self.subdomains[ell].difference(self.internal_boundary[ell])


def derived_boundary_sets(g: Graph, w: NodeSet):
    """Compute the five boundary sets of a subdomain from scratch."""
    if len(w) == g.node_count:
        empty = NodeSet(g, ())
        return empty, empty, empty, empty, empty
    nw = open_neighborhood(g, w)
    tilde = open_neighborhood(g, nw).intersection(w)
    hat = nw.union(tilde)
    bar = nw.union(open_neighborhood(g, closed_neighborhood(g, w)))
    check = open_neighborhood(g, tilde).intersection(w).union(tilde)
    return nw, tilde, hat, bar, check


def build_decomposition(
    g: Graph,
    parts: Sequence[NodeSet],
    b: int,
    subdomains: Sequence[NodeSet] | None = None,
) -> OverlapDecomposition:
    """Expand a disjoint cover {V_l} into the overlapping decomposition.

    By default W_l is the b-hop neighborhood of V_l; custom subdomains are
    accepted as long as they contain it. Subdomains whose exclusive interior
    W_l minus internal_boundary is empty are rejected: their hard-constraint
    block would be vacuous. Increase b to thicken them.
    """
    if b < 0:
        raise InputValidationError("b must be nonnegative")
    covered: set[int] = set()
    total = 0
    for part in parts:
        if len(part) == 0:
            raise InputValidationError("empty partition part")
        total += len(part)
        covered |= part._as_set
    if total != len(covered):
        raise InputValidationError("partition parts are not disjoint")
    if len(covered) != g.node_count:
        raise InputValidationError("partition does not cover all nodes")

    if subdomains is None:
        subs = tuple(bhop_neighborhood(g, v, b) for v in parts)
    else:
        if len(subdomains) != len(parts):
            raise InputValidationError("one subdomain per part required")
        subs = tuple(subdomains)
        for v, w in zip(parts, subs):
            if not bhop_neighborhood(g, v, b).issubset(w):
                raise InputValidationError("subdomain does not contain the b-hop neighborhood of its part")

    nw_l, tilde_l, hat_l, bar_l, check_l = [], [], [], [], []
    for ell, w in enumerate(subs):
        nw, tilde, hat, bar, check = derived_boundary_sets(g, w)
        if len(w) > 0 and len(w.difference(tilde)) == 0:
            raise DegenerateSubdomainError(
                f"subdomain {ell} has empty exclusive interior; increase b"
            )
        nw_l.append(nw)
        tilde_l.append(tilde)
        hat_l.append(hat)
        bar_l.append(bar)
        check_l.append(check)

    return OverlapDecomposition(
        graph=g,
        overlap_b=b,
        disjoint_parts=tuple(parts),
        subdomains=subs,
        open_boundary=tuple(nw_l),
        internal_boundary=tuple(tilde_l),
        combined_boundary=tuple(hat_l),
        external_depth2=tuple(bar_l),
        internal_depth2=tuple(check_l),
    )


def strip_partition(g: Graph, rows: int, cols: int, strips: int) -> list[NodeSet]:
    """Vertical strips of near-equal width on a rows x cols grid graph."""
    if strips < 1 or strips > cols:
        raise InputValidationError("strip count must be in 1..cols")
    base, extra = divmod(cols, strips)
    parts = []
    start = 0
    for s in range(strips):
        width = base + (1 if s < extra else 0)
        col_range = range(start, start + width)
        parts.append(NodeSet.of(g, (r * cols + c for r in range(rows) for c in col_range)))
        start += width
    return parts


def load_edge_list(path) -> Graph:
    """Graph from a plain-text edge list, one 0-based 'i j' pair per line."""
    edges = []
    max_node = -1
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise InputValidationError(f"bad edge line: {line!r}")
            i, j = int(fields[0]), int(fields[1])
            edges.append((i, j))
            max_node = max(max_node, i, j)
    return Graph.from_edges(max_node + 1, edges)


def load_partition(g: Graph, path) -> list[NodeSet]:
    """Partition from a plain-text file, one 'node part_id' pair per line."""
    assignment: dict[int, int] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise InputValidationError(f"bad partition line: {line!r}")
            node, part = int(fields[0]), int(fields[1])
            if node in assignment:
                raise InputValidationError(f"node {node} assigned twice")
            assignment[node] = part
    if set(assignment) != set(range(g.node_count)):
        raise InputValidationError("partition file does not cover all nodes exactly once")
    part_ids = sorted(set(assignment.values()))
    return [NodeSet.of(g, (n for n, p in assignment.items() if p == pid)) for pid in part_ids]
