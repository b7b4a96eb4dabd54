"""The evolving matching graph: verified edges, tested non-edges, degrees,
modified graph distance and triplet extraction.

Every strategy shares one no-retest rule, so the tested set is stored
explicitly rather than inferred. Persisted form is a text edge list for
diffability:

    graph file:          "# N <count>" header, then "<i> <j> <inliers>"
                         per edge with i < j, in ascending (i, j) order
    tested_nonedges.txt: "<i> <j>" per tested non-edge, same ordering
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import FormatError


def canonical_pair(i: int, j: int) -> tuple[int, int]:
    if i == j:
        raise ValueError(f"self-pair ({i}, {i}) is not a valid image pair")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Triplet:
    """Vertices (a, b, c) with edges a-b and b-c present and (a, c) untested."""

    a: int
    b: int
    c: int


class MatchGraph:
    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"vertex count must be positive, got {n}")
        self.n = n
        self._edges: dict[tuple[int, int], int] = {}
        self._tested: set[tuple[int, int]] = set()
        self._adj: list[set[int]] = [set() for _ in range(n)]
        self.degree = [0] * n

    def _check_vertex(self, v: int) -> None:
        if not (0 <= v < self.n):
            raise ValueError(f"vertex {v} out of range [0, {self.n})")

    def record_result(self, i: int, j: int, matched: bool, inliers: int = 0) -> None:
        """Record one verification outcome; re-testing a pair is a caller bug."""
        pair = canonical_pair(i, j)
        self._check_vertex(pair[0])
        self._check_vertex(pair[1])
        if pair in self._tested:
            raise ValueError(f"pair {pair} was already tested")
        self._tested.add(pair)
        if matched:
            self._edges[pair] = int(inliers)
            a, b = pair
            self._adj[a].add(b)
            self._adj[b].add(a)
            self.degree[a] += 1
            self.degree[b] += 1

    def is_tested(self, i: int, j: int) -> bool:
        return canonical_pair(i, j) in self._tested

    def has_edge(self, i: int, j: int) -> bool:
        return canonical_pair(i, j) in self._edges

    def inliers(self, i: int, j: int) -> int:
        return self._edges[canonical_pair(i, j)]

    def neighbors(self, v: int) -> set[int]:
        self._check_vertex(v)
        return self._adj[v]

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self._edges)

    def tested_pairs(self) -> set[tuple[int, int]]:
        return set(self._tested)

    def tested_nonedges(self) -> list[tuple[int, int]]:
        return sorted(self._tested - self._edges.keys())

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    @property
    def tested_count(self) -> int:
        return len(self._tested)

    def modified_graph_distance(self, a: int, b: int) -> int | None:
        """Shortest-path hops from a to b ignoring the direct edge, if any.

        Returns None when b is unreachable from a without that edge.
        """
        if a == b:
            raise ValueError("modified graph distance requires two distinct vertices")
        self._check_vertex(a)
        self._check_vertex(b)
        # BFS from a; the only forbidden transition is the direct hop a -> b,
        # since a search from a can never traverse b -> a before reaching b.
        dist = {a: 0}
        queue = deque([a])
        while queue:
            u = queue.popleft()
            du = dist[u]
            for w in self._adj[u]:
                if u == a and w == b:
                    continue
                if w == b:
                    return du + 1
                if w not in dist:
                    dist[w] = du + 1
                    queue.append(w)
        return None


def extract_triplets(graph: MatchGraph) -> list[Triplet]:
    """All open two-paths a-b-c whose closing pair (a, c) is still untested.

    Each (a, b, c) appears once with a < c; ordering is (a, c, b).
    """
    found = []
    for b in range(graph.n):
        nbrs = sorted(graph.neighbors(b))
        for x in range(len(nbrs)):
            for y in range(x + 1, len(nbrs)):
                a, c = nbrs[x], nbrs[y]
                if not graph.is_tested(a, c):
                    found.append(Triplet(a=a, b=b, c=c))
    found.sort(key=lambda t: (t.a, t.c, t.b))
    return found


@dataclass(frozen=True, eq=False)
class GraphDistanceStats:
    """Counts of edge/non-edge pairs per modified graph distance.

    distances holds the finite distance values observed; unreachable pairs
    are tallied separately. PMFs normalize within each class.
    """

    distances: np.ndarray
    edge_counts: np.ndarray
    nonedge_counts: np.ndarray
    edge_pmf: np.ndarray
    nonedge_pmf: np.ndarray
    edge_unreachable: int
    nonedge_unreachable: int

    def edge_rate_at(self, distance: int) -> float:
        """Fraction of pairs at the given distance that are true edges."""
        sel = self.distances == distance
        total = self.edge_counts[sel].sum() + self.nonedge_counts[sel].sum()
        if total == 0:
            return float("nan")
        return float(self.edge_counts[sel].sum() / total)

    def edge_rate_at_least(self, distance: int) -> float:
        """Edge fraction among pairs at finite distance >= the given one."""
        sel = self.distances >= distance
        total = self.edge_counts[sel].sum() + self.nonedge_counts[sel].sum()
        if total == 0:
            return float("nan")
        return float(self.edge_counts[sel].sum() / total)


def graph_distance_stats(graph: MatchGraph, truth_edges) -> GraphDistanceStats:
    """Distribution of modified graph distance for true-edge and non-edge pairs."""
    truth = {canonical_pair(i, j) for i, j in truth_edges}
    edge_tally: dict[int, int] = {}
    nonedge_tally: dict[int, int] = {}
    unreachable = [0, 0]

    # one BFS per vertex covers every pair without a direct edge
    plain = np.full((graph.n, graph.n), -1, dtype=np.int32)
    for src in range(graph.n):
        plain[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for w in graph.neighbors(u):
                if plain[src, w] < 0:
                    plain[src, w] = plain[src, u] + 1
                    queue.append(w)

    for i in range(graph.n):
        for j in range(i + 1, graph.n):
            if graph.has_edge(i, j):
                d = graph.modified_graph_distance(i, j)
            else:
                d = int(plain[i, j]) if plain[i, j] >= 0 else None
            is_true = (i, j) in truth
            if d is None:
                unreachable[0 if is_true else 1] += 1
            elif is_true:
                edge_tally[d] = edge_tally.get(d, 0) + 1
            else:
                nonedge_tally[d] = nonedge_tally.get(d, 0) + 1

    values = np.array(sorted(set(edge_tally) | set(nonedge_tally)), dtype=np.int64)
    edge_counts = np.array([edge_tally.get(int(v), 0) for v in values], dtype=np.int64)
    nonedge_counts = np.array([nonedge_tally.get(int(v), 0) for v in values], dtype=np.int64)
    edge_total = edge_counts.sum() + unreachable[0]
    nonedge_total = nonedge_counts.sum() + unreachable[1]
    return GraphDistanceStats(
        distances=values,
        edge_counts=edge_counts,
        nonedge_counts=nonedge_counts,
        edge_pmf=edge_counts / edge_total if edge_total else edge_counts.astype(float),
        nonedge_pmf=nonedge_counts / nonedge_total
        if nonedge_total
        else nonedge_counts.astype(float),
        edge_unreachable=unreachable[0],
        nonedge_unreachable=unreachable[1],
    )


def save_graph(graph: MatchGraph, edges_path, nonedges_path) -> None:
    with open(edges_path, "w") as fh:
        fh.write(f"# N {graph.n}\n")
        for i, j in graph.edges():
            fh.write(f"{i} {j} {graph.inliers(i, j)}\n")
    with open(nonedges_path, "w") as fh:
        for i, j in graph.tested_nonedges():
            fh.write(f"{i} {j}\n")


def _parse_pair_line(line: str, path, lineno: int, expect_inliers: bool):
    parts = line.split()
    want = 3 if expect_inliers else 2
    if len(parts) != want:
        raise FormatError(f"{path}:{lineno}: expected {want} fields, got {len(parts)}")
    try:
        nums = [int(p) for p in parts]
    except ValueError as exc:
        raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return nums


def load_edge_list(path, expect_inliers: bool = True):
    """Parse a graph-format edge list. Returns (n_or_None, list of tuples)."""
    n = None
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if len(parts) == 2 and parts[0] == "N":
                    try:
                        n = int(parts[1])
                    except ValueError as exc:
                        raise FormatError(f"{path}:{lineno}: bad N header") from exc
                continue
            rows.append(tuple(_parse_pair_line(line, path, lineno, expect_inliers)))
    return n, rows


def load_graph(edges_path, nonedges_path=None, n: int | None = None) -> MatchGraph:
    header_n, edge_rows = load_edge_list(edges_path, expect_inliers=True)
    if n is None:
        n = header_n
    if n is None:
        raise FormatError(f"{edges_path}: no '# N' header and no explicit vertex count")
    graph = MatchGraph(n)
    for i, j, inliers in edge_rows:
        graph.record_result(i, j, matched=True, inliers=inliers)
    if nonedges_path is not None:
        _, nonedge_rows = load_edge_list(nonedges_path, expect_inliers=False)
        for i, j in nonedge_rows:
            graph.record_result(i, j, matched=False)
    return graph
