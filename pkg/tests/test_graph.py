import itertools

import numpy as np
import pytest

from matchgraph.errors import FormatError
from matchgraph.graph import (
    MatchGraph,
    Triplet,
    extract_triplets,
    graph_distance_stats,
    load_graph,
    save_graph,
)


def graph_from_edges(n, edges, nonedges=()):
    g = MatchGraph(n)
    for i, j in edges:
        g.record_result(i, j, matched=True, inliers=10)
    for i, j in nonedges:
        g.record_result(i, j, matched=False)
    return g


def test_single_insertion():
    g = MatchGraph(3)
    g.record_result(0, 1, matched=True, inliers=42)
    assert g.edges() == [(0, 1)]
    assert g.degree[0] == 1 and g.degree[1] == 1 and g.degree[2] == 0
    assert g.inliers(1, 0) == 42


def test_nonmatch_grows_tested_only():
    g = MatchGraph(3)
    g.record_result(0, 1, matched=False)
    assert g.tested_count == 1 and g.edge_count == 0
    assert g.tested_nonedges() == [(0, 1)]


def test_duplicate_test_is_error():
    g = MatchGraph(3)
    g.record_result(0, 1, matched=True)
    with pytest.raises(ValueError, match="already tested"):
        g.record_result(1, 0, matched=False)


def test_self_pair_rejected():
    g = MatchGraph(3)
    with pytest.raises(ValueError, match="self-pair"):
        g.record_result(1, 1, matched=True)


def test_degree_matches_recomputation():
    rng = np.random.default_rng(0)
    g = MatchGraph(12)
    pairs = list(itertools.combinations(range(12), 2))
    rng.shuffle(pairs)
    for i, j in pairs[:40]:
        g.record_result(i, j, matched=bool(rng.random() < 0.5), inliers=int(rng.integers(1, 9)))
    recomputed = [0] * 12
    for i, j in g.edges():
        recomputed[i] += 1
        recomputed[j] += 1
    assert g.degree == recomputed


def test_modified_distance_path():
    g = graph_from_edges(3, [(0, 1), (1, 2)])
    assert g.modified_graph_distance(0, 2) == 2


def test_modified_distance_triangle_removes_direct_edge():
    g = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert g.modified_graph_distance(0, 2) == 2


def test_modified_distance_unreachable():
    g = graph_from_edges(4, [(0, 1)])
    assert g.modified_graph_distance(2, 3) is None
    assert g.modified_graph_distance(0, 3) is None


def test_modified_distance_symmetric():
    rng = np.random.default_rng(1)
    pairs = [(i, j) for i, j in itertools.combinations(range(9), 2) if rng.random() < 0.3]
    g = graph_from_edges(9, pairs)
    for a, b in itertools.combinations(range(9), 2):
        assert g.modified_graph_distance(a, b) == g.modified_graph_distance(b, a)


def test_modified_distance_same_vertex_error():
    g = MatchGraph(2)
    with pytest.raises(ValueError):
        g.modified_graph_distance(1, 1)


def test_distance_stats_complete_graph():
    n = 5
    edges = list(itertools.combinations(range(n), 2))
    g = graph_from_edges(n, edges)
    stats = graph_distance_stats(g, edges)
    assert list(stats.distances) == [2]
    assert stats.edge_counts[0] == len(edges)
    assert stats.edge_unreachable == 0


def test_distance_stats_empty_graph():
    g = MatchGraph(4)
    stats = graph_distance_stats(g, [])
    assert stats.nonedge_unreachable == 6
    assert stats.distances.size == 0


def test_distance_stats_rates():
    # square 0-1-2-3-0 plus diagonal 0-2: distance-2 pairs mix edges and not
    g = graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)])
    truth = [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]
    stats = graph_distance_stats(g, truth)
    assert stats.edge_rate_at(2) > stats.edge_rate_at_least(3) or np.isnan(
        stats.edge_rate_at_least(3)
    )


def test_triplet_single():
    g = graph_from_edges(3, [(0, 1), (1, 2)])
    assert extract_triplets(g) == [Triplet(a=0, b=1, c=2)]


def test_triplet_closed_triangle_none():
    g = graph_from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert extract_triplets(g) == []


def test_triplet_star():
    g = graph_from_edges(4, [(1, 0), (2, 0), (3, 0)])
    got = extract_triplets(g)
    assert got == [
        Triplet(a=1, b=0, c=2),
        Triplet(a=1, b=0, c=3),
        Triplet(a=2, b=0, c=3),
    ]


def brute_force_triplets(g):
    out = []
    for a, b, c in itertools.permutations(range(g.n), 3):
        if a < c and g.has_edge(a, b) and g.has_edge(b, c) and not g.is_tested(a, c):
            out.append(Triplet(a=a, b=b, c=c))
    return sorted(out, key=lambda t: (t.a, t.c, t.b))


@pytest.mark.parametrize("seed", range(8))
def test_triplets_match_bruteforce_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    g = MatchGraph(n)
    for i, j in itertools.combinations(range(n), 2):
        r = rng.random()
        if r < 0.4:
            g.record_result(i, j, matched=True, inliers=5)
        elif r < 0.6:
            g.record_result(i, j, matched=False)
    assert extract_triplets(g) == brute_force_triplets(g)


def test_graph_file_round_trip(tmp_path):
    g = graph_from_edges(6, [(0, 3), (1, 2)], nonedges=[(0, 1), (4, 5)])
    edges_path = tmp_path / "graph.txt"
    nonedges_path = tmp_path / "tested_nonedges.txt"
    save_graph(g, edges_path, nonedges_path)

    text = edges_path.read_text().splitlines()
    assert text[0] == "# N 6"
    assert text[1:] == ["0 3 10", "1 2 10"]
    assert nonedges_path.read_text().splitlines() == ["0 1", "4 5"]

    back = load_graph(edges_path, nonedges_path)
    assert back.edges() == g.edges()
    assert back.tested_nonedges() == g.tested_nonedges()
    assert back.degree == g.degree


def test_load_graph_rejects_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# N 3\n0 1\n")
    with pytest.raises(FormatError, match="expected 3 fields"):
        load_graph(path)
    path.write_text("0 1 5\n")
    with pytest.raises(FormatError, match="no '# N' header"):
        load_graph(path)
