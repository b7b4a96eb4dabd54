"""Comparison strategies sharing the verifier and no-retest bookkeeping.

brute_force      every pair once; efficiency equals graph density
random           a seed-deterministic uniform sample of untested pairs
query_expansion  retrieval of the top-k ranked neighbors per image, then
                 fixed rounds of uncapped, unranked neighbor-of-neighbor
                 expansion (the drift-prone scheme the engine improves on)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import RunMetrics
from .graph import MatchGraph, canonical_pair
from .parallel import chunks, seed_key
from .prior import PriorIndex
from .verify import verify_batch

BATCH_SIZE = 1000  # metrics-row granularity for the non-iterative strategies


@dataclass(frozen=True)
class BaselineConfig:
    kind: str = "brute_force"
    budget: int = 0  # random only
    retrieval_k: int = 40  # query_expansion only
    expansion_rounds: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("brute_force", "random", "query_expansion"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.kind == "query_expansion" and self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")
        if self.kind == "random" and self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.expansion_rounds < 0:
            raise ValueError("expansion_rounds must be non-negative")


def _run_batches(graph, metrics, verifier, pairs, stage, threads, start_iteration=1):
    cost = getattr(verifier, "cost_per_test", 1.0)
    iteration = start_iteration
    for chunk in chunks(pairs, BATCH_SIZE):
        outcomes = verify_batch(verifier, chunk, threads)
        for (i, j), out in zip(chunk, outcomes):
            graph.record_result(i, j, out.matched, out.inliers)
        metrics.append(iteration, stage, len(chunk), sum(o.matched for o in outcomes), cost)
        iteration += 1
    return iteration


def run_brute_force(n: int, verifier, threads: int = 1) -> tuple[MatchGraph, RunMetrics]:
    """Test all C(n, 2) pairs exactly once, in ascending order."""
    if n < 2:
        raise ValueError(f"discovery needs at least 2 images, got {n}")
    graph = MatchGraph(n)
    metrics = RunMetrics()
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    _run_batches(graph, metrics, verifier, pairs, "brute_force", threads)
    return graph, metrics


def _pair_from_linear(m: int, n: int) -> tuple[int, int]:
    # inverse of m = i*n - i*(i+1)/2 + (j - i - 1) over i < j, exact int math
    i = n - 2 - (math.isqrt(8 * (math.comb(n, 2) - 1 - m) + 1) - 1) // 2
    j = m - (i * n - i * (i + 1) // 2) + i + 1
    return i, j


def run_random(
    n: int, verifier, cfg: BaselineConfig, threads: int = 1
) -> tuple[MatchGraph, RunMetrics]:
    """Verify cfg.budget distinct uniform pairs, drawn deterministically."""
    if n < 2:
        raise ValueError(f"discovery needs at least 2 images, got {n}")
    total = math.comb(n, 2)
    if cfg.budget > total:
        raise ValueError(f"budget {cfg.budget} exceeds the {total} available pairs")
    rng = np.random.default_rng(seed_key(cfg.seed))
    if total <= 2_000_000:
        chosen = rng.choice(total, size=cfg.budget, replace=False)
    else:
        picked: set[int] = set()
        order: list[int] = []
        while len(order) < cfg.budget:
            m = int(rng.integers(total))
            if m not in picked:
                picked.add(m)
                order.append(m)
        chosen = np.array(order, dtype=np.int64)
    pairs = [_pair_from_linear(int(m), n) for m in chosen]
    graph = MatchGraph(n)
    metrics = RunMetrics()
    _run_batches(graph, metrics, verifier, pairs, "random", threads)
    return graph, metrics


def run_query_expansion(
    index: PriorIndex, verifier, cfg: BaselineConfig, threads: int = 1
) -> tuple[MatchGraph, RunMetrics]:
    """Ranked retrieval followed by repeated uncapped query expansion.

    Each expansion round enqueues, for every current edge (A, B), all
    untested neighbor-of-neighbor pairs in ascending order, with no
    re-ranking and no per-round cap. One metrics row per round, kept even
    when a round finds nothing to test, so round-indexed efficiency curves
    stay aligned across runs.
    """
    n = index.n
    if cfg.retrieval_k >= n:
        raise ValueError(f"retrieval_k {cfg.retrieval_k} must be smaller than N={n}")
    cost = getattr(verifier, "cost_per_test", 1.0)
    graph = MatchGraph(n)
    metrics = RunMetrics()

    retrieved: set[tuple[int, int]] = set()
    for v in range(n):
        for c in index.ranked[v, : cfg.retrieval_k]:
            retrieved.add(canonical_pair(v, int(c)))
    batch = sorted(retrieved)
    outcomes = verify_batch(verifier, batch, threads)
    for (i, j), out in zip(batch, outcomes):
        graph.record_result(i, j, out.matched, out.inliers)
    metrics.append(0, "retrieval", len(batch), sum(o.matched for o in outcomes), cost)

    for round_idx in range(1, cfg.expansion_rounds + 1):
        expansion: set[tuple[int, int]] = set()
        for a, b in graph.edges():
            for src, via in ((a, b), (b, a)):
                for c in graph.neighbors(via):
                    if c != src and not graph.is_tested(src, c):
                        expansion.add(canonical_pair(src, c))
        batch = sorted(expansion)
        outcomes = verify_batch(verifier, batch, threads)
        for (i, j), out in zip(batch, outcomes):
            graph.record_result(i, j, out.matched, out.inliers)
        metrics.append(round_idx, "expansion", len(batch), sum(o.matched for o in outcomes), cost)

    return graph, metrics
