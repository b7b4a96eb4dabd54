"""Sample-and-propagate discovery loop.

Alternates two stages until neither produces work. Sampling walks each
image's ranked candidate list, a fixed slice per iteration, for at most
number_sample_iterations iterations and at most max_tests_for_sampling picks
per image. Propagation extends every known edge (A, B) by testing A against
the best-ranked current neighbors of B and vice versa. A vertex that reaches
max_num_neighbors neighbors stops originating candidates but can still be
chosen from the other side.

Candidate batches are frozen against the between-batch graph state, verified
in canonical ascending pair order and merged deterministically, so a run is
reproducible for any worker count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FormatError
from .graph import MatchGraph, canonical_pair
from .prior import EdgeProbabilityModel, PriorIndex
from .verify import inlier_ratio_score, verify_batch

METRICS_COLUMNS = [
    "iteration",
    "stage",
    "tested",
    "matched",
    "cum_tested",
    "cum_matched",
    "efficiency",
    "sim_time",
]


@dataclass(frozen=True)
class EngineConfig:
    number_sample_iterations: int = 10
    max_num_neighbors: int = 120
    num_to_propagate: int = 4
    max_tests_for_sampling: int = 120
    seed: int = 0
    triplet_ranking: str = "fisher_distance"
    enable_sampling: bool = True
    enable_propagation: bool = True

    def __post_init__(self):
        if self.number_sample_iterations < 1:
            raise ValueError("number_sample_iterations must be positive")
        if self.max_num_neighbors < 1:
            raise ValueError("max_num_neighbors must be positive")
        if self.num_to_propagate < 1:
            raise ValueError("num_to_propagate must be positive")
        if self.max_tests_for_sampling < self.number_sample_iterations:
            raise ValueError(
                "max_tests_for_sampling must be at least number_sample_iterations "
                "so each sampling iteration draws at least one candidate"
            )
        if self.triplet_ranking not in ("fisher_distance", "inlier_ratio"):
            raise ValueError(f"unknown triplet_ranking {self.triplet_ranking!r}")

    @property
    def samples_per_iteration(self) -> int:
        return max(self.max_tests_for_sampling // self.number_sample_iterations, 1)


def default_config(n: int, seed: int = 0) -> EngineConfig:
    """The four standard parameters scaled to a collection of n images.

    The per-image sampling budget grows with 0.017 * n, clamped to [10, 120];
    the remaining three parameters are fixed.
    """
    if n < 2:
        raise ValueError(f"discovery needs at least 2 images, got {n}")
    budget = max(min(int(round(0.017 * n)), 120), 10)
    return EngineConfig(
        number_sample_iterations=10,
        max_num_neighbors=120,
        num_to_propagate=4,
        max_tests_for_sampling=budget,
        seed=seed,
    )


def config_with_overrides(n: int, seed: int, overrides: dict) -> EngineConfig:
    """Scaled defaults with any explicitly provided fields replaced."""
    cfg = default_config(n, seed=seed)
    fields = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **fields) if fields else cfg


@dataclass(frozen=True)
class MetricsRecord:
    iteration: int
    stage: str
    tested: int
    matched: int
    cum_tested: int
    cum_matched: int
    efficiency: float  # cumulative matched / cumulative tested
    sim_time: float  # cumulative verification cost at configured per-test cost


@dataclass
class RunMetrics:
    records: list[MetricsRecord] = field(default_factory=list)

    def append(self, iteration: int, stage: str, tested: int, matched: int, cost_per_test: float):
        if matched > tested:
            raise ValueError(f"matched {matched} exceeds tested {tested}")
        cum_tested = self.cum_tested + tested
        cum_matched = self.cum_matched + matched
        self.records.append(
            MetricsRecord(
                iteration=iteration,
                stage=stage,
                tested=tested,
                matched=matched,
                cum_tested=cum_tested,
                cum_matched=cum_matched,
                efficiency=cum_matched / cum_tested if cum_tested else 0.0,
                sim_time=cum_tested * cost_per_test,
            )
        )

    @property
    def cum_tested(self) -> int:
        return self.records[-1].cum_tested if self.records else 0

    @property
    def cum_matched(self) -> int:
        return self.records[-1].cum_matched if self.records else 0

    def overall_efficiency(self) -> float:
        if self.cum_tested == 0:
            raise ValueError("no pairs tested; efficiency is undefined")
        return self.cum_matched / self.cum_tested

    def stage_totals(self, stage: str) -> tuple[int, int]:
        tested = sum(r.tested for r in self.records if r.stage == stage)
        matched = sum(r.matched for r in self.records if r.stage == stage)
        return tested, matched

    def stage_efficiency(self, stage: str) -> float | None:
        tested, matched = self.stage_totals(stage)
        return matched / tested if tested else None

    def stages(self) -> list[str]:
        seen = []
        for r in self.records:
            if r.stage not in seen:
                seen.append(r.stage)
        return seen

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(METRICS_COLUMNS)
            for r in self.records:
                writer.writerow(
                    [
                        r.iteration,
                        r.stage,
                        r.tested,
                        r.matched,
                        r.cum_tested,
                        r.cum_matched,
                        repr(r.efficiency),
                        repr(r.sim_time),
                    ]
                )

    @classmethod
    def load_csv(cls, path) -> "RunMetrics":
        metrics = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != METRICS_COLUMNS:
                raise FormatError(f"{path}: unexpected metrics header {header}")
            for row in reader:
                if len(row) != len(METRICS_COLUMNS):
                    raise FormatError(f"{path}: bad metrics row {row}")
                metrics.records.append(
                    MetricsRecord(
                        iteration=int(row[0]),
                        stage=row[1],
                        tested=int(row[2]),
                        matched=int(row[3]),
                        cum_tested=int(row[4]),
                        cum_matched=int(row[5]),
                        efficiency=float(row[6]),
                        sim_time=float(row[7]),
                    )
                )
        return metrics


class EngineState:
    """Mutable loop state: the graph plus per-image sampling bookkeeping."""

    def __init__(self, index: PriorIndex, graph: MatchGraph | None = None):
        self.index = index
        self.graph = graph if graph is not None else MatchGraph(index.n)
        if self.graph.n != index.n:
            raise ValueError("prior index and graph disagree on image count")
        self.consumed = [0] * index.n  # sampling picks spent per image
        self.cursor = [0] * index.n  # position in each ranked list


def sampling_step(state: EngineState, cfg: EngineConfig) -> list[tuple[int, int]]:
    """Next slice of ranked candidates for every image still sampling.

    Entries already tested are skipped without spending budget; picks that
    duplicate another image's pick in the same batch still spend budget but
    collapse to one batch entry.
    """
    batch: set[tuple[int, int]] = set()
    per_iter = cfg.samples_per_iteration
    ranked = state.index.ranked
    graph = state.graph
    for v in range(state.index.n):
        if graph.degree[v] >= cfg.max_num_neighbors:
            continue
        taken = 0
        while (
            taken < per_iter
            and state.consumed[v] < cfg.max_tests_for_sampling
            and state.cursor[v] < ranked.shape[1]
        ):
            candidate = int(ranked[v, state.cursor[v]])
            state.cursor[v] += 1
            if graph.is_tested(v, candidate):
                continue
            batch.add(canonical_pair(v, candidate))
            state.consumed[v] += 1
            taken += 1
    return sorted(batch)


def _ranked_candidates(
    state: EngineState, cfg: EngineConfig, src: int, via: int, feature_counts
) -> list[tuple[int, int]]:
    graph = state.graph
    candidates = [
        c for c in graph.neighbors(via) if c != src and not graph.is_tested(src, c)
    ]
    if not candidates:
        return []
    if cfg.triplet_ranking == "fisher_distance":
        candidates.sort(key=lambda c: (state.index.distances[src, c], c))
    else:
        m_sv = graph.inliers(src, via)
        candidates.sort(
            key=lambda c: (
                -inlier_ratio_score(
                    m_sv,
                    int(feature_counts[src]),
                    int(feature_counts[via]),
                    graph.inliers(via, c),
                    int(feature_counts[c]),
                ),
                c,
            )
        )
    return [canonical_pair(src, c) for c in candidates[: cfg.num_to_propagate]]


def propagation_step(
    state: EngineState, cfg: EngineConfig, feature_counts=None
) -> list[tuple[int, int]]:
    """Closing candidates for every edge, ranked per cfg.triplet_ranking.

    For edge (A, B): the untested pairs (A, C) over B's current neighbors C,
    best num_to_propagate first, and symmetrically (B, C) over A's neighbors.
    feature_counts is only consulted by the inlier_ratio ranking.
    """
    if cfg.triplet_ranking == "inlier_ratio" and feature_counts is None:
        raise ValueError("inlier_ratio ranking requires per-image feature counts")
    batch: set[tuple[int, int]] = set()
    graph = state.graph
    for a, b in graph.edges():
        for src, via in ((a, b), (b, a)):
            if graph.degree[src] >= cfg.max_num_neighbors:
                continue
            batch.update(_ranked_candidates(state, cfg, src, via, feature_counts))
    return sorted(batch)


def run(
    index: PriorIndex,
    verifier,
    cfg: EngineConfig,
    feature_counts=None,
    threads: int = 1,
) -> tuple[MatchGraph, RunMetrics]:
    """Alternate sampling and propagation until both come back empty."""
    state = EngineState(index)
    metrics = RunMetrics()
    cost = getattr(verifier, "cost_per_test", 1.0)
    iteration = 1
    while True:
        sampled: list[tuple[int, int]] = []
        if cfg.enable_sampling and iteration <= cfg.number_sample_iterations:
            sampled = sampling_step(state, cfg)
        if sampled:
            outcomes = verify_batch(verifier, sampled, threads)
            for (i, j), out in zip(sampled, outcomes):
                state.graph.record_result(i, j, out.matched, out.inliers)
            metrics.append(
                iteration, "sampling", len(sampled), sum(o.matched for o in outcomes), cost
            )

        propagated: list[tuple[int, int]] = []
        if cfg.enable_propagation:
            propagated = propagation_step(state, cfg, feature_counts)
        if propagated:
            outcomes = verify_batch(verifier, propagated, threads)
            for (i, j), out in zip(propagated, outcomes):
                state.graph.record_result(i, j, out.matched, out.inliers)
            metrics.append(
                iteration, "propagation", len(propagated), sum(o.matched for o in outcomes), cost
            )

        if not sampled and not propagated:
            break
        iteration += 1
    return state.graph, metrics


def expected_edges_ranked_selection(
    distances, prob_model: EdgeProbabilityModel, k: int
) -> tuple[list[int], float]:
    """Pick the k nearest candidates and report the expected edge count.

    Under a non-increasing Pr(match | distance) the k smallest distances
    maximize the expected number of edges, so selection is a sort, and the
    expectation is the sum of the selected per-pair probabilities.
    """
    distances = np.asarray(distances, dtype=np.float64)
    if distances.ndim != 1 or distances.size == 0:
        raise ValueError("need a non-empty 1-D array of candidate distances")
    if not (1 <= k <= distances.size):
        raise ValueError(f"k must lie in [1, {distances.size}], got {k}")
    if np.any(np.diff(prob_model.bin_probs) > 1e-12):
        raise ValueError("probability model must be non-increasing in distance")
    order = np.lexsort((np.arange(distances.size), distances))
    selected = [int(x) for x in order[:k]]
    expected = float(np.sum(prob_model.prob(distances[selected])))
    return selected, expected


def ablated(cfg: EngineConfig, sampling: bool = True, propagation: bool = True) -> EngineConfig:
    """Copy of cfg with stages toggled, for single-stage comparison runs."""
    return replace(cfg, enable_sampling=sampling, enable_propagation=propagation)
