"""Similarity prior: pairwise distance matrix, ranked candidate lists,
edge-probability calibration and separation statistics.

Distances are Euclidean between encoded image vectors. Each unordered pair is
computed once and mirrored, so the matrix is exactly symmetric with a zero
diagonal. Ranked lists sort every other image by ascending distance with ties
broken by ascending id.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .fisher import EncodedVector

DEFAULT_MAX_IMAGES = 20_000


@dataclass(frozen=True, eq=False)
class PriorIndex:
    distances: np.ndarray  # (N, N) float32, symmetric, zero diagonal
    ranked: np.ndarray  # (N, N-1) int32, ranked[i] sorts all ids != i

    @property
    def n(self) -> int:
        return self.distances.shape[0]


def build_prior_index(
    vectors: list[EncodedVector], max_images: int = DEFAULT_MAX_IMAGES
) -> PriorIndex:
    """Distance matrix plus per-image ranked candidate lists.

    The full matrix lives in memory; collections above max_images are
    rejected rather than spilled to disk.
    """
    n = len(vectors)
    if n < 2:
        raise ValueError(f"need at least 2 vectors, got {n}")
    if n > max_images:
        raise ValueError(f"collection of {n} images exceeds the in-memory cap {max_images}")
    ids = sorted(v.image_id for v in vectors)
    if ids != list(range(n)):
        raise ValueError(f"vector ids must be dense in [0, {n})")

    dim = vectors[0].values.shape[0]
    mat = np.empty((n, dim), dtype=np.float64)
    for v in vectors:
        if v.values.shape[0] != dim:
            raise ValueError(
                f"vector {v.image_id} has dim {v.values.shape[0]}, expected {dim}"
            )
        if not np.all(np.isfinite(v.values)):
            raise ValueError(f"vector {v.image_id} has non-finite values")
        mat[v.image_id] = v.values

    distances = np.zeros((n, n), dtype=np.float32)
    for i in range(n - 1):
        diff = mat[i + 1 :] - mat[i]
        row = np.sqrt(np.sum(diff * diff, axis=1))
        distances[i, i + 1 :] = row.astype(np.float32)
        distances[i + 1 :, i] = distances[i, i + 1 :]

    ranked = np.empty((n, n - 1), dtype=np.int32)
    all_ids = np.arange(n)
    for i in range(n):
        others = np.concatenate([all_ids[:i], all_ids[i + 1 :]])
        order = np.lexsort((others, distances[i, others]))
        ranked[i] = others[order]

    return PriorIndex(distances=distances, ranked=ranked)


@dataclass(frozen=True, eq=False)
class EdgeProbabilityModel:
    """Empirical Pr(match | distance) over distance bins, non-increasing."""

    bin_edges: np.ndarray  # (B+1,) ascending
    bin_probs: np.ndarray  # (B,) in [0, 1]

    def prob(self, distance) -> np.ndarray:
        """Probability lookup; distances outside the range clamp to end bins."""
        d = np.atleast_1d(np.asarray(distance, dtype=np.float64))
        idx = np.clip(
            np.searchsorted(self.bin_edges, d, side="right") - 1,
            0,
            len(self.bin_probs) - 1,
        )
        return self.bin_probs[idx]


def _pav_nonincreasing(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted pool-adjacent-violators projection onto non-increasing sequences."""
    vals: list[float] = []
    wts: list[float] = []
    counts: list[int] = []
    for v, w in zip(values, weights):
        vals.append(float(v))
        wts.append(float(w))
        counts.append(1)
        while len(vals) > 1 and vals[-2] < vals[-1]:
            w_total = wts[-2] + wts[-1]
            merged = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / w_total
            vals[-2:] = [merged]
            wts[-2:] = [w_total]
            counts[-2:] = [counts[-2] + counts[-1]]
    return np.concatenate([np.full(c, v) for v, c in zip(vals, counts)])


def calibrate_edge_probability(index: PriorIndex, graph, bins: int = 20) -> EdgeProbabilityModel:
    """Fit Pr(match | distance) from the pairs a graph has already tested.

    Empty bins are filled by linear interpolation between the nearest
    populated bins, then the whole curve is projected to be non-increasing,
    which is what ranked candidate selection assumes.
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    tested = sorted(graph.tested_pairs())
    if not tested:
        raise ValueError("graph has no tested pairs to calibrate from")
    dist = np.array([index.distances[i, j] for i, j in tested], dtype=np.float64)
    matched = np.array([graph.has_edge(i, j) for i, j in tested], dtype=np.float64)

    lo, hi = float(dist.min()), float(dist.max())
    if hi <= lo:
        hi = lo + max(1e-6, abs(lo) * 1e-6)
    edges = np.linspace(lo, hi, bins + 1)
    which = np.clip(np.searchsorted(edges, dist, side="right") - 1, 0, bins - 1)
    n_tested = np.bincount(which, minlength=bins).astype(np.float64)
    n_matched = np.bincount(which, weights=matched, minlength=bins)

    probs = np.full(bins, np.nan)
    populated = n_tested > 0
    probs[populated] = n_matched[populated] / n_tested[populated]
    if not populated.all():
        pop_idx = np.flatnonzero(populated)
        probs = np.interp(np.arange(bins), pop_idx, probs[pop_idx])

    weights = np.where(populated, n_tested, 1e-9)
    probs = np.clip(_pav_nonincreasing(probs, weights), 0.0, 1.0)
    return EdgeProbabilityModel(bin_edges=edges, bin_probs=probs)


@dataclass(frozen=True, eq=False)
class PriorStats:
    """Distance distributions of true edges vs non-edges, plus the ROC."""

    bin_edges: np.ndarray
    edge_density: np.ndarray
    nonedge_density: np.ndarray
    edge_cdf: np.ndarray
    nonedge_cdf: np.ndarray
    roc_thresholds: np.ndarray
    true_edge_rate: np.ndarray
    false_edge_rate: np.ndarray
    auc: float
    truth_empty: bool


def compute_prior_stats(index: PriorIndex, truth_edges, bins: int = 50) -> PriorStats:
    """Histogram/CDF split by ground truth, and the threshold-sweep ROC.

    The classifier under the sweep is "edge iff distance <= threshold"; AUC
    is the trapezoid area under (false_edge_rate, true_edge_rate).
    """
    n = index.n
    truth = {(min(i, j), max(i, j)) for i, j in truth_edges}
    for i, j in truth:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"truth pair ({i}, {j}) references invalid ids for N={n}")

    iu, ju = np.triu_indices(n, k=1)
    dist = index.distances[iu, ju].astype(np.float64)
    if truth:
        truth_i = np.array([p[0] for p in sorted(truth)])
        truth_j = np.array([p[1] for p in sorted(truth)])
        mask = np.zeros((n, n), dtype=bool)
        mask[truth_i, truth_j] = True
        is_edge = mask[iu, ju]
    else:
        is_edge = np.zeros(dist.shape[0], dtype=bool)

    lo, hi = float(dist.min()), float(dist.max())
    if hi <= lo:
        hi = lo + max(1e-6, abs(lo) * 1e-6)
    edges = np.linspace(lo, hi, bins + 1)

    def _hist(values):
        if values.size == 0:
            return np.zeros(bins), np.zeros(bins)
        density, _ = np.histogram(values, bins=edges, density=True)
        counts, _ = np.histogram(values, bins=edges)
        cdf = np.cumsum(counts) / values.size
        return density, cdf

    edge_density, edge_cdf = _hist(dist[is_edge])
    nonedge_density, nonedge_cdf = _hist(dist[~is_edge])

    # ROC by sweeping the distance threshold from tight to loose
    order = np.argsort(dist, kind="stable")
    sorted_edge = is_edge[order]
    n_pos = max(int(is_edge.sum()), 1)
    n_neg = max(int((~is_edge).sum()), 1)
    tpr = np.concatenate([[0.0], np.cumsum(sorted_edge) / n_pos])
    fpr = np.concatenate([[0.0], np.cumsum(~sorted_edge) / n_neg])
    thresholds = np.concatenate([[lo - 1.0], dist[order]])
    auc = float(np.trapezoid(tpr, fpr))

    return PriorStats(
        bin_edges=edges,
        edge_density=edge_density,
        nonedge_density=nonedge_density,
        edge_cdf=edge_cdf,
        nonedge_cdf=nonedge_cdf,
        roc_thresholds=thresholds,
        true_edge_rate=tpr,
        false_edge_rate=fpr,
        auc=auc,
        truth_empty=not truth,
    )


def write_pdf_csv(stats: PriorStats, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "edge_density", "nonedge_density"])
        for k in range(len(stats.edge_density)):
            writer.writerow(
                [
                    repr(float(stats.bin_edges[k])),
                    repr(float(stats.bin_edges[k + 1])),
                    repr(float(stats.edge_density[k])),
                    repr(float(stats.nonedge_density[k])),
                ]
            )


def write_roc_csv(stats: PriorStats, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "true_edge_rate", "false_edge_rate"])
        for t, tpr, fpr in zip(stats.roc_thresholds, stats.true_edge_rate, stats.false_edge_rate):
            writer.writerow([repr(float(t)), repr(float(tpr)), repr(float(fpr))])
