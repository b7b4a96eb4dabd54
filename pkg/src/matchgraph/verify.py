"""Pairwise verification oracles.

Geometric verification proper (RANSAC over keypoint geometry) is out of
scope; the engine only needs a symmetric boolean predicate with an inlier
count and a cost. Three implementations:

  synthetic          consults a ground-truth edge set, optionally flipping
                     the answer with a per-pair seeded probability
  descriptor_overlap counts mutual nearest-neighbor descriptor matches that
                     pass the ratio test on both sides
  external           delegates to a child process per the line protocol
                     "VERIFY <i> <j>" -> "RESULT <i> <j> <0|1> <inliers>"

All verifiers are deterministic given their configuration and safe to invoke
concurrently on distinct pairs.
"""

from __future__ import annotations

import shlex
import subprocess
import threading
import time
from dataclasses import dataclass

import numpy as np

from .descriptors import Collection
from .errors import ProtocolError
from .graph import canonical_pair
from .parallel import ordered_map, seed_key

DEFAULT_MIN_MATCHES = 30
DEFAULT_RATIO_THRESHOLD = 0.8


@dataclass(frozen=True)
class VerificationOutcome:
    matched: bool
    inliers: int
    cost: float  # wall seconds for real verifiers, configured cost for synthetic


@dataclass(frozen=True)
class VerifierConfig:
    kind: str = "synthetic"
    min_matches: int = DEFAULT_MIN_MATCHES
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD
    flip_noise: float = 0.0
    command: str | None = None
    cost_per_test: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("synthetic", "descriptor_overlap", "external"):
            raise ValueError(f"unknown verifier kind {self.kind!r}")
        if self.min_matches < 1:
            raise ValueError("min_matches must be positive")
        if not (0.0 < self.ratio_threshold < 1.0):
            raise ValueError("ratio_threshold must lie in (0, 1)")
        if not (0.0 <= self.flip_noise < 1.0):
            raise ValueError("flip_noise must lie in [0, 1)")
        if self.kind == "external" and not self.command:
            raise ValueError("external verifier requires a command")
        if self.cost_per_test < 0:
            raise ValueError("cost_per_test must be non-negative")


def inlier_ratio_score(m_ab: int, f_a: int, f_b: int, m_bc: int, f_c: int) -> float:
    """Product of the two edge inlier ratios of a triplet A-B-C.

    Each edge contributes its inlier count over the smaller of the two
    feature counts, so the score lies in [0, 1].
    """
    if min(f_a, f_b, f_c) < 1:
        raise ValueError("feature counts must be >= 1")
    if m_ab < 0 or m_bc < 0:
        raise ValueError("inlier counts must be non-negative")
    if m_ab > min(f_a, f_b) or m_bc > min(f_b, f_c):
        raise ValueError("inlier count exceeds the smaller feature count")
    return (m_ab / min(f_a, f_b)) * (m_bc / min(f_b, f_c))


class SyntheticVerifier:
    """Ground-truth oracle with optional seeded answer flips.

    The flip draw is keyed by (seed, i, j) with i < j, so outcomes are
    symmetric and independent of call order or thread scheduling. A matched
    pair gets a pseudo-random inlier count of 20..80% of the smaller feature
    count, giving the inlier-ratio triplet ranking something to rank by.
    """

    def __init__(
        self,
        truth_edges,
        feature_counts=None,
        flip_noise: float = 0.0,
        seed: int = 0,
        cost_per_test: float = 1.0,
    ):
        self.truth = {canonical_pair(i, j) for i, j in truth_edges}
        self.feature_counts = feature_counts
        self.flip_noise = flip_noise
        self.seed = seed
        self.cost_per_test = cost_per_test

    def verify_pair(self, i: int, j: int) -> VerificationOutcome:
        a, b = canonical_pair(i, j)
        rng = np.random.default_rng((seed_key(self.seed), a, b))
        in_truth = (a, b) in self.truth
        flipped = self.flip_noise > 0.0 and rng.random() < self.flip_noise
        matched = in_truth != flipped
        inliers = 0
        if matched:
            if self.feature_counts is not None:
                cap = int(min(self.feature_counts[a], self.feature_counts[b]))
            else:
                cap = 1000
            inliers = max(1, int((0.2 + 0.6 * rng.random()) * cap))
        return VerificationOutcome(matched=matched, inliers=inliers, cost=self.cost_per_test)


class DescriptorOverlapVerifier:
    """Counts mutual nearest-neighbor matches passing the ratio test.

    A descriptor pair (x, y) counts when each is the other's nearest
    neighbor and the nearest/second-nearest distance ratio stays below
    ratio_threshold on both sides. Images with fewer than two descriptors
    make the ratio test vacuous on that side.
    """

    def __init__(
        self,
        collection: Collection,
        min_matches: int = DEFAULT_MIN_MATCHES,
        ratio_threshold: float = DEFAULT_RATIO_THRESHOLD,
        cost_per_test: float = 1.0,
    ):
        self.collection = collection
        self.min_matches = min_matches
        self.ratio_threshold = ratio_threshold
        self.cost_per_test = cost_per_test

    def count_matches(self, i: int, j: int) -> int:
        a, b = canonical_pair(i, j)
        rows_a = np.asarray(self.collection.by_id(a).rows, dtype=np.float64)
        rows_b = np.asarray(self.collection.by_id(b).rows, dtype=np.float64)
        if rows_a.shape[0] == 0 or rows_b.shape[0] == 0:
            return 0
        d2 = (
            np.sum(rows_a**2, axis=1)[:, None]
            - 2.0 * rows_a @ rows_b.T
            + np.sum(rows_b**2, axis=1)[None, :]
        )
        np.maximum(d2, 0.0, out=d2)

        nn_ab = np.argmin(d2, axis=1)
        nn_ba = np.argmin(d2, axis=0)

        def ratio_ok(dists, axis):
            if dists.shape[axis] < 2:
                return np.ones(dists.shape[1 - axis], dtype=bool)
            two = np.sort(dists, axis=axis)
            best = np.take(two, 0, axis=axis)
            second = np.take(two, 1, axis=axis)
            return np.sqrt(best) < self.ratio_threshold * np.sqrt(np.maximum(second, 1e-300))

        ok_a = ratio_ok(d2, axis=1)
        ok_b = ratio_ok(d2, axis=0)

        mutual = nn_ba[nn_ab] == np.arange(rows_a.shape[0])
        return int(np.sum(mutual & ok_a & ok_b[nn_ab]))

    def verify_pair(self, i: int, j: int) -> VerificationOutcome:
        start = time.perf_counter()
        count = self.count_matches(i, j)
        return VerificationOutcome(
            matched=count >= self.min_matches,
            inliers=count,
            cost=time.perf_counter() - start,
        )


class _Worker:
    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self.lock = threading.Lock()

    def request(self, i: int, j: int) -> VerificationOutcome:
        start = time.perf_counter()
        with self.lock:
            if self.proc.poll() is not None:
                raise ProtocolError(f"external verifier exited with {self.proc.returncode}")
            try:
                self.proc.stdin.write(f"VERIFY {i} {j}\n")
                self.proc.stdin.flush()
                line = self.proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise ProtocolError(f"external verifier pipe failed: {exc}") from exc
        if not line:
            raise ProtocolError("external verifier closed its output stream")
        parts = line.split()
        if len(parts) != 5 or parts[0] != "RESULT":
            raise ProtocolError(f"malformed response line: {line.rstrip()!r}")
        try:
            ri, rj, flag, inliers = (int(p) for p in parts[1:])
        except ValueError as exc:
            raise ProtocolError(f"non-integer field in response: {line.rstrip()!r}") from exc
        if (ri, rj) != (i, j):
            raise ProtocolError(f"response echoes pair ({ri}, {rj}), expected ({i}, {j})")
        if flag not in (0, 1) or inliers < 0:
            raise ProtocolError(f"invalid flag or inlier count: {line.rstrip()!r}")
        return VerificationOutcome(
            matched=bool(flag), inliers=inliers, cost=time.perf_counter() - start
        )

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class ExternalVerifier:
    """Pool of child processes speaking the line protocol, one request in
    flight per worker."""

    def __init__(self, command: str, workers: int = 1, cost_per_test: float = 1.0):
        if workers < 1:
            raise ValueError("need at least one worker")
        self.command = command
        self.cost_per_test = cost_per_test
        self._workers = [_Worker(command) for _ in range(workers)]
        self._cursor = 0
        self._cursor_lock = threading.Lock()

    def _next_worker(self) -> _Worker:
        with self._cursor_lock:
            worker = self._workers[self._cursor % len(self._workers)]
            self._cursor += 1
        return worker

    def verify_pair(self, i: int, j: int) -> VerificationOutcome:
        a, b = canonical_pair(i, j)
        return self._next_worker().request(a, b)

    def close(self):
        for w in self._workers:
            w.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def make_verifier(
    cfg: VerifierConfig,
    collection: Collection | None = None,
    truth_edges=None,
    threads: int = 1,
):
    """Instantiate the verifier described by cfg, wiring in its context."""
    if cfg.kind == "synthetic":
        if truth_edges is None:
            raise ValueError("synthetic verifier requires a ground-truth edge set")
        counts = collection.feature_counts() if collection is not None else None
        return SyntheticVerifier(
            truth_edges,
            feature_counts=counts,
            flip_noise=cfg.flip_noise,
            seed=cfg.seed,
            cost_per_test=cfg.cost_per_test,
        )
    if cfg.kind == "descriptor_overlap":
        if collection is None:
            raise ValueError("descriptor_overlap verifier requires a descriptor collection")
        return DescriptorOverlapVerifier(
            collection,
            min_matches=cfg.min_matches,
            ratio_threshold=cfg.ratio_threshold,
            cost_per_test=cfg.cost_per_test,
        )
    return ExternalVerifier(cfg.command, workers=threads, cost_per_test=cfg.cost_per_test)


def verify_batch(verifier, pairs, threads: int = 1) -> list[VerificationOutcome]:
    """Verify a batch of pairs; results align with the input pair order
    regardless of how many threads do the work."""
    return ordered_map(lambda p: verifier.verify_pair(p[0], p[1]), list(pairs), threads)
