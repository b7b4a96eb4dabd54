import sys
from pathlib import Path

import numpy as np
import pytest

from matchgraph.descriptors import Collection, DescriptorSet
from matchgraph.errors import ProtocolError
from matchgraph.verify import (
    DescriptorOverlapVerifier,
    ExternalVerifier,
    SyntheticVerifier,
    VerifierConfig,
    inlier_ratio_score,
    make_verifier,
    verify_batch,
)

from conftest import make_collection

WORKER = Path(__file__).parent / "external_worker.py"


def worker_cmd(*args):
    return " ".join([sys.executable, str(WORKER), *args])


def test_synthetic_passthrough_no_noise():
    v = SyntheticVerifier({(0, 1), (2, 3)}, flip_noise=0.0, seed=1)
    assert v.verify_pair(0, 1).matched
    assert v.verify_pair(3, 2).matched
    assert not v.verify_pair(0, 2).matched


def test_synthetic_symmetric_and_deterministic_with_noise():
    truth = {(0, 1), (1, 2), (3, 4)}
    v1 = SyntheticVerifier(truth, flip_noise=0.4, seed=9)
    v2 = SyntheticVerifier(truth, flip_noise=0.4, seed=9)
    for i in range(5):
        for j in range(i + 1, 5):
            a = v1.verify_pair(i, j)
            b = v1.verify_pair(j, i)
            c = v2.verify_pair(i, j)
            assert a.matched == b.matched == c.matched
            assert a.inliers == b.inliers == c.inliers


def test_synthetic_noise_flips_some_answers():
    truth = {(i, j) for i in range(20) for j in range(i + 1, 20) if (i + j) % 3 == 0}
    v = SyntheticVerifier(truth, flip_noise=0.3, seed=5)
    flips = sum(
        v.verify_pair(i, j).matched != ((i, j) in truth)
        for i in range(20)
        for j in range(i + 1, 20)
    )
    total = 20 * 19 // 2
    assert 0.15 * total < flips < 0.45 * total


def test_synthetic_inliers_bounded_by_feature_counts():
    counts = np.array([30, 50, 10])
    v = SyntheticVerifier({(0, 1), (0, 2)}, feature_counts=counts, seed=0)
    out = v.verify_pair(0, 2)
    assert out.matched and 1 <= out.inliers <= 10


def test_inlier_ratio_score_hand_values():
    assert inlier_ratio_score(50, 100, 200, 40, 80) == pytest.approx(0.25)
    assert inlier_ratio_score(100, 100, 100, 100, 100) == pytest.approx(1.0)
    assert inlier_ratio_score(0, 100, 200, 40, 80) == 0.0


def test_inlier_ratio_score_validation():
    with pytest.raises(ValueError, match=">= 1"):
        inlier_ratio_score(1, 0, 5, 1, 5)
    with pytest.raises(ValueError, match="exceeds"):
        inlier_ratio_score(200, 100, 100, 1, 100)


def exact_copy_collection():
    rng = np.random.default_rng(0)
    rows = rng.normal(size=(40, 8)).astype(np.float32)
    other = rng.normal(size=(40, 8)).astype(np.float32)
    return Collection(
        [
            DescriptorSet(image_id=0, dim=8, rows=rows),
            DescriptorSet(image_id=1, dim=8, rows=rows.copy()),
            DescriptorSet(image_id=2, dim=8, rows=other),
        ]
    )


def test_descriptor_overlap_exact_copy_matches():
    c = exact_copy_collection()
    v = DescriptorOverlapVerifier(c, min_matches=30, ratio_threshold=0.8)
    out = v.verify_pair(0, 1)
    assert out.matched and out.inliers == 40


def test_descriptor_overlap_random_images_do_not_match():
    # chance mutual-NN matches passing the ratio test were measured by
    # Monte Carlo at far below 30 for independent 128-D clouds
    rng = np.random.default_rng(42)
    for trial in range(5):
        c = Collection(
            [
                DescriptorSet(
                    image_id=k, dim=128, rows=rng.normal(size=(100, 128)).astype(np.float32)
                )
                for k in range(2)
            ]
        )
        v = DescriptorOverlapVerifier(c, min_matches=30)
        out = v.verify_pair(0, 1)
        assert not out.matched
        assert out.inliers < 30


def test_descriptor_overlap_symmetric_and_permutation_invariant():
    rng = np.random.default_rng(3)
    rows0 = rng.normal(size=(25, 6)).astype(np.float32)
    rows1 = (rows0 + rng.normal(0, 0.05, size=(25, 6))).astype(np.float32)
    c1 = Collection(
        [
            DescriptorSet(image_id=0, dim=6, rows=rows0),
            DescriptorSet(image_id=1, dim=6, rows=rows1),
        ]
    )
    perm = rng.permutation(25)
    c2 = Collection(
        [
            DescriptorSet(image_id=0, dim=6, rows=rows0[perm]),
            DescriptorSet(image_id=1, dim=6, rows=rows1),
        ]
    )
    v1 = DescriptorOverlapVerifier(c1, min_matches=5)
    v2 = DescriptorOverlapVerifier(c2, min_matches=5)
    assert v1.verify_pair(0, 1).inliers == v1.verify_pair(1, 0).inliers
    assert v1.verify_pair(0, 1).inliers == v2.verify_pair(0, 1).inliers


def test_external_verifier_round_trip():
    with ExternalVerifier(worker_cmd("parity"), workers=2) as v:
        out = v.verify_pair(2, 4)
        assert out.matched and out.inliers == 6
        out = v.verify_pair(2, 3)
        assert not out.matched


def test_external_verifier_batch_matches_protocol():
    pairs = [(i, j) for i in range(6) for j in range(i + 1, 6)]
    with ExternalVerifier(worker_cmd("parity"), workers=3) as v:
        outcomes = verify_batch(v, pairs, threads=3)
    for (i, j), out in zip(pairs, outcomes):
        assert out.matched == ((i + j) % 2 == 0)


def test_external_verifier_protocol_violation():
    with ExternalVerifier(worker_cmd("garbage")) as v:
        with pytest.raises(ProtocolError, match="malformed response"):
            v.verify_pair(0, 1)


def test_external_verifier_wrong_echo():
    with ExternalVerifier(worker_cmd("swap")) as v:
        with pytest.raises(ProtocolError, match="echoes pair"):
            v.verify_pair(0, 1)


def test_external_verifier_dead_command():
    with ExternalVerifier(f"{sys.executable} -c 'pass'") as v:
        with pytest.raises(ProtocolError):
            v.verify_pair(0, 1)


def test_verifier_config_validation():
    with pytest.raises(ValueError, match="unknown verifier kind"):
        VerifierConfig(kind="ransac")
    with pytest.raises(ValueError, match="ratio_threshold"):
        VerifierConfig(ratio_threshold=1.0)
    with pytest.raises(ValueError, match="flip_noise"):
        VerifierConfig(flip_noise=1.0)
    with pytest.raises(ValueError, match="requires a command"):
        VerifierConfig(kind="external")


def test_make_verifier_wiring(collection):
    v = make_verifier(VerifierConfig(kind="synthetic"), truth_edges={(0, 1)})
    assert isinstance(v, SyntheticVerifier)
    v = make_verifier(VerifierConfig(kind="descriptor_overlap"), collection=collection)
    assert isinstance(v, DescriptorOverlapVerifier)
    with pytest.raises(ValueError, match="ground-truth"):
        make_verifier(VerifierConfig(kind="synthetic"))


def test_verify_batch_order_independent_of_threads():
    truth = {(i, j) for i in range(10) for j in range(i + 1, 10) if (i * j) % 4 == 1}
    v = SyntheticVerifier(truth, flip_noise=0.2, seed=3)
    pairs = [(i, j) for i in range(10) for j in range(i + 1, 10)]
    one = verify_batch(v, pairs, threads=1)
    many = verify_batch(v, pairs, threads=8)
    assert one == many
