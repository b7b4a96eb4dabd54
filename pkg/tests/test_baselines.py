import math

import numpy as np
import pytest

from matchgraph.baselines import (
    BaselineConfig,
    _pair_from_linear,
    run_brute_force,
    run_query_expansion,
    run_random,
)
from matchgraph.fisher import FisherVector
from matchgraph.prior import build_prior_index
from matchgraph.verify import SyntheticVerifier


def line_index(values):
    vecs = [FisherVector(image_id=i, values=np.array([float(v)])) for i, v in enumerate(values)]
    return build_prior_index(vecs)


def test_pair_linearization_bijective():
    n = 9
    seen = set()
    for m in range(math.comb(n, 2)):
        i, j = _pair_from_linear(m, n)
        assert 0 <= i < j < n
        seen.add((i, j))
    assert len(seen) == math.comb(n, 2)


def test_brute_force_tests_every_pair():
    truth = {(0, 1), (2, 3)}
    graph, metrics = run_brute_force(5, SyntheticVerifier(truth))
    assert metrics.cum_tested == 10
    assert graph.tested_count == 10
    assert set(graph.edges()) == truth


def test_brute_force_efficiency_equals_density():
    truth = {(i, i + 1) for i in range(7)}
    graph, metrics = run_brute_force(8, SyntheticVerifier(truth))
    assert metrics.overall_efficiency() == pytest.approx(len(truth) / math.comb(8, 2))


def test_random_full_budget_equals_brute_force():
    truth = {(0, 2), (1, 3), (4, 5)}
    cfg = BaselineConfig(kind="random", budget=math.comb(6, 2), seed=1)
    g_rand, _ = run_random(6, SyntheticVerifier(truth), cfg)
    g_bf, _ = run_brute_force(6, SyntheticVerifier(truth))
    assert g_rand.edges() == g_bf.edges()


def test_random_zero_budget():
    graph, metrics = run_random(6, SyntheticVerifier(set()), BaselineConfig(kind="random", budget=0))
    assert graph.tested_count == 0
    assert metrics.records == []


def test_random_budget_validation():
    with pytest.raises(ValueError, match="exceeds"):
        run_random(4, SyntheticVerifier(set()), BaselineConfig(kind="random", budget=7))


def test_random_deterministic_and_distinct():
    truth = {(0, 1)}
    cfg = BaselineConfig(kind="random", budget=12, seed=9)
    g1, m1 = run_random(8, SyntheticVerifier(truth, seed=9), cfg)
    g2, m2 = run_random(8, SyntheticVerifier(truth, seed=9), cfg)
    assert g1.tested_pairs() == g2.tested_pairs()
    assert g1.tested_count == 12
    assert m1.records == m2.records


def test_random_efficiency_near_density():
    # Monte Carlo over seeds: mean efficiency approaches the density
    n = 40
    truth = {(i, j) for i in range(n) for j in range(i + 1, n) if (i + 3 * j) % 11 == 0}
    density = len(truth) / math.comb(n, 2)
    effs = []
    for seed in range(30):
        cfg = BaselineConfig(kind="random", budget=120, seed=seed)
        _, metrics = run_random(n, SyntheticVerifier(truth), cfg)
        effs.append(metrics.overall_efficiency())
    assert np.mean(effs) == pytest.approx(density, abs=0.02)


def qe_world(n=14):
    # chain-of-clusters layout: consecutive ids close together
    idx = line_index([float(i) for i in range(n)])
    truth = {(i, j) for i in range(n) for j in range(i + 1, n) if j - i <= 2}
    return idx, truth


def test_query_expansion_paper_setting_runs():
    idx, truth = qe_world()
    cfg = BaselineConfig(kind="query_expansion", retrieval_k=3, expansion_rounds=4, seed=0)
    graph, metrics = run_query_expansion(idx, SyntheticVerifier(truth), cfg)
    stages = metrics.stages()
    assert stages[0] == "retrieval"
    assert [r.iteration for r in metrics.records if r.stage == "expansion"] == [1, 2, 3, 4]


def test_query_expansion_zero_rounds_is_pure_retrieval():
    idx, truth = qe_world()
    cfg = BaselineConfig(kind="query_expansion", retrieval_k=2, expansion_rounds=0)
    graph, metrics = run_query_expansion(idx, SyntheticVerifier(truth), cfg)
    assert metrics.stages() == ["retrieval"]
    # each image tested against its 2 nearest, deduplicated
    assert metrics.cum_tested == graph.tested_count


def test_query_expansion_rejects_large_k():
    idx, _ = qe_world(6)
    cfg = BaselineConfig(kind="query_expansion", retrieval_k=6)
    with pytest.raises(ValueError, match="smaller than N"):
        run_query_expansion(idx, SyntheticVerifier(set()), cfg)


def test_query_expansion_subset_of_brute_force():
    idx, truth = qe_world()
    verifier = SyntheticVerifier(truth)
    cfg = BaselineConfig(kind="query_expansion", retrieval_k=3, expansion_rounds=2)
    graph, _ = run_query_expansion(idx, verifier, cfg)
    bf, _ = run_brute_force(14, SyntheticVerifier(truth))
    assert set(graph.edges()) <= set(bf.edges())


def test_baseline_config_validation():
    with pytest.raises(ValueError, match="unknown baseline"):
        BaselineConfig(kind="voc_tree")
    with pytest.raises(ValueError, match="retrieval_k"):
        BaselineConfig(kind="query_expansion", retrieval_k=0)
