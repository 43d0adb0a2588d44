import json

import numpy as np
import pytest

import vismem
from vismem import (VisualMemory, QuerySet, VoteConfig, compare_pruning,
                    estimate_reliability, hard_prune, reliability_factor, soft_prune)
from vismem.classify import vote_weights
from vismem.errors import InvalidThreshold, StaleReport
from vismem.prune import load_report, save_report

from conftest import cluster_data, make_memory
from oracles import count_wrong_votes


class TestReliabilityFactor:
    def test_paper_values(self):
        assert reliability_factor(0) == 1.0
        assert reliability_factor(1) == 0.875
        assert abs(reliability_factor(10) - 1.75 / 11) < 1e-15
        assert abs(reliability_factor(100) - 1.75 / 101) < 1e-15
        # two-decimal renderings: 0.88, 0.16, 0.02
        assert round(reliability_factor(1), 2) == 0.88
        assert round(reliability_factor(10), 2) == 0.16
        assert round(reliability_factor(100), 2) == 0.02

    def test_zero_votes_is_exactly_one_not_d_over_c(self):
        assert reliability_factor(0, c=1.0, d=1.75) == 1.0

    def test_monotone_non_increasing(self):
        vals = [reliability_factor(v) for v in range(1, 200)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert all(0 < v <= 1 for v in vals)


POISON_K = 20  # estimation depth that keeps the poison's own neighborhood inside A


@pytest.fixture
def poisoned_memory():
    """Small cluster A overlapping a denser cluster C, plus a far cluster B;
    one entry at A's core wears B's label. A's boundary queries misclassify
    toward C and charge only the off-profile poison."""
    rng = np.random.default_rng(43)
    dims = 16
    a_dir = np.zeros(dims); a_dir[0] = 1.0
    c_dir = np.zeros(dims); c_dir[0] = 0.88; c_dir[1] = np.sqrt(1 - 0.88 ** 2)
    b_dir = np.zeros(dims); b_dir[2] = 1.0                   # far away
    spread = 0.35 / np.sqrt(dims)  # expected offset norm 0.35

    def cloud(center, n):
        return center + spread * rng.standard_normal((n, dims))

    vecs = np.vstack([cloud(a_dir, 40), cloud(c_dir, 120), cloud(b_dir, 40),
                      a_dir[None, :]])  # poison last: exactly at A's core
    names = ["A"] * 40 + ["C"] * 120 + ["B"] * 40 + ["B"]
    return make_memory(vecs, names), 200  # poison id


class TestEstimate:
    def test_clean_memory_all_zero(self):
        rng = np.random.default_rng(7)
        pts, names, _ = cluster_data(rng, classes=4, per_class=30, dims=16, spread=0.05)
        m = make_memory(pts, names)
        report = estimate_reliability(m, k_retrieve=20)
        assert report.wrong_votes.sum() == 0

    def test_poisoned_entry_charged_cleans_spared(self, poisoned_memory):
        m, poison_id = poisoned_memory
        report = estimate_reliability(m, config=VoteConfig("plurality", k=POISON_K), k_retrieve=POISON_K)
        assert report.v_of(poison_id) > 0
        clean = report.wrong_votes[report.ids != poison_id]
        assert clean.sum() == 0

    def test_matches_naive_counting_oracle(self, poisoned_memory):
        m, _ = poisoned_memory
        config = VoteConfig("rank", k=25)
        report = estimate_reliability(m, config=config, k_retrieve=25)
        expected = count_wrong_votes(m.vectors, m.ids, m.label_ids, 25,
                                     lambda d: vote_weights(d, config), charge_rule="both")
        for i, eid in enumerate(report.ids):
            assert report.wrong_votes[i] == expected[int(eid)]

    def test_charge_rule_variants(self, poisoned_memory):
        m, _ = poisoned_memory
        for rule in ("true_only", "predicted_only"):
            config = VoteConfig("rank", k=25)
            report = estimate_reliability(m, config=config, k_retrieve=25, charge_rule=rule)
            expected = count_wrong_votes(m.vectors, m.ids, m.label_ids, 25,
                                         lambda d: vote_weights(d, config), charge_rule=rule)
            for i, eid in enumerate(report.ids):
                assert report.wrong_votes[i] == expected[int(eid)]

    def test_sum_bounded_by_misclassified_times_k(self, poisoned_memory):
        m, _ = poisoned_memory
        k = 25
        report = estimate_reliability(m, k_retrieve=k)
        assert report.wrong_votes.sum() <= len(m) * k

    def test_k_retrieve_too_large(self, poisoned_memory):
        m, _ = poisoned_memory
        with pytest.raises(ValueError):
            estimate_reliability(m, k_retrieve=len(m))

    def test_deterministic(self, poisoned_memory):
        m, _ = poisoned_memory
        a = estimate_reliability(m, k_retrieve=25)
        b = estimate_reliability(m, k_retrieve=25)
        np.testing.assert_array_equal(a.wrong_votes, b.wrong_votes)


class TestHardPrune:
    def test_below_threshold_unchanged(self, poisoned_memory):
        m, _ = poisoned_memory
        report = estimate_reliability(m, k_retrieve=25)
        n = len(m)
        hard_prune(m, report, threshold=10_000)
        assert len(m) == n

    def test_threshold_zero_rejected(self, poisoned_memory):
        m, _ = poisoned_memory
        report = estimate_reliability(m, k_retrieve=25)
        with pytest.raises(InvalidThreshold):
            hard_prune(m, report, threshold=0)

    def test_pruned_ids_unreachable(self, poisoned_memory):
        m, poison_id = poisoned_memory
        report = estimate_reliability(m, config=VoteConfig("plurality", k=POISON_K), k_retrieve=POISON_K)
        hard_prune(m, report, threshold=1)
        assert poison_id not in m
        ns = vismem.exact_search(m, m.vectors[0], len(m))
        assert poison_id not in ns.entry_ids

    def test_stale_report_rejected(self, poisoned_memory):
        m, _ = poisoned_memory
        report = estimate_reliability(m, k_retrieve=25)
        m.remove([int(m.ids[0])])
        with pytest.raises(StaleReport):
            hard_prune(m, report, threshold=1)


class TestSoftPrune:
    def test_gammas_set(self, poisoned_memory):
        m, poison_id = poisoned_memory
        report = estimate_reliability(m, config=VoteConfig("plurality", k=POISON_K), k_retrieve=POISON_K)
        soft_prune(m, report)
        v = report.v_of(poison_id)
        assert m.entry(poison_id).gamma == min(1.0, 1.75 / (1 + v))
        clean_rows = m.ids != poison_id
        np.testing.assert_array_equal(m.gammas[clean_rows], 1.0)

    def test_gamma_in_unit_interval(self, poisoned_memory):
        m, _ = poisoned_memory
        report = estimate_reliability(m, config=VoteConfig("plurality", k=POISON_K), k_retrieve=POISON_K)
        soft_prune(m, report, c=0.5, d=3.0)  # d/(c+1) would exceed 1 unclamped
        assert np.all(m.gammas > 0) and np.all(m.gammas <= 1.0)

    def test_stale_report_rejected(self, poisoned_memory):
        m, _ = poisoned_memory
        report = estimate_reliability(m, k_retrieve=25)
        m.remove([int(m.ids[0])])
        with pytest.raises(StaleReport):
            soft_prune(m, report)


class TestComparePruning:
    def test_clean_fixture_rows_equal(self):
        rng = np.random.default_rng(8)
        pts, names, means = cluster_data(rng, classes=4, per_class=60, dims=16, spread=0.05)
        m = make_memory(pts, names)
        from conftest import make_queries
        qv = np.repeat(means, 10, axis=0)
        qv = qv + (0.05 / np.sqrt(16)) * rng.standard_normal(qv.shape)
        queries = make_queries(qv, [f"c{c:02d}" for c in np.repeat(np.arange(4), 10)])
        rows = compare_pruning(m, queries, schemes=("rank",), k_max=50)
        accs = {r["pruning"]: r["best_accuracy"] for r in rows}
        assert accs["none"] == accs["hard"] == accs["soft"]

    def test_noisy_fixture_soft_at_least_none(self, tmp_path):
        # frozen fixture verified to show the Table-3 ordering
        vismem.gen_fixture(tmp_path / "m", classes=10, dims=32, noise_fraction=0.10,
                           seed=11, class_separation=0.3, spread=0.45,
                           per_class=[600, 150] * 5, holdout_per_class=60,
                           queries_out=tmp_path / "q")
        m = VisualMemory.build(tmp_path / "m")
        q = QuerySet.load(tmp_path / "q")
        rows = compare_pruning(m, q, schemes=("rank", "plurality"), k_max=100)
        accs = {(r["pruning"], r["scheme"]): r["best_accuracy"] for r in rows}
        for scheme in ("rank", "plurality"):
            assert accs[("soft", scheme)] >= accs[("none", scheme)]


class TestReportIO:
    def test_round_trip(self, poisoned_memory, tmp_path):
        m, _ = poisoned_memory
        report = estimate_reliability(m, k_retrieve=25)
        save_report(report, tmp_path / "reliability.jsonl")
        back = load_report(tmp_path / "reliability.jsonl")
        np.testing.assert_array_equal(report.ids, back.ids)
        np.testing.assert_array_equal(report.wrong_votes, back.wrong_votes)
        assert back.params["k_retrieve"] == 25
        assert back.generation == report.generation
        # loaded report still usable against the same memory
        hard_prune(m, back, threshold=10_000)

    def test_header_records_rule(self, poisoned_memory, tmp_path):
        m, _ = poisoned_memory
        report = estimate_reliability(m, k_retrieve=25, charge_rule="true_only")
        save_report(report, tmp_path / "r.jsonl")
        header = json.loads((tmp_path / "r.jsonl").read_text().splitlines()[0])
        assert header["params"]["charge_rule"] == "true_only"
