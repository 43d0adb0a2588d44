import numpy as np
import pytest

import vismem
from vismem import (VoteConfig, calibrate, evaluate, fit_scaling, hit_rate,
                    ood_distance_stats, reliability_at_k, residual_query)
from vismem.errors import DegenerateFit, DegenerateResidual, EmptyMemory

from conftest import cluster_data, make_memory, make_queries


@pytest.fixture(scope="module")
def clustered():
    rng = np.random.default_rng(55)
    pts, names, means = cluster_data(rng, classes=8, per_class=80, dims=32,
                                     spread=0.45, separation=0.35)
    m = make_memory(pts, names)
    qv = np.repeat(means, 30, axis=0)
    qv = qv + (0.45 / np.sqrt(32)) * rng.standard_normal(qv.shape)
    qv /= np.linalg.norm(qv, axis=1, keepdims=True)
    queries = make_queries(qv, [f"c{c:02d}" for c in np.repeat(np.arange(8), 30)])
    return m, queries


class TestReliabilityAtK:
    def test_self_kept_index_zero_perfect(self, clustered):
        m, _ = clustered
        self_queries = make_queries(m.vectors.copy(),
                                    [m.labels.name_of(l) for l in m.label_ids],
                                    ids=m.ids.copy())
        acc, _ = reliability_at_k(m, self_queries, 10)
        assert acc[0] == 1.0

    def test_decay_and_negative_slope(self, clustered):
        m, queries = clustered
        acc, fit = reliability_at_k(m, queries, 60)
        assert fit.coefficients[1] < 0  # b in a + b*ln(i+1)
        assert acc[0] > acc[-1]

    def test_above_chance_at_tail(self, clustered):
        m, queries = clustered
        acc, _ = reliability_at_k(m, queries, 60)
        assert acc[-1] > 1 / 8  # 8 classes


class TestHitRate:
    def test_non_decreasing(self, clustered):
        m, queries = clustered
        hr = hit_rate(m, queries, 80)
        assert np.all(np.diff(hr) >= 0)

    def test_k1_equals_nn_accuracy(self, clustered):
        m, queries = clustered
        hr = hit_rate(m, queries, 10)
        nn_acc = evaluate(m, queries, VoteConfig("plurality", k=1)).accuracy_at(1)
        assert hr[0] == nn_acc

    def test_full_depth_with_all_classes_present(self, clustered):
        m, queries = clustered
        hr = hit_rate(m, queries, len(m))
        assert hr[-1] == 1.0

    def test_upper_bounds_every_scheme(self, clustered):
        m, queries = clustered
        k_max = 60
        hr = hit_rate(m, queries, k_max)
        for scheme in ("plurality", "distance", "softmax", "rank"):
            accs = evaluate(m, queries, VoteConfig(scheme, k=k_max)).accuracies
            assert np.all(hr >= accs - 1e-12)


class TestCalibrate:
    def test_bins_partition_queries(self, clustered):
        m, queries = clustered
        table = calibrate(m, queries, bin_width=10)
        assert sum(table.counts) == len(queries)

    def test_requires_hundred_entries(self):
        rng = np.random.default_rng(1)
        m = make_memory(rng.standard_normal((50, 8)), ["a"] * 50)
        with pytest.raises(EmptyMemory):
            calibrate(m, make_queries(rng.standard_normal((5, 8)), ["a"] * 5))

    def test_unanimous_neighbors_top_bin(self):
        rng = np.random.default_rng(2)
        pts, names, means = cluster_data(rng, classes=2, per_class=100, dims=16, spread=0.02)
        m = make_memory(pts, names)
        queries = make_queries(means, ["c00", "c01"])
        table = calibrate(m, queries, bin_width=10)
        assert table.counts[-1] == 2
        assert table.accuracies[-1] == 1.0

    def test_accuracy_trends_up(self, clustered):
        m, queries = clustered
        table = calibrate(m, queries, bin_width=25)
        filled = [(lo, a) for lo, c, a in zip(table.bin_lows, table.counts, table.accuracies)
                  if c >= 10]
        if len(filled) >= 2:
            assert filled[-1][1] >= filled[0][1]


class TestFitScaling:
    def test_recovers_reference_coefficients(self):
        m_ref, q_ref = -0.9434, 2.0704
        sizes = np.array([1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9])
        errors = 10 ** (m_ref * np.log10(sizes) + q_ref)
        fit = fit_scaling(list(zip(sizes, errors)))
        assert abs(fit.coefficients[0] - m_ref) < 1e-9
        assert abs(fit.coefficients[1] - q_ref) < 1e-9

    def test_two_points_interpolate_exactly(self):
        fit = fit_scaling([(10, 50), (1000, 5)])
        assert fit.rss < 1e-20

    def test_order_invariant(self):
        pts = [(10, 50), (100, 20), (1000, 5)]
        a = fit_scaling(pts)
        b = fit_scaling(pts[::-1])
        np.testing.assert_allclose(a.coefficients, b.coefficients, rtol=1e-12)

    def test_degenerate_rejected(self):
        with pytest.raises(DegenerateFit):
            fit_scaling([(10, 5), (10, 7)])

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            fit_scaling([(10, 0.0), (100, 5)])

    def test_subsample_ladder_slope_negative(self, clustered):
        m, queries = clustered
        points = []
        for per_class in (1, 5, 20, 80):
            sub = m.subsample(per_class, seed=3)
            acc = evaluate(sub, queries, VoteConfig("rank", k=1)).accuracy_at(1)
            err = max(1e-6, 1 - acc)
            points.append((len(sub), err))
        fit = fit_scaling(points)
        assert fit.coefficients[0] < 0


class TestOodStats:
    def test_self_pack_contains_zero_distance(self, clustered):
        m, _ = clustered
        self_queries = make_queries(m.vectors[:50].copy(),
                                    [m.labels.name_of(l) for l in m.label_ids[:50]],
                                    ids=m.ids[:50].copy())
        stats = ood_distance_stats(m, {"self": self_queries}, k=10)
        # per-query min distance 0 drags the mean below the median pack-wide
        assert stats["self"]["mean"] < 1.0

    def test_shifted_pack_larger_mean(self, clustered):
        m, queries = clustered
        rng = np.random.default_rng(9)
        far = rng.standard_normal((60, m.dims)) + 4.0
        far_queries = make_queries(far, ["x"] * 60)
        stats = ood_distance_stats(m, {"in": queries, "far": far_queries}, k=50)
        assert stats["far"]["mean"] > stats["in"]["mean"]
        assert stats["far"]["median"] > stats["in"]["median"]


class TestResidualQuery:
    def test_two_concept_composition(self):
        rng = np.random.default_rng(12)
        basis, _ = np.linalg.qr(rng.standard_normal((64, 64)))
        m = make_memory(basis.T, [f"concept{i:02d}" for i in range(64)])
        a_row, b_row = 3, 40
        a_id, b_id = int(m.ids[a_row]), int(m.ids[b_row])
        q = m.vectors[a_row].astype(np.float64) + m.vectors[b_row].astype(np.float64)
        q /= np.linalg.norm(q)
        primary, residual = residual_query(m, q.astype(np.float32), 3)
        assert primary[0].entry_id in (a_id, b_id)
        other = b_id if primary[0].entry_id == a_id else a_id
        assert residual[0].entry_id == other

    def test_subtracted_neighbor_excluded(self, clustered):
        m, queries = clustered
        primary, residual = residual_query(m, queries.vectors[0], 20)
        assert primary[0].entry_id not in residual.entry_ids

    def test_exact_match_degenerate(self, clustered):
        m, _ = clustered
        with pytest.raises(DegenerateResidual):
            residual_query(m, m.vectors[17], 5)

    def test_orthogonality_identity(self, clustered):
        # <normalize(q - z0), z0> == (<q, z0> - 1) / |q - z0|
        m, queries = clustered
        q = queries.vectors[3].astype(np.float64)
        primary, _ = residual_query(m, queries.vectors[3], 5)
        z0 = m.vectors[m.row_of(primary[0].entry_id)].astype(np.float64)
        r = q - z0
        lhs = float(np.dot(r / np.linalg.norm(r), z0))
        rhs = (float(np.dot(q, z0)) - float(np.dot(z0, z0))) / np.linalg.norm(r)
        assert abs(lhs - rhs) < 1e-9

    def test_needs_two_entries(self):
        rng = np.random.default_rng(3)
        m = make_memory(rng.standard_normal((1, 8)), ["a"])
        with pytest.raises(EmptyMemory):
            residual_query(m, rng.standard_normal(8).astype(np.float32), 1)
