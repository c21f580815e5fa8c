"""Credibility kernels: DTW, PCA, the five metrics, staged assessment."""

import math

import numpy as np
import pytest

from oracles import (cross_fuzzy_en_oracle, cs_psd_oracle, dtw_distance_enumerate,
                     dtw_distance_oracle, pcc_oracle, rmse_oracle, tic_oracle)
from twinbench.credibility import (CredibilityConfig, CredibilityError,
                                   CredibilityReport, DegenerateError,
                                   SeriesMatrix, assess_matrices, cross_fuzzy_en,
                                   cs_psd, dtw_align, pca_reduce, pcc,
                                   recommend_mix, rmse, standardize, tic)


class TestDtw:
    def test_identity_zero_distance_diagonal(self):
        a = np.array([1.0, 2.0, 3.0, 2.0])
        res = dtw_align(a, a)
        assert res.distance == 0.0
        assert res.path == [(i, i) for i in range(4)]
        assert np.array_equal(res.warped_a, res.warped_b)

    def test_insertion_costs_nothing(self):
        res = dtw_align([0.0, 1.0], [0.0, 0.0, 1.0])
        assert res.distance == pytest.approx(0.0, abs=1e-15)
        assert dtw_distance_enumerate([0.0, 1.0], [0.0, 0.0, 1.0]) == pytest.approx(0.0)

    def test_singletons(self):
        assert dtw_align([1.0], [2.0]).distance == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(CredibilityError):
            dtw_align([], [1.0])

    def test_symmetric_distance(self, rng):
        for _ in range(50):
            a = rng.normal(size=int(rng.integers(2, 20)))
            b = rng.normal(size=int(rng.integers(2, 20)))
            assert dtw_align(a, b).distance == pytest.approx(
                dtw_align(b, a).distance, abs=1e-9)

    def test_leq_euclidean_for_equal_lengths(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 25))
            a, b = rng.normal(size=n), rng.normal(size=n)
            eu = float(np.abs(a - b).sum())  # cost of the pure diagonal path
            assert dtw_align(a, b).distance <= eu + 1e-12

    def test_warped_lengths_match_path(self, rng):
        a, b = rng.normal(size=7), rng.normal(size=11)
        res = dtw_align(a, b)
        assert len(res.warped_a) == len(res.path) == len(res.warped_b)
        i_prev, j_prev = -1, -1
        for i, j in res.path:
            assert i >= i_prev and j >= j_prev  # monotone
            i_prev, j_prev = i, j
        assert res.path[0] == (0, 0) and res.path[-1] == (6, 10)

    def test_oracle_equivalence_and_enumeration(self, rng):
        for k in range(60):
            n, m = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            a, b = rng.normal(size=n), rng.normal(size=m)
            got = dtw_align(a, b).distance
            assert got == pytest.approx(dtw_distance_oracle(a, b), abs=1e-9)
            assert got == pytest.approx(dtw_distance_enumerate(a, b), abs=1e-9)

    def test_multichannel_rowwise_euclidean(self, rng):
        a = rng.normal(size=(6, 3))
        b = rng.normal(size=(9, 3))
        got = dtw_align(a, b).distance
        assert got == pytest.approx(dtw_distance_oracle(a, b), abs=1e-9)


class TestPca:
    def test_line_data_recovers_direction(self, rng):
        t = rng.normal(size=200)
        m = np.column_stack([t, 2.0 * t])
        res = pca_reduce(m, 1)
        want = np.array([1.0, 2.0]) / math.sqrt(5.0)
        assert np.allclose(res.components[0], want, atol=1e-9)
        total = res.explained_variance.sum()
        assert res.explained_variance[0] == pytest.approx(
            np.cov(m.T).trace(), rel=1e-9)

    def test_full_rank_roundtrip(self, rng):
        m = rng.normal(size=(40, 5))
        res = pca_reduce(m, 5)
        rebuilt = res.projected @ res.components + res.mean
        assert np.abs(rebuilt - m).max() <= 1e-9

    def test_orthonormal_components(self, rng):
        m = rng.normal(size=(60, 6))
        res = pca_reduce(m, 6)
        gram = res.components @ res.components.T
        assert np.abs(gram - np.eye(6)).max() <= 1e-9

    def test_eigenvalue_sum_equals_trace(self, rng):
        m = rng.normal(size=(50, 4))
        res = pca_reduce(m, 4)
        cov = np.cov(m.T, ddof=1)
        assert res.explained_variance.sum() == pytest.approx(np.trace(cov), rel=1e-12)

    def test_descending_order_and_sign_convention(self, rng):
        m = rng.normal(size=(80, 5)) * np.array([5.0, 1.0, 3.0, 0.5, 2.0])
        res = pca_reduce(m, 5)
        ev = res.explained_variance
        assert all(e1 >= e2 - 1e-12 for e1, e2 in zip(ev, ev[1:]))
        for comp in res.components:
            assert comp[int(np.argmax(np.abs(comp)))] > 0

    def test_zero_variance_degenerate(self):
        with pytest.raises(DegenerateError):
            pca_reduce(np.ones((10, 3)), 1)

    def test_k_too_large_rejected(self, rng):
        with pytest.raises(CredibilityError):
            pca_reduce(rng.normal(size=(10, 2)), 3)


class TestPcc:
    def test_identity(self):
        a = np.array([1.0, 2.0, 5.0])
        assert pcc(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_negation(self):
        a = np.array([1.0, 2.0, 5.0])
        assert pcc(a, -a) == pytest.approx(-1.0, abs=1e-12)

    def test_hand_value(self):
        assert pcc([1, 2, 3], [1, 2, 4]) == pytest.approx(0.9820, abs=1e-4)

    def test_zero_variance_error(self):
        with pytest.raises(DegenerateError):
            pcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_affine_invariance(self, rng):
        a, b = rng.normal(size=30), rng.normal(size=30)
        base = pcc(a, b)
        assert pcc(3.0 * a + 7.0, b) == pytest.approx(base, abs=1e-9)
        assert pcc(a, 0.2 * b - 4.0) == pytest.approx(base, abs=1e-9)


class TestRmseTic:
    def test_rmse_identity_zero(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_rmse_closed_form(self):
        assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5), abs=1e-4)

    def test_rmse_single_sample(self):
        assert rmse([5.0], [3.0]) == 2.0

    def test_rmse_length_mismatch(self):
        with pytest.raises(CredibilityError):
            rmse([1.0], [1.0, 2.0])

    def test_tic_identity_zero(self):
        assert tic([1.0, 1.0], [1.0, 1.0]) == 0.0

    def test_tic_opposite_ones(self):
        assert tic([1.0, 1.0], [-1.0, -1.0]) == pytest.approx(1.0)

    def test_tic_against_zero_series(self):
        assert tic([1.0, 1.0], [0.0, 0.0]) == pytest.approx(1.0)

    def test_tic_both_zero_undefined(self):
        with pytest.raises(DegenerateError):
            tic([0.0, 0.0], [0.0, 0.0])

    def test_tic_in_unit_interval(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 30))
            a, b = rng.normal(size=n), rng.normal(size=n)
            assert 0.0 <= tic(a, b) <= 1.0 + 1e-12


class TestCrossFuzzyEn:
    def test_identical_smooth_series_is_small(self):
        # slow sine segment, 200 samples: the enumeration oracle puts the
        # self-similarity value at 0.0272, inside the 0.05 band
        t = np.arange(200)
        a = standardize(np.sin(2 * np.pi * 0.35 * t / 200))
        got = cross_fuzzy_en(a, a, m=2, r=0.2, n=2)
        assert got <= 0.05
        assert got == pytest.approx(cross_fuzzy_en_oracle(list(a), list(a)), abs=1e-6)

    def test_noise_pair_exceeds_identical(self):
        rng = np.random.Generator(np.random.PCG64(7))
        a = standardize(rng.normal(size=300))
        b = standardize(rng.normal(size=300))
        same = cross_fuzzy_en(a, a)
        cross = cross_fuzzy_en(a, b)
        assert cross > same

    def test_too_short_is_error(self):
        with pytest.raises(CredibilityError):
            cross_fuzzy_en(np.zeros(3), np.zeros(3), m=2)

    def test_oracle_equivalence(self, rng):
        for _ in range(40):
            n = int(rng.integers(8, 33))
            a = standardize(rng.normal(size=n))
            b = standardize(rng.normal(size=n))
            got = cross_fuzzy_en(a, b)
            want = cross_fuzzy_en_oracle(list(a), list(b))
            assert got == pytest.approx(want, abs=1e-6)


class TestCsPsd:
    def test_identity_one(self, rng):
        a = rng.normal(size=64)
        assert cs_psd(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_phase_blindness(self):
        t = np.arange(256) / 256.0
        a = np.sin(2 * np.pi * 8 * t)
        b = np.sin(2 * np.pi * 8 * t + 1.1)
        assert cs_psd(a, b) >= 0.999

    def test_disjoint_tones_near_zero(self):
        t = np.arange(256) / 256.0
        a = np.sin(2 * np.pi * 8 * t)
        b = np.sin(2 * np.pi * 24 * t)
        assert cs_psd(a, b) <= 0.1

    def test_time_shift_invariance_pure_tone(self):
        t = np.arange(256) / 256.0
        a = np.sin(2 * np.pi * 8 * t)
        b = np.sin(2 * np.pi * 8 * (t + 13.0 / 256.0))
        assert cs_psd(a, b) >= 0.999

    def test_oracle_equivalence(self, rng):
        for _ in range(30):
            n = int(rng.integers(8, 33))
            a, b = rng.normal(size=n), rng.normal(size=n)
            assert cs_psd(a, b) == pytest.approx(cs_psd_oracle(list(a), list(b)),
                                                 abs=1e-9)

    def test_too_short_rejected(self):
        with pytest.raises(CredibilityError):
            cs_psd(np.ones(4), np.ones(4))


class TestScalarOracles:
    def test_pcc_rmse_tic_on_random_series(self, rng):
        for _ in range(200):
            n = int(rng.integers(2, 33))
            a, b = rng.normal(size=n), rng.normal(size=n)
            assert pcc(a, b) == pytest.approx(pcc_oracle(list(a), list(b)), abs=1e-9)
            assert rmse(a, b) == pytest.approx(rmse_oracle(list(a), list(b)), abs=1e-9)
            assert tic(a, b) == pytest.approx(tic_oracle(list(a), list(b)), abs=1e-9)


def trajectory_matrix(n=240, seed=0, wobble=0.0):
    rng = np.random.Generator(np.random.PCG64(seed))
    t = np.arange(n) * 0.1
    x = 2.0 * t + 8.0 * np.sin(0.12 * t)
    y = 0.4 * np.sin(0.3 * t)
    speed = 2.0 + 0.9 * np.cos(0.12 * t)
    accel = np.gradient(speed, 0.1)
    m = np.column_stack([x, y, speed, accel])
    if wobble:
        m = m + wobble * np.sin(2 * np.pi * 1.3 * t)[:, None] * m.std(axis=0)
    return SeriesMatrix(values=m, channels=["x", "y", "speed", "accel"])


class TestAssess:
    def test_identity_passes_with_perfect_metrics(self):
        m = trajectory_matrix()
        rep = assess_matrices(m, trajectory_matrix(), "s", CredibilityConfig())
        assert rep.metrics["pcc"] == pytest.approx(1.0, abs=1e-9)
        assert rep.metrics["rmse"] == pytest.approx(0.0, abs=1e-12)
        assert rep.metrics["tic"] == pytest.approx(0.0, abs=1e-12)
        assert rep.metrics["cs_psd"] == pytest.approx(1.0, abs=1e-9)
        assert rep.metrics["cross_fuzzy_en"] <= 0.05
        assert rep.verdict == "pass"

    def test_small_perturbation_degrades_within_reference_band(self):
        real = trajectory_matrix()
        fusion = trajectory_matrix(wobble=0.05)
        rep = assess_matrices(real, fusion, "s", CredibilityConfig())
        assert rep.metrics["pcc"] >= 0.98
        assert rep.metrics["tic"] <= 0.11

    def test_time_reversal_fails_with_negative_pcc(self):
        real = trajectory_matrix()
        rev = SeriesMatrix(values=real.values[::-1].copy(), channels=real.channels)
        rep = assess_matrices(real, rev, "s", CredibilityConfig())
        assert rep.metrics["pcc"] < -0.5
        assert rep.verdict == "fail"

    def test_report_range_invariants_fuzz(self, rng):
        for k in range(20):
            a = trajectory_matrix(seed=k)
            b = trajectory_matrix(seed=k, wobble=float(rng.uniform(0, 0.5)))
            rep = assess_matrices(a, b, "s", CredibilityConfig())
            m = rep.metrics
            assert -1.0 - 1e-9 <= m["pcc"] <= 1.0 + 1e-9
            assert 0.0 <= m["tic"] <= 1.0 + 1e-9
            assert -1.0 - 1e-9 <= m["cs_psd"] <= 1.0 + 1e-9
            assert m["rmse"] >= 0.0 and m["cross_fuzzy_en"] >= -1e-9


class TestRecommendMix:
    def _report(self, verdict, margin=False):
        return CredibilityReport(
            scenario_id="s", metrics={"pcc": 0.5, "rmse": 1.0, "tic": 0.5,
                                      "cross_fuzzy_en": 0.5, "cs_psd": 0.5},
            thresholds={}, verdict=verdict, margin_pass=margin)

    def test_fail_shifts_virtual_to_physical(self):
        mix, sat = recommend_mix(self._report("fail"), {"physical": 1, "virtual": 5})
        assert mix == {"physical": 2, "virtual": 4} and not sat

    def test_margin_pass_shifts_physical_to_virtual(self):
        mix, sat = recommend_mix(self._report("pass", margin=True),
                                 {"physical": 3, "virtual": 3})
        assert mix == {"physical": 2, "virtual": 4} and not sat

    def test_fail_saturates_without_virtual(self):
        mix, sat = recommend_mix(self._report("fail"), {"physical": 6, "virtual": 0})
        assert mix == {"physical": 6, "virtual": 0} and sat

    def test_plain_pass_unchanged(self):
        mix, sat = recommend_mix(self._report("pass"), {"physical": 2, "virtual": 2})
        assert mix == {"physical": 2, "virtual": 2} and not sat
