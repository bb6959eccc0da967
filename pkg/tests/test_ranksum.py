import math

import numpy as np
import pytest

from ranksel import (ContractError, DataError, EmpiricalCdf, LossPanel, TieStreams,
                     conformal_pvalue_single, gamma_hat, keyed_stream, pair_stats,
                     projection_estimates, ranksum_u, se_ranksum, xi_element)


def brute_ranksum(a, b, rng=None):
    """O(n^2) oracle; consumes one tie coin per tied pair in (k, l) order."""
    n = len(a)
    wins = 0.0
    for k in range(n):
        for l in range(n):
            if a[k] < b[l]:
                wins += 1.0
            elif a[k] == b[l]:
                if rng.random() < 0.5:
                    wins += 1.0
    return wins / (n * n)


def brute_pair_sums(a, b, rng):
    """Row and column sums of xi = 1{a_k < b_l} - 0.5 per the double loop."""
    n = len(a)
    row = np.zeros(n)
    col = np.zeros(n)
    for k in range(n):
        for l in range(n):
            if a[k] < b[l]:
                x = 0.5
            elif a[k] > b[l]:
                x = -0.5
            else:
                x = 0.5 if rng.random() < 0.5 else -0.5
            row[k] += x
            col[l] += x
    return row, col


class TestRanksumU:
    def test_all_below(self):
        assert ranksum_u([1, 2], [3, 4]) == 1.0

    def test_all_above(self):
        assert ranksum_u([3, 4], [1, 2]) == 0.0

    def test_interleaved_counts_diagonal_pairs(self):
        # 4 ordered pairs, 3 satisfied, including the k = l comparisons
        assert ranksum_u([1, 3], [2, 4]) == 0.75

    def test_matches_bruteforce_tie_free(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            n = int(rng.integers(2, 65))
            vals = rng.permutation(2 * n).astype(float)  # all distinct
            a, b = vals[:n], vals[n:]
            assert ranksum_u(a, b) == brute_ranksum(a, b)

    def test_matches_bruteforce_with_ties_same_stream(self):
        rng = np.random.default_rng(11)
        for trial in range(100):
            n = int(rng.integers(2, 33))
            a = rng.integers(0, 5, size=n).astype(float)
            b = rng.integers(0, 5, size=n).astype(float)
            fast = ranksum_u(a, b, ties=keyed_stream(trial, 1))
            slow = brute_ranksum(a, b, rng=keyed_stream(trial, 1))
            assert fast == slow

    def test_antisymmetry_distinct_values(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(2, 50))
            vals = rng.permutation(1000)[: 2 * n].astype(float)
            a, b = vals[:n], vals[n:]
            assert ranksum_u(a, b) + ranksum_u(b, a) == 1.0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        a = rng.integers(0, 8, size=30).astype(float)
        b = rng.integers(0, 8, size=30).astype(float)
        u1 = ranksum_u(a, b, ties=keyed_stream(9))
        u2 = ranksum_u(np.exp(a), np.exp(b), ties=keyed_stream(9))
        assert u1 == u2

    def test_null_mean_near_half(self):
        rng = np.random.default_rng(17)
        total = 0.0
        reps = 10_000
        for _ in range(reps):
            a = rng.standard_normal(100)
            b = rng.standard_normal(100)
            total += ranksum_u(a, b)
        assert abs(total / reps - 0.5) < 0.01

    def test_length_mismatch_rejected(self):
        with pytest.raises(ContractError):
            ranksum_u([1, 2, 3], [1, 2])

    def test_nonfinite_rejected(self):
        with pytest.raises(DataError):
            ranksum_u([1.0, np.nan], [1.0, 2.0])
        with pytest.raises(DataError):
            ranksum_u([1.0, 2.0], [np.inf, 2.0])


class TestXiElement:
    def test_below(self):
        assert xi_element(1.0, 2.0) == 0.5

    def test_above(self):
        assert xi_element(2.0, 1.0) == -0.5

    def test_tie_is_fair_coin(self):
        rng = keyed_stream(123)
        draws = [xi_element(5.0, 5.0, ties=rng) for _ in range(4000)]
        assert set(draws) == {0.5, -0.5}
        frac = np.mean([d > 0 for d in draws])
        assert abs(frac - 0.5) < 0.03

    def test_nonfinite_rejected(self):
        with pytest.raises(DataError):
            xi_element(np.nan, 1.0)


class TestSeRanksum:
    def test_independent_samples_sixth(self):
        rng = np.random.default_rng(2)
        n = 2000
        vals = []
        for _ in range(50):
            a = rng.standard_normal(n)
            b = rng.standard_normal(n)
            vals.append(n * se_ranksum(a, b) ** 2)
        assert 1 / 6 - 0.02 < np.mean(vals) < 1 / 6 + 0.02

    def test_comonotone_hits_floor(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal(1000)
        se = se_ranksum(a, a)
        assert se == math.sqrt(1e-6 / 1000)

    def test_matches_direct_reimplementation(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n = 50
            a = rng.standard_normal(n)
            b = 0.5 * a + rng.standard_normal(n)
            # straight-line evaluation with brute-force counting CDFs
            f1 = np.array([np.sum(a <= x) / n for x in b])
            f2 = np.array([np.sum(b <= x) / n for x in a])
            cov = np.mean(f1 * f2) - np.mean(f1) * np.mean(f2)
            expect = math.sqrt(max(1e-6, 1 / 6 - 2 * cov) / n)
            assert se_ranksum(a, b) == pytest.approx(expect, rel=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(21)
        a = rng.standard_normal(60)
        b = rng.standard_normal(60)
        assert se_ranksum(a, b) == se_ranksum(np.exp(a), np.exp(b))


class TestEmpiricalCdf:
    def test_right_closed(self):
        f = EmpiricalCdf(np.array([1.0, 2.0, 3.0]))
        assert f(0.5) == 0.0
        assert f(1.0) == pytest.approx(1 / 3)
        assert f(2.5) == pytest.approx(2 / 3)
        assert f(99.0) == 1.0

    def test_vectorized(self):
        f = EmpiricalCdf(np.array([2.0, 1.0]))  # sorted internally
        np.testing.assert_allclose(f(np.array([0.0, 1.0, 2.0])), [0.0, 0.5, 1.0])


def _toy_panel(rng, n=20, m=3, integer=False):
    if integer:
        losses = rng.integers(0, 6, size=(n, m)).astype(float)
    else:
        losses = rng.standard_normal((n, m))
    return LossPanel(losses=losses, model_ids=tuple(f"c{j}" for j in range(m)))


class TestPairStats:
    def test_psi_columns_centered_both_modes(self):
        rng = np.random.default_rng(31)
        panel = _toy_panel(rng, n=10, m=3, integer=True)
        for mode in ("row_only", "symmetrized"):
            stats = pair_stats(panel, 0, projection=mode, ties=TieStreams(3))
            assert np.abs(stats.psi.mean(axis=0)).max() <= 1e-12 * panel.n

    def test_u_matches_bruteforce_with_ties(self):
        rng = np.random.default_rng(33)
        panel = _toy_panel(rng, n=20, m=3, integer=True)
        m = 1
        stats = pair_stats(panel, m, ties=TieStreams(77))
        for idx, j in enumerate(stats.competitors):
            oracle = brute_ranksum(panel.column(m), panel.column(int(j)),
                                   rng=TieStreams(77).pair(m, int(j)))
            assert stats.u[idx] == oracle

    def test_psi_matches_bruteforce_projections(self):
        rng = np.random.default_rng(35)
        panel = _toy_panel(rng, n=16, m=3, integer=True)
        m, n = 0, panel.n
        for mode in ("row_only", "symmetrized"):
            stats = pair_stats(panel, m, projection=mode, ties=TieStreams(5))
            for idx, j in enumerate(stats.competitors):
                row, col = brute_pair_sums(panel.column(m), panel.column(int(j)),
                                           rng=TieStreams(5).pair(m, int(j)))
                mu = row.sum() / n**2
                if mode == "row_only":
                    expect = row / n - mu
                else:
                    expect = row / n + col / n - 2 * mu
                np.testing.assert_allclose(stats.psi[:, idx], expect, atol=1e-12)

    def test_identical_columns_mu_small(self):
        rng = np.random.default_rng(37)
        col = rng.standard_normal(100)
        panel = LossPanel(losses=np.column_stack([col, col]),
                          model_ids=("a", "b"))
        stats = pair_stats(panel, 0, ties=TieStreams(11))
        assert abs(stats.mu[0]) <= 2 / math.sqrt(panel.n)

    def test_mu_is_u_minus_half(self):
        rng = np.random.default_rng(39)
        panel = _toy_panel(rng, n=12, m=4)
        stats = pair_stats(panel, 2, ties=TieStreams(0))
        np.testing.assert_array_equal(stats.mu, stats.u - 0.5)
        assert np.all(stats.se > 0)

    def test_symmetrized_psi_variance_tracks_se(self):
        # the two-part projection's empirical variance should match
        # n * se^2 from the CDF-covariance formula on dependent columns
        rng = np.random.default_rng(41)
        n = 4000
        base = rng.standard_normal(n)
        losses = np.column_stack([np.abs(base + 0.3 * rng.standard_normal(n)),
                                  np.abs(base + 0.3 * rng.standard_normal(n))])
        panel = LossPanel(losses=losses, model_ids=("a", "b"))
        stats = pair_stats(panel, 0, projection="symmetrized", ties=TieStreams(1))
        psi_var = float(stats.psi[:, 0].var())
        target = n * float(stats.se[0] ** 2)
        assert psi_var == pytest.approx(target, rel=0.15)

    def test_small_n_rejected(self):
        panel = LossPanel(losses=np.ones((3, 2)) + np.arange(3)[:, None],
                          model_ids=("a", "b"))
        with pytest.raises(ContractError):
            pair_stats(panel, 0)


class TestConformal:
    def test_all_below(self):
        assert conformal_pvalue_single([1, 2, 3], 10.0) == 1.0

    def test_all_above(self):
        assert conformal_pvalue_single([1, 2, 3], 0.0) == 0.0

    def test_half(self):
        assert conformal_pvalue_single([1, 2, 3, 4], 2.5) == 0.5


class TestProjectionEstimates:
    def test_constant_kernel_zero(self):
        g1, g2 = projection_estimates(np.full((4, 4), 3.7))
        np.testing.assert_allclose(g1, 0.0, atol=1e-14)
        np.testing.assert_allclose(g2, 0.0, atol=1e-14)

    def test_additive_kernel_hand_values(self):
        u = np.array([1.0, 2.0])
        v = np.array([10.0, 20.0])
        k = u[:, None] + v[None, :]
        g1, g2 = projection_estimates(k)
        np.testing.assert_allclose(g1, [-0.5, 0.5])
        np.testing.assert_allclose(g2, [-5.0, 5.0])

    def test_centering(self):
        rng = np.random.default_rng(43)
        g1, g2 = projection_estimates(rng.standard_normal((5, 5)))
        assert abs(g1.sum()) < 1e-12
        assert abs(g2.sum()) < 1e-12

    def test_nonsquare_rejected(self):
        with pytest.raises(ContractError):
            projection_estimates(np.ones((3, 4)))


class TestGammaHat:
    def test_scaled_orthonormal_gives_identity(self):
        rng = np.random.default_rng(45)
        n, p = 20, 3
        q, _ = np.linalg.qr(rng.standard_normal((n, p)))
        g1 = q * math.sqrt(n)
        gam = gamma_hat(g1, np.zeros_like(g1))
        np.testing.assert_allclose(gam, np.eye(p), atol=1e-12)

    def test_p1_population_variance(self):
        rng = np.random.default_rng(47)
        g1 = rng.standard_normal(15)
        g2 = rng.standard_normal(15)
        gam = gamma_hat(g1, g2)
        s = g1 + g2
        assert gam.shape == (1, 1)
        assert gam[0, 0] == pytest.approx(np.mean(s * s))

    def test_matches_second_moment_matrix(self):
        rng = np.random.default_rng(49)
        g1 = rng.standard_normal((20, 3))
        g2 = rng.standard_normal((20, 3))
        s = g1 + g2
        expect = sum(np.outer(s[i], s[i]) for i in range(20)) / 20
        np.testing.assert_allclose(gamma_hat(g1, g2), expect, atol=1e-12)
        # symmetric PSD
        gam = gamma_hat(g1, g2)
        np.testing.assert_allclose(gam, gam.T)
        assert np.all(np.linalg.eigvalsh(gam) > -1e-12)


class TestLossPanel:
    def test_validation(self):
        with pytest.raises(DataError):
            LossPanel(losses=np.array([[1.0, np.nan], [2.0, 3.0]]),
                      model_ids=("a", "b"))
        with pytest.raises(ContractError):
            LossPanel(losses=np.ones((5, 2)), model_ids=("a", "a"))
        with pytest.raises(ContractError):
            LossPanel(losses=np.ones((1, 2)), model_ids=("a", "b"))
