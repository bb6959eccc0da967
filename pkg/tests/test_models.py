import math

import numpy as np
import pytest

from ranksel import (ContractError, Dataset, DataError, LearnerError, LossFn,
                     adaptive_tau, enumerate_subsets, fit_huber, fit_huber_adaptive,
                     fit_huber_lasso, fit_ols, huber_location, lambda_fold_correction,
                     lambda_path, loss_eval, mad_scale)
from ranksel.models import huber_lasso_lipschitz, huber_score, subset_mask_id


class TestLossEval:
    def test_huber_quadratic_branch(self):
        assert loss_eval(LossFn("huber", tau=1.0), 0.5) == 0.125

    def test_huber_linear_branch(self):
        assert loss_eval(LossFn("huber", tau=1.0), 2.0) == 1.5

    def test_squared(self):
        assert loss_eval(LossFn("squared"), -3.0) == 9.0

    def test_absolute(self):
        assert loss_eval(LossFn("absolute"), -2.5) == 2.5

    def test_huber_continuous_and_smooth_at_knee(self):
        tau = 0.7
        fn = LossFn("huber", tau=tau)
        eps = 1e-9
        below = loss_eval(fn, tau - eps)
        above = loss_eval(fn, tau + eps)
        assert abs(above - below) < 1e-8
        # first derivative: r on the quadratic side, tau on the linear side
        d_below = (loss_eval(fn, tau) - loss_eval(fn, tau - 1e-6)) / 1e-6
        d_above = (loss_eval(fn, tau + 1e-6) - loss_eval(fn, tau)) / 1e-6
        assert d_below == pytest.approx(tau, abs=1e-5)
        assert d_above == pytest.approx(tau, abs=1e-5)

    def test_vectorized(self):
        out = loss_eval(LossFn("huber", tau=1.0), np.array([0.5, 2.0]))
        np.testing.assert_allclose(out, [0.125, 1.5])

    def test_bad_tau_rejected(self):
        with pytest.raises(ContractError):
            LossFn("huber")
        with pytest.raises(ContractError):
            LossFn("huber", tau=-1.0)

    def test_nonfinite_residual_rejected(self):
        with pytest.raises(DataError):
            loss_eval(LossFn("squared"), np.nan)


class TestFitOls:
    def test_exact_line(self):
        x = np.linspace(-2, 3, 25)[:, None]
        y = 2.0 + 3.0 * x[:, 0]
        fit = fit_ols(Dataset(x=x, y=y))
        assert fit.intercept == pytest.approx(2.0, abs=1e-10)
        assert fit.coef[0] == pytest.approx(3.0, abs=1e-10)

    def test_constant_response(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((30, 2))
        fit = fit_ols(Dataset(x=x, y=np.full(30, 4.2)))
        assert fit.intercept == pytest.approx(4.2, abs=1e-10)
        np.testing.assert_allclose(fit.coef, 0.0, atol=1e-10)

    def test_residual_orthogonality(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((60, 4))
        y = rng.standard_normal(60)
        fit = fit_ols(Dataset(x=x, y=y))
        resid = y - fit.predict(x)
        design = np.column_stack([np.ones(60), x])
        assert np.abs(design.T @ resid).max() <= 1e-8

    def test_rank_deficiency_flagged(self):
        x = np.ones((20, 2))  # duplicate constant columns
        x[:, 1] = x[:, 0]
        with pytest.raises(LearnerError):
            fit_ols(Dataset(x=x, y=np.arange(20.0)))

    def test_too_few_rows_flagged(self):
        with pytest.raises(LearnerError):
            fit_ols(Dataset(x=np.eye(3), y=np.ones(3)))


class TestHuberAdaptive:
    def test_close_to_ols_on_clean_gaussian(self):
        rng = np.random.default_rng(2)
        n = 1000
        x = rng.standard_normal((n, 3))
        y = 1.0 + x @ np.array([0.5, -1.0, 2.0]) + 0.3 * rng.standard_normal(n)
        data = Dataset(x=x, y=y)
        hub = fit_huber_adaptive(data)
        ols = fit_ols(data)
        assert abs(hub.intercept - ols.intercept) < 1e-3
        assert np.abs(hub.coef - ols.coef).max() < 1e-3
        assert hub.meta["converged"]

    def test_cauchy_noise_location(self):
        # With Cauchy noise the sqrt(n/(d+log n)) knee inflation makes the
        # estimator noticeably noisier than under finite-variance noise
        # (tau ~ 17 at n=500); measured hit rates are ~0.70 within 0.2 and
        # ~0.97 within 0.5. OLS has no finite moments here at all.
        rng = np.random.default_rng(3)
        close, near = 0, 0
        reps = 40
        for _ in range(reps):
            n = 500
            x = rng.standard_normal((n, 1))
            y = 1.0 + 0.0 * x[:, 0] + rng.standard_t(1, size=n)
            fit = fit_huber_adaptive(Dataset(x=x, y=y))
            err = abs(fit.intercept - 1.0)
            close += err < 0.2
            near += err < 0.5
        assert close >= 0.5 * reps
        assert near >= 0.85 * reps

    def test_bounded_influence_of_gross_outlier(self):
        rng = np.random.default_rng(4)
        n = 200
        x = rng.standard_normal((n, 2))
        beta = np.array([1.5, -2.0])
        y = 0.5 + x @ beta + 0.01 * rng.standard_normal(n)
        clean = fit_huber_adaptive(Dataset(x=x, y=y))
        clean_err = np.abs(clean.coef - beta).max()
        y_out = y.copy()
        y_out[0] = 1e6
        dirty = fit_huber_adaptive(Dataset(x=x, y=y_out))
        dirty_err = np.abs(dirty.coef - beta).max()
        assert dirty_err <= 10 * max(clean_err, 1e-6)
        # contrast: OLS gets destroyed by the same outlier
        ols = fit_ols(Dataset(x=x, y=y_out))
        assert np.abs(ols.coef - beta).max() > 100 * dirty_err


class TestHuberLocation:
    def test_symmetric_sample(self):
        y = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
        assert huber_location(y, tau=1.0) == pytest.approx(0.0, abs=1e-10)

    def test_resists_outlier(self):
        y = np.array([0.9, 1.0, 1.1, 1.05, 0.95, 500.0])
        assert abs(huber_location(y, tau=0.5) - 1.0) < 0.25


class TestHuberLasso:
    @staticmethod
    def _toy(n=80, d=10, seed=5):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, d))
        beta = np.zeros(d)
        beta[:3] = [2.0, -1.5, 1.0]
        y = 0.7 + x @ beta + 0.2 * rng.standard_normal(n)
        return Dataset(x=x, y=y)

    def test_full_shrinkage_at_lambda_max(self):
        data = self._toy()
        tau = 2.0
        # path computed with matching tau so the KKT bound is exact
        path = lambda_path(data, k_path=1, tau=tau)
        fit = fit_huber_lasso(data, lam=float(path.values[0]), tau=tau)
        np.testing.assert_array_equal(fit.coef, 0.0)
        assert fit.intercept == pytest.approx(huber_location(data.y, tau), abs=1e-8)

    def test_unpenalized_limit_matches_fixed_tau_irls(self):
        data = self._toy(n=120, d=3, seed=6)
        tau = 1.5
        lasso = fit_huber_lasso(data, lam=1e-8, tau=tau, max_iter=20000, tol=1e-14)
        irls = fit_huber(data, tau=tau, tol=1e-12)
        assert abs(lasso.intercept - irls.intercept) < 1e-4
        assert np.abs(lasso.coef - irls.coef).max() < 1e-4

    def test_kkt_conditions(self):
        data = self._toy()
        tau = 1.2
        lam = 0.08
        fit = fit_huber_lasso(data, lam=lam, tau=tau, max_iter=20000, tol=1e-13)
        r = data.y - fit.intercept - data.x @ fit.coef
        grad = -(data.x.T @ huber_score(r, tau)) / data.n
        zero = fit.coef == 0.0
        assert np.all(np.abs(grad[zero]) <= lam + 1e-6)
        active = ~zero
        assert np.abs(grad[active] + lam * np.sign(fit.coef[active])).max() <= 1e-6
        # intercept direction is unpenalized and stationary
        assert abs(np.mean(huber_score(r, tau))) <= 1e-6

    def test_objective_monotone(self):
        data = self._toy(seed=7)
        fit = fit_huber_lasso(data, lam=0.05, tau=1.0, keep_history=True)
        hist = np.array(fit.meta["objective_history"])
        assert np.all(np.diff(hist) <= 1e-10 * np.maximum(1.0, np.abs(hist[:-1])))

    def test_support_grows_from_empty(self):
        data = self._toy()
        path = lambda_path(data, k_path=10, tau=1.2)
        top = fit_huber_lasso(data, lam=float(path.values[0]), tau=1.2)
        bottom = fit_huber_lasso(data, lam=float(path.values[-1]), tau=1.2)
        assert top.nonzero_count == 0
        assert bottom.nonzero_count >= top.nonzero_count

    def test_warm_start_dimension_checked(self):
        data = self._toy()
        from ranksel import FittedLinear
        with pytest.raises(ContractError):
            fit_huber_lasso(data, lam=0.1, tau=1.0,
                            init=FittedLinear(intercept=0.0, coef=np.zeros(2)))


class TestLambdaPath:
    def test_single_value(self):
        data = TestHuberLasso._toy()
        path = lambda_path(data, k_path=1)
        assert len(path) == 1

    def test_endpoint_ratio(self):
        data = TestHuberLasso._toy()
        path = lambda_path(data, k_path=50)
        assert len(path) == 50
        assert path.values[-1] / path.values[0] == pytest.approx(0.01, rel=1e-9)
        assert np.all(np.diff(path.values) < 0)

    def test_zero_design_rejected(self):
        with pytest.raises(DataError):
            lambda_path(Dataset(x=np.zeros((10, 2)), y=np.arange(10.0)))


class TestLambdaFoldCorrection:
    def test_five_folds(self):
        assert lambda_fold_correction(1.0, 5) == pytest.approx(0.8944271909999159)

    def test_two_folds(self):
        assert lambda_fold_correction(0.5, 2) == pytest.approx(0.35355339059327373)

    def test_monotone_toward_identity(self):
        vals = [lambda_fold_correction(1.0, k) for k in (2, 5, 10, 100, 10000)]
        assert all(v1 < v2 for v1, v2 in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(1.0, abs=1e-4)

    def test_bad_inputs(self):
        with pytest.raises(ContractError):
            lambda_fold_correction(1.0, 1)
        with pytest.raises(ContractError):
            lambda_fold_correction(-1.0, 5)


class TestEnumerateSubsets:
    def test_four_covariates_give_sixteen(self):
        subsets = enumerate_subsets(4)
        assert len(subsets) == 16
        assert len(set(subsets)) == 16

    def test_single_covariate(self):
        assert enumerate_subsets(1) == [(), (0,)]

    def test_guard(self):
        with pytest.raises(ContractError):
            enumerate_subsets(21)
        with pytest.raises(ContractError):
            enumerate_subsets(0)

    def test_mask_ids(self):
        assert subset_mask_id((), 4) == "m_0000"
        assert subset_mask_id((1, 2), 4) == "m_0110"


class TestHelpers:
    def test_mad_scale_gaussian_consistent(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(100_000)
        assert mad_scale(x) == pytest.approx(1.0, abs=0.02)

    def test_adaptive_tau_formula(self):
        assert adaptive_tau(100, 3, 2.0) == pytest.approx(
            1.345 * 2.0 * math.sqrt(100 / (3 + math.log(100))))

    def test_lipschitz_bounds_gram(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((40, 6))
        design = np.column_stack([np.ones(40), x])
        exact = np.linalg.eigvalsh(design.T @ design).max() / 40
        assert huber_lasso_lipschitz(Dataset(x=x, y=np.zeros(40))) == pytest.approx(
            exact, rel=1e-6)


class TestDataset:
    def test_validation(self):
        with pytest.raises(DataError):
            Dataset(x=np.array([[1.0], [np.nan]]), y=np.array([1.0, 2.0]))
        with pytest.raises(ContractError):
            Dataset(x=np.ones((3, 1)), y=np.ones(2))
        with pytest.raises(ContractError):
            Dataset(x=np.ones(3), y=np.ones(3))
