import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oslearn import (
    ContractViolationError,
    NumericDomainError,
    SampleBatch,
    check_gradient_consistency,
    check_hessian_consistency,
    empirical_moments,
    empirical_risk,
)
from oslearn.losses import (
    default_logit_dgp,
    default_plm_dgp,
    logit_model,
    plm_model,
    sample,
)
from oslearn.model_core import EmpiricalMoments
from oslearn.nuisance import NuisanceFn


def _affine_nuisance():
    """zeta(x) = 0.3 + x, alpha(x) = (x, -x) on a scalar covariate."""

    def fn(X):
        x = X[:, 0]
        return np.column_stack([0.3 + x, x, -x])

    return NuisanceFn(fn=fn, in_dim=1, out_dim=3, tag="custom")


def _three_sample_batch():
    return SampleBatch(
        outcomes=[1.0, -0.5, 2.0],
        targets=[[1.0, 0.0], [0.5, -1.0], [-1.0, 0.5]],
        covariates=[[0.2], [-0.4], [0.6]],
    )


class TestSampleBatch:
    def test_row_count_mismatch(self):
        with pytest.raises(ContractViolationError, match="row counts"):
            SampleBatch([1.0, 2.0], [[1.0]], [[0.0], [0.0]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ContractViolationError, match="non-finite"):
            SampleBatch([np.nan], [[1.0]], [[0.0]])

    def test_rejects_empty(self):
        with pytest.raises(ContractViolationError):
            SampleBatch(np.empty(0), np.empty((0, 1)), np.empty((0, 1)))

    def test_subset_and_row(self):
        batch = _three_sample_batch()
        assert batch.n == 3 and batch.d == 2 and batch.p == 1
        sub = batch.subset(1, 3)
        assert sub.n == 2
        z = batch.row(2)
        assert z.y == 2.0
        np.testing.assert_array_equal(z.target, [-1.0, 0.5])


class TestEmpiricalRisk:
    def test_plm_risk_at_truth_is_mean_noise_squared(self, plm_dgp):
        n = 400
        batch = sample(plm_dgp, n, 12)
        # replay the sampler's stream to extract the noise draws
        rng = np.random.default_rng(12)
        plm_dgp.covariates(rng, n)
        plm_dgp.draw_u(rng, n)
        noise = rng.normal(0.0, plm_dgp.sigma_v, n)
        model = plm_model(plm_dgp)
        risk = empirical_risk(model, plm_dgp.theta0, plm_dgp.oracle_nuisance(), batch)
        assert risk == pytest.approx(np.mean(noise**2), rel=1e-12)

    def test_single_exact_fit_sample(self):
        # y = 1, zeta = 0, residualized regressors (1, 0), theta = (1, 0)
        def fn(X):
            return np.zeros((X.shape[0], 3))

        g = NuisanceFn(fn=fn, in_dim=1, out_dim=3, tag="custom")
        batch = SampleBatch([1.0], [[1.0, 0.0]], [[0.0]])
        model = plm_model(d=2)
        assert empirical_risk(model, np.array([1.0, 0.0]), g, batch) == 0.0

    def test_logit_at_zero_is_log_two(self, logit_dgp):
        batch = sample(logit_dgp, 50, 3)
        model = logit_model(logit_dgp)

        def fn(X):
            return np.zeros((X.shape[0], 1))

        g = NuisanceFn(fn=fn, in_dim=logit_dgp.p, out_dim=1, tag="custom")
        risk = empirical_risk(model, np.zeros(logit_dgp.d), g, batch)
        assert risk == pytest.approx(np.log(2.0), rel=1e-12)

    def test_dimension_mismatch(self, plm_dgp):
        batch = sample(plm_dgp, 10, 0)
        model = plm_model(plm_dgp)
        with pytest.raises(ContractViolationError):
            empirical_risk(model, np.zeros(plm_dgp.d + 1), plm_dgp.oracle_nuisance(), batch)

    def test_nonfinite_loss_names_sample_index(self):
        batch = _three_sample_batch()
        model = plm_model(d=2)

        def fn(X):
            out = np.zeros((X.shape[0], 3))
            out[1, 0] = np.inf
            return out

        g = NuisanceFn(fn=fn, in_dim=1, out_dim=3, tag="custom")
        with pytest.raises(NumericDomainError, match="index 1"):
            empirical_risk(model, np.zeros(2), g, batch)


class TestEmpiricalMoments:
    def test_single_sample_zero_covariance(self, plm_dgp):
        batch = sample(plm_dgp, 1, 9)
        model = plm_model(plm_dgp)
        mom = empirical_moments(model, plm_dgp.theta0, plm_dgp.oracle_nuisance(), batch)
        assert np.abs(mom.score_cov).max() == 0.0

    def test_score_near_zero_at_truth(self, plm_dgp):
        batch = sample(plm_dgp, 100_000, 4)
        model = plm_model(plm_dgp)
        mom = empirical_moments(model, plm_dgp.theta0, plm_dgp.oracle_nuisance(), batch)
        # population score vanishes; empirical one is O(n^{-1/2})
        assert np.linalg.norm(mom.score) < 5.0 / np.sqrt(batch.n)

    def test_three_hand_written_samples_match_brute_force(self):
        batch = _three_sample_batch()
        g = _affine_nuisance()
        theta = np.array([0.5, -1.0])
        model = plm_model(d=2)
        mom = empirical_moments(model, theta, g, batch)
        risk = empirical_risk(model, theta, g, batch)

        # independent brute force from the per-sample formulas
        scores, hessians = [], []
        losses = []
        for i in range(batch.n):
            y, t, x = batch.outcomes[i], batch.targets[i], batch.covariates[i]
            zeta = 0.3 + x[0]
            alpha = np.array([x[0], -x[0]])
            e = t - alpha
            r = y - zeta - theta @ e
            losses.append(r**2)
            scores.append(-2.0 * r * e)
            hessians.append(2.0 * np.outer(e, e))
        scores = np.array(scores)
        centered = scores - scores.mean(axis=0)
        np.testing.assert_allclose(mom.score, scores.mean(axis=0), rtol=1e-13)
        np.testing.assert_allclose(mom.hessian, np.mean(hessians, axis=0), rtol=1e-13)
        np.testing.assert_allclose(mom.score_cov, centered.T @ centered / 3.0,
                                   rtol=1e-12, atol=1e-13)

        # frozen values computed by hand from the same formulas
        assert risk == pytest.approx(4.7175, abs=1e-12)
        np.testing.assert_allclose(mom.score, [4.39, -4.34], atol=1e-12)
        np.testing.assert_allclose(
            mom.hessian,
            [[2.673333333333333, -1.9066666666666666],
             [-1.9066666666666666, 2.14]], atol=1e-12)
        np.testing.assert_allclose(
            mom.score_cov,
            [[16.9922, -10.5532], [-10.5532, 8.9192]], atol=1e-10)

    @given(split=st.integers(min_value=1, max_value=99))
    @settings(max_examples=25, deadline=None)
    def test_pooled_moment_recombination(self, split):
        dgp = default_plm_dgp(d=3, p=2)
        batch = sample(dgp, 100, 77)
        model = plm_model(dgp)
        g0 = dgp.oracle_nuisance()
        theta = np.array([0.2, -0.1, 0.4])
        full = empirical_moments(model, theta, g0, batch)
        a = empirical_moments(model, theta, g0, batch.subset(0, split))
        b = empirical_moments(model, theta, g0, batch.subset(split, 100))
        na, nb = split, 100 - split
        w_score = (na * a.score + nb * b.score) / 100.0
        w_hess = (na * a.hessian + nb * b.hessian) / 100.0
        np.testing.assert_allclose(full.score, w_score, atol=1e-12)
        np.testing.assert_allclose(full.hessian, w_hess, atol=1e-12)
        # pooled centering: combined covariance picks up a between-split term
        gap = a.score - b.score
        pooled = (na * a.score_cov + nb * b.score_cov) / 100.0 \
            + (na * nb / 100.0**2) * np.outer(gap, gap)
        np.testing.assert_allclose(full.score_cov, pooled, atol=1e-11)

    def test_moment_type_validation(self):
        with pytest.raises(NumericDomainError, match="asymmetry"):
            EmpiricalMoments(score=np.zeros(2),
                             hessian=np.array([[1.0, 1e-6], [0.0, 1.0]]),
                             score_cov=np.eye(2), n_used=5)
        with pytest.raises(NumericDomainError, match="PSD"):
            EmpiricalMoments(score=np.zeros(2), hessian=np.eye(2),
                             score_cov=np.array([[1.0, 0.0], [0.0, -0.5]]), n_used=5)


class TestDerivativeConsistency:
    def test_plm_gradient_check(self, plm_dgp, rng):
        model = plm_model(plm_dgp)
        batch = sample(plm_dgp, 5, 2)
        g0 = plm_dgp.oracle_nuisance()
        for i in range(batch.n):
            theta = rng.normal(size=plm_dgp.d)
            z = batch.row(i)
            gap = check_gradient_consistency(model, theta, g0, z, h=1e-5)
            score_inf = np.abs(model.score(theta, g0, z)).max()
            assert gap <= 1e-6 * (1.0 + score_inf)

    def test_logit_gradient_check_at_zero(self, logit_dgp):
        model = logit_model(logit_dgp)
        batch = sample(logit_dgp, 5, 2)

        def fn(X):
            return np.zeros((X.shape[0], 1))

        g = NuisanceFn(fn=fn, in_dim=logit_dgp.p, out_dim=1, tag="custom")
        gap = check_gradient_consistency(model, np.zeros(logit_dgp.d), g,
                                         batch.row(0), h=1e-5)
        assert gap <= 1e-6

    def test_corrupted_score_is_detected(self, plm_dgp):
        model = plm_model(plm_dgp)

        class Corrupted:
            d = model.d
            self_concordance = 0.0
            nuisance_dim = model.nuisance_dim

            def loss(self, theta, g, z):
                return model.loss(theta, g, z)

            def score(self, theta, g, z):
                s = model.score(theta, g, z).copy()
                s[0] += 1.0
                return s

        batch = sample(plm_dgp, 1, 8)
        gap = check_gradient_consistency(Corrupted(), plm_dgp.theta0,
                                         plm_dgp.oracle_nuisance(), batch.row(0))
        assert gap >= 0.5

    def test_hessian_check_both_models(self, plm_dgp, logit_dgp, rng):
        for dgp, model in ((plm_dgp, plm_model(plm_dgp)),
                           (logit_dgp, logit_model(logit_dgp))):
            batch = sample(dgp, 3, 5)
            g0 = dgp.oracle_nuisance()
            for i in range(batch.n):
                theta = 0.5 * rng.normal(size=dgp.d)
                z = batch.row(i)
                gap = check_hessian_consistency(model, theta, g0, z, h=1e-5)
                h_inf = np.abs(model.hessian(theta, g0, z)).max()
                assert gap <= 1e-4 * (1.0 + h_inf)

    def test_step_must_be_positive(self, plm_dgp):
        model = plm_model(plm_dgp)
        z = sample(plm_dgp, 1, 0).row(0)
        with pytest.raises(ContractViolationError):
            check_gradient_consistency(model, plm_dgp.theta0,
                                       plm_dgp.oracle_nuisance(), z, h=0.0)
