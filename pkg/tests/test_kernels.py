"""The numba kernels and the numpy fallbacks must implement one contract."""

import numpy as np
import pytest

from oslearn import _kernels


def _random_sq_inputs(rng, n=257, d=4):
    y = rng.normal(size=n)
    offs = rng.normal(size=n)
    E = rng.normal(size=(n, d))
    theta = rng.normal(size=d)
    return y, offs, E, theta


def _random_logit_inputs(rng, n=257, d=4):
    y = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
    X = rng.normal(size=(n, d))
    g = rng.normal(size=n)
    theta = rng.normal(size=d)
    return y, X, g, theta


@pytest.mark.skipif(not _kernels.NUMBA_ENABLED, reason="numpy fallback already active")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sq_kernels_match_numpy(seed):
    rng = np.random.default_rng(seed)
    y, offs, E, theta = _random_sq_inputs(rng)
    r_nb, bad_nb = _kernels.sq_risk(y, offs, E, theta)
    r_np, bad_np = _kernels.sq_risk_numpy(y, offs, E, theta)
    assert bad_nb == bad_np == -1
    assert r_nb == pytest.approx(r_np, rel=1e-13)

    out_nb = _kernels.sq_moments(y, offs, E, theta, True)
    out_np = _kernels.sq_moments_numpy(y, offs, E, theta, True)
    for a, b in zip(out_nb[:4], out_np[:4]):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


@pytest.mark.skipif(not _kernels.NUMBA_ENABLED, reason="numpy fallback already active")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_logit_kernels_match_numpy(seed):
    rng = np.random.default_rng(seed)
    y, X, g, theta = _random_logit_inputs(rng)
    r_nb, bad_nb = _kernels.logit_risk(y, X, g, theta)
    r_np, bad_np = _kernels.logit_risk_numpy(y, X, g, theta)
    assert bad_nb == bad_np == -1
    assert r_nb == pytest.approx(r_np, rel=1e-13)

    out_nb = _kernels.logit_moments(y, X, g, theta, True)
    out_np = _kernels.logit_moments_numpy(y, X, g, theta, True)
    for a, b in zip(out_nb[:4], out_np[:4]):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)


def test_bad_index_reports_first_nonfinite_sq():
    rng = np.random.default_rng(7)
    y, offs, E, theta = _random_sq_inputs(rng, n=20, d=3)
    offs[11] = np.nan
    _, bad = _kernels.sq_risk(y, offs, E, theta)
    assert bad == 11
    *_, bad = _kernels.sq_moments(y, offs, E, theta, True)
    assert bad == 11


def test_bad_index_reports_first_nonfinite_logit():
    rng = np.random.default_rng(7)
    y, X, g, theta = _random_logit_inputs(rng, n=20, d=3)
    g[11] = np.inf
    _, bad = _kernels.logit_risk(y, X, g, theta)
    assert bad == 11
    *_, bad = _kernels.logit_moments(y, X, g, theta, True)
    assert bad == 11


def test_hessian_exactly_symmetric():
    rng = np.random.default_rng(3)
    y, offs, E, theta = _random_sq_inputs(rng, n=401, d=5)
    _, _, hess, cov, _ = _kernels.sq_moments(y, offs, E, theta, True)
    assert np.array_equal(hess, hess.T)
    assert np.abs(cov - cov.T).max() < 1e-14

    y2, X, g, theta2 = _random_logit_inputs(rng, n=401, d=5)
    _, _, hess2, cov2, _ = _kernels.logit_moments(y2, X, g, theta2, True)
    assert np.abs(hess2 - hess2.T).max() < 1e-15
    assert np.abs(cov2 - cov2.T).max() < 1e-15


def test_logit_risk_stable_at_extreme_margins():
    y = np.array([1.0, -1.0])
    X = np.array([[1.0], [1.0]])
    g = np.zeros(2)
    theta = np.array([800.0])
    risk, bad = _kernels.logit_risk(y, X, g, theta)
    assert bad == -1
    assert np.isfinite(risk)
    assert risk == pytest.approx(400.0, rel=1e-12)  # softplus(800)/2 ~ 400
