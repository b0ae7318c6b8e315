"""Fused per-batch loss/score/Hessian kernels.

These are the hot inner loops: every Newton iteration and every Monte Carlo
replication reduces a batch through one of them.  Two interchangeable
implementations are provided:

* numba ``@njit`` kernels (default when numba imports cleanly), and
* pure-numpy fallbacks with identical signatures.

Set the environment variable ``OSLEARN_NUMBA=0`` before import to force the
numpy path.  ``benchmarks/bench_kernels.py`` times both.

Each kernel returns a trailing ``bad_index``: the first sample whose loss is
non-finite, or ``-1``.  Callers are expected to raise on ``bad_index >= 0``;
the kernels themselves never raise.
"""

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "sq_risk",
    "sq_moments",
    "logit_risk",
    "logit_moments",
    "sq_risk_numpy",
    "sq_moments_numpy",
    "logit_risk_numpy",
    "logit_moments_numpy",
    "warm_up",
]


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _first_nonfinite(values):
    if np.isfinite(values).all():
        return -1
    return int(np.flatnonzero(~np.isfinite(values))[0])


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def sq_risk_numpy(y, offs, E, theta):
    """Mean squared residual, residual r_i = y_i - offs_i - E_i . theta."""
    r = y - offs - E @ theta
    bad = _first_nonfinite(r)
    if bad >= 0:
        return np.nan, bad
    n = y.shape[0]
    return float(r @ r) / n, -1


def sq_moments_numpy(y, offs, E, theta, want_cov):
    """Mean loss, score, Hessian and centered score covariance for the
    squared loss.  Per-sample score is -2 r_i E_i, Hessian 2 E_i E_i^T."""
    n, d = E.shape
    r = y - offs - E @ theta
    bad = _first_nonfinite(r)
    cov = np.zeros((d, d))
    if bad >= 0:
        return np.nan, np.zeros(d), np.zeros((d, d)), cov, bad
    risk = float(r @ r) / n
    score = (-2.0 / n) * (E.T @ r)
    hess = (2.0 / n) * (E.T @ E)
    if want_cov:
        S = (-2.0) * r[:, None] * E
        Sc = S - S.mean(axis=0)
        cov = (Sc.T @ Sc) / n
    return risk, score, hess, cov, bad


def _softplus(u):
    # log(1 + e^u), stable for large |u|
    return np.logaddexp(0.0, u)


def logit_risk_numpy(y, X, gvals, theta):
    """Mean logistic loss with labels y in {-1, +1} and margin
    a_i = X_i . theta + gvals_i."""
    a = X @ theta + gvals
    bad = _first_nonfinite(a)
    if bad >= 0:
        return np.nan, bad
    n = y.shape[0]
    return float(_softplus(-y * a).sum()) / n, -1


def logit_moments_numpy(y, X, gvals, theta, want_cov):
    """Mean loss, score, Hessian and centered score covariance for the
    logistic loss.  Per-sample score is (sigma(a) - 1/2 - y/2) X_i, Hessian
    sigma(a)(1 - sigma(a)) X_i X_i^T."""
    n, d = X.shape
    a = X @ theta + gvals
    bad = _first_nonfinite(a)
    cov = np.zeros((d, d))
    if bad >= 0:
        return np.nan, np.zeros(d), np.zeros((d, d)), cov, bad
    risk = float(_softplus(-y * a).sum()) / n
    sig = _sigmoid(a)
    w = sig - 0.5 - 0.5 * y
    score = (X.T @ w) / n
    h = sig * (1.0 - sig)
    hess = (X.T * h) @ X / n
    if want_cov:
        S = w[:, None] * X
        Sc = S - S.mean(axis=0)
        cov = (Sc.T @ Sc) / n
    return risk, score, hess, cov, bad


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_flag = os.environ.get("OSLEARN_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

NUMBA_ENABLED = False

if _want_numba:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        njit = None
    if njit is not None:

        @njit(cache=True)
        def _sq_risk_nb(y, offs, E, theta):
            n, d = E.shape
            acc = 0.0
            for i in range(n):
                pred = 0.0
                for j in range(d):
                    pred += E[i, j] * theta[j]
                r = y[i] - offs[i] - pred
                li = r * r
                if not np.isfinite(li):
                    return np.nan, i
                acc += li
            return acc / n, -1

        @njit(cache=True)
        def _sq_moments_nb(y, offs, E, theta, want_cov):
            n, d = E.shape
            risk = 0.0
            score = np.zeros(d)
            hess = np.zeros((d, d))
            m2 = np.zeros((d, d))
            s_i = np.empty(d)
            for i in range(n):
                pred = 0.0
                for j in range(d):
                    pred += E[i, j] * theta[j]
                r = y[i] - offs[i] - pred
                li = r * r
                if not np.isfinite(li):
                    return np.nan, np.zeros(d), np.zeros((d, d)), m2, i
                risk += li
                for j in range(d):
                    s_i[j] = -2.0 * r * E[i, j]
                    score[j] += s_i[j]
                for j in range(d):
                    for k in range(d):
                        hess[j, k] += 2.0 * E[i, j] * E[i, k]
                if want_cov:
                    for j in range(d):
                        for k in range(d):
                            m2[j, k] += s_i[j] * s_i[k]
            risk /= n
            for j in range(d):
                score[j] /= n
                for k in range(d):
                    hess[j, k] /= n
            cov = np.zeros((d, d))
            if want_cov:
                for j in range(d):
                    for k in range(d):
                        cov[j, k] = m2[j, k] / n - score[j] * score[k]
            return risk, score, hess, cov, -1

        @njit(cache=True)
        def _logit_risk_nb(y, X, gvals, theta):
            n, d = X.shape
            acc = 0.0
            for i in range(n):
                a = gvals[i]
                for j in range(d):
                    a += X[i, j] * theta[j]
                u = -y[i] * a
                if not np.isfinite(u):
                    return np.nan, i
                if u > 0.0:
                    acc += u + np.log1p(np.exp(-u))
                else:
                    acc += np.log1p(np.exp(u))
            return acc / n, -1

        @njit(cache=True)
        def _logit_moments_nb(y, X, gvals, theta, want_cov):
            n, d = X.shape
            risk = 0.0
            score = np.zeros(d)
            hess = np.zeros((d, d))
            m2 = np.zeros((d, d))
            for i in range(n):
                a = gvals[i]
                for j in range(d):
                    a += X[i, j] * theta[j]
                u = -y[i] * a
                if not np.isfinite(u):
                    return np.nan, np.zeros(d), np.zeros((d, d)), m2, i
                if u > 0.0:
                    risk += u + np.log1p(np.exp(-u))
                else:
                    risk += np.log1p(np.exp(u))
                if a >= 0.0:
                    sig = 1.0 / (1.0 + np.exp(-a))
                else:
                    ea = np.exp(a)
                    sig = ea / (1.0 + ea)
                w = sig - 0.5 - 0.5 * y[i]
                h = sig * (1.0 - sig)
                for j in range(d):
                    score[j] += w * X[i, j]
                    for k in range(d):
                        hess[j, k] += h * X[i, j] * X[i, k]
                if want_cov:
                    for j in range(d):
                        for k in range(d):
                            m2[j, k] += (w * X[i, j]) * (w * X[i, k])
            risk /= n
            for j in range(d):
                score[j] /= n
                for k in range(d):
                    hess[j, k] /= n
            cov = np.zeros((d, d))
            if want_cov:
                for j in range(d):
                    for k in range(d):
                        cov[j, k] = m2[j, k] / n - score[j] * score[k]
            return risk, score, hess, cov, -1

        NUMBA_ENABLED = True


if NUMBA_ENABLED:
    sq_risk = _sq_risk_nb
    sq_moments = _sq_moments_nb
    logit_risk = _logit_risk_nb
    logit_moments = _logit_moments_nb
else:
    sq_risk = sq_risk_numpy
    sq_moments = sq_moments_numpy
    logit_risk = logit_risk_numpy
    logit_moments = logit_moments_numpy


def warm_up():
    """Trigger JIT compilation of every kernel (no-op on the numpy path)."""
    y = np.array([1.0, -1.0])
    m = np.array([[0.5, -0.25], [0.125, 1.0]])
    v = np.array([0.1, 0.2])
    t = np.array([0.3, -0.4])
    sq_risk(y, v, m, t)
    sq_moments(y, v, m, t, True)
    logit_risk(y, m, v, t)
    logit_moments(y, m, v, t, True)
