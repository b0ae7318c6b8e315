"""Concrete loss models and their data-generating processes.

Two models are implemented in full:

* a partially linear model (squared loss on nuisance-residualized outcomes
  and regressors), Neyman orthogonal, with closed-form population risk; and
* semi-parametric logistic regression, pseudo self-concordant with parameter
  equal to the regressor norm bound, population quantities by seeded Monte
  Carlo.

A deliberately non-orthogonal sibling of the partially linear model keeps the
raw regressors (no residualization); its nuisance is the scalar offset
``E[Y - theta0 . D | X]`` and the target parameter is unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from scipy.special import expit

from . import _kernels
from .errors import (
    ContractViolationError,
    NumericDomainError,
    UnsupportedOperationError,
)
from .model_core import LossModel, Sample, SampleBatch
from .nuisance import NuisanceFn, TrigFunction

__all__ = [
    "UniformCovariates",
    "UniformBall",
    "PlmDgp",
    "LogitDgp",
    "default_plm_dgp",
    "default_logit_dgp",
    "sample",
    "PlmLossModel",
    "LogitLossModel",
    "plm_model",
    "plm_unresidualized_model",
    "logit_model",
    "plm_excess_risk",
    "plm_unresidualized_excess_risk",
    "self_concordance_ratio",
]

_ORACLE_SEED = 202_305
_ORACLE_DRAWS = 200_000


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformCovariates:
    """i.i.d. uniform rows on [-1, 1]^p."""

    p: int

    def __call__(self, rng, n):
        return rng.uniform(-1.0, 1.0, (n, self.p))


@dataclass(frozen=True)
class UniformBall:
    """i.i.d. uniform rows in the euclidean ball of the given radius."""

    dim: int
    radius: float

    def __call__(self, rng, n):
        z = rng.normal(size=(n, self.dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=n) ** (1.0 / self.dim)
        return z * r[:, None]


# ---------------------------------------------------------------------------
# data-generating processes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlmDgp:
    """Partially linear design: D = alpha0(X) + U, Y = zeta0(X) + theta0.U + V.

    ``zeta0`` is the outcome conditional mean E[Y | X].  U is drawn uniformly
    on a centered ellipsoid boundary scaled so that E[U U^T] equals
    ``sigma_u`` exactly and ||U|| <= u_bound almost surely; V is independent
    Gaussian noise with standard deviation ``sigma_v``.
    """

    theta0: np.ndarray
    alpha0: TrigFunction
    zeta0: TrigFunction
    sigma_u: np.ndarray
    sigma_v: float
    covariates: Callable = None  # (rng, n) -> (n, p)

    def __post_init__(self):
        theta0 = np.asarray(self.theta0, dtype=float)
        sigma_u = np.asarray(self.sigma_u, dtype=float)
        d = theta0.shape[0]
        if sigma_u.shape != (d, d):
            raise ContractViolationError("sigma_u must be d x d")
        if np.abs(sigma_u - sigma_u.T).max() > 1e-12:
            raise ContractViolationError("sigma_u must be symmetric")
        eigs = np.linalg.eigvalsh(sigma_u)
        if eigs[0] <= 0:
            raise ContractViolationError("sigma_u must be positive definite")
        if self.sigma_v <= 0:
            raise ContractViolationError("sigma_v must be positive")
        if self.alpha0.out_dim != d or self.zeta0.out_dim != 1:
            raise ContractViolationError("alpha0 must map to R^d and zeta0 to R")
        if self.alpha0.in_dim != self.zeta0.in_dim:
            raise ContractViolationError("alpha0 and zeta0 must share the covariate space")
        cov = self.covariates if self.covariates is not None else UniformCovariates(self.alpha0.in_dim)
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "sigma_u", sigma_u)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "_chol_u", np.linalg.cholesky(sigma_u))
        object.__setattr__(self, "_u_bound", math.sqrt(d * eigs[-1]))

    @property
    def d(self) -> int:
        return self.theta0.shape[0]

    @property
    def p(self) -> int:
        return self.alpha0.in_dim

    @property
    def u_bound(self) -> float:
        """Almost-sure bound on ||U||_2 implied by the ellipsoid sampler."""
        return self._u_bound

    def draw_u(self, rng, n) -> np.ndarray:
        z = rng.normal(size=(n, self.d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return math.sqrt(self.d) * (z @ self._chol_u.T)

    def gamma0(self) -> TrigFunction:
        """Offset nuisance of the unresidualized sibling: zeta0 - theta0.alpha0."""
        stacked = TrigFunction.stack([self.zeta0, self.alpha0])
        weights = np.concatenate([[1.0], -self.theta0])[None, :]
        return stacked.affine_output(weights)

    def oracle_nuisance(self) -> NuisanceFn:
        """(zeta0, alpha0) stacked, width 1 + d."""
        fn = TrigFunction.stack([self.zeta0, self.alpha0])
        return NuisanceFn(fn=fn, in_dim=self.p, out_dim=1 + self.d, tag="oracle")

    def offset_oracle(self) -> NuisanceFn:
        """gamma0 as a width-1 nuisance for the unresidualized sibling."""
        return NuisanceFn(fn=self.gamma0(), in_dim=self.p, out_dim=1, tag="oracle")

    def target_second_moment(self) -> np.ndarray:
        """E[D D^T] = sigma_u + E[alpha0 alpha0^T].

        Exact when the covariate sampler is the built-in uniform; otherwise
        estimated once by seeded Monte Carlo.
        """
        if isinstance(self.covariates, UniformCovariates):
            return self.sigma_u + self.alpha0.second_moment()
        rng = np.random.default_rng(_ORACLE_SEED)
        X = self.covariates(rng, 1_000_000)
        A = self.alpha0(X)
        return self.sigma_u + (A.T @ A) / A.shape[0]


@dataclass(frozen=True)
class LogitDgp:
    """P(Y = 1 | X, W) = sigmoid(theta0.X + g0(W)), labels in {-1, +1},
    ||X||_2 <= x_bound almost surely."""

    theta0: np.ndarray
    g0: TrigFunction
    x_bound: float
    x_sampler: Callable = None  # (rng, n) -> (n, d)
    w_sampler: Callable = None  # (rng, n) -> (n, pw)

    def __post_init__(self):
        theta0 = np.asarray(self.theta0, dtype=float)
        if self.g0.out_dim != 1:
            raise ContractViolationError("g0 must map to R")
        if self.x_bound <= 0:
            raise ContractViolationError("x_bound must be positive")
        xs = self.x_sampler if self.x_sampler is not None else UniformBall(theta0.shape[0], self.x_bound)
        ws = self.w_sampler if self.w_sampler is not None else UniformCovariates(self.g0.in_dim)
        object.__setattr__(self, "theta0", theta0)
        object.__setattr__(self, "x_sampler", xs)
        object.__setattr__(self, "w_sampler", ws)

    @property
    def d(self) -> int:
        return self.theta0.shape[0]

    @property
    def p(self) -> int:
        return self.g0.in_dim

    def oracle_nuisance(self) -> NuisanceFn:
        return NuisanceFn(fn=self.g0, in_dim=self.p, out_dim=1, tag="oracle")


def default_plm_dgp(d=5, p=3, seed=7, sigma_v=0.35, rho=0.3, theta0=None) -> PlmDgp:
    """Deterministic default design with trigonometric nuisance components."""
    rng = np.random.default_rng(seed)
    if theta0 is None:
        j = np.arange(d)
        theta0 = (-1.0) ** j * (1.0 / (1.0 + 0.5 * j))
    alpha0 = TrigFunction(
        const=1.0 + 0.2 * rng.uniform(-1.0, 1.0, d),
        cos_coef=rng.uniform(-0.6, 0.6, (d, p, 2)),
        sin_coef=rng.uniform(-0.6, 0.6, (d, p, 2)),
    )
    zeta0 = TrigFunction(
        const=np.array([0.5]),
        cos_coef=rng.uniform(-0.6, 0.6, (1, p, 2)),
        sin_coef=rng.uniform(-0.6, 0.6, (1, p, 2)),
    )
    idx = np.arange(d)
    sigma_u = rho ** np.abs(idx[:, None] - idx[None, :])
    return PlmDgp(theta0=np.asarray(theta0, dtype=float), alpha0=alpha0, zeta0=zeta0,
                  sigma_u=sigma_u, sigma_v=sigma_v, covariates=UniformCovariates(p))


def default_logit_dgp(d=3, p=2, seed=11, x_bound=2.5, theta0=None) -> LogitDgp:
    rng = np.random.default_rng(seed)
    if theta0 is None:
        j = np.arange(d)
        theta0 = (-1.0) ** j * np.maximum(1.5 - 0.4 * j, 0.4)
    g0 = TrigFunction(
        const=np.array([0.8]),
        cos_coef=rng.uniform(-1.0, 1.0, (1, p, 2)),
        sin_coef=rng.uniform(-1.0, 1.0, (1, p, 2)),
    )
    return LogitDgp(theta0=np.asarray(theta0, dtype=float), g0=g0, x_bound=float(x_bound))


def sample(dgp, n: int, seed: int) -> SampleBatch:
    """Deterministic batch of n draws from the process; the RNG consumption
    order is fixed (PLM: covariates, U, V; logistic: X, W, label uniforms)."""
    if n < 1:
        raise ContractViolationError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if isinstance(dgp, PlmDgp):
        X = dgp.covariates(rng, n)
        U = dgp.draw_u(rng, n)
        V = rng.normal(0.0, dgp.sigma_v, n)
        D = dgp.alpha0(X) + U
        Y = dgp.zeta0(X)[:, 0] + U @ dgp.theta0 + V
        return SampleBatch(outcomes=Y, targets=D, covariates=X)
    if isinstance(dgp, LogitDgp):
        X = dgp.x_sampler(rng, n)
        W = dgp.w_sampler(rng, n)
        prob = expit(X @ dgp.theta0 + dgp.g0(W)[:, 0])
        Y = np.where(rng.uniform(size=n) < prob, 1.0, -1.0)
        return SampleBatch(outcomes=Y, targets=X, covariates=W)
    raise ContractViolationError(f"unknown DGP type {type(dgp).__name__}")


# ---------------------------------------------------------------------------
# partially linear model
# ---------------------------------------------------------------------------

class _SqBoundObjective:
    """Newton objective for the squared loss with nuisance values precomputed."""

    def __init__(self, y, offs, E):
        self._y = y
        self._offs = offs
        self._E = E
        self._cache_key = None
        self._cache = None

    def value(self, theta):
        risk, bad = _kernels.sq_risk(self._y, self._offs, self._E,
                                     np.asarray(theta, dtype=float))
        return np.nan if bad >= 0 else risk

    def _moments(self, theta):
        key = theta.tobytes()
        if self._cache_key != key:
            _, score, hess, _, bad = _kernels.sq_moments(
                self._y, self._offs, self._E, theta, False)
            if bad >= 0:
                raise NumericDomainError(f"non-finite loss at sample index {bad}")
            self._cache_key = key
            self._cache = (score, hess)
        return self._cache

    def gradient(self, theta):
        return self._moments(np.asarray(theta, dtype=float))[0]

    def hessian(self, theta):
        return self._moments(np.asarray(theta, dtype=float))[1]


class PlmLossModel(LossModel):
    """Squared loss [y - zeta(x) - theta.(t - alpha(x))]^2.

    With ``residualize=False`` the regressors are kept raw and the nuisance
    is the scalar offset: [y - gamma(x) - theta.t]^2.  The residualized form
    is Neyman orthogonal at the truth; the raw form is not.

    Quadratic in theta, so the pseudo self-concordance parameter is 0 and
    per-sample Hessians do not depend on theta.
    """

    def __init__(self, dgp: Optional[PlmDgp] = None, *, d: Optional[int] = None,
                 residualize: bool = True,
                 oracle_draws: int = _ORACLE_DRAWS, oracle_seed: int = _ORACLE_SEED):
        if dgp is None and d is None:
            raise ContractViolationError("provide a DGP or the target dimension d")
        self.dgp = dgp
        self.residualize = residualize
        self.d = dgp.d if dgp is not None else int(d)
        self.nuisance_dim = 1 + self.d if residualize else 1
        self.self_concordance = 0.0
        self._oracle_draws = int(oracle_draws)
        self._oracle_seed = int(oracle_seed)
        self._probe_cache = None
        self._gvals_cache = []

    # -- per-sample contract --

    def _components(self, theta, g, z: Sample):
        gv = g.value(z.covariate)
        if gv.shape[0] != self.nuisance_dim:
            raise ContractViolationError(
                f"nuisance width {gv.shape[0]}, model expects {self.nuisance_dim}")
        e = z.target - gv[1:] if self.residualize else z.target
        r = z.y - gv[0] - float(theta @ e)
        return r, e

    def loss(self, theta, g, z: Sample) -> float:
        r, _ = self._components(theta, g, z)
        return r * r

    def score(self, theta, g, z: Sample) -> np.ndarray:
        r, e = self._components(theta, g, z)
        return -2.0 * r * e

    def hessian(self, theta, g, z: Sample) -> np.ndarray:
        _, e = self._components(theta, g, z)
        return 2.0 * np.outer(e, e)

    # -- batched internals --

    def _batch_arrays(self, g, batch: SampleBatch):
        gv = g.values(batch.covariates)
        if gv.shape[1] != self.nuisance_dim:
            raise ContractViolationError(
                f"nuisance width {gv.shape[1]}, model expects {self.nuisance_dim}")
        offs = np.ascontiguousarray(gv[:, 0])
        E = batch.targets - gv[:, 1:] if self.residualize else batch.targets
        return offs, np.ascontiguousarray(E)

    def risk_batch(self, theta, g, batch):
        offs, E = self._batch_arrays(g, batch)
        return _kernels.sq_risk(batch.outcomes, offs, E, np.asarray(theta, dtype=float))

    def moments_batch(self, theta, g, batch, want_cov):
        offs, E = self._batch_arrays(g, batch)
        return _kernels.sq_moments(batch.outcomes, offs, E,
                                   np.asarray(theta, dtype=float), want_cov)

    def bind(self, g, batch):
        offs, E = self._batch_arrays(g, batch)
        return _SqBoundObjective(batch.outcomes, offs, E)

    # -- population oracles --

    @property
    def has_population_oracles(self) -> bool:
        return self.dgp is not None

    def _require_dgp(self) -> PlmDgp:
        if self.dgp is None:
            raise UnsupportedOperationError(
                "population oracle requested on a model with no bound DGP")
        return self.dgp

    def _probes(self):
        """Oracle ensemble (X, U, V) plus cached true-nuisance values on it,
        drawn once from dedicated streams."""
        if self._probe_cache is None:
            dgp = self._require_dgp()
            n = self._oracle_draws
            X = dgp.covariates(np.random.default_rng([self._oracle_seed, 0]), n)
            U = dgp.draw_u(np.random.default_rng([self._oracle_seed, 1]), n)
            V = np.random.default_rng([self._oracle_seed, 2]).normal(0.0, dgp.sigma_v, n)
            if self.residualize:
                true_offs = dgp.zeta0(X)[:, 0]
                true_block = dgp.alpha0(X)
            else:
                true_offs = dgp.gamma0()(X)[:, 0]
                true_block = dgp.alpha0(X)
            self._probe_cache = (X, U, V, true_offs, true_block)
        return self._probe_cache

    def _oracle_gvals(self, g, X):
        # nuisance functions are immutable; memoize by object identity so that
        # stencil probes re-evaluating the same g pay the trig cost once
        for key, val in self._gvals_cache:
            if key is g:
                return val
        val = g.values(X)
        self._gvals_cache.append((g, val))
        if len(self._gvals_cache) > 8:
            self._gvals_cache.pop(0)
        return val

    def _pop_terms(self, theta, g):
        """(m, a, coef): approximation-error mean m(X), regression block a(X),
        and the vector multiplying a in the population residual."""
        dgp = self._require_dgp()
        theta = np.asarray(theta, dtype=float)
        X, _, _, true_offs, true_block = self._probes()
        gv = self._oracle_gvals(g, X)
        if gv.shape[1] != self.nuisance_dim:
            raise ContractViolationError(
                f"nuisance width {gv.shape[1]}, model expects {self.nuisance_dim}")
        m = true_offs - gv[:, 0]
        if self.residualize:
            a = true_block - gv[:, 1:]
            coef = theta
        else:
            a = true_block
            coef = theta - dgp.theta0
        return m, a, coef, theta

    def population_risk(self, theta, g) -> float:
        dgp = self._require_dgp()
        m, a, coef, theta = self._pop_terms(theta, g)
        delta = theta - dgp.theta0
        resid = m - a @ coef
        return float(resid @ resid) / resid.shape[0] \
            + float(delta @ dgp.sigma_u @ delta) + dgp.sigma_v ** 2

    def population_score(self, theta, g) -> np.ndarray:
        dgp = self._require_dgp()
        m, a, coef, theta = self._pop_terms(theta, g)
        delta = theta - dgp.theta0
        resid = m - a @ coef
        return (-2.0 / a.shape[0]) * (a.T @ resid) + 2.0 * dgp.sigma_u @ delta

    def population_hessian(self, theta, g) -> np.ndarray:
        dgp = self._require_dgp()
        _, a, _, _ = self._pop_terms(theta, g)
        return 2.0 * ((a.T @ a) / a.shape[0] + dgp.sigma_u)

    def population_score_cov(self, theta, g) -> np.ndarray:
        """Covariance of the per-sample score over the oracle ensemble."""
        dgp = self._require_dgp()
        theta = np.asarray(theta, dtype=float)
        X, U, V, _, _ = self._probes()
        D = dgp.alpha0(X) + U
        Y = dgp.zeta0(X)[:, 0] + U @ dgp.theta0 + V
        gv = self._oracle_gvals(g, X)
        offs = np.ascontiguousarray(gv[:, 0])
        E = D - gv[:, 1:] if self.residualize else D
        _, _, _, cov, bad = _kernels.sq_moments(Y, offs, np.ascontiguousarray(E),
                                                theta, True)
        if bad >= 0:
            raise NumericDomainError("non-finite score in population covariance")
        return cov


def plm_model(dgp: Optional[PlmDgp] = None, *, d: Optional[int] = None,
              oracle_draws: int = _ORACLE_DRAWS,
              oracle_seed: int = _ORACLE_SEED) -> PlmLossModel:
    """Residualized (Neyman-orthogonal) partially linear loss model."""
    return PlmLossModel(dgp, d=d, residualize=True,
                        oracle_draws=oracle_draws, oracle_seed=oracle_seed)


def plm_unresidualized_model(dgp: Optional[PlmDgp] = None, *, d: Optional[int] = None,
                             oracle_draws: int = _ORACLE_DRAWS,
                             oracle_seed: int = _ORACLE_SEED) -> PlmLossModel:
    """Raw-regressor sibling, deliberately not Neyman orthogonal."""
    return PlmLossModel(dgp, d=d, residualize=False,
                        oracle_draws=oracle_draws, oracle_seed=oracle_seed)


def plm_excess_risk(dgp: PlmDgp, theta) -> float:
    """Exact excess risk of the residualized model at the true nuisance:
    (theta - theta0)^T sigma_u (theta - theta0)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] != dgp.d:
        raise ContractViolationError(f"theta has length {theta.shape[0]}, expected {dgp.d}")
    delta = theta - dgp.theta0
    return float(delta @ dgp.sigma_u @ delta)


def plm_unresidualized_excess_risk(dgp: PlmDgp, theta) -> float:
    """Exact excess risk of the raw-regressor sibling at its true nuisance:
    (theta - theta0)^T E[D D^T] (theta - theta0)."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] != dgp.d:
        raise ContractViolationError(f"theta has length {theta.shape[0]}, expected {dgp.d}")
    delta = theta - dgp.theta0
    return float(delta @ dgp.target_second_moment() @ delta)


# ---------------------------------------------------------------------------
# semi-parametric logistic regression
# ---------------------------------------------------------------------------

class _LogitBoundObjective:
    def __init__(self, y, X, gvals):
        self._y = y
        self._X = X
        self._gvals = gvals
        self._cache_key = None
        self._cache = None

    def value(self, theta):
        risk, bad = _kernels.logit_risk(self._y, self._X, self._gvals,
                                        np.asarray(theta, dtype=float))
        return np.nan if bad >= 0 else risk

    def _moments(self, theta):
        key = theta.tobytes()
        if self._cache_key != key:
            _, score, hess, _, bad = _kernels.logit_moments(
                self._y, self._X, self._gvals, theta, False)
            if bad >= 0:
                raise NumericDomainError(f"non-finite loss at sample index {bad}")
            self._cache_key = key
            self._cache = (score, hess)
        return self._cache

    def gradient(self, theta):
        return self._moments(np.asarray(theta, dtype=float))[0]

    def hessian(self, theta):
        return self._moments(np.asarray(theta, dtype=float))[1]


class LogitLossModel(LossModel):
    """Logistic loss log(1 + exp(-y (theta.x + g(w)))) with labels in {-1, 1}.

    Pseudo self-concordant with parameter equal to the bound on ||x||_2.
    Population quantities carry no closed form for generic samplers and are
    evaluated by Monte Carlo over a dedicated seeded ensemble with the label
    integrated out analytically.
    """

    def __init__(self, dgp: Optional[LogitDgp] = None, *, d: Optional[int] = None,
                 x_bound: Optional[float] = None,
                 oracle_draws: int = _ORACLE_DRAWS, oracle_seed: int = _ORACLE_SEED):
        if dgp is None and d is None:
            raise ContractViolationError("provide a DGP or the target dimension d")
        self.dgp = dgp
        self.d = dgp.d if dgp is not None else int(d)
        self.nuisance_dim = 1
        if dgp is not None:
            self.self_concordance = float(dgp.x_bound)
        else:
            self.self_concordance = float(x_bound) if x_bound is not None else math.inf
        self._oracle_draws = int(oracle_draws)
        self._oracle_seed = int(oracle_seed)
        self._probe_cache = None
        self._gvals_cache = []

    # -- per-sample contract --

    def _margin(self, theta, g, z: Sample) -> float:
        gv = g.value(z.covariate)
        return float(theta @ z.target) + float(gv[0])

    def loss(self, theta, g, z: Sample) -> float:
        a = self._margin(theta, g, z)
        return float(np.logaddexp(0.0, -z.y * a))

    def score(self, theta, g, z: Sample) -> np.ndarray:
        a = self._margin(theta, g, z)
        return (expit(a) - 0.5 - 0.5 * z.y) * z.target

    def hessian(self, theta, g, z: Sample) -> np.ndarray:
        a = self._margin(theta, g, z)
        s = expit(a)
        return s * (1.0 - s) * np.outer(z.target, z.target)

    # -- batched internals --

    def _gvals(self, g, batch):
        gv = g.values(batch.covariates)
        if gv.shape[1] != 1:
            raise ContractViolationError(f"nuisance width {gv.shape[1]}, model expects 1")
        return np.ascontiguousarray(gv[:, 0])

    def risk_batch(self, theta, g, batch):
        return _kernels.logit_risk(batch.outcomes, batch.targets,
                                   self._gvals(g, batch), np.asarray(theta, dtype=float))

    def moments_batch(self, theta, g, batch, want_cov):
        return _kernels.logit_moments(batch.outcomes, batch.targets,
                                      self._gvals(g, batch),
                                      np.asarray(theta, dtype=float), want_cov)

    def bind(self, g, batch):
        return _LogitBoundObjective(batch.outcomes, batch.targets, self._gvals(g, batch))

    # -- population oracles --

    @property
    def has_population_oracles(self) -> bool:
        return self.dgp is not None

    def _require_dgp(self) -> LogitDgp:
        if self.dgp is None:
            raise UnsupportedOperationError(
                "population oracle requested on a model with no bound DGP")
        return self.dgp

    def _probes(self):
        """Oracle ensemble (X, W) plus cached truth margins and H at the truth."""
        if self._probe_cache is None:
            dgp = self._require_dgp()
            n = self._oracle_draws
            X = dgp.x_sampler(np.random.default_rng([self._oracle_seed, 0]), n)
            W = dgp.w_sampler(np.random.default_rng([self._oracle_seed, 1]), n)
            p0 = expit(X @ dgp.theta0 + dgp.g0(W)[:, 0])
            h0 = p0 * (1.0 - p0)
            hess_star = (X.T * h0) @ X / n
            self._probe_cache = (X, W, p0, hess_star)
        return self._probe_cache

    def _pop_margin(self, theta, g):
        X, W, p0, hess_star = self._probes()
        gv = None
        for key, val in self._gvals_cache:
            if key is g:
                gv = val
                break
        if gv is None:
            gv = g.values(W)
            if gv.shape[1] != 1:
                raise ContractViolationError(f"nuisance width {gv.shape[1]}, model expects 1")
            self._gvals_cache.append((g, gv))
            if len(self._gvals_cache) > 8:
                self._gvals_cache.pop(0)
        return X, p0, hess_star, X @ np.asarray(theta, dtype=float) + gv[:, 0]

    def population_risk(self, theta, g) -> float:
        _, p0, _, a = self._pop_margin(theta, g)
        losses = p0 * np.logaddexp(0.0, -a) + (1.0 - p0) * np.logaddexp(0.0, a)
        return float(losses.mean())

    def population_score(self, theta, g) -> np.ndarray:
        X, p0, _, a = self._pop_margin(theta, g)
        return X.T @ (expit(a) - p0) / X.shape[0]

    def population_hessian(self, theta, g) -> np.ndarray:
        X, _, _, a = self._pop_margin(theta, g)
        s = expit(a)
        return (X.T * (s * (1.0 - s))) @ X / X.shape[0]

    def population_score_cov(self, theta, g) -> np.ndarray:
        X, p0, hess_star, a = self._pop_margin(theta, g)
        diff = expit(a) - p0
        term = (X.T * (diff * diff)) @ X / X.shape[0]
        mean_score = X.T @ diff / X.shape[0]
        return term - np.outer(mean_score, mean_score) + hess_star


def logit_model(dgp: Optional[LogitDgp] = None, *, d: Optional[int] = None,
                x_bound: Optional[float] = None,
                oracle_draws: int = _ORACLE_DRAWS,
                oracle_seed: int = _ORACLE_SEED) -> LogitLossModel:
    """Semi-parametric logistic loss model; R equals the regressor bound."""
    return LogitLossModel(dgp, d=d, x_bound=x_bound,
                          oracle_draws=oracle_draws, oracle_seed=oracle_seed)


# ---------------------------------------------------------------------------
# self-concordance diagnostics
# ---------------------------------------------------------------------------

def self_concordance_ratio(model: LossModel, theta_a, theta_b, g,
                           probes: SampleBatch) -> float:
    """Smallest R >= 0 with exp(-R ||dtheta||) H(a) <= H(b) <= exp(R ||dtheta||) H(a)
    for the probe-averaged Hessians, from the generalized eigenvalues of the
    pair.  Zero for quadratic losses; at most the declared parameter for
    models satisfying the sandwich."""
    theta_a = np.asarray(theta_a, dtype=float)
    theta_b = np.asarray(theta_b, dtype=float)
    if probes.n < 1:
        raise ContractViolationError("probes must be nonempty")
    gap = float(np.linalg.norm(theta_b - theta_a))
    *_, h_a, _, bad_a = model.moments_batch(theta_a, g, probes, want_cov=False)
    *_, h_b, _, bad_b = model.moments_batch(theta_b, g, probes, want_cov=False)
    if bad_a >= 0 or bad_b >= 0:
        raise NumericDomainError("non-finite loss while averaging probe Hessians")
    if gap == 0.0:
        return 0.0
    try:
        scipy.linalg.cho_factor((h_a + h_a.T) / 2.0)
    except scipy.linalg.LinAlgError as exc:
        raise NumericDomainError("averaged Hessian at theta_a is singular") from exc
    eigs = scipy.linalg.eigh((h_b + h_b.T) / 2.0, (h_a + h_a.T) / 2.0,
                             eigvals_only=True)
    if eigs[0] <= 0:
        return math.inf
    return max(abs(math.log(eigs[0])), abs(math.log(eigs[-1]))) / gap
