"""Loss-model interface and empirical score/Hessian/covariance estimators.

Every concrete model implements the per-sample evaluators ``loss``, ``score``
and ``hessian``; batched variants exist for speed but the per-sample API is
the contract.  All types are immutable after construction and all operations
are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    ContractViolationError,
    NumericDomainError,
    UnsupportedOperationError,
)

__all__ = [
    "Sample",
    "SampleBatch",
    "LossModel",
    "EmpiricalMoments",
    "empirical_risk",
    "empirical_moments",
    "check_gradient_consistency",
    "check_hessian_consistency",
]


class Sample(NamedTuple):
    """One observation: outcome, target-regressor row, covariate row."""

    y: float
    target: np.ndarray
    covariate: np.ndarray


def _as_float_array(name, value, ndim):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise ContractViolationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SampleBatch:
    """An i.i.d. dataset split.

    ``outcomes`` has length n, ``targets`` is the n x d matrix of regressors
    multiplying the target parameter, ``covariates`` is the n x p matrix of
    nuisance inputs.  Row counts must agree, n >= 1, d >= 1, and every entry
    must be finite.
    """

    outcomes: np.ndarray
    targets: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = _as_float_array("outcomes", self.outcomes, 1)
        t = _as_float_array("targets", self.targets, 2)
        x = _as_float_array("covariates", self.covariates, 2)
        if not (y.shape[0] == t.shape[0] == x.shape[0]):
            raise ContractViolationError(
                "row counts differ: outcomes "
                f"{y.shape[0]}, targets {t.shape[0]}, covariates {x.shape[0]}"
            )
        if y.shape[0] < 1:
            raise ContractViolationError("batch must contain at least one sample")
        if t.shape[1] < 1:
            raise ContractViolationError("target dimension must be at least 1")
        for name, arr in (("outcomes", y), ("targets", t), ("covariates", x)):
            if not np.isfinite(arr).all():
                raise ContractViolationError(f"{name} contain non-finite entries")
        object.__setattr__(self, "outcomes", np.ascontiguousarray(y))
        object.__setattr__(self, "targets", np.ascontiguousarray(t))
        object.__setattr__(self, "covariates", np.ascontiguousarray(x))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def d(self) -> int:
        return self.targets.shape[1]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def row(self, i: int) -> Sample:
        return Sample(float(self.outcomes[i]), self.targets[i], self.covariates[i])

    def subset(self, start: int, stop: int) -> "SampleBatch":
        return SampleBatch(
            self.outcomes[start:stop],
            self.targets[start:stop],
            self.covariates[start:stop],
        )


@dataclass(frozen=True)
class EmpiricalMoments:
    """Batch averages: score S_n, Hessian H_n and centered score covariance
    G_n (centering by the empirical mean score)."""

    score: np.ndarray
    hessian: np.ndarray
    score_cov: np.ndarray
    n_used: int

    def __post_init__(self):
        s = _as_float_array("score", self.score, 1)
        h = _as_float_array("hessian", self.hessian, 2)
        g = _as_float_array("score_cov", self.score_cov, 2)
        d = s.shape[0]
        if h.shape != (d, d) or g.shape != (d, d):
            raise ContractViolationError("moment matrices must be d x d with d = len(score)")
        asym = float(np.abs(h - h.T).max()) if d else 0.0
        if asym > 1e-12:
            raise NumericDomainError(f"hessian asymmetry {asym:.3e} exceeds 1e-12")
        eigs = np.linalg.eigvalsh((g + g.T) / 2.0)
        floor = -1e-10 * max(float(np.trace(g)), 0.0)
        if eigs[0] < floor:
            raise NumericDomainError(
                f"score covariance eigenvalue {eigs[0]:.3e} below PSD floor {floor:.3e}"
            )
        object.__setattr__(self, "score", s)
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "score_cov", g)


class LossModel:
    """Interface housing the loss and its derivatives in the target parameter.

    Subclasses must set ``d`` (target dimension), ``self_concordance`` (the
    pseudo self-concordance parameter R) and ``nuisance_dim`` (output width
    expected from a nuisance function), and implement the per-sample
    evaluators.  ``moments_batch``/``risk_batch`` may be overridden with
    vectorized paths; the defaults loop over rows.

    Population oracles (``population_risk`` etc.) are available only when the
    model is bound to a known data-generating process; otherwise they raise
    :class:`UnsupportedOperationError`.
    """

    d: int
    self_concordance: float
    nuisance_dim: int

    # -- per-sample contract ------------------------------------------------

    def loss(self, theta, g, z: Sample) -> float:
        raise NotImplementedError

    def score(self, theta, g, z: Sample) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, theta, g, z: Sample) -> np.ndarray:
        raise NotImplementedError

    # -- batched internals ----------------------------------------------------

    def risk_batch(self, theta, g, batch: SampleBatch):
        """Returns (mean loss, bad_index)."""
        total = 0.0
        for i in range(batch.n):
            li = self.loss(theta, g, batch.row(i))
            if not np.isfinite(li):
                return np.nan, i
            total += li
        return total / batch.n, -1

    def moments_batch(self, theta, g, batch: SampleBatch, want_cov: bool):
        """Returns (mean loss, mean score, mean Hessian, score covariance,
        bad_index).  Covariance is a zero matrix when ``want_cov`` is false."""
        d = self.d
        scores = np.empty((batch.n, d))
        hess = np.zeros((d, d))
        total = 0.0
        for i in range(batch.n):
            z = batch.row(i)
            li = self.loss(theta, g, z)
            if not np.isfinite(li):
                return np.nan, np.zeros(d), np.zeros((d, d)), np.zeros((d, d)), i
            total += li
            scores[i] = self.score(theta, g, z)
            hess += self.hessian(theta, g, z)
        mean_score = scores.mean(axis=0)
        hess /= batch.n
        cov = np.zeros((d, d))
        if want_cov:
            centered = scores - mean_score
            cov = (centered.T @ centered) / batch.n
        return total / batch.n, mean_score, hess, cov, -1

    def bind(self, g, batch: SampleBatch):
        """Objective over the batch at fixed nuisance, for the Newton solver.

        The default adapter re-evaluates through the batched internals;
        concrete models override with versions that precompute the nuisance
        values once.
        """
        return _GenericBoundObjective(self, g, batch)

    # -- population oracles ---------------------------------------------------

    @property
    def has_population_oracles(self) -> bool:
        return False

    def population_risk(self, theta, g) -> float:
        raise UnsupportedOperationError("population risk needs a model bound to a DGP")

    def population_score(self, theta, g) -> np.ndarray:
        raise UnsupportedOperationError("population score needs a model bound to a DGP")

    def population_hessian(self, theta, g) -> np.ndarray:
        raise UnsupportedOperationError("population hessian needs a model bound to a DGP")

    def population_score_cov(self, theta, g) -> np.ndarray:
        raise UnsupportedOperationError("population score covariance needs a model bound to a DGP")


class _GenericBoundObjective:
    """value/gradient/hessian adapter over (model, g, batch)."""

    def __init__(self, model, g, batch):
        self._model = model
        self._g = g
        self._batch = batch
        self._cache_key = None
        self._cache = None

    def _moments(self, theta):
        key = theta.tobytes()
        if self._cache_key != key:
            risk, score, hess, _, bad = self._model.moments_batch(
                theta, self._g, self._batch, want_cov=False
            )
            if bad >= 0:
                raise NumericDomainError(f"non-finite loss at sample index {bad}")
            self._cache_key = key
            self._cache = (risk, score, hess)
        return self._cache

    def value(self, theta):
        theta = np.asarray(theta, dtype=float)
        risk, bad = self._model.risk_batch(theta, self._g, self._batch)
        if bad >= 0:
            return np.nan
        return risk

    def gradient(self, theta):
        return self._moments(np.asarray(theta, dtype=float))[1]

    def hessian(self, theta):
        return self._moments(np.asarray(theta, dtype=float))[2]


def _check_theta(model, theta):
    theta = _as_float_array("theta", theta, 1)
    if theta.shape[0] != model.d:
        raise ContractViolationError(
            f"theta has length {theta.shape[0]}, model dimension is {model.d}"
        )
    return theta


def _check_batch(model, batch):
    if batch.d != model.d:
        raise ContractViolationError(
            f"batch target dimension {batch.d} does not match model dimension {model.d}"
        )


def empirical_risk(model: LossModel, theta, g, batch: SampleBatch) -> float:
    """Mean of the per-sample loss over the batch."""
    theta = _check_theta(model, theta)
    _check_batch(model, batch)
    risk, bad = model.risk_batch(theta, g, batch)
    if bad >= 0:
        raise NumericDomainError(f"non-finite loss at sample index {bad}")
    return risk


def empirical_moments(model: LossModel, theta, g, batch: SampleBatch) -> EmpiricalMoments:
    """Mean score, mean Hessian and centered score covariance over the batch."""
    theta = _check_theta(model, theta)
    _check_batch(model, batch)
    _, score, hess, cov, bad = model.moments_batch(theta, g, batch, want_cov=True)
    if bad >= 0:
        raise NumericDomainError(f"non-finite loss at sample index {bad}")
    return EmpiricalMoments(score=score, hessian=hess, score_cov=cov, n_used=batch.n)


def check_gradient_consistency(model: LossModel, theta, g, z: Sample, h: float = 1e-5) -> float:
    """Max over coordinates of |central finite difference of the loss minus
    the analytic score|.  Validation plumbing, never used by the estimator."""
    if h <= 0:
        raise ContractViolationError("finite-difference step h must be positive")
    theta = _check_theta(model, theta)
    analytic = model.score(theta, g, z)
    worst = 0.0
    for j in range(model.d):
        step = np.zeros(model.d)
        step[j] = h
        fd = (model.loss(theta + step, g, z) - model.loss(theta - step, g, z)) / (2.0 * h)
        worst = max(worst, abs(fd - analytic[j]))
    return worst


def check_hessian_consistency(model: LossModel, theta, g, z: Sample, h: float = 1e-5) -> float:
    """Max entrywise |central finite difference of the score minus the
    analytic Hessian|."""
    if h <= 0:
        raise ContractViolationError("finite-difference step h must be positive")
    theta = _check_theta(model, theta)
    analytic = model.hessian(theta, g, z)
    worst = 0.0
    for j in range(model.d):
        step = np.zeros(model.d)
        step[j] = h
        fd_col = (model.score(theta + step, g, z) - model.score(theta - step, g, z)) / (2.0 * h)
        worst = max(worst, float(np.abs(fd_col - analytic[:, j]).max()))
    return worst
