"""First-stage nuisance functions: oracles, ridge fits, controlled corruption.

A nuisance function maps covariate rows to a fixed-width vector of nuisance
values (width 1 + d for the partially linear model: the outcome conditional
mean followed by the regressor conditional means; width 1 for the logistic
model).  Distances between nuisances use the combined sup-norm: the maximum
over probe points of the euclidean norm of the pointwise difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import ContractViolationError, NumericDomainError
from .model_core import SampleBatch
from .solver import SolverOptions, newton_minimize
from . import _kernels

__all__ = [
    "TrigFunction",
    "NuisanceFn",
    "NuisanceConfig",
    "RidgeCosineDirection",
    "unit_direction",
    "corrupt_oracle",
    "sup_norm_distance",
    "basis_features",
    "basis_width",
    "fit_first_stage",
    "random_trig_function",
]


# ---------------------------------------------------------------------------
# smooth function families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigFunction:
    """Low-order trigonometric polynomial of the covariates.

    Output coordinate k evaluates to
    ``const[k] + sum_{j,m} cos_coef[k,j,m] cos((m+1) pi x_j)
                 + sin_coef[k,j,m] sin((m+1) pi x_j)``.
    With covariates uniform on [-1, 1]^p the basis is orthogonal, so the mean
    and second moment have closed forms.
    """

    const: np.ndarray       # (k,)
    cos_coef: np.ndarray    # (k, p, n_freq)
    sin_coef: np.ndarray    # (k, p, n_freq)

    def __post_init__(self):
        c = np.asarray(self.const, dtype=float)
        a = np.asarray(self.cos_coef, dtype=float)
        b = np.asarray(self.sin_coef, dtype=float)
        if c.ndim != 1 or a.ndim != 3 or b.ndim != 3 or a.shape != b.shape:
            raise ContractViolationError("inconsistent trig coefficient shapes")
        if a.shape[0] != c.shape[0]:
            raise ContractViolationError("coefficient output dimension mismatch")
        object.__setattr__(self, "const", c)
        object.__setattr__(self, "cos_coef", a)
        object.__setattr__(self, "sin_coef", b)

    @property
    def out_dim(self) -> int:
        return self.const.shape[0]

    @property
    def in_dim(self) -> int:
        return self.cos_coef.shape[1]

    @property
    def n_freq(self) -> int:
        return self.cos_coef.shape[2]

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        freqs = np.pi * np.arange(1, self.n_freq + 1)
        ang = X[:, :, None] * freqs  # (n, p, n_freq)
        out = np.tensordot(np.cos(ang), self.cos_coef, axes=([1, 2], [1, 2]))
        out += np.tensordot(np.sin(ang), self.sin_coef, axes=([1, 2], [1, 2]))
        out += self.const
        return out

    def mean(self) -> np.ndarray:
        """E[f(X)] for X uniform on [-1, 1]^p."""
        return self.const.copy()

    def second_moment(self) -> np.ndarray:
        """E[f(X) f(X)^T] for X uniform on [-1, 1]^p (exact)."""
        a = self.cos_coef.reshape(self.out_dim, -1)
        b = self.sin_coef.reshape(self.out_dim, -1)
        return np.outer(self.const, self.const) + 0.5 * (a @ a.T + b @ b.T)

    def affine_output(self, weights, offset=None) -> "TrigFunction":
        """New function x -> weights @ f(x) + offset, staying in the family."""
        weights = np.atleast_2d(np.asarray(weights, dtype=float))
        if weights.shape[1] != self.out_dim:
            raise ContractViolationError("weight width must match output dimension")
        off = np.zeros(weights.shape[0]) if offset is None else np.asarray(offset, dtype=float)
        return TrigFunction(
            const=weights @ self.const + off,
            cos_coef=np.einsum("mk,kpf->mpf", weights, self.cos_coef),
            sin_coef=np.einsum("mk,kpf->mpf", weights, self.sin_coef),
        )

    @staticmethod
    def stack(functions) -> "TrigFunction":
        """Concatenate output coordinates of functions sharing the input space."""
        fns = list(functions)
        p = fns[0].in_dim
        if any(f.in_dim != p for f in fns):
            raise ContractViolationError("stacked functions must share the input dimension")
        n_freq = max(f.n_freq for f in fns)

        def pad(coef, width):
            if coef.shape[2] == width:
                return coef
            out = np.zeros((coef.shape[0], coef.shape[1], width))
            out[:, :, : coef.shape[2]] = coef
            return out

        return TrigFunction(
            const=np.concatenate([f.const for f in fns]),
            cos_coef=np.concatenate([pad(f.cos_coef, n_freq) for f in fns], axis=0),
            sin_coef=np.concatenate([pad(f.sin_coef, n_freq) for f in fns], axis=0),
        )


def random_trig_function(rng, out_dim, in_dim, n_freq=2, const_scale=1.0,
                         coef_scale=0.5) -> TrigFunction:
    """Seeded random member of the family, coefficients uniform in +-scale."""
    return TrigFunction(
        const=rng.uniform(-const_scale, const_scale, out_dim),
        cos_coef=rng.uniform(-coef_scale, coef_scale, (out_dim, in_dim, n_freq)),
        sin_coef=rng.uniform(-coef_scale, coef_scale, (out_dim, in_dim, n_freq)),
    )


@dataclass(frozen=True)
class RidgeCosineDirection:
    """Smooth unit-sup-norm perturbation h(x) = out_vec * cos(freq w.x + phase).

    With ``|phase| <= freq`` the argument crosses zero inside [-1, 1]^p, so the
    sup over the domain of ||h(x)||_2 equals 1 exactly.
    """

    weights: np.ndarray   # (p,), unit euclidean norm
    phase: float
    out_vec: np.ndarray   # (k,), unit euclidean norm
    freq: float = math.pi / 2.0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        arg = self.freq * (X @ self.weights) + self.phase
        return np.cos(arg)[:, None] * self.out_vec


def unit_direction(in_dim: int, out_dim: int, seed: int) -> RidgeCosineDirection:
    """Seeded random unit-sup-norm direction in the smooth perturbation family."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=in_dim)
    w /= np.linalg.norm(w)
    v = rng.normal(size=out_dim)
    v /= np.linalg.norm(v)
    phase = rng.uniform(-math.pi / 2.0, math.pi / 2.0) * 0.999
    return RidgeCosineDirection(weights=w, phase=float(phase), out_vec=v)


# ---------------------------------------------------------------------------
# nuisance functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NuisanceFn:
    """A first-stage function: deterministic, total on the covariate domain.

    ``fn`` maps an (n, in_dim) array of covariate rows to an (n, out_dim)
    array.  ``tag`` records provenance: oracle, fitted, corrupted or
    perturbed.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    in_dim: int
    out_dim: int
    tag: str

    def values(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ContractViolationError("covariate probes must form a 2-d array")
        if X.shape[1] != self.in_dim:
            raise ContractViolationError(
                f"covariate width {X.shape[1]} does not match nuisance input width {self.in_dim}"
            )
        out = np.asarray(self.fn(X), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        if out.shape != (X.shape[0], self.out_dim):
            raise ContractViolationError(
                f"nuisance evaluator returned shape {out.shape}, "
                f"expected ({X.shape[0]}, {self.out_dim})"
            )
        return out

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.values(np.asarray(x, dtype=float)[None, :])[0]

    def shifted(self, direction: Callable, amplitude: float, tag: str = "perturbed") -> "NuisanceFn":
        """This function plus ``amplitude`` times a direction, same widths."""
        return NuisanceFn(
            fn=_ShiftedFn(base=self.fn, direction=direction, amplitude=float(amplitude)),
            in_dim=self.in_dim,
            out_dim=self.out_dim,
            tag=tag,
        )


@dataclass(frozen=True)
class _ShiftedFn:
    base: Callable
    direction: Callable
    amplitude: float

    def __call__(self, X):
        out = np.asarray(self.base(X), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        shift = np.asarray(self.direction(X), dtype=float)
        if shift.ndim == 1:
            shift = shift[:, None]
        return out + self.amplitude * shift


def corrupt_oracle(g0: NuisanceFn, amplitude: float, direction_seed: int) -> NuisanceFn:
    """g0 plus amplitude times a fixed seeded unit-sup-norm smooth direction.

    The sup-norm distance to g0 equals the amplitude by construction, up to
    the resolution of the probe grid used to measure it.  Scaling the
    amplitude scales the pointwise difference exactly linearly.
    """
    if amplitude < 0:
        raise ContractViolationError("amplitude must be nonnegative")
    direction = unit_direction(g0.in_dim, g0.out_dim, direction_seed)
    return g0.shifted(direction, amplitude, tag="corrupted")


def sup_norm_distance(g_a: NuisanceFn, g_b: NuisanceFn, probes: np.ndarray) -> float:
    """Max over probes of the euclidean norm of the pointwise difference.

    A lower bound on the true sup-norm, monotone in the probe set.
    """
    probes = np.asarray(probes, dtype=float)
    if probes.ndim != 2 or probes.shape[0] < 1:
        raise ContractViolationError("probes must be a nonempty 2-d array")
    diff = g_a.values(probes) - g_b.values(probes)
    return float(np.sqrt((diff * diff).sum(axis=1)).max())


# ---------------------------------------------------------------------------
# first-stage fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NuisanceConfig:
    basis: str = "trigonometric"  # trigonometric | polynomial
    degree: int = 2
    ridge_penalty: float = 1e-6
    probe_count: int = 10_000

    def __post_init__(self):
        if self.basis not in ("trigonometric", "polynomial"):
            raise ContractViolationError(f"unknown basis {self.basis!r}")
        if self.degree < 0:
            raise ContractViolationError("degree must be nonnegative")
        if self.ridge_penalty < 0:
            raise ContractViolationError("ridge_penalty must be nonnegative")
        if self.probe_count < 1:
            raise ContractViolationError("probe_count must be positive")


def basis_width(p: int, basis: str, degree: int) -> int:
    if basis == "trigonometric":
        return 1 + 2 * p * degree
    return 1 + p * degree


def basis_features(X: np.ndarray, basis: str, degree: int) -> np.ndarray:
    """Feature expansion: intercept plus per-coordinate terms up to ``degree``."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    cols = [np.ones(n)]
    if basis == "trigonometric":
        for m in range(1, degree + 1):
            ang = m * np.pi * X
            for j in range(p):
                cols.append(np.cos(ang[:, j]))
                cols.append(np.sin(ang[:, j]))
    elif basis == "polynomial":
        for m in range(1, degree + 1):
            for j in range(p):
                cols.append(X[:, j] ** m)
    else:
        raise ContractViolationError(f"unknown basis {basis!r}")
    return np.column_stack(cols)


@dataclass(frozen=True)
class _RidgeBasisFn:
    basis: str
    degree: int
    coef: np.ndarray  # (q, out_dim)

    def __call__(self, X):
        return basis_features(X, self.basis, self.degree) @ self.coef


def _ridge_solve(phi: np.ndarray, targets: np.ndarray, penalty: float) -> np.ndarray:
    n, q = phi.shape
    gram = (phi.T @ phi) / n + penalty * np.eye(q)
    rhs = (phi.T @ targets) / n
    try:
        factor = scipy.linalg.cho_factor(gram)
    except scipy.linalg.LinAlgError as exc:
        raise NumericDomainError(
            "singular normal equations; set ridge_penalty > 0"
        ) from exc
    return scipy.linalg.cho_solve(factor, rhs)


class _PenalizedLogitObjective:
    """Ridge-penalized logistic regression objective on a fixed design."""

    def __init__(self, y, design, penalty):
        self._y = y
        self._design = design
        self._penalty = penalty
        self._cache_key = None
        self._cache = None

    def value(self, coef):
        coef = np.asarray(coef, dtype=float)
        risk, bad = _kernels.logit_risk(self._y, self._design,
                                        np.zeros(self._y.shape[0]), coef)
        if bad >= 0:
            return np.nan
        return risk + self._penalty * float(coef @ coef)

    def _moments(self, coef):
        key = coef.tobytes()
        if self._cache_key != key:
            _, score, hess, _, bad = _kernels.logit_moments(
                self._y, self._design, np.zeros(self._y.shape[0]), coef, False
            )
            if bad >= 0:
                raise NumericDomainError("non-finite logistic loss during first-stage fit")
            self._cache_key = key
            self._cache = (score, hess)
        return self._cache

    def gradient(self, coef):
        coef = np.asarray(coef, dtype=float)
        score, _ = self._moments(coef)
        return score + 2.0 * self._penalty * coef

    def hessian(self, coef):
        coef = np.asarray(coef, dtype=float)
        _, hess = self._moments(coef)
        q = coef.shape[0]
        return hess + 2.0 * self._penalty * np.eye(q)


def fit_first_stage(model_kind: str, batch2: SampleBatch, cfg: NuisanceConfig) -> NuisanceFn:
    """Stage-one estimator on the second sample split.

    For the partially linear model, each regressor coordinate and the outcome
    are ridge-regressed on basis features of the covariates; the outcome
    regression targets the reduced form E[Y | X], which equals the true
    outcome conditional mean because the regressor residuals are centered.

    For the logistic model, a ridge-penalized logistic regression of the
    labels on [targets, basis(covariates)] is fit jointly and the target
    coefficients discarded, keeping the basis part as the nuisance estimate.
    """
    if model_kind not in ("plm", "logit"):
        raise ContractViolationError(f"unknown model kind {model_kind!r}")
    phi = basis_features(batch2.covariates, cfg.basis, cfg.degree)

    if model_kind == "plm":
        targets = np.column_stack([batch2.outcomes, batch2.targets])
        coef = _ridge_solve(phi, targets, cfg.ridge_penalty)
        fn = _RidgeBasisFn(basis=cfg.basis, degree=cfg.degree, coef=coef)
        return NuisanceFn(fn=fn, in_dim=batch2.p, out_dim=1 + batch2.d, tag="fitted")

    design = np.column_stack([batch2.targets, phi])
    objective = _PenalizedLogitObjective(batch2.outcomes, design,
                                         max(cfg.ridge_penalty, 0.0))
    report = newton_minimize(objective, np.zeros(design.shape[1]),
                             SolverOptions(max_iterations=200))
    coef = report.theta_hat[batch2.d:].reshape(-1, 1)
    fn = _RidgeBasisFn(basis=cfg.basis, degree=cfg.degree, coef=coef)
    return NuisanceFn(fn=fn, in_dim=batch2.p, out_dim=1, tag="fitted")
