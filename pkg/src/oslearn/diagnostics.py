"""Dimension and stability diagnostics.

The effective dimension Tr(H^{-1/2} G H^{-1/2}) measures the mismatch between
the score covariance and the Hessian; it equals d when G = H.  The profile
variant takes a supremum over a nuisance neighborhood, approximated here by
seeded boundary sampling (a lower bound, monotone in the number of sampled
directions).  Synthetic eigendecay regimes reproduce the comparison between
the effective dimension and the d^2 / lambda_min benchmark; exponential
regimes are evaluated in log space so that dimension grids far beyond the
float range still report exact log values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .errors import (
    ContractViolationError,
    NumericDomainError,
    UnsupportedOperationError,
)
from .model_core import LossModel
from .nuisance import NuisanceFn, unit_direction

__all__ = [
    "EffDimReport",
    "StabilityReport",
    "EigendecayRegime",
    "effective_dimension",
    "comparison_dimension",
    "profile_effective_dimension",
    "eigendecay_regimes",
    "hessian_stability",
]


@dataclass(frozen=True)
class EffDimReport:
    """Effective dimension d_star, comparison dimension d_prime = d^2 /
    lambda_min(H), their ratio, and the spectra used.  Values that overflow
    the float range are inf; the log fields are always finite."""

    d_star: float
    d_prime: float
    ratio: float
    log_d_star: float
    log_d_prime: float
    spectrum_g: np.ndarray
    spectrum_h: np.ndarray
    dim: int
    regime: Optional[str] = None

    def __post_init__(self):
        if self.dim >= 1 and not self.log_d_star <= math.inf:
            raise ContractViolationError("log_d_star must be finite or -inf")


@dataclass(frozen=True)
class StabilityReport:
    """Extreme generalized eigenvalue envelope of H(theta_star, g) against
    H_star over a sampled nuisance neighborhood."""

    kappa_hat: float
    K_hat: float
    samples_used: int

    def __post_init__(self):
        if not 0.0 < self.kappa_hat <= self.K_hat:
            raise ContractViolationError(
                f"need 0 < kappa_hat <= K_hat, got ({self.kappa_hat}, {self.K_hat})")


def _check_square(name, mat):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ContractViolationError(f"{name} must be square, got {mat.shape}")
    if np.abs(mat - mat.T).max() > 1e-10 * max(1.0, np.abs(mat).max()):
        raise ContractViolationError(f"{name} must be symmetric")
    return (mat + mat.T) / 2.0


def effective_dimension(G, H) -> float:
    """Tr(H^{-1/2} G H^{-1/2}) = Tr(H^{-1} G) via SPD factorization."""
    G = _check_square("G", G)
    H = _check_square("H", H)
    if G.shape != H.shape:
        raise ContractViolationError("G and H must share dimensions")
    g_eigs = np.linalg.eigvalsh(G)
    if g_eigs[0] < -1e-10 * max(float(np.trace(G)), 0.0):
        raise ContractViolationError("G must be positive semi-definite")
    try:
        factor = scipy.linalg.cho_factor(H)
    except scipy.linalg.LinAlgError as exc:
        raise NumericDomainError("H is not SPD") from exc
    return float(np.trace(scipy.linalg.cho_solve(factor, G)))


def comparison_dimension(d: int, H) -> float:
    """d^2 / lambda_min(H)."""
    if d < 1:
        raise ContractViolationError("d must be at least 1")
    H = _check_square("H", H)
    lam_min = float(np.linalg.eigvalsh(H)[0])
    if lam_min <= 0:
        raise NumericDomainError("H is not SPD")
    return d * d / lam_min


def profile_effective_dimension(model: LossModel, theta_star, g0: NuisanceFn,
                                r2: float, n_dirs: int, seed: int) -> float:
    """Max effective dimension over g0 plus n_dirs seeded boundary
    perturbations of radius r2.  A lower bound on the true supremum,
    monotone in n_dirs for a fixed seed."""
    if r2 < 0:
        raise ContractViolationError("r2 must be nonnegative")
    if not model.has_population_oracles:
        raise UnsupportedOperationError("profile effective dimension needs population oracles")
    theta_star = np.asarray(theta_star, dtype=float)
    h_star = model.population_hessian(theta_star, g0)
    best = effective_dimension(model.population_score_cov(theta_star, g0), h_star)
    if r2 == 0:
        return best
    for i in range(n_dirs):
        direction = unit_direction(g0.in_dim, g0.out_dim, seed + i)
        g = g0.shifted(direction, r2)
        best = max(best, effective_dimension(
            model.population_score_cov(theta_star, g), h_star))
    return best


@dataclass(frozen=True)
class EigendecayRegime:
    """Joint eigendecay of (G, H) in a shared eigenbasis.

    Each side decays polynomially (lambda_i = i^-rate) or exponentially
    (lambda_i = exp(-rate i)).
    """

    g_kind: str   # poly | exp
    g_rate: float
    h_kind: str
    h_rate: float

    def __post_init__(self):
        for kind in (self.g_kind, self.h_kind):
            if kind not in ("poly", "exp"):
                raise ContractViolationError(f"unknown decay kind {kind!r}")
        if self.g_rate <= 0 or self.h_rate <= 0:
            raise ContractViolationError("decay rates must be positive")

    @property
    def name(self) -> str:
        return f"{self.g_kind}_{self.h_kind}({self.g_rate:g},{self.h_rate:g})"

    @staticmethod
    def poly_poly(alpha, beta):
        return EigendecayRegime("poly", alpha, "poly", beta)

    @staticmethod
    def poly_exp(alpha, nu):
        return EigendecayRegime("poly", alpha, "exp", nu)

    @staticmethod
    def exp_poly(mu, beta):
        return EigendecayRegime("exp", mu, "poly", beta)

    @staticmethod
    def exp_exp(mu, nu):
        return EigendecayRegime("exp", mu, "exp", nu)


def _log_spectrum(kind, rate, d):
    i = np.arange(1, d + 1, dtype=float)
    if kind == "poly":
        return -rate * np.log(i)
    return -rate * i


def eigendecay_regimes(d_grid: Sequence[int], regime: EigendecayRegime):
    """One report per dimension: diagonal G and H with the prescribed decays,
    d_star = sum of eigenvalue ratios, d_prime = d^2 / lambda_min(H)."""
    d_grid = [int(d) for d in d_grid]
    if any(b <= a for a, b in zip(d_grid, d_grid[1:])):
        raise ContractViolationError("d_grid must be strictly increasing")
    reports = []
    for d in d_grid:
        if d < 1:
            raise ContractViolationError("dimensions must be positive")
        log_g = _log_spectrum(regime.g_kind, regime.g_rate, d)
        log_h = _log_spectrum(regime.h_kind, regime.h_rate, d)
        log_d_star = float(logsumexp(log_g - log_h))
        log_d_prime = 2.0 * math.log(d) - float(log_h.min())
        with np.errstate(over="ignore"):
            spectrum_g = np.exp(log_g)
            spectrum_h = np.exp(log_h)
            d_star = float(np.exp(log_d_star))
            d_prime = float(np.exp(log_d_prime))
            ratio = float(np.exp(log_d_prime - log_d_star))
        reports.append(EffDimReport(
            d_star=d_star, d_prime=d_prime, ratio=ratio,
            log_d_star=log_d_star, log_d_prime=log_d_prime,
            spectrum_g=spectrum_g, spectrum_h=spectrum_h,
            dim=d, regime=regime.name,
        ))
    return reports


def hessian_stability(model: LossModel, theta_star, g0: NuisanceFn,
                      r2: float, n_dirs: int, seed: int) -> StabilityReport:
    """Envelope kappa_hat H_star <= H(theta_star, g) <= K_hat H_star over g0
    plus n_dirs boundary perturbations of radius r2.  g0 is always included,
    so kappa_hat <= 1 <= K_hat."""
    if r2 < 0:
        raise ContractViolationError("r2 must be nonnegative")
    if not model.has_population_oracles:
        raise UnsupportedOperationError("hessian stability needs population oracles")
    theta_star = np.asarray(theta_star, dtype=float)
    h_star = model.population_hessian(theta_star, g0)
    try:
        scipy.linalg.cho_factor((h_star + h_star.T) / 2.0)
    except scipy.linalg.LinAlgError as exc:
        raise NumericDomainError("H_star is not SPD") from exc

    lo, hi = 1.0, 1.0
    count = 1
    if r2 > 0:
        for i in range(n_dirs):
            direction = unit_direction(g0.in_dim, g0.out_dim, seed + i)
            g = g0.shifted(direction, r2)
            h_g = model.population_hessian(theta_star, g)
            eigs = scipy.linalg.eigh((h_g + h_g.T) / 2.0,
                                     (h_star + h_star.T) / 2.0, eigvals_only=True)
            lo = min(lo, float(eigs[0]))
            hi = max(hi, float(eigs[-1]))
            count += 1
    return StabilityReport(kappa_hat=lo, K_hat=hi, samples_used=count)
