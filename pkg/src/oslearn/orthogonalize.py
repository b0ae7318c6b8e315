"""Orthogonal-score construction and numerical orthogonality checks.

For a finite-dimensional nuisance block, projecting the target score on the
nuisance score yields a score whose nuisance derivative vanishes at the
truth.  For arbitrary models, the mixed derivative of the population risk in
(target direction, nuisance perturbation) is estimated by a 4-point central
stencil; a near-zero maximum over probe directions certifies orthogonality.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import (
    ContractViolationError,
    NumericDomainError,
    UnsupportedOperationError,
)
from .model_core import LossModel
from .nuisance import NuisanceFn, unit_direction

__all__ = ["orthogonal_score", "orthogonality_defect", "default_nuisance_directions"]


def orthogonal_score(s_theta, s_beta, cross_hessian, beta_hessian) -> np.ndarray:
    """S_theta - gamma S_beta with gamma = cross_hessian beta_hessian^{-1}."""
    s_theta = np.asarray(s_theta, dtype=float)
    s_beta = np.asarray(s_beta, dtype=float)
    cross = np.atleast_2d(np.asarray(cross_hessian, dtype=float))
    beta_h = np.atleast_2d(np.asarray(beta_hessian, dtype=float))
    d, m = s_theta.shape[0], s_beta.shape[0]
    if cross.shape != (d, m):
        raise ContractViolationError(f"cross_hessian must be {d} x {m}, got {cross.shape}")
    if beta_h.shape != (m, m):
        raise ContractViolationError(f"beta_hessian must be {m} x {m}, got {beta_h.shape}")
    try:
        factor = scipy.linalg.cho_factor((beta_h + beta_h.T) / 2.0)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericDomainError("beta_hessian is not SPD") from exc
    return s_theta - cross @ scipy.linalg.cho_solve(factor, s_beta)


def default_nuisance_directions(g0: NuisanceFn, count: int, seed: int):
    """Seeded unit-sup-norm smooth perturbation directions matching g0."""
    return [unit_direction(g0.in_dim, g0.out_dim, seed + i) for i in range(count)]


def orthogonality_defect(model: LossModel, theta_star, g0: NuisanceFn,
                         theta_dirs, g_dirs, h: float = 1e-4) -> float:
    """Max over direction pairs of the central finite-difference estimate of
    the mixed derivative of the population risk at (theta_star, g0).

    theta directions are normalized to unit euclidean norm; nuisance
    directions are expected to have unit sup-norm (the built-in family
    does).  The 4-point stencil uses step h in both coordinates.
    """
    if h <= 0:
        raise ContractViolationError("step h must be positive")
    if not model.has_population_oracles:
        raise UnsupportedOperationError("orthogonality defect needs population oracles")
    theta_star = np.asarray(theta_star, dtype=float)
    theta_dirs = np.atleast_2d(np.asarray(theta_dirs, dtype=float))
    if theta_dirs.shape[1] != theta_star.shape[0]:
        raise ContractViolationError("theta directions must match the target dimension")

    worst = 0.0
    for direction in g_dirs:
        g_plus = g0.shifted(direction, +h)
        g_minus = g0.shifted(direction, -h)
        for u in theta_dirs:
            norm = np.linalg.norm(u)
            if norm == 0:
                continue
            tu = (h / norm) * u
            stencil = (
                model.population_risk(theta_star + tu, g_plus)
                - model.population_risk(theta_star - tu, g_plus)
                - model.population_risk(theta_star + tu, g_minus)
                + model.population_risk(theta_star - tu, g_minus)
            )
            worst = max(worst, abs(stencil) / (4.0 * h * h))
    return worst
