"""Damped Newton minimization for the second-stage empirical risk.

The step analysis for objectives whose third directional derivative is
controlled by the second (pseudo self-concordant losses) guarantees fast
local convergence of the damped iteration; globalization is by backtracking
on the objective value, which needs no knowledge of the self-concordance
parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ContractViolationError, NumericDomainError

__all__ = ["SolverOptions", "FitReport", "newton_minimize", "newton_decrement"]

_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of the damped Newton iteration.

    ``decrement_tol`` bounds the squared Newton decrement at termination.
    ``levenberg_floor`` is added to the Hessian diagonal up front; further
    diagonal shifts escalate by factors of 10 from 1e-10 to 1e-2 only when
    factorization fails.
    """

    max_iterations: int = 100
    decrement_tol: float = 1e-10
    backtrack_shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    levenberg_floor: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ContractViolationError("max_iterations must be at least 1")
        if self.decrement_tol <= 0:
            raise ContractViolationError("decrement_tol must be positive")
        if not 0.0 < self.backtrack_shrink < 1.0:
            raise ContractViolationError("backtrack_shrink must lie in (0, 1)")
        if self.sufficient_decrease <= 0:
            raise ContractViolationError("sufficient_decrease must be positive")
        if self.levenberg_floor < 0:
            raise ContractViolationError("levenberg_floor must be nonnegative")


@dataclass(frozen=True)
class FitReport:
    """Second-stage output: estimate, decrement trace and termination cause."""

    theta_hat: np.ndarray
    iterations: int
    final_decrement: float
    termination: str  # converged | max_iterations | line_search_failure
    objective_trace: tuple

    def __post_init__(self):
        if self.termination not in ("converged", "max_iterations", "line_search_failure"):
            raise ContractViolationError(f"unknown termination cause {self.termination!r}")
        if self.final_decrement < 0:
            raise ContractViolationError("final_decrement must be nonnegative")
        trace = tuple(float(v) for v in self.objective_trace)
        if any(b > a for a, b in zip(trace, trace[1:])):
            raise ContractViolationError("objective trace must be non-increasing")
        object.__setattr__(self, "theta_hat", np.asarray(self.theta_hat, dtype=float))
        object.__setattr__(self, "objective_trace", trace)


def _factor(hess, floor):
    """Cholesky with escalating diagonal shift; raises when 1e-2 is not enough."""
    hess = np.asarray(hess, dtype=float)
    d = hess.shape[0]
    sym = (hess + hess.T) / 2.0
    if floor > 0:
        sym = sym + floor * np.eye(d)
    try:
        return scipy.linalg.cho_factor(sym)
    except (scipy.linalg.LinAlgError, ValueError):
        pass
    shift = 1e-10
    while shift <= 1e-2:
        try:
            return scipy.linalg.cho_factor(sym + shift * np.eye(d))
        except scipy.linalg.LinAlgError:
            shift *= 10.0
    raise NumericDomainError(
        "hessian factorization failed after diagonal shifts up to 1e-2"
    )


def newton_decrement(score, hessian) -> float:
    """sqrt(S^T H^{-1} S) for an SPD Hessian."""
    score = np.asarray(score, dtype=float)
    hessian = np.asarray(hessian, dtype=float)
    try:
        factor = scipy.linalg.cho_factor((hessian + hessian.T) / 2.0)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericDomainError(f"hessian is not SPD: {exc}") from exc
    val = float(score @ scipy.linalg.cho_solve(factor, score))
    return float(np.sqrt(max(val, 0.0)))


def newton_minimize(objective, theta_init, opts: SolverOptions | None = None) -> FitReport:
    """Damped Newton descent on ``objective`` (exposing value/gradient/hessian).

    Terminates when the squared Newton decrement drops to ``decrement_tol``,
    the iteration budget is exhausted, or backtracking cannot find a finite
    decreasing step.
    """
    if opts is None:
        opts = SolverOptions()
    theta = np.array(theta_init, dtype=float).copy()
    f = float(objective.value(theta))
    if not np.isfinite(f):
        raise NumericDomainError("objective is not finite at theta_init")
    trace = [f]
    iterations = 0

    for _ in range(opts.max_iterations):
        grad = np.asarray(objective.gradient(theta), dtype=float)
        hess = np.asarray(objective.hessian(theta), dtype=float)
        factor = _factor(hess, opts.levenberg_floor)
        direction = -scipy.linalg.cho_solve(factor, grad)
        decrement_sq = max(float(-grad @ direction), 0.0)
        if decrement_sq <= opts.decrement_tol:
            return FitReport(theta, iterations, float(np.sqrt(decrement_sq)),
                             "converged", tuple(trace))

        step = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            candidate = theta + step * direction
            f_new = float(objective.value(candidate))
            if np.isfinite(f_new) and f_new <= f - opts.sufficient_decrease * step * decrement_sq:
                accepted = True
                break
            step *= opts.backtrack_shrink
        if not accepted:
            return FitReport(theta, iterations, float(np.sqrt(decrement_sq)),
                             "line_search_failure", tuple(trace))
        theta = candidate
        f = f_new
        trace.append(f)
        iterations += 1

    grad = np.asarray(objective.gradient(theta), dtype=float)
    hess = np.asarray(objective.hessian(theta), dtype=float)
    factor = _factor(hess, opts.levenberg_floor)
    decrement_sq = max(float(grad @ scipy.linalg.cho_solve(factor, grad)), 0.0)
    return FitReport(theta, iterations, float(np.sqrt(decrement_sq)),
                     "max_iterations", tuple(trace))
