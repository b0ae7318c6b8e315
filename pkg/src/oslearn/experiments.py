"""End-to-end two-stage runs and Monte Carlo rate sweeps.

A run draws 2n samples, fits the nuisance on the second half, minimizes the
empirical risk at the fitted nuisance on the first half, and measures the
excess risk at the true nuisance.  A sweep repeats this over a sample-size
grid and fits the log-log slope of the mean excess risk; under orthogonality
the slope tracks 1/n even when the nuisance error decays as slowly as
n^{-1/4}, while the non-orthogonal sibling degrades to the squared nuisance
error.

Replication seeds derive from (base_seed, n, rep) through splitmix64, so
replications are order-independent and safe to run in parallel; results are
merged by sorting on (n, rep).
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ContractViolationError, NumericDomainError, SweepFailureError
from .losses import (
    LogitDgp,
    PlmDgp,
    logit_model,
    plm_excess_risk,
    plm_model,
    plm_unresidualized_excess_risk,
    plm_unresidualized_model,
    sample,
)
from .model_core import empirical_moments
from .nuisance import NuisanceConfig, corrupt_oracle, fit_first_stage, sup_norm_distance
from .diagnostics import effective_dimension
from .solver import FitReport, SolverOptions, newton_minimize

__all__ = [
    "derive_seed",
    "NuisanceMode",
    "SweepConfig",
    "SweepRecord",
    "SweepResult",
    "RunResult",
    "run_osl",
    "rate_sweep",
    "slope_fit",
    "SlopeFit",
    "effective_dimension_estimate",
    "write_sweep_csv",
    "write_sweep_summary",
]

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One splitmix64 output step (Steele, Lea & Flood's generator)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(base_seed: int, n: int, rep: int) -> int:
    """64-bit replication seed: chained splitmix64 over (base_seed, n, rep)."""
    s = _splitmix64(base_seed & _MASK)
    s = _splitmix64(s ^ (n & _MASK))
    s = _splitmix64(s ^ (rep & _MASK))
    return s


@dataclass(frozen=True)
class NuisanceMode:
    """First-stage policy: the oracle nuisance, a ridge fit on the second
    split, or the oracle corrupted by a seeded direction with amplitude
    c * n^{-phi} (exactly known error for rate experiments)."""

    kind: str  # oracle | fitted | corrupted
    c: float = 1.0
    phi: float = 0.0
    fit: NuisanceConfig = field(default_factory=NuisanceConfig)

    def __post_init__(self):
        if self.kind not in ("oracle", "fitted", "corrupted"):
            raise ContractViolationError(f"unknown nuisance mode {self.kind!r}")
        if self.kind == "corrupted" and (self.c < 0 or self.phi < 0):
            raise ContractViolationError("corruption constants must be nonnegative")

    @staticmethod
    def oracle() -> "NuisanceMode":
        return NuisanceMode(kind="oracle")

    @staticmethod
    def fitted(cfg: Optional[NuisanceConfig] = None) -> "NuisanceMode":
        return NuisanceMode(kind="fitted", fit=cfg or NuisanceConfig())

    @staticmethod
    def corrupted(c: float, phi: float) -> "NuisanceMode":
        return NuisanceMode(kind="corrupted", c=c, phi=phi)


@dataclass(frozen=True)
class RunResult:
    theta_hat: np.ndarray
    excess_risk: float
    nuisance_distance: float
    iterations: int
    report: FitReport


def run_osl(model_kind: str, dgp, n: int, nuisance_mode: NuisanceMode, seed: int,
            solver_opts: Optional[SolverOptions] = None,
            orthogonal: bool = True) -> RunResult:
    """One two-stage run at sample size n (2n draws, disjoint halves).

    Stage 1 uses rows n..2n-1 only, stage 2 rows 0..n-1 only; theta starts at
    zero.  Excess risk is the closed-form quadratic for the partially linear
    families, and a seeded population-risk difference for the logistic model.
    """
    if n % 2 != 0 or n < 2:
        raise ContractViolationError("n must be even and at least 2")
    if model_kind not in ("plm", "logit"):
        raise ContractViolationError(f"unknown model kind {model_kind!r}")
    if model_kind == "logit" and not orthogonal:
        raise ContractViolationError("the non-orthogonal sibling exists only for plm")
    if not isinstance(dgp, (PlmDgp, LogitDgp)):
        raise ContractViolationError(f"unexpected DGP type {type(dgp).__name__}")
    solver_opts = solver_opts or SolverOptions()

    batch = sample(dgp, 2 * n, seed)
    half1 = batch.subset(0, n)       # second-stage data
    half2 = batch.subset(n, 2 * n)   # first-stage data, disjoint by construction

    if model_kind == "plm":
        if orthogonal:
            model = plm_model(dgp)
            g0 = dgp.oracle_nuisance()
        else:
            model = plm_unresidualized_model(dgp)
            g0 = dgp.offset_oracle()
    else:
        model = logit_model(dgp)
        g0 = dgp.oracle_nuisance()

    if nuisance_mode.kind == "oracle":
        g_hat = g0
        distance = 0.0
    elif nuisance_mode.kind == "corrupted":
        amplitude = nuisance_mode.c * float(n) ** (-nuisance_mode.phi)
        g_hat = corrupt_oracle(g0, amplitude, derive_seed(seed, 0xD1CE, 1))
        distance = _probe_distance(dgp, g_hat, g0, seed, nuisance_mode.fit.probe_count)
    else:
        if model_kind == "plm" and not orthogonal:
            raise ContractViolationError(
                "fitted nuisance is undefined for the unresidualized sibling")
        g_hat = fit_first_stage(model_kind, half2, nuisance_mode.fit)
        distance = _probe_distance(dgp, g_hat, g0, seed, nuisance_mode.fit.probe_count)

    objective = model.bind(g_hat, half1)
    report = newton_minimize(objective, np.zeros(model.d), solver_opts)
    if report.termination != "converged":
        raise NumericDomainError(
            f"solver did not converge (termination={report.termination}) "
            f"for model={model_kind}, n={n}, seed={seed}")

    theta_hat = report.theta_hat
    if model_kind == "plm":
        if orthogonal:
            excess = plm_excess_risk(dgp, theta_hat)
        else:
            excess = plm_unresidualized_excess_risk(dgp, theta_hat)
    else:
        excess = model.population_risk(theta_hat, g0) - model.population_risk(dgp.theta0, g0)
    return RunResult(theta_hat=theta_hat, excess_risk=float(excess),
                     nuisance_distance=float(distance),
                     iterations=report.iterations, report=report)


def _probe_distance(dgp, g_hat, g0, seed, probe_count):
    rng = np.random.default_rng(derive_seed(seed, 0xBEEF, 2))
    if isinstance(dgp, PlmDgp):
        probes = dgp.covariates(rng, probe_count)
    else:
        probes = dgp.w_sampler(rng, probe_count)
    return sup_norm_distance(g_hat, g0, probes)


@dataclass(frozen=True)
class SweepRecord:
    n: int
    rep: int
    excess_risk: float
    nuisance_distance: float
    iterations: int

    def __post_init__(self):
        if self.excess_risk < 0:
            raise ContractViolationError("excess risk must be nonnegative")


@dataclass(frozen=True)
class SweepConfig:
    """Full description of a rate sweep; two identical configs produce
    bit-identical results regardless of the parallelism degree."""

    dgp: object
    n_grid: Tuple[int, ...]
    replications: int
    nuisance_mode: NuisanceMode
    model_kind: str = "plm"
    orthogonal: bool = True
    base_seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)
    jobs: int = 1

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if len(grid) < 1:
            raise ContractViolationError("n_grid must be nonempty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ContractViolationError("n_grid must be strictly increasing")
        if any(n % 2 != 0 for n in grid):
            raise ContractViolationError("every n in n_grid must be even")
        if self.replications < 1:
            raise ContractViolationError("replications must be at least 1")
        if self.jobs < 1:
            raise ContractViolationError("jobs must be at least 1")
        object.__setattr__(self, "n_grid", grid)


@dataclass(frozen=True)
class SweepResult:
    """Per-replication records plus fitted log-log slopes of the mean and the
    0.9-quantile excess risk."""

    records: Tuple[SweepRecord, ...]
    slope: float
    slope_stderr: float
    intercept: float
    q90_slope: float
    failures: Tuple[Tuple[int, int, str], ...]

    @property
    def failure_count(self) -> int:
        return len(self.failures)

    def mean_excess_by_n(self):
        out = {}
        for rec in self.records:
            out.setdefault(rec.n, []).append(rec.excess_risk)
        return {n: float(np.mean(v)) for n, v in sorted(out.items())}


def _sweep_task(cfg: SweepConfig, n: int, rep: int):
    seed = derive_seed(cfg.base_seed, n, rep)
    try:
        res = run_osl(cfg.model_kind, cfg.dgp, n, cfg.nuisance_mode, seed,
                      cfg.solver, cfg.orthogonal)
    except (NumericDomainError, ContractViolationError) as exc:
        return (n, rep, None, f"{type(exc).__name__}: {exc}")
    return (n, rep,
            SweepRecord(n=n, rep=rep, excess_risk=res.excess_risk,
                        nuisance_distance=res.nuisance_distance,
                        iterations=res.iterations),
            None)


def rate_sweep(cfg: SweepConfig) -> SweepResult:
    """Run the full grid, excluding and counting failed replications (more
    than 5% failures aborts), then fit log-log slopes."""
    tasks = [(n, rep) for n in cfg.n_grid for rep in range(cfg.replications)]
    outcomes = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_sweep_task, cfg, n, rep) for n, rep in tasks]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [_sweep_task(cfg, n, rep) for n, rep in tasks]
    outcomes.sort(key=lambda t: (t[0], t[1]))

    records = tuple(rec for _, _, rec, _ in outcomes if rec is not None)
    failures = tuple((n, rep, msg) for n, rep, rec, msg in outcomes if rec is None)
    if len(failures) > 0.05 * len(tasks):
        raise SweepFailureError(
            f"{len(failures)} of {len(tasks)} replications failed; first: {failures[0]}")

    by_n = {}
    for rec in records:
        by_n.setdefault(rec.n, []).append(rec.excess_risk)
    missing = [n for n in cfg.n_grid if n not in by_n]
    if missing:
        raise SweepFailureError(f"no successful replications at n={missing}")

    ns = np.array(sorted(by_n))
    means = np.array([np.mean(by_n[n]) for n in ns])
    q90s = np.array([np.quantile(by_n[n], 0.9) for n in ns])
    log_n = np.log(ns)
    if len(ns) >= 3:
        fit = slope_fit(log_n, np.log(means))
        qfit = slope_fit(log_n, np.log(q90s))
        slope, stderr, intercept, q90_slope = fit.slope, fit.stderr, fit.intercept, qfit.slope
    else:
        slope = stderr = intercept = q90_slope = float("nan")
    return SweepResult(records=records, slope=slope, slope_stderr=stderr,
                       intercept=intercept, q90_slope=q90_slope, failures=failures)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float


def slope_fit(x, y) -> SlopeFit:
    """Ordinary least squares line with the classical slope standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractViolationError("x and y must be equal-length vectors")
    if x.shape[0] < 3:
        raise ContractViolationError("slope fit needs at least 3 points")
    if np.ptp(x) == 0:
        raise ContractViolationError("x values are degenerate")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ y) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = x.shape[0] - 2
    sigma2 = float(resid @ resid) / dof
    return SlopeFit(slope=slope, intercept=intercept,
                    stderr=float(np.sqrt(sigma2 / sxx)))


def effective_dimension_estimate(model_kind: str, dgp, n_mc: int, seed: int) -> float:
    """Monte Carlo G_star and H_star at the truth over n_mc fresh samples,
    then the effective dimension of the estimates."""
    if model_kind == "plm":
        model = plm_model(dgp)
    elif model_kind == "logit":
        model = logit_model(dgp)
    else:
        raise ContractViolationError(f"unknown model kind {model_kind!r}")
    g0 = dgp.oracle_nuisance()
    batch = sample(dgp, n_mc, seed)
    moments = empirical_moments(model, dgp.theta0, g0, batch)
    return effective_dimension(moments.score_cov, moments.hessian)


# ---------------------------------------------------------------------------
# artifact output
# ---------------------------------------------------------------------------

def write_sweep_csv(result: SweepResult, path) -> None:
    """Per-record CSV: n, rep, excess_risk, nuisance_distance, iterations."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "rep", "excess_risk", "nuisance_distance", "iterations"])
        for rec in result.records:
            writer.writerow([rec.n, rec.rep, f"{rec.excess_risk:.17g}",
                             f"{rec.nuisance_distance:.17g}", rec.iterations])


def write_sweep_summary(result: SweepResult, config_echo: dict, path) -> None:
    """Summary JSON: slopes, intercept, failure count and the config echo."""
    payload = {
        "slope": result.slope,
        "slope_stderr": result.slope_stderr,
        "intercept": result.intercept,
        "q90_slope": result.q90_slope,
        "failure_count": result.failure_count,
        "mean_excess_by_n": {str(k): v for k, v in result.mean_excess_by_n().items()},
        "config": config_echo,
    }
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
