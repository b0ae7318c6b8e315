"""Command-line entry point.

Five subcommands over one declarative YAML configuration: ``fit`` (one
two-stage estimate), ``sweep`` (Monte Carlo rate sweep), ``effdim``
(eigendecay regime table), ``orthcheck`` (orthogonality defect) and
``stability`` (Hessian stability envelope).  Every subcommand validates the
whole configuration before computing anything and echoes the resolved
configuration into its outputs.

Exit codes: 0 success, 2 configuration error, 3 numeric or solver failure,
4 threshold violation in --check mode.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from .errors import (
    ContractViolationError,
    NumericDomainError,
    SweepFailureError,
    UnsupportedOperationError,
)
from .diagnostics import EigendecayRegime, eigendecay_regimes, hessian_stability
from .experiments import (
    NuisanceMode,
    SweepConfig,
    rate_sweep,
    run_osl,
    write_sweep_csv,
    write_sweep_summary,
)
from .losses import (
    LogitDgp,
    PlmDgp,
    default_logit_dgp,
    default_plm_dgp,
    logit_model,
    plm_model,
    plm_unresidualized_model,
)
from .model_core import SampleBatch
from .nuisance import NuisanceConfig
from .orthogonalize import default_nuisance_directions, orthogonality_defect
from .solver import SolverOptions
from .svgchart import line_chart_svg

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECK = 4


class ConfigError(Exception):
    """Invalid configuration; message names the offending field."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("top level of the config must be a mapping")
    return cfg


def _section(cfg, name, required=True):
    value = cfg.get(name)
    if value is None:
        if required:
            raise ConfigError(f"missing section '{name}'")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    return value


def _get(section, where, name, kind, required=False, default=None):
    if name not in section or section[name] is None:
        if required:
            raise ConfigError(f"missing field '{where}.{name}'")
        return default
    value = section[name]
    try:
        if kind is int:
            if isinstance(value, bool) or int(value) != float(value):
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            return value
        if kind is str:
            if not isinstance(value, str):
                raise ValueError
            return value
        if kind is list:
            if not isinstance(value, list):
                raise ValueError
            return value
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"field '{where}.{name}' must be of type {kind.__name__}")


def _build_dgp(cfg):
    model_kind = _get(cfg, "", "model", str, default="plm")
    if model_kind not in ("plm", "logit"):
        raise ConfigError(f"field 'model' must be 'plm' or 'logit', got {model_kind!r}")
    spec = _section(cfg, "dgp", required=False)
    coef_seed = _get(spec, "dgp", "coef_seed", int, default=7 if model_kind == "plm" else 11)
    theta0 = spec.get("theta0")
    if theta0 is not None and not isinstance(theta0, list):
        raise ConfigError("field 'dgp.theta0' must be a list")

    if model_kind == "plm":
        d = _get(spec, "dgp", "d", int, default=5)
        p = _get(spec, "dgp", "p", int, default=3)
        sigma_v = _get(spec, "dgp", "sigma_v", float, default=0.35)
        rho = _get(spec, "dgp", "rho", float, default=0.3)
        if d < 1 or p < 1:
            raise ConfigError("fields 'dgp.d' and 'dgp.p' must be positive")
        if sigma_v <= 0:
            raise ConfigError("field 'dgp.sigma_v' must be positive")
        if theta0 is not None and len(theta0) != d:
            raise ConfigError(f"field 'dgp.theta0' must have length {d}")
        return model_kind, default_plm_dgp(d=d, p=p, seed=coef_seed, sigma_v=sigma_v,
                                           rho=rho, theta0=theta0)
    d = _get(spec, "dgp", "d", int, default=3)
    p = _get(spec, "dgp", "p", int, default=2)
    x_bound = _get(spec, "dgp", "x_bound", float, default=2.0)
    if d < 1 or p < 1:
        raise ConfigError("fields 'dgp.d' and 'dgp.p' must be positive")
    if x_bound <= 0:
        raise ConfigError("field 'dgp.x_bound' must be positive")
    if theta0 is not None and len(theta0) != d:
        raise ConfigError(f"field 'dgp.theta0' must have length {d}")
    return model_kind, default_logit_dgp(d=d, p=p, seed=coef_seed, x_bound=x_bound,
                                         theta0=theta0)


def _build_nuisance_mode(spec, where):
    mode = _get(spec, where, "mode", str, default="oracle")
    fit_cfg = NuisanceConfig(
        basis=_get(spec, where, "basis", str, default="trigonometric"),
        degree=_get(spec, where, "degree", int, default=2),
        ridge_penalty=_get(spec, where, "ridge_penalty", float, default=1e-6),
        probe_count=_get(spec, where, "probe_count", int, default=10_000),
    )
    if mode == "oracle":
        return NuisanceMode(kind="oracle", fit=fit_cfg)
    if mode == "fitted":
        return NuisanceMode(kind="fitted", fit=fit_cfg)
    if mode == "corrupted":
        c = _get(spec, where, "c", float, default=1.0)
        phi = _get(spec, where, "phi", float, default=0.3)
        return NuisanceMode(kind="corrupted", c=c, phi=phi, fit=fit_cfg)
    raise ConfigError(f"field '{where}.mode' must be oracle, fitted or corrupted")


def _build_solver(spec, where):
    try:
        return SolverOptions(
            max_iterations=_get(spec, where, "max_iterations", int, default=100),
            decrement_tol=_get(spec, where, "decrement_tol", float, default=1e-10),
            backtrack_shrink=_get(spec, where, "backtrack_shrink", float, default=0.5),
            sufficient_decrease=_get(spec, where, "sufficient_decrease", float, default=1e-4),
            levenberg_floor=_get(spec, where, "levenberg_floor", float, default=0.0),
        )
    except ContractViolationError as exc:
        raise ConfigError(f"section '{where}': {exc}") from exc


def _load_csv_batch(path, d, p):
    """User-supplied batch: header y,t1..td,x1..xp, one row per sample."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc
    expected = ["y"] + [f"t{i + 1}" for i in range(d)] + [f"x{i + 1}" for i in range(p)]
    if not rows or rows[0] != expected:
        raise ConfigError(f"data file must have header {','.join(expected)}")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    if data.ndim != 2 or data.shape[1] != 1 + d + p:
        raise ConfigError("data file rows do not match the declared dimensions")
    return SampleBatch(outcomes=data[:, 0], targets=data[:, 1:1 + d],
                       covariates=data[:, 1 + d:])


def _ensure_out(out_dir):
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out_dir} is not writable: {exc}") from exc
    return path


def _write_json(path, payload):
    with open(path, "w", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo(quiet, message):
    if not quiet:
        click.echo(message)


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return _jsonable(value.item())
    if isinstance(value, float):
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="YAML configuration file.")(fn)
    fn = click.option("--out", "out_dir", default=".", show_default=True,
                      help="Output directory.")(fn)
    fn = click.option("--seed", "seed_override", type=int, default=None,
                      help="Override the configured seed.")(fn)
    fn = click.option("--jobs", type=int, default=None,
                      help="Parallel replications (default: all cores).")(fn)
    fn = click.option("--quiet", is_flag=True, help="Suppress progress output.")(fn)
    fn = click.option("--check", "check_mode", is_flag=True,
                      help="Fail (exit 4) when configured thresholds are violated.")(fn)
    return fn


@click.group()
def main():
    """Orthogonal statistical learning: estimation, diagnostics, experiments."""


def _guard(fn):
    """Map package errors to documented exit codes."""
    try:
        code = fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except ContractViolationError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (NumericDomainError, SweepFailureError, UnsupportedOperationError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    sys.exit(code)


@main.command("fit")
@_common_options
def cmd_fit(config_path, out_dir, seed_override, jobs, quiet, check_mode):
    """Run one two-stage fit and write the report JSON."""

    def body():
        cfg = _load_config(config_path)
        spec = _section(cfg, "fit")
        out = _ensure_out(out_dir)
        solver = _build_solver(spec.get("solver") or {}, "fit.solver")
        mode = _build_nuisance_mode(spec.get("nuisance") or {}, "fit.nuisance")
        orthogonal = _get(spec, "fit", "orthogonal", bool, default=True)
        seed = seed_override if seed_override is not None else _get(
            spec, "fit", "seed", int, default=0)

        data_spec = spec.get("data")
        if data_spec is not None:
            if not isinstance(data_spec, dict):
                raise ConfigError("section 'fit.data' must be a mapping")
            model_kind = _get(cfg, "", "model", str, default="plm")
            d = _get(data_spec, "fit.data", "d", int, required=True)
            p = _get(data_spec, "fit.data", "p", int, required=True)
            path = _get(data_spec, "fit.data", "file", str, required=True)
            if mode.kind != "fitted":
                raise ConfigError("field 'fit.nuisance.mode' must be 'fitted' for data files")
            batch = _load_csv_batch(path, d, p)
            if batch.n % 2 != 0:
                raise ConfigError("field 'fit.data.file': row count must be even")
            from .nuisance import fit_first_stage
            half1 = batch.subset(0, batch.n // 2)
            half2 = batch.subset(batch.n // 2, batch.n)
            g_hat = fit_first_stage(model_kind, half2, mode.fit)
            model = plm_model(d=d) if model_kind == "plm" else logit_model(d=d)
            from .solver import newton_minimize
            report = newton_minimize(model.bind(g_hat, half1), np.zeros(d), solver)
            result = None
        else:
            model_kind, dgp = _build_dgp(cfg)
            n = _get(spec, "fit", "n", int, required=True)
            if n % 2 != 0 or n < 2:
                raise ConfigError("field 'fit.n' must be even and at least 2")
            result = run_osl(model_kind, dgp, n, mode, seed, solver, orthogonal)
            report = result.report

        payload = {
            "theta_hat": _jsonable(report.theta_hat),
            "iterations": report.iterations,
            "final_decrement": _jsonable(report.final_decrement),
            "termination": report.termination,
            "objective_trace": _jsonable(report.objective_trace),
            "config": _jsonable(cfg),
        }
        if result is not None:
            payload["excess_risk"] = _jsonable(result.excess_risk)
            payload["nuisance_distance"] = _jsonable(result.nuisance_distance)
        _write_json(out / "fit.json", payload)
        _echo(quiet, f"wrote {out / 'fit.json'} (termination: {report.termination})")
        if report.termination != "converged":
            return EXIT_NUMERIC
        if check_mode:
            checks = spec.get("check") or {}
            max_excess = _get(checks, "fit.check", "max_excess", float, default=None)
            if max_excess is not None and result is not None \
                    and result.excess_risk > max_excess:
                _echo(quiet, f"check failed: excess {result.excess_risk} > {max_excess}")
                return EXIT_CHECK
        return EXIT_OK

    _guard(body)


@main.command("sweep")
@_common_options
def cmd_sweep(config_path, out_dir, seed_override, jobs, quiet, check_mode):
    """Run a Monte Carlo rate sweep; write records CSV and summary JSON."""

    def body():
        cfg = _load_config(config_path)
        spec = _section(cfg, "sweep")
        out = _ensure_out(out_dir)
        model_kind, dgp = _build_dgp(cfg)
        n_grid = _get(spec, "sweep", "n_grid", list, required=True)
        replications = _get(spec, "sweep", "replications", int, required=True)
        if replications < 1:
            raise ConfigError("field 'sweep.replications' must be at least 1")
        mode = _build_nuisance_mode(spec.get("nuisance") or {}, "sweep.nuisance")
        solver = _build_solver(spec.get("solver") or {}, "sweep.solver")
        orthogonal = _get(spec, "sweep", "orthogonal", bool, default=True)
        base_seed = seed_override if seed_override is not None else _get(
            spec, "sweep", "seed", int, default=0)
        n_jobs = jobs if jobs is not None else (os.cpu_count() or 1)
        try:
            sweep_cfg = SweepConfig(
                dgp=dgp, n_grid=tuple(n_grid), replications=replications,
                nuisance_mode=mode, model_kind=model_kind, orthogonal=orthogonal,
                base_seed=base_seed, solver=solver, jobs=max(1, n_jobs))
        except ContractViolationError as exc:
            raise ConfigError(f"section 'sweep': {exc}") from exc

        result = rate_sweep(sweep_cfg)
        write_sweep_csv(result, out / "sweep_records.csv")
        write_sweep_summary(result, _jsonable(cfg), out / "sweep_summary.json")
        _echo(quiet, f"slope={result.slope:.4f} stderr={result.slope_stderr:.4f} "
                     f"failures={result.failure_count}")
        _echo(quiet, f"wrote {out / 'sweep_records.csv'} and {out / 'sweep_summary.json'}")

        if check_mode:
            checks = spec.get("check") or {}
            lo = _get(checks, "sweep.check", "slope_min", float, default=None)
            hi = _get(checks, "sweep.check", "slope_max", float, default=None)
            if (lo is not None and result.slope < lo) or \
               (hi is not None and result.slope > hi):
                _echo(quiet, f"check failed: slope {result.slope:.4f} outside "
                             f"[{lo}, {hi}]")
                return EXIT_CHECK
        return EXIT_OK

    _guard(body)


_REGIME_BUILDERS = {
    "poly_poly": EigendecayRegime.poly_poly,
    "poly_exp": EigendecayRegime.poly_exp,
    "exp_poly": EigendecayRegime.exp_poly,
    "exp_exp": EigendecayRegime.exp_exp,
}


@main.command("effdim")
@_common_options
def cmd_effdim(config_path, out_dir, seed_override, jobs, quiet, check_mode):
    """Tabulate effective and comparison dimensions over eigendecay regimes."""

    def body():
        cfg = _load_config(config_path)
        spec = _section(cfg, "effdim")
        out = _ensure_out(out_dir)
        d_grid = _get(spec, "effdim", "d_grid", list, default=[50, 100, 200, 400])
        regime_specs = _get(spec, "effdim", "regimes", list, required=True)
        want_svg = _get(spec, "effdim", "svg", bool, default=False)
        regimes = []
        for i, rs in enumerate(regime_specs):
            if not isinstance(rs, dict):
                raise ConfigError(f"field 'effdim.regimes[{i}]' must be a mapping")
            kind = _get(rs, f"effdim.regimes[{i}]", "kind", str, required=True)
            if kind not in _REGIME_BUILDERS:
                raise ConfigError(
                    f"field 'effdim.regimes[{i}].kind' must be one of "
                    f"{sorted(_REGIME_BUILDERS)}")
            g_rate = _get(rs, f"effdim.regimes[{i}]", "g_rate", float, required=True)
            h_rate = _get(rs, f"effdim.regimes[{i}]", "h_rate", float, required=True)
            try:
                regimes.append(_REGIME_BUILDERS[kind](g_rate, h_rate))
            except ContractViolationError as exc:
                raise ConfigError(f"field 'effdim.regimes[{i}]': {exc}") from exc

        all_reports = []
        for regime in regimes:
            try:
                all_reports.append((regime, eigendecay_regimes(d_grid, regime)))
            except ContractViolationError as exc:
                raise ConfigError(f"section 'effdim': {exc}") from exc

        with open(out / "effdim.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["regime", "d", "d_star", "d_prime", "ratio",
                             "log_d_star", "log_d_prime"])
            for regime, reports in all_reports:
                for rep in reports:
                    writer.writerow([
                        regime.name, rep.dim, f"{rep.d_star:.17g}",
                        f"{rep.d_prime:.17g}", f"{rep.ratio:.17g}",
                        f"{rep.log_d_star:.17g}", f"{rep.log_d_prime:.17g}"])
        _echo(quiet, f"wrote {out / 'effdim.csv'}")

        if want_svg:
            series = []
            for regime, reports in all_reports:
                xs = [math.log(r.dim) for r in reports]
                series.append((f"{regime.name} log d*", xs,
                               [r.log_d_star for r in reports]))
                series.append((f"{regime.name} log d'", xs,
                               [r.log_d_prime for r in reports]))
            svg = line_chart_svg(series, title="Dimension growth by eigendecay regime",
                                 xlabel="log d", ylabel="log value")
            (out / "effdim.svg").write_text(svg)
            _echo(quiet, f"wrote {out / 'effdim.svg'}")
        return EXIT_OK

    _guard(body)


@main.command("orthcheck")
@_common_options
def cmd_orthcheck(config_path, out_dir, seed_override, jobs, quiet, check_mode):
    """Estimate the orthogonality defect of the configured model."""

    def body():
        cfg = _load_config(config_path)
        spec = _section(cfg, "orthcheck")
        out = _ensure_out(out_dir)
        model_kind, dgp = _build_dgp(cfg)
        n_theta = _get(spec, "orthcheck", "n_theta_dirs", int, default=6)
        n_g = _get(spec, "orthcheck", "n_g_dirs", int, default=6)
        h = _get(spec, "orthcheck", "h", float, default=1e-4)
        orthogonal = _get(spec, "orthcheck", "orthogonal", bool, default=True)
        dir_seed = seed_override if seed_override is not None else _get(
            spec, "orthcheck", "dir_seed", int, default=0)
        if n_theta < 1 or n_g < 1:
            raise ConfigError("direction counts must be positive")
        if h <= 0:
            raise ConfigError("field 'orthcheck.h' must be positive")

        if model_kind == "plm":
            model = plm_model(dgp) if orthogonal else plm_unresidualized_model(dgp)
            g0 = dgp.oracle_nuisance() if orthogonal else dgp.offset_oracle()
        else:
            model = logit_model(dgp)
            g0 = dgp.oracle_nuisance()
        rng = np.random.default_rng(dir_seed)
        theta_dirs = rng.normal(size=(n_theta, model.d))
        g_dirs = default_nuisance_directions(g0, n_g, dir_seed + 1)
        defect = orthogonality_defect(model, dgp.theta0, g0, theta_dirs, g_dirs, h)

        payload = {"model": model_kind, "orthogonal_form": orthogonal,
                   "defect": _jsonable(defect), "h": h,
                   "n_theta_dirs": n_theta, "n_g_dirs": n_g,
                   "config": _jsonable(cfg)}
        _write_json(out / "orthcheck.json", payload)
        _echo(quiet, f"defect={defect:.3e}; wrote {out / 'orthcheck.json'}")

        if check_mode:
            checks = spec.get("check") or {}
            max_defect = _get(checks, "orthcheck.check", "max_defect", float, default=None)
            min_defect = _get(checks, "orthcheck.check", "min_defect", float, default=None)
            if (max_defect is not None and defect > max_defect) or \
               (min_defect is not None and defect < min_defect):
                _echo(quiet, "check failed: defect outside configured bounds")
                return EXIT_CHECK
        return EXIT_OK

    _guard(body)


@main.command("stability")
@_common_options
def cmd_stability(config_path, out_dir, seed_override, jobs, quiet, check_mode):
    """Estimate the Hessian stability envelope over a nuisance neighborhood."""

    def body():
        cfg = _load_config(config_path)
        spec = _section(cfg, "stability")
        out = _ensure_out(out_dir)
        model_kind, dgp = _build_dgp(cfg)
        r2 = _get(spec, "stability", "r2", float, default=0.25)
        n_dirs = _get(spec, "stability", "n_dirs", int, default=20)
        dir_seed = seed_override if seed_override is not None else _get(
            spec, "stability", "dir_seed", int, default=0)
        if r2 < 0:
            raise ConfigError("field 'stability.r2' must be nonnegative")
        if n_dirs < 0:
            raise ConfigError("field 'stability.n_dirs' must be nonnegative")

        model = plm_model(dgp) if model_kind == "plm" else logit_model(dgp)
        g0 = dgp.oracle_nuisance()
        report = hessian_stability(model, dgp.theta0, g0, r2, n_dirs, dir_seed)

        payload = {"model": model_kind, "r2": r2, "n_dirs": n_dirs,
                   "kappa_hat": _jsonable(report.kappa_hat),
                   "K_hat": _jsonable(report.K_hat),
                   "samples_used": report.samples_used,
                   "config": _jsonable(cfg)}
        if model_kind == "plm":
            lam_min = float(np.linalg.eigvalsh(dgp.sigma_u)[0])
            payload["plm_K_upper_bound"] = 1.0 + r2 * r2 / lam_min
        _write_json(out / "stability.json", payload)
        _echo(quiet, f"kappa_hat={report.kappa_hat:.6f} K_hat={report.K_hat:.6f}; "
                     f"wrote {out / 'stability.json'}")

        if check_mode:
            checks = spec.get("check") or {}
            kappa_min = _get(checks, "stability.check", "kappa_min", float, default=None)
            k_max = _get(checks, "stability.check", "K_max", float, default=None)
            if (kappa_min is not None and report.kappa_hat < kappa_min) or \
               (k_max is not None and report.K_hat > k_max):
                _echo(quiet, "check failed: stability constants outside configured bounds")
                return EXIT_CHECK
        return EXIT_OK

    _guard(body)


if __name__ == "__main__":
    main()
