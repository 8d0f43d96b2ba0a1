"""Named verification experiments with pass/fail reports.

Experiments are data: a suite config lists them with their problem,
seeds, batch sizes, and tolerances, and every run emits a JSON report
plus raw CSV curves into its own output directory.  Identical config
and seeds reproduce identical reports.
"""
from __future__ import annotations

import configparser
import csv
import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from . import models
from .adjoint import RegressionBasis, solve_discrete_adjoint_batch, solve_lsmc_adjoint, duality_residual_batch
from .forward import ControlPath, constant_control, simulate_batch
from .models import ConfigError, ProblemSpec, builtin_problem, check_assumptions, load_problem
from .noise import generate_batch
from .optimizer import (
    OptimizeOptions,
    estimate_gradient,
    projected_gradient_descent,
    smp_residual_from_gradient,
)
from .sensitivity import eps_scaling_report, loglog_slope, simulate_linearized_batch

__all__ = [
    "EXPERIMENTS",
    "ExperimentSpec",
    "VerificationReport",
    "run_experiment",
    "run_suite",
    "suite_passed",
    "load_suite",
    "default_output_root",
]

EXPERIMENTS = (
    "eps-scaling",
    "delta-eps",
    "duality",
    "cost-expansion",
    "smp-at-optimum",
    "adjoint-stability",
    "assumption-check",
)

# One-line statement of what each experiment certifies, quoted in reports.
_CLAIMS = {
    "eps-scaling": "mean-square state response to a control perturbation scales quadratically in the perturbation size",
    "delta-eps": "the first-order Taylor remainder of the perturbed state vanishes as the perturbation shrinks",
    "duality": "the terminal costate/linearized-state pairing equals the accumulated running-cost and control forcings",
    "cost-expansion": "the cost change under a convex control perturbation matches its first-order expansion up to a quadratic remainder",
    "smp-at-optimum": "at the computed optimum no admissible competitor improves the control-gradient pairing beyond tolerance",
    "adjoint-stability": "the regression-based costate tracks the exact transposed costate in the mean",
    "assumption-check": "local monotonicity, coercivity, and cost-growth margins hold on the sampled ball",
}

_DEFAULT_TOLERANCES = {
    "eps-scaling": 0.1,  # allowed deviation of the log-log slope from 2
    "delta-eps": 1e-3,  # remainder at the smallest eps relative to the largest
    "duality": 1e-10,  # pairing-identity residual, exact transpose
    "cost-expansion": 0.1,  # allowed deviation of the remainder slope from 2
    "smp-at-optimum": 1e-3,  # final residual relative to the initial one
    "adjoint-stability": 0.1,  # mean-costate relative gap
    "assumption-check": 0.0,  # margins must be nonnegative outright
}


@dataclass
class ExperimentSpec:
    name: str
    problem: ProblemSpec
    tolerance: float | None = None
    seed: int = 0
    n_paths: int = 200
    options: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; have {EXPERIMENTS}")
        if self.tolerance is None:
            self.tolerance = _DEFAULT_TOLERANCES[self.name]
        if not self.label:
            self.label = self.name


@dataclass
class VerificationReport:
    name: str
    claim: str
    measured: dict
    tolerance: float
    verdict: bool
    runtime_s: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "claim": self.claim,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "verdict": "pass" if self.verdict else "fail",
            "runtime_s": self.runtime_s,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _write_curve(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(list(row))


def _direction(spec: ProblemSpec, scale: float) -> ControlPath:
    return constant_control(spec, scale * np.ones(spec.d_control))


def _eps_list(options, default):
    raw = options.get("eps_list", default)
    if isinstance(raw, str):
        raw = [float(tok) for tok in raw.replace(";", ",").split(",") if tok.strip()]
    return np.asarray(list(raw), dtype=np.float64)


def _run_eps_scaling(exp: ExperimentSpec, out_dir: Path | None):
    spec = exp.problem
    eps = _eps_list(exp.options, (0.2, 0.1, 0.05, 0.025))
    scale = float(exp.options.get("direction_scale", 0.5))
    rep = eps_scaling_report(
        spec, spec.u0, constant_control(spec, np.zeros(spec.d_control)),
        _direction(spec, scale), eps, n_paths=exp.n_paths, seed=exp.seed,
    )
    measured = {
        "slope": rep.slope,
        "slope_weighted": rep.slope_weighted,
        "max_e1_fourth_moment": float(np.max(rep.e1_fourth_moment)),
    }
    verdict = abs(rep.slope - 2.0) <= exp.tolerance
    if out_dir is not None:
        rep.write_csv(out_dir / "eps_scaling.csv")
    return measured, verdict, rep.to_dict()


def _run_delta_eps(exp: ExperimentSpec, out_dir: Path | None):
    spec = exp.problem
    eps = _eps_list(exp.options, (0.2, 0.1, 0.05, 0.025, 0.0125))
    scale = float(exp.options.get("direction_scale", 0.5))
    rep = eps_scaling_report(
        spec, spec.u0, constant_control(spec, np.zeros(spec.d_control)),
        _direction(spec, scale), eps, n_paths=exp.n_paths, seed=exp.seed,
    )
    sup_delta = rep.sup_delta_sq
    ratio = float(sup_delta[-1] / max(sup_delta[0], 1e-300))
    decreasing = bool(np.all(np.diff(sup_delta) < 0.0))
    measured = {"ratio_smallest_to_largest": ratio, "strictly_decreasing": decreasing,
                "sup_delta_sq": sup_delta.tolist()}
    verdict = decreasing and ratio < exp.tolerance
    if out_dir is not None:
        _write_curve(out_dir / "delta_eps.csv", ["eps", "sup_delta_sq"], zip(eps, sup_delta))
    return measured, verdict, rep.to_dict()


def _run_duality(exp: ExperimentSpec, out_dir: Path | None):
    spec = exp.problem
    method = exp.options.get("method", "discrete-adjoint")
    scale = float(exp.options.get("direction_scale", 0.5))
    control = constant_control(spec, np.zeros(spec.d_control))
    direction = _direction(spec, scale)
    batch = generate_batch(exp.seed, range(exp.n_paths), spec.n_steps, spec.noise.m_noise, spec.dt)
    forwards = simulate_batch(spec, spec.u0, control, batch)
    if forwards.n_invalid:
        raise RuntimeError("duality experiment: forward batch blew up")
    if method == "discrete-adjoint":
        adj = solve_discrete_adjoint_batch(spec, forwards.states, control, batch.increments)
    else:
        basis = RegressionBasis(n_feat=int(exp.options.get("n_feat", min(spec.space.n_modes, 4))))
        adj = solve_lsmc_adjoint(spec, forwards, control, batch, basis)
    sens = simulate_linearized_batch(spec, forwards.states, direction, batch.increments)
    residual = duality_residual_batch(spec, sens, adj.costates, control, direction, forwards.states)
    measured = {"residual": residual, "method": method}
    if out_dir is not None:
        _write_curve(out_dir / "duality.csv", ["method", "residual"], [(method, residual)])
    return measured, residual < exp.tolerance, {}


def _run_cost_expansion(exp: ExperimentSpec, out_dir: Path | None):
    spec = exp.problem
    eps = _eps_list(exp.options, (0.04, 0.02, 0.01, 0.005))
    scale = float(exp.options.get("direction_scale", 0.5))
    control = constant_control(spec, np.zeros(spec.d_control))
    direction = _direction(spec, scale)
    batch = generate_batch(exp.seed, range(exp.n_paths), spec.n_steps, spec.noise.m_noise, spec.dt)
    star = simulate_batch(spec, spec.u0, control, batch)
    if star.n_invalid:
        raise RuntimeError("cost-expansion experiment: reference batch blew up")
    p = simulate_linearized_batch(spec, star.states, direction, batch.increments)

    term_state = float(np.mean(np.sum(models.cost_terminal(spec, star.states[:, -1, :]).grad
                                      * p[:, -1, :], axis=-1)))
    run0 = models.cost_running(spec, star.states[:, :-1, :], control.values)
    term_running = float(spec.dt * np.mean(np.sum(np.sum(run0.grad_u * p[:, :-1, :], axis=-1), axis=-1)))
    cost0 = float(np.mean(spec.dt * np.sum(run0.value, axis=-1)
                          + models.cost_terminal(spec, star.states[:, -1, :]).value))

    remainders = np.empty_like(eps)
    for i, e in enumerate(eps):
        pert_control = ControlPath(control.values + e * direction.values)
        pert = simulate_batch(spec, spec.u0, pert_control, batch)
        if pert.n_invalid:
            raise RuntimeError(f"cost-expansion experiment: perturbed batch blew up at eps={e}")
        rune = models.cost_running(spec, pert.states[:, :-1, :], pert_control.values)
        cost_e = float(np.mean(spec.dt * np.sum(rune.value, axis=-1)
                               + models.cost_terminal(spec, pert.states[:, -1, :]).value))
        # Exact control-cost increment along the unperturbed states.
        run_shift = models.cost_running(spec, star.states[:, :-1, :], pert_control.values)
        term_control = float(spec.dt * np.mean(np.sum(run_shift.value - run0.value, axis=-1)))
        remainders[i] = abs(cost_e - cost0 - e * (term_state + term_running) - term_control)
    slope = loglog_slope(eps, np.maximum(remainders, 1e-300))
    measured = {
        "remainder_slope": slope,
        "remainders": remainders.tolist(),
        "first_order_terms": {"terminal": term_state, "running_state": term_running},
    }
    verdict = abs(slope - 2.0) <= exp.tolerance
    if out_dir is not None:
        _write_curve(out_dir / "cost_expansion.csv", ["eps", "remainder"], zip(eps, remainders))
    return measured, verdict, {}


def _run_smp_at_optimum(exp: ExperimentSpec, out_dir: Path | None):
    spec = exp.problem
    opts = OptimizeOptions(
        max_iters=int(exp.options.get("max_iters", 500)),
        step0=float(exp.options.get("step0", 1.0)),
        tol=float(exp.options.get("pgd_tol", 0.0)),
        n_paths=exp.n_paths,
        seed=exp.seed,
        method=exp.options.get("method", "discrete-adjoint"),
    )
    phi0 = constant_control(spec, np.zeros(spec.d_control))
    report = projected_gradient_descent(spec, spec.u0, phi0, opts)
    initial = report.smp_residual_history[0]
    final = report.smp_residual_history[-1]
    ratio = final / max(initial, 1e-300)
    measured = {
        "initial_residual": initial,
        "final_residual": final,
        "ratio": ratio,
        "final_cost": report.iterates[-1],
        "iterations": len(report.iterates) - 1,
    }
    verdict = ratio <= exp.tolerance
    if out_dir is not None:
        report.write_csv(out_dir / "optimize_log.csv")
        (out_dir / "optimize_report.json").write_text(report.to_json())
    return measured, verdict, {"stalled": report.stalled, "converged": report.converged}


def _run_adjoint_stability(exp: ExperimentSpec, out_dir: Path | None):
    spec = exp.problem
    control = constant_control(spec, np.zeros(spec.d_control))
    batch = generate_batch(exp.seed, range(exp.n_paths), spec.n_steps, spec.noise.m_noise, spec.dt)
    forwards = simulate_batch(spec, spec.u0, control, batch)
    if forwards.n_invalid:
        raise RuntimeError("adjoint-stability experiment: forward batch blew up")
    exact = solve_discrete_adjoint_batch(spec, forwards.states, control, batch.increments)
    basis = RegressionBasis(n_feat=int(exp.options.get("n_feat", min(spec.space.n_modes, 4))))
    lsmc = solve_lsmc_adjoint(spec, forwards, control, batch, basis)
    mean_exact = np.mean(exact.costates, axis=0)
    mean_lsmc = np.mean(lsmc.costates, axis=0)
    gaps = np.linalg.norm(mean_lsmc - mean_exact, axis=-1) / (1.0 + np.linalg.norm(mean_exact, axis=-1))
    gap = float(np.max(gaps))
    measured = {"max_mean_costate_gap": gap}
    if out_dir is not None:
        _write_curve(out_dir / "adjoint_stability.csv", ["step", "gap"], enumerate(gaps))
    return measured, gap < exp.tolerance, {}


def _run_assumption_check(exp: ExperimentSpec, out_dir: Path | None):
    spec = exp.problem
    rep = check_assumptions(
        spec,
        n_samples=int(exp.options.get("n_samples", exp.n_paths)),
        radius=float(exp.options.get("radius", 2.0)),
        seed=exp.seed,
    )
    measured = {
        "a2_min_margin": rep.a2_min_margin,
        "a3_min_margin": rep.a3_min_margin,
        "exp_moment_value": rep.exp_moment_value,
        "exp_moment_satisfied": rep.exp_moment_satisfied,
    }
    verdict = rep.a2_min_margin >= -exp.tolerance and rep.a3_min_margin >= -exp.tolerance
    expect = exp.options.get("expect_scalar_condition")
    if expect is not None:
        want = str(expect).strip().lower() in ("1", "true", "yes")
        verdict = verdict and (rep.exp_moment_satisfied == want)
        measured["expected_scalar_condition"] = want
    if out_dir is not None:
        _write_curve(
            out_dir / "assumption_margins.csv",
            ["quantity", "value"],
            [("a2_min_margin", rep.a2_min_margin), ("a3_min_margin", rep.a3_min_margin),
             ("exp_moment_value", rep.exp_moment_value)],
        )
    return measured, verdict, rep.to_dict()


_RUNNERS = {
    "eps-scaling": _run_eps_scaling,
    "delta-eps": _run_delta_eps,
    "duality": _run_duality,
    "cost-expansion": _run_cost_expansion,
    "smp-at-optimum": _run_smp_at_optimum,
    "adjoint-stability": _run_adjoint_stability,
    "assumption-check": _run_assumption_check,
}


def run_experiment(exp: ExperimentSpec, out_dir=None) -> VerificationReport:
    """Run one named experiment; writes report.json and curves if out_dir is set."""
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    measured, verdict, details = _RUNNERS[exp.name](exp, out_dir)
    report = VerificationReport(
        name=exp.label,
        claim=_CLAIMS[exp.name],
        measured=measured,
        tolerance=float(exp.tolerance),
        verdict=bool(verdict),
        runtime_s=time.perf_counter() - start,
        details=details,
    )
    if out_dir is not None:
        (out_dir / "report.json").write_text(report.to_json() + "\n")
    return report


# --- suite configuration ----------------------------------------------------

_SUITE_KEYS = {
    "experiment", "problem", "seed", "paths", "tolerance", "eps_list", "method",
    "direction_scale", "max_iters", "step0", "pgd_tol", "n_feat", "n_samples",
    "radius", "expect_scalar_condition", "n_modes", "n_steps", "horizon", "sigma0",
}
_PROBLEM_KWARG_KEYS = ("n_modes", "n_steps", "horizon", "sigma0")
_OPTION_KEYS = _SUITE_KEYS - {"experiment", "problem", "seed", "paths", "tolerance"} - set(_PROBLEM_KWARG_KEYS)


def _resolve_problem(ref: str, kwargs: dict, base_dir: Path) -> ProblemSpec:
    if ref.startswith("builtin:"):
        return builtin_problem(ref[len("builtin:"):], **kwargs)
    if kwargs:
        raise ConfigError("problem sizing keys apply to builtin problems only")
    path = Path(ref)
    if not path.is_absolute():
        path = base_dir / path
    return load_problem(path)


def load_suite(config_file) -> list[ExperimentSpec]:
    """Parse a suite config into an ordered list of experiment specs."""
    parser = configparser.ConfigParser()
    path = Path(config_file)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    specs = []
    for section in parser.sections():
        items = dict(parser.items(section))
        unknown = set(items) - _SUITE_KEYS
        if unknown:
            raise ConfigError(f"{path}: section [{section}]: unknown keys {sorted(unknown)}")
        if "experiment" not in items:
            raise ConfigError(f"{path}: section [{section}]: missing key 'experiment'")
        name = items["experiment"]
        if name not in EXPERIMENTS:
            raise ConfigError(f"{path}: section [{section}]: unknown experiment {name!r}")
        sizing = {}
        for key in _PROBLEM_KWARG_KEYS:
            if key in items:
                raw = float(items[key])
                sizing[key] = int(raw) if key in ("n_modes", "n_steps") else raw
        problem = _resolve_problem(items.get("problem", "builtin:linear"), sizing, path.parent)
        options = {k: items[k] for k in _OPTION_KEYS if k in items}
        specs.append(ExperimentSpec(
            name=name,
            problem=problem,
            tolerance=float(items["tolerance"]) if "tolerance" in items else None,
            seed=int(items.get("seed", 0)),
            n_paths=int(items.get("paths", 200)),
            options=options,
            label=section,
        ))
    return specs


def default_output_root() -> Path:
    return Path(os.environ.get("SMP_SPDE_OUT", "runs"))


def run_suite(config_file, out_root=None) -> list:
    """Run every experiment listed in the config, in declared order.

    Output layout: <out_root>/<timestamp>/<section>/{report.json, *.csv,
    config-copy.cfg}.  The aggregate passes iff every report passes.
    """
    specs = load_suite(config_file)
    root = Path(out_root) if out_root is not None else default_output_root()
    stamp = datetime.now().strftime("%Y%m%dT%H%M%S")
    run_dir = root / stamp
    k = 1
    while run_dir.exists():
        run_dir = root / f"{stamp}-{k}"
        k += 1
    reports = []
    config_text = Path(config_file).read_text()
    for exp in specs:
        out_dir = run_dir / exp.label
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config-copy.cfg").write_text(config_text)
        reports.append(run_experiment(exp, out_dir=out_dir))
    return reports


def suite_passed(reports) -> bool:
    return all(r.verdict for r in reports)
