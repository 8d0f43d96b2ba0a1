"""Control-gradient assembly and projected gradient descent on the box.

The gradient is the exact transpose of the discretized cost (through the
stage costate of the implicit scheme), so fixed-seed finite differences
agree with it to floating-point accuracy.  Optimization runs on a fixed
set of common random numbers: the Monte Carlo cost is a deterministic
function of the control during a run.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import models
from .adjoint import RegressionBasis, solve_discrete_adjoint_batch, solve_lsmc_adjoint
from .forward import ControlPath, estimate_cost, simulate_batch
from .models import ProblemSpec
from .noise import generate_batch
from .spectral import inner_h

__all__ = [
    "GradientPath",
    "OptimizeOptions",
    "OptimizeReport",
    "FdCheckReport",
    "hamiltonian_eval",
    "hamiltonian_grad_control",
    "estimate_gradient",
    "fd_gradient_check",
    "projected_gradient_descent",
    "smp_residual",
    "smp_residual_from_gradient",
]

METHODS = ("discrete-adjoint", "lsmc")


def hamiltonian_eval(spec: ProblemSpec, u, phi, v, z) -> float:
    """Running cost + drift/costate pairing + noise/noise-costate pairing."""
    u = np.asarray(u, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    running = float(np.asarray(models.cost_running(spec, u, phi).value))
    drift_term = float(inner_h(models.drift_eval(spec, u, phi), np.asarray(v)))
    m = min(spec.space.n_modes, spec.noise.m_noise)
    if z.ndim >= 2:
        idx = np.arange(m)
        zdiag = z[..., idx, idx]
    else:
        zdiag = z[..., :m]
    noise_term = float(np.sum(models.noise_diag(spec, u) * zdiag))
    return running + drift_term + noise_term


def hamiltonian_grad_control(spec: ProblemSpec, u, phi, v) -> np.ndarray:
    """Control gradient of the Hamiltonian; the noise term carries no control."""
    return models.cost_running(spec, u, phi).grad_phi + models.drift_control_vjp(spec, u, phi, np.asarray(v))


@dataclass
class GradientPath:
    values: np.ndarray  # (n_steps, d_control)
    std_err: np.ndarray  # (n_steps,)

    def directional(self, spec: ProblemSpec, direction: ControlPath) -> float:
        return float(spec.dt * np.sum(self.values * direction.values))


def _batch_gradients(spec, forward_states, costates, control) -> np.ndarray:
    """Per-path per-step control gradients using the stage costate."""
    w = costates[:, 1:, :] * spec.implicit_factor  # (count, N, n)
    grad_phi = models.cost_running(spec, forward_states[:, :-1, :], control.values).grad_phi
    return grad_phi + w @ spec.drift.gain


def estimate_gradient(
    spec: ProblemSpec,
    u0: np.ndarray,
    control: ControlPath,
    n_paths: int = 100,
    seed: int = 0,
    method: str = "discrete-adjoint",
    basis: RegressionBasis | None = None,
) -> GradientPath:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    batch = generate_batch(seed, range(n_paths), spec.n_steps, spec.noise.m_noise, spec.dt)
    forwards = simulate_batch(spec, u0, control, batch)
    if forwards.n_invalid:
        raise ValueError(f"{forwards.n_invalid} paths blew up; gradient invalid")
    if method == "discrete-adjoint":
        adj = solve_discrete_adjoint_batch(spec, forwards.states, control, batch.increments)
    else:
        basis = basis or RegressionBasis(n_feat=min(spec.space.n_modes, 4))
        adj = solve_lsmc_adjoint(spec, forwards, control, batch, basis)
    grads = _batch_gradients(spec, forwards.states, adj.costates, control)
    mean = np.mean(grads, axis=0)
    if n_paths > 1:
        var = np.var(grads, axis=0, ddof=1) / n_paths
        std_err = np.sqrt(np.sum(var, axis=-1))
    else:
        std_err = np.zeros(spec.n_steps)
    return GradientPath(values=mean, std_err=std_err)


def _fixed_seed_estimate(spec, u0, control, batch):
    est = estimate_cost(spec, u0, control, batch)
    if not est.valid:
        raise ValueError("cost estimate invalid: blown-up paths in batch")
    return est


def _fixed_seed_cost(spec, u0, control, batch) -> float:
    return _fixed_seed_estimate(spec, u0, control, batch).mean


@dataclass
class FdCheckReport:
    eps_values: np.ndarray
    rel_errors: np.ndarray  # (n_directions, n_eps)
    remainder_slopes: np.ndarray  # (n_directions,)
    directional: np.ndarray  # adjoint-side derivatives, (n_directions,)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps_values.tolist(),
            "rel_errors": self.rel_errors.tolist(),
            "remainder_slopes": self.remainder_slopes.tolist(),
            "directional": self.directional.tolist(),
        }


def fd_gradient_check(
    spec: ProblemSpec,
    u0: np.ndarray,
    control: ControlPath,
    directions,
    eps_list,
    n_paths: int = 100,
    seed: int = 0,
    method: str = "discrete-adjoint",
) -> FdCheckReport:
    """Adjoint directional derivatives against central differences of the cost."""
    eps_values = np.asarray(list(eps_list), dtype=np.float64)
    batch = generate_batch(seed, range(n_paths), spec.n_steps, spec.noise.m_noise, spec.dt)
    grad = estimate_gradient(spec, u0, control, n_paths=n_paths, seed=seed, method=method)
    base = _fixed_seed_cost(spec, u0, control, batch)
    rel_errors = np.zeros((len(directions), len(eps_values)))
    slopes = np.zeros(len(directions))
    dd = np.zeros(len(directions))
    for i, direction in enumerate(directions):
        dd[i] = grad.directional(spec, direction)
        remainders = np.zeros(len(eps_values))
        for j, eps in enumerate(eps_values):
            plus = ControlPath(control.values + eps * direction.values)
            minus = ControlPath(control.values - eps * direction.values)
            central = (_fixed_seed_cost(spec, u0, plus, batch) - _fixed_seed_cost(spec, u0, minus, batch)) / (2 * eps)
            rel_errors[i, j] = abs(central - dd[i]) / max(abs(central), 1e-300)
            remainders[j] = abs(_fixed_seed_cost(spec, u0, plus, batch) - base - eps * dd[i])
        if len(eps_values) >= 2 and np.all(remainders > 0.0):
            slopes[i] = float(np.polyfit(np.log(eps_values), np.log(remainders), 1)[0])
        else:
            slopes[i] = float("nan")
    return FdCheckReport(eps_values=eps_values, rel_errors=rel_errors, remainder_slopes=slopes, directional=dd)


def smp_residual_from_gradient(spec: ProblemSpec, control: ControlPath, grad: GradientPath) -> dict:
    """Largest box-vertex violation of the variational inequality per step.

    The pairing is linear in the competitor, so the maximum over the box is
    attained at a vertex and decomposes coordinatewise.
    """
    g = grad.values
    phi = control.values
    per_coord = np.maximum(g * (phi - spec.controls.lower), g * (phi - spec.controls.upper))
    per_step = np.sum(per_coord, axis=-1)
    return {"max_over_t": float(np.max(per_step)), "per_step": per_step}


def smp_residual(
    spec: ProblemSpec,
    u0: np.ndarray,
    control: ControlPath,
    n_paths: int = 100,
    seed: int = 0,
    method: str = "discrete-adjoint",
) -> dict:
    if not np.all((control.values >= spec.controls.lower) & (control.values <= spec.controls.upper)):
        raise ValueError("control must be admissible")
    grad = estimate_gradient(spec, u0, control, n_paths=n_paths, seed=seed, method=method)
    return smp_residual_from_gradient(spec, control, grad)


@dataclass
class OptimizeOptions:
    max_iters: int = 200
    step0: float = 1.0
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    tol: float = 1e-8
    min_step: float = 1e-12
    n_paths: int = 100
    seed: int = 0
    method: str = "discrete-adjoint"


@dataclass
class OptimizeReport:
    iterates: list
    final_control: ControlPath
    smp_residual_history: list
    line_search_log: list
    converged: bool
    stalled: bool

    def to_dict(self) -> dict:
        return {
            "iterates": self.iterates,
            "final_control": self.final_control.values.tolist(),
            "smp_residual_history": self.smp_residual_history,
            "line_search_log": self.line_search_log,
            "converged": self.converged,
            "stalled": self.stalled,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def write_csv(self, file) -> None:
        def _write(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iter", "cost", "std_err", "step", "smp_residual"])
            for rec in self.line_search_log:
                writer.writerow([rec["iter"], rec["cost"], rec["std_err"], rec["step"], rec["smp_residual"]])

        if hasattr(file, "write"):
            _write(file)
        else:
            with open(file, "w", newline="") as fh:
                _write(fh)


def projected_gradient_descent(
    spec: ProblemSpec,
    u0: np.ndarray,
    phi0: ControlPath,
    options: OptimizeOptions | None = None,
) -> OptimizeReport:
    """Armijo-backtracked projected gradient on the fixed-seed Monte Carlo cost."""
    opts = options or OptimizeOptions()
    phi = ControlPath(models.control_project(spec, phi0.values))
    batch = generate_batch(opts.seed, range(opts.n_paths), spec.n_steps, spec.noise.m_noise, spec.dt)
    est = _fixed_seed_estimate(spec, u0, phi, batch)
    cost, cost_se = est.mean, est.std_err
    iterates = [cost]
    residual_history = []
    log = []
    step = opts.step0
    converged = False
    stalled = False
    for it in range(opts.max_iters):
        grad = estimate_gradient(spec, u0, phi, n_paths=opts.n_paths, seed=opts.seed, method=opts.method)
        residual = smp_residual_from_gradient(spec, phi, grad)["max_over_t"]
        residual_history.append(residual)
        log.append({"iter": it, "cost": cost, "std_err": cost_se, "step": step, "smp_residual": residual})
        if residual < opts.tol:
            converged = True
            break
        step = min(step / opts.backtrack, opts.step0)
        accepted = False
        while step >= opts.min_step:
            candidate = ControlPath(models.control_project(spec, phi.values - step * grad.values))
            move_sq = float(np.sum((phi.values - candidate.values) ** 2))
            if move_sq == 0.0:
                break
            new_est = _fixed_seed_estimate(spec, u0, candidate, batch)
            if new_est.mean <= cost - opts.armijo_c1 / step * move_sq:
                phi, cost, cost_se = candidate, new_est.mean, new_est.std_err
                iterates.append(cost)
                accepted = True
                break
            step *= opts.backtrack
        if not accepted:
            stalled = True
            break
    return OptimizeReport(
        iterates=iterates,
        final_control=phi,
        smp_residual_history=residual_history,
        line_search_log=log,
        converged=converged,
        stalled=stalled,
    )
