"""Linearized dynamics along a stored path and perturbation diagnostics.

The linearized state P shares the time grid and, crucially, the Wiener
increments of the path it linearizes around; all perturbation diagnostics
couple the perturbed and unperturbed runs through common random numbers,
so differences are meaningful pathwise.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import models
from .forward import ControlPath, ForwardPath, simulate_batch
from .models import ProblemSpec
from .noise import PathBatch, WienerPath, generate_batch

__all__ = [
    "SensitivityPath",
    "EpsScalingReport",
    "simulate_linearized",
    "simulate_linearized_batch",
    "delta_eps_path",
    "eps_scaling_report",
    "loglog_slope",
]


@dataclass
class SensitivityPath:
    states: np.ndarray  # (n_steps+1, n_modes), first row zero


def simulate_linearized_batch(
    spec: ProblemSpec,
    forward_states: np.ndarray,
    direction: ControlPath,
    increments: np.ndarray,
) -> np.ndarray:
    """Linearized states for a batch: (count, n_steps+1, n_modes)."""
    if direction.n_steps != spec.n_steps:
        raise ValueError("direction grid must match the problem grid")
    count = forward_states.shape[0]
    n = spec.space.n_modes
    factor = spec.implicit_factor
    p = np.zeros((count, spec.n_steps + 1, n))
    cur = np.zeros((count, n))
    for k in range(spec.n_steps):
        u = forward_states[:, k, :]
        forcing = models.drift_jvp(spec, u, direction.values[k], cur) + models.drift_control_jvp(
            spec, u, direction.values[k], direction.values[k]
        )
        inc = np.zeros_like(cur)
        m = min(n, spec.noise.m_noise)
        inc[:, :m] = models.noise_jvp_diag(spec, u, cur) * increments[:, k, :m]
        cur = (cur + spec.dt * forcing + inc) * factor
        p[:, k + 1, :] = cur
    return p


def simulate_linearized(
    spec: ProblemSpec,
    forward: ForwardPath,
    direction: ControlPath,
    wiener: WienerPath,
) -> SensitivityPath:
    """Solve the linearized equation along one stored forward path."""
    if forward.wiener_ref != (wiener.seed, wiener.path_id):
        raise ValueError(
            f"forward path was driven by {forward.wiener_ref}, "
            f"not by ({wiener.seed}, {wiener.path_id})"
        )
    p = simulate_linearized_batch(
        spec, forward.states[None, :, :], direction, wiener.increments[None, :, :]
    )
    return SensitivityPath(states=p[0])


def _perturbed_control(spec: ProblemSpec, phi_star: ControlPath, direction: ControlPath, eps: float) -> ControlPath:
    values = phi_star.values + eps * direction.values
    if np.any(values < spec.controls.lower - 1e-12) or np.any(values > spec.controls.upper + 1e-12):
        raise ValueError(f"perturbed control leaves the admissible box at eps={eps}")
    return ControlPath(values=values)


def delta_eps_path(
    spec: ProblemSpec,
    u0: np.ndarray,
    phi_star: ControlPath,
    direction: ControlPath,
    eps: float,
    wiener: WienerPath,
) -> np.ndarray:
    """Remainder (u_eps - u_star - eps P) / eps on the shared grid."""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    batch = PathBatch(
        increments=wiener.increments[None, :, :],
        dt=wiener.dt,
        seed=wiener.seed,
        path_ids=np.array([wiener.path_id]),
    )
    star = simulate_batch(spec, u0, phi_star, batch)
    pert = simulate_batch(spec, u0, _perturbed_control(spec, phi_star, direction, eps), batch)
    p = simulate_linearized_batch(spec, star.states, direction, batch.increments)
    return (pert.states[0] - star.states[0] - eps * p[0]) / eps


def loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log x."""
    lx = np.log(np.asarray(x, dtype=np.float64))
    ly = np.log(np.maximum(np.asarray(y, dtype=np.float64), 1e-300))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass
class EpsScalingReport:
    eps_values: np.ndarray
    sup_sq_err: np.ndarray
    sup_sq_err_weighted: np.ndarray
    sup_delta_sq: np.ndarray
    e1_fourth_moment: np.ndarray
    slope: float
    slope_weighted: float
    delta_slope: float
    n_paths: int

    def to_dict(self) -> dict:
        return {
            "eps": self.eps_values.tolist(),
            "sup_sq_err": self.sup_sq_err.tolist(),
            "sup_sq_err_weighted": self.sup_sq_err_weighted.tolist(),
            "sup_delta_sq": self.sup_delta_sq.tolist(),
            "e1_fourth_moment": self.e1_fourth_moment.tolist(),
            "slope": self.slope,
            "slope_weighted": self.slope_weighted,
            "delta_slope": self.delta_slope,
            "n_paths": self.n_paths,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def write_csv(self, file) -> None:
        def _write(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["eps", "sup_sq_err", "sup_sq_err_weighted", "sup_delta_sq", "slope"])
            for i, eps in enumerate(self.eps_values):
                writer.writerow([
                    eps,
                    self.sup_sq_err[i],
                    self.sup_sq_err_weighted[i],
                    self.sup_delta_sq[i],
                    self.slope,
                ])

        if hasattr(file, "write"):
            _write(file)
        else:
            with open(file, "w", newline="") as fh:
                _write(fh)


def eps_scaling_report(
    spec: ProblemSpec,
    u0: np.ndarray,
    phi_star: ControlPath,
    direction: ControlPath,
    eps_list,
    n_paths: int = 200,
    seed: int = 0,
) -> EpsScalingReport:
    """Mean-square perturbation sizes and remainders over a decreasing eps grid.

    All eps values share one fixed batch of increments, so the reported
    curves are smooth in eps up to the common Monte Carlo error.
    """
    eps_values = np.asarray(list(eps_list), dtype=np.float64)
    if np.any(np.diff(eps_values) >= 0.0):
        raise ValueError("eps_list must be strictly decreasing")
    batch = generate_batch(seed, range(n_paths), spec.n_steps, spec.noise.m_noise, spec.dt)
    star = simulate_batch(spec, u0, phi_star, batch)
    if star.n_invalid:
        raise ValueError("reference simulation blew up; report invalid")
    p = simulate_linearized_batch(spec, star.states, direction, batch.increments)

    # Exponential damping weight accumulated along the reference path.
    rho = np.asarray(spec.drift.rho(spec.space, star.states))  # (count, n_steps+1)
    decay = np.concatenate(
        [np.zeros((n_paths, 1)), np.cumsum(spec.dt * (spec.drift.K + rho[:, :-1]), axis=-1)],
        axis=-1,
    )
    weight = np.exp(-decay)

    sup_sq = np.empty_like(eps_values)
    sup_sq_w = np.empty_like(eps_values)
    sup_delta = np.empty_like(eps_values)
    e1_m4 = np.empty_like(eps_values)
    for i, eps in enumerate(eps_values):
        pert = simulate_batch(spec, u0, _perturbed_control(spec, phi_star, direction, eps), batch)
        if pert.n_invalid:
            raise ValueError(f"perturbed simulation blew up at eps={eps}; report invalid")
        diff = pert.states - star.states
        diff_sq = np.sum(diff * diff, axis=-1)
        sup_sq[i] = float(np.max(np.mean(diff_sq, axis=0)))
        sup_sq_w[i] = float(np.max(np.mean(weight * diff_sq, axis=0)))
        delta = (diff - eps * p) / eps
        sup_delta[i] = float(np.max(np.mean(np.sum(delta * delta, axis=-1), axis=0)))
        rho1 = np.asarray(spec.drift.rho1(spec.space, pert.states[:, :-1, :]))
        e1_log = np.sum(spec.dt * rho1**2, axis=-1)
        e1_m4[i] = float(np.mean(np.exp(4.0 * e1_log)))

    return EpsScalingReport(
        eps_values=eps_values,
        sup_sq_err=sup_sq,
        sup_sq_err_weighted=sup_sq_w,
        sup_delta_sq=sup_delta,
        e1_fourth_moment=e1_m4,
        slope=loglog_slope(eps_values, sup_sq),
        slope_weighted=loglog_slope(eps_values, sup_sq_w),
        delta_slope=loglog_slope(eps_values, np.maximum(sup_delta, 1e-300)),
        n_paths=n_paths,
    )
