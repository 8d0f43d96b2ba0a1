"""Backward costate solvers and the forward/backward duality check.

Two strategies: the exact transpose of the time-discretized forward map
(default, machine-precision gradients of the discretized cost) and a
least-squares Monte Carlo approximation of the conditional-expectation
form of the backward equation.  Both share the terminal condition and
the implicit treatment of the linear part.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import models
from .forward import BatchForwardPaths, ControlPath, ForwardPath
from .models import ProblemSpec
from .noise import PathBatch, WienerPath
from .spectral import inner_h

__all__ = [
    "AdjointPath",
    "BatchAdjointPaths",
    "RegressionBasis",
    "stage_costate",
    "solve_discrete_adjoint",
    "solve_discrete_adjoint_batch",
    "solve_lsmc_adjoint",
    "duality_residual",
    "duality_residual_batch",
]


@dataclass
class AdjointPath:
    costates: np.ndarray  # (n_steps+1, n_modes)
    z_diag: np.ndarray  # (n_steps, min(n_modes, m_noise))
    method: str

    def z_op(self, spec: ProblemSpec, k: int) -> np.ndarray:
        """Materialize the k-th noise costate as a full HS matrix."""
        z = np.zeros((spec.space.n_modes, spec.noise.m_noise))
        idx = np.arange(self.z_diag.shape[1])
        z[idx, idx] = self.z_diag[k]
        return z


@dataclass
class BatchAdjointPaths:
    costates: np.ndarray  # (count, n_steps+1, n_modes)
    z_diag: np.ndarray  # (count, n_steps, mdiag)
    method: str

    @property
    def count(self) -> int:
        return self.costates.shape[0]

    def path(self, i: int) -> AdjointPath:
        return AdjointPath(costates=self.costates[i], z_diag=self.z_diag[i], method=self.method)


def stage_costate(spec: ProblemSpec, v_next: np.ndarray) -> np.ndarray:
    """Costate after the implicit linear solve; the stage value pairing the drift."""
    return v_next * spec.implicit_factor


def _z_convention(spec: ProblemSpec, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Diagonal noise costate: sigma-weighted stage costate.

    Exact noise sensitivity for the multiplicative kind; for additive noise
    a reported convention only (gradients never consume it).
    """
    m = min(spec.space.n_modes, spec.noise.m_noise)
    sig = spec.noise.sigma[:m]
    if spec.noise.kind == "additive":
        return sig * w[..., :m]
    s = spec.noise.saturation
    return sig / np.cosh(u[..., :m] / s) ** 2 * w[..., :m]


def solve_discrete_adjoint_batch(
    spec: ProblemSpec,
    forward_states: np.ndarray,
    control: ControlPath,
    increments: np.ndarray,
) -> BatchAdjointPaths:
    """Exact transpose of the discretized forward map, vectorized over paths."""
    if control.n_steps != spec.n_steps or increments.shape[1] != spec.n_steps:
        raise ValueError("control and Wiener grids must match the problem grid")
    count, _, n = forward_states.shape
    mdiag = min(n, spec.noise.m_noise)
    v = np.zeros((count, spec.n_steps + 1, n))
    z = np.zeros((count, spec.n_steps, mdiag))
    v[:, -1, :] = models.cost_terminal(spec, forward_states[:, -1, :]).grad
    for k in range(spec.n_steps - 1, -1, -1):
        u = forward_states[:, k, :]
        w = stage_costate(spec, v[:, k + 1, :])
        v[:, k, :] = (
            w
            + spec.dt * (models.drift_vjp(spec, u, control.values[k], w)
                         + models.cost_running(spec, u, control.values[k]).grad_u)
            + models.noise_vjp_directional(spec, u, w, increments[:, k, :])
        )
        z[:, k, :] = _z_convention(spec, u, w)
    return BatchAdjointPaths(costates=v, z_diag=z, method="discrete-adjoint")


def solve_discrete_adjoint(
    spec: ProblemSpec,
    forward: ForwardPath,
    control: ControlPath,
    wiener: WienerPath,
) -> AdjointPath:
    if forward.wiener_ref != (wiener.seed, wiener.path_id):
        raise ValueError("forward path and Wiener path are inconsistent")
    batch = solve_discrete_adjoint_batch(
        spec, forward.states[None, :, :], control, wiener.increments[None, :, :]
    )
    return batch.path(0)


@dataclass(frozen=True)
class RegressionBasis:
    """Degree-2 polynomial features of the first n_feat mode coefficients."""

    n_feat: int
    ridge: float = 1e-8

    @property
    def feature_count(self) -> int:
        return 1 + self.n_feat + self.n_feat * (self.n_feat + 1) // 2

    def design(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)[..., : self.n_feat]
        count = u.shape[0]
        cols = [np.ones((count, 1)), u]
        for i in range(self.n_feat):
            cols.append(u[:, i:] * u[:, i : i + 1])
        return np.concatenate(cols, axis=1)


def _regress(design: np.ndarray, targets: np.ndarray, ridge: float, step: int) -> np.ndarray:
    gram = design.T @ design
    if ridge > 0.0:
        gram = gram + ridge * np.eye(gram.shape[0])
    else:
        rank = np.linalg.matrix_rank(gram)
        if rank < gram.shape[0]:
            raise RuntimeError(
                f"rank-deficient regression at step {step} "
                f"(rank {rank} < {gram.shape[0]}); enable ridge regularization"
            )
    return np.linalg.solve(gram, design.T @ targets)


def solve_lsmc_adjoint(
    spec: ProblemSpec,
    forwards: BatchForwardPaths,
    control: ControlPath,
    wieners: PathBatch,
    basis: RegressionBasis,
) -> BatchAdjointPaths:
    """Backward recursion with regression-estimated conditional expectations."""
    count = forwards.count
    if count < 10 * basis.feature_count:
        raise ValueError(
            f"need at least {10 * basis.feature_count} paths for "
            f"{basis.feature_count} features, got {count}"
        )
    if control.n_steps != spec.n_steps:
        raise ValueError("control grid must match the problem grid")
    states = forwards.states
    n = spec.space.n_modes
    mdiag = min(n, spec.noise.m_noise)
    v = np.zeros((count, spec.n_steps + 1, n))
    z = np.zeros((count, spec.n_steps, mdiag))
    v[:, -1, :] = models.cost_terminal(spec, states[:, -1, :]).grad
    for k in range(spec.n_steps - 1, -1, -1):
        u = states[:, k, :]
        design = basis.design(u)
        beta_v = _regress(design, v[:, k + 1, :], basis.ridge, k)
        continuation = design @ beta_v
        z_targets = v[:, k + 1, :mdiag] * wieners.increments[:, k, :mdiag] / spec.dt
        beta_z = _regress(design, z_targets, basis.ridge, k)
        z[:, k, :] = design @ beta_z
        w = stage_costate(spec, continuation)
        v[:, k, :] = w + spec.dt * (
            models.drift_vjp(spec, u, control.values[k], w)
            + models.noise_vjp(spec, u, z[:, k, :])
            + models.cost_running(spec, u, control.values[k]).grad_u
        )
    return BatchAdjointPaths(costates=v, z_diag=z, method="lsmc")


def duality_residual_batch(
    spec: ProblemSpec,
    sens_states: np.ndarray,
    costates: np.ndarray,
    control: ControlPath,
    direction: ControlPath,
    forward_states: np.ndarray,
) -> float:
    """Normalized gap in the costate/linearized-state pairing identity.

    The terminal pairing E(v(T), P(T)) must equal the time integral of the
    control forcing against the stage costate minus the running-cost
    gradient against P; exact for the transposed discrete system.
    """
    if sens_states.shape != costates.shape:
        raise ValueError("sensitivity and adjoint grids do not match")
    if control.n_steps != spec.n_steps or direction.n_steps != spec.n_steps:
        raise ValueError("control grids must match the problem grid")
    lhs = float(np.mean(np.sum(costates[:, -1, :] * sens_states[:, -1, :], axis=-1)))
    w = costates[:, 1:, :] * spec.implicit_factor  # stage costates, (count, N, n)
    grad_u = models.cost_running(spec, forward_states[:, :-1, :], control.values).grad_u
    term_cost = float(np.mean(np.sum(spec.dt * np.sum(grad_u * sens_states[:, :-1, :], axis=-1), axis=-1)))
    forcing = direction.values @ spec.drift.gain.T  # (N, n)
    term_ctrl = float(np.mean(np.sum(spec.dt * np.sum(w * forcing, axis=-1), axis=-1)))
    rhs = -term_cost + term_ctrl
    return abs(lhs - rhs) / (1.0 + abs(lhs) + abs(rhs))


def duality_residual(
    spec: ProblemSpec,
    sens,
    adj,
    forward,
    control: ControlPath,
    direction: ControlPath,
) -> float:
    """Single-path wrapper around duality_residual_batch."""
    return duality_residual_batch(
        spec,
        sens.states[None, :, :],
        adj.costates[None, :, :],
        control,
        direction,
        forward.states[None, :, :],
    )
