"""Problem definitions: linear part, drift, noise, cost, control set.

A problem bundles a diagonal dissipative linear operator, a drift
F(u) + G phi (three built-in nonlinearities), a diagonal noise
coefficient (additive or saturated multiplicative), a quadratic
tracking cost and a box control set.  All evaluation functions are
pure and broadcast over leading batch axes.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from . import spectral
from .spectral import SpectralSpace, inner_h

__all__ = [
    "LinearOperatorSpec",
    "DriftModel",
    "NoiseModel",
    "CostModel",
    "ControlSet",
    "ProblemSpec",
    "ConfigError",
    "drift_eval",
    "drift_jvp",
    "drift_vjp",
    "drift_control_jvp",
    "drift_control_vjp",
    "noise_eval",
    "noise_diag",
    "noise_jvp",
    "noise_jvp_diag",
    "noise_vjp",
    "noise_apply",
    "noise_vjp_directional",
    "cost_running",
    "cost_terminal",
    "control_project",
    "check_assumptions",
    "AssumptionReport",
    "linear_problem",
    "cubic_problem",
    "burgers_problem",
    "clipped_lq_problem",
    "builtin_problem",
    "load_problem",
]

DRIFT_KINDS = ("linear-control", "cubic-reaction", "burgers-convection")
NOISE_KINDS = ("additive", "bounded-multiplicative")


class ConfigError(ValueError):
    """Raised for malformed or unknown problem configuration entries."""


@dataclass(frozen=True)
class LinearOperatorSpec:
    """Diagonal operator A: mode k is multiplied by diag[k] (negative)."""

    diag: np.ndarray
    theta: float = 2.0

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=np.float64)
        object.__setattr__(self, "diag", diag)
        if np.any(diag >= 0.0):
            raise ValueError("operator diagonal must be negative")
        if self.theta <= 0.0:
            raise ValueError("theta must be positive")


@dataclass(frozen=True)
class DriftModel:
    kind: str
    gain: np.ndarray  # n_modes x d_control
    c3: float = 0.0
    K: float = 0.0
    K2: float = 1.0
    K3: float = 1.0
    K4: float = 1.0
    K5: float = 0.0  # control enters linearly
    rho: Callable[[SpectralSpace, np.ndarray], np.ndarray] | None = None
    rho1: Callable[[SpectralSpace, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}")
        gain = np.atleast_2d(np.asarray(self.gain, dtype=np.float64))
        object.__setattr__(self, "gain", gain)
        if self.c3 < 0.0:
            raise ValueError("cubic strength must be >= 0")
        if self.rho is None:
            object.__setattr__(self, "rho", _default_rho(self.kind, self.c3))
        if self.rho1 is None:
            object.__setattr__(self, "rho1", _default_rho1())


def _default_rho(kind: str, c3: float):
    if kind == "linear-control":
        return lambda space, u: np.zeros(np.shape(u)[:-1])
    if kind == "cubic-reaction":
        return lambda space, u: c3 * np.sum(u * u, axis=-1) ** 2
    # Burgers: the local-monotonicity weight grows with the V-norm.
    return lambda space, u: np.sum(space.eigenvalues[: np.shape(u)[-1]] * u * u, axis=-1)


def _default_rho1():
    # Satisfies the rho1(u) <= ||u|| requirement with equality.
    return lambda space, u: np.sqrt(np.sum(u * u, axis=-1))


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    sigma: np.ndarray
    m_noise: int
    saturation: float = 1.0
    K6: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if sigma.ndim != 1 or sigma.shape[0] != self.m_noise:
            raise ValueError("sigma must be a vector of length m_noise")
        object.__setattr__(self, "sigma", sigma)
        if self.saturation <= 0.0:
            raise ValueError("saturation must be positive")

    def gamma(self) -> float:
        """sup_u of the squared Hilbert-Schmidt norm of the noise coefficient."""
        if self.kind == "additive":
            return float(np.sum(self.sigma**2))
        return float(np.sum(self.sigma**2) * self.saturation**2)


@dataclass(frozen=True)
class CostModel:
    q: float
    r: float
    g: float
    u_ref: np.ndarray
    u_T: np.ndarray
    C_L: float = 1.0
    C_K: float = 1.0
    k_L: float = 1.0
    k_K: float = 1.0

    def __post_init__(self):
        if self.q < 0 or self.g < 0:
            raise ValueError("state weights must be >= 0")
        if self.r <= 0:
            raise ValueError("control weight must be > 0")
        object.__setattr__(self, "u_ref", np.asarray(self.u_ref, dtype=np.float64))
        object.__setattr__(self, "u_T", np.asarray(self.u_T, dtype=np.float64))


@dataclass(frozen=True)
class ControlSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("control box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class ProblemSpec:
    space: SpectralSpace
    a_op: LinearOperatorSpec
    drift: DriftModel
    noise: NoiseModel
    cost: CostModel
    controls: ControlSet
    horizon: float
    n_steps: int
    u0: np.ndarray = field(default=None)  # configured initial condition

    def __post_init__(self):
        if self.horizon <= 0.0 or self.n_steps < 1:
            raise ValueError("need horizon > 0 and n_steps >= 1")
        if self.a_op.diag.shape[0] != self.space.n_modes:
            raise ValueError("operator diagonal length must equal n_modes")
        if self.drift.gain.shape != (self.space.n_modes, self.controls.dim):
            raise ValueError(
                f"gain must be {self.space.n_modes} x {self.controls.dim}, "
                f"got {self.drift.gain.shape}"
            )
        u0 = self.u0 if self.u0 is not None else np.zeros(self.space.n_modes)
        object.__setattr__(self, "u0", np.asarray(u0, dtype=np.float64))
        if self.u0.shape != (self.space.n_modes,):
            raise ValueError("u0 must have n_modes coefficients")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def d_control(self) -> int:
        return self.controls.dim

    @property
    def implicit_factor(self) -> np.ndarray:
        """Per-mode solve factor 1/(1 - dt * diag) of the semi-implicit scheme."""
        return 1.0 / (1.0 - self.dt * self.a_op.diag)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)


# --- drift -----------------------------------------------------------------


def _nonlinearity(spec: ProblemSpec, u: np.ndarray) -> np.ndarray:
    kind = spec.drift.kind
    if kind == "linear-control":
        return np.zeros_like(u)
    space = spec.space
    if kind == "cubic-reaction":
        ug = spectral.to_grid(space, u)
        return -spec.drift.c3 * spectral.to_coeffs(space, ug**3)
    # burgers-convection
    ug = spectral.to_grid(space, u)
    uxg = spectral.to_grid_dx(space, u)
    return -spectral.to_coeffs(space, ug * uxg)


def drift_eval(spec: ProblemSpec, u: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """B(u, phi) = F(u) + G phi as a coefficient vector in the mode span."""
    out = _nonlinearity(spec, u) + np.asarray(phi) @ spec.drift.gain.T
    return out


def drift_jvp(spec: ProblemSpec, u: np.ndarray, phi: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Directional derivative of B in u along p."""
    kind = spec.drift.kind
    if kind == "linear-control":
        return np.zeros_like(p)
    space = spec.space
    if kind == "cubic-reaction":
        ug = spectral.to_grid(space, u)
        pg = spectral.to_grid(space, p)
        return -3.0 * spec.drift.c3 * spectral.to_coeffs(space, ug * ug * pg)
    ug = spectral.to_grid(space, u)
    uxg = spectral.to_grid_dx(space, u)
    pg = spectral.to_grid(space, p)
    pxg = spectral.to_grid_dx(space, p)
    return -spectral.to_coeffs(space, pg * uxg + ug * pxg)


def drift_vjp(spec: ProblemSpec, u: np.ndarray, phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Adjoint of the u-Jacobian action: inner_h(vjp(v), p) == (jvp(p), v)."""
    kind = spec.drift.kind
    if kind == "linear-control":
        return np.zeros_like(v)
    space = spec.space
    if kind == "cubic-reaction":
        # Multiplication by u^2 is self-adjoint.
        ug = spectral.to_grid(space, u)
        vg = spectral.to_grid(space, v)
        return -3.0 * spec.drift.c3 * spectral.to_coeffs(space, ug * ug * vg)
    # Integration by parts turns -(p u_x + u p_x) against v into u v_x against p.
    ug = spectral.to_grid(space, u)
    vxg = spectral.to_grid_dx(space, v)
    return spectral.to_coeffs(space, ug * vxg)


def drift_control_jvp(spec: ProblemSpec, u: np.ndarray, phi: np.ndarray, dphi: np.ndarray) -> np.ndarray:
    return np.asarray(dphi) @ spec.drift.gain.T


def drift_control_vjp(spec: ProblemSpec, u: np.ndarray, phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.asarray(v) @ spec.drift.gain


# --- noise -----------------------------------------------------------------


def _diag_count(spec: ProblemSpec) -> int:
    return min(spec.space.n_modes, spec.noise.m_noise)


def noise_diag(spec: ProblemSpec, u: np.ndarray) -> np.ndarray:
    """Diagonal entries of the noise coefficient at u (length min(n, m))."""
    m = _diag_count(spec)
    sig = spec.noise.sigma[:m]
    if spec.noise.kind == "additive":
        return np.broadcast_to(sig, np.shape(u)[:-1] + (m,)).copy()
    s = spec.noise.saturation
    return sig * s * np.tanh(u[..., :m] / s)


def noise_eval(spec: ProblemSpec, u: np.ndarray) -> np.ndarray:
    """Full Hilbert-Schmidt matrix (n_modes x m_noise) of the noise coefficient."""
    u = np.asarray(u, dtype=np.float64)
    n, m = spec.space.n_modes, spec.noise.m_noise
    out = np.zeros(np.shape(u)[:-1] + (n, m))
    d = noise_diag(spec, u)
    idx = np.arange(_diag_count(spec))
    out[..., idx, idx] = d
    return out


def noise_jvp_diag(spec: ProblemSpec, u: np.ndarray, p: np.ndarray) -> np.ndarray:
    m = _diag_count(spec)
    if spec.noise.kind == "additive":
        return np.zeros(np.shape(u)[:-1] + (m,))
    sig = spec.noise.sigma[:m]
    s = spec.noise.saturation
    sech2 = 1.0 / np.cosh(u[..., :m] / s) ** 2
    return sig * sech2 * p[..., :m]


def noise_jvp(spec: ProblemSpec, u: np.ndarray, p: np.ndarray) -> np.ndarray:
    n, m = spec.space.n_modes, spec.noise.m_noise
    out = np.zeros(np.shape(u)[:-1] + (n, m))
    idx = np.arange(_diag_count(spec))
    out[..., idx, idx] = noise_jvp_diag(spec, u, p)
    return out


def noise_vjp(spec: ProblemSpec, u: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Adjoint of noise_jvp in the HS pairing; z is a full matrix or a diagonal."""
    u = np.asarray(u, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    mdiag = _diag_count(spec)
    if z.shape[-1] == spec.noise.m_noise and z.ndim >= 2 and z.shape[-2] == spec.space.n_modes:
        idx = np.arange(mdiag)
        zdiag = z[..., idx, idx]
    else:
        zdiag = z[..., :mdiag]
    out = np.zeros_like(u)
    if spec.noise.kind == "additive":
        return out
    sig = spec.noise.sigma[:mdiag]
    s = spec.noise.saturation
    sech2 = 1.0 / np.cosh(u[..., :mdiag] / s) ** 2
    out[..., :mdiag] = sig * sech2 * zdiag
    return out


def noise_apply(spec: ProblemSpec, u: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """Increment Xi(u) dW as a field (diagonal structure of the built-ins)."""
    u = np.asarray(u, dtype=np.float64)
    m = _diag_count(spec)
    out = np.zeros_like(u)
    out[..., :m] = noise_diag(spec, u) * dw[..., :m]
    return out


def noise_vjp_directional(spec: ProblemSpec, u: np.ndarray, w: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """Adjoint of p -> noise_jvp(u, p) dW applied to the field w."""
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    if spec.noise.kind == "additive":
        return out
    m = _diag_count(spec)
    sig = spec.noise.sigma[:m]
    s = spec.noise.saturation
    sech2 = 1.0 / np.cosh(u[..., :m] / s) ** 2
    out[..., :m] = sig * sech2 * w[..., :m] * dw[..., :m]
    return out


# --- cost ------------------------------------------------------------------


class RunningCost(NamedTuple):
    value: float | np.ndarray
    grad_u: np.ndarray
    grad_phi: np.ndarray


class TerminalCost(NamedTuple):
    value: float | np.ndarray
    grad: np.ndarray


def cost_running(spec: ProblemSpec, u: np.ndarray, phi: np.ndarray) -> RunningCost:
    c = spec.cost
    du = u - c.u_ref
    phi = np.asarray(phi, dtype=np.float64)
    value = 0.5 * c.q * np.sum(du * du, axis=-1) + 0.5 * c.r * np.sum(phi * phi, axis=-1)
    return RunningCost(value=value, grad_u=c.q * du, grad_phi=c.r * phi)


def cost_terminal(spec: ProblemSpec, u: np.ndarray) -> TerminalCost:
    c = spec.cost
    du = u - c.u_T
    return TerminalCost(value=0.5 * c.g * np.sum(du * du, axis=-1), grad=c.g * du)


def control_project(spec: ProblemSpec, phi: np.ndarray) -> np.ndarray:
    """Componentwise clamp onto the admissible box."""
    return np.clip(phi, spec.controls.lower, spec.controls.upper)


# --- assumption checks -----------------------------------------------------


@dataclass
class AssumptionReport:
    n_samples: int
    radius: float
    a2_min_margin: float
    a2_violations: list
    a3_min_margin: float
    h1_state_ratio_max: float
    h1_terminal_ratio_max: float
    gamma: float
    exp_moment_value: float
    exp_moment_satisfied: bool
    notes: list

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "radius": self.radius,
            "a2_min_margin": self.a2_min_margin,
            "a2_violations": self.a2_violations,
            "a3_min_margin": self.a3_min_margin,
            "h1_state_ratio_max": self.h1_state_ratio_max,
            "h1_terminal_ratio_max": self.h1_terminal_ratio_max,
            "gamma": self.gamma,
            "exp_moment_value": self.exp_moment_value,
            "exp_moment_satisfied": self.exp_moment_satisfied,
            "notes": self.notes,
        }


def check_assumptions(spec: ProblemSpec, n_samples: int = 1000, radius: float = 2.0, seed: int = 0) -> AssumptionReport:
    """Sampled local-monotonicity and Lipschitz margins plus exact coercivity.

    Violations are reported with the witnessing sample index, never raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x5EED]))
    n = spec.space.n_modes
    d = spec.d_control

    def sample_fields(count):
        x = rng.standard_normal((count, n))
        scale = rng.uniform(0.0, radius, size=count)
        nrm = np.maximum(np.sqrt(np.sum(x * x, axis=-1)), 1e-300)
        return x * (scale / nrm)[:, None]

    v1 = sample_fields(n_samples)
    v2 = sample_fields(n_samples)
    phi = rng.uniform(spec.controls.lower, spec.controls.upper, size=(n_samples, d))

    w = v1 - v2
    wsq = np.sum(w * w, axis=-1)
    db = drift_eval(spec, v1, phi) - drift_eval(spec, v2, phi)
    dxi = noise_diag(spec, v1) - noise_diag(spec, v2)
    lhs = 2.0 * np.sum(db * w, axis=-1) + np.sum(dxi * dxi, axis=-1)
    rho = np.asarray(spec.drift.rho(spec.space, v2))
    rhs = (spec.drift.K + rho) * wsq
    margins = rhs - lhs
    a2_min = float(np.min(margins))
    bad = np.nonzero(margins < 0.0)[0]
    violations = [
        {"sample": int(i), "margin": float(margins[i]), "sep_h": float(np.sqrt(wsq[i]))}
        for i in bad[:20]
    ]

    # Coercivity margin is exact: the operator is diagonal.
    lam = spec.space.eigenvalues
    a3_margins = -2.0 * spec.a_op.diag - spec.a_op.theta * lam
    a3_min = float(np.min(a3_margins))

    phi2 = rng.uniform(spec.controls.lower, spec.controls.upper, size=(n_samples, d))
    num = np.abs(
        np.asarray(cost_running(spec, v1, phi).value) - np.asarray(cost_running(spec, v2, phi2).value)
    )
    den = wsq + np.sum((phi - phi2) ** 2, axis=-1)
    h1_state = float(np.max(num / np.maximum(den, 1e-300)))
    numk = np.abs(np.asarray(cost_terminal(spec, v1).value) - np.asarray(cost_terminal(spec, v2).value))
    h1_term = float(np.max(numk / np.maximum(wsq, 1e-300)))

    gamma = spec.noise.gamma()
    theta = spec.a_op.theta
    exp_moment = (spec.drift.K - 2.0 * theta) ** 2 - 48.0 * gamma * spec.space.c_hv**2

    notes = []
    if np.any(spec.cost.u_ref != 0.0):
        notes.append(
            "running-cost gradient bound is affine, not linear, because the "
            "state reference is nonzero"
        )

    return AssumptionReport(
        n_samples=n_samples,
        radius=radius,
        a2_min_margin=a2_min,
        a2_violations=violations,
        a3_min_margin=a3_min,
        h1_state_ratio_max=h1_state,
        h1_terminal_ratio_max=h1_term,
        gamma=gamma,
        exp_moment_value=float(exp_moment),
        exp_moment_satisfied=bool(exp_moment > 0.0),
        notes=notes,
    )


# --- built-in problems -----------------------------------------------------


def _gain_first_modes(n_modes: int, d_control: int) -> np.ndarray:
    g = np.zeros((n_modes, d_control))
    for j in range(d_control):
        g[j, j] = 1.0
    return g


def _default_space_parts(n_modes: int):
    space = SpectralSpace(n_modes)
    a_op = LinearOperatorSpec(diag=-space.eigenvalues, theta=2.0)
    return space, a_op


def linear_problem(n_modes=8, n_steps=200, horizon=0.5, d_control=1, sigma0=0.1, u0=None) -> ProblemSpec:
    """Linear drift with additive noise; the fully linear reference problem."""
    space, a_op = _default_space_parts(n_modes)
    m = n_modes
    sigma = sigma0 / np.arange(1, m + 1)
    drift = DriftModel(kind="linear-control", gain=_gain_first_modes(n_modes, d_control), K=0.0)
    noise = NoiseModel(kind="additive", sigma=sigma, m_noise=m, K6=0.0)
    cost = CostModel(q=1.0, r=0.1, g=1.0, u_ref=np.zeros(n_modes), u_T=np.zeros(n_modes),
                     C_L=1.0, C_K=1.0, k_L=1.0, k_K=1.0)
    controls = ControlSet(lower=-2.0 * np.ones(d_control), upper=2.0 * np.ones(d_control))
    if u0 is None:
        u0 = 0.5 * space.unit_mode(1)
    return ProblemSpec(space, a_op, drift, noise, cost, controls, horizon, n_steps, u0=u0)


def cubic_problem(n_modes=8, n_steps=200, horizon=0.5, d_control=1, c3=1.0, sigma0=0.25, u0=None) -> ProblemSpec:
    """Monotone cubic reaction with saturated multiplicative noise."""
    space, a_op = _default_space_parts(n_modes)
    m = n_modes
    sigma = sigma0 / np.arange(1, m + 1)
    # Noise entries are sigma-Lipschitz in u, so max sigma^2 dominates the
    # monotonicity defect of the noise term; the cubic itself is dissipative.
    K = float(np.max(sigma) ** 2) + 1e-9
    drift = DriftModel(kind="cubic-reaction", gain=_gain_first_modes(n_modes, d_control), c3=c3, K=K)
    noise = NoiseModel(kind="bounded-multiplicative", sigma=sigma, m_noise=m, saturation=1.0,
                       K6=float(np.max(sigma)))
    cost = CostModel(q=1.0, r=0.1, g=1.0, u_ref=np.zeros(n_modes), u_T=np.zeros(n_modes),
                     C_L=1.0, C_K=1.0, k_L=1.0, k_K=1.0)
    controls = ControlSet(lower=-2.0 * np.ones(d_control), upper=2.0 * np.ones(d_control))
    if u0 is None:
        u0 = 0.5 * space.unit_mode(1)
    return ProblemSpec(space, a_op, drift, noise, cost, controls, horizon, n_steps, u0=u0)


def burgers_problem(n_modes=8, n_steps=200, horizon=0.5, d_control=1, sigma0=0.1, u0=None) -> ProblemSpec:
    """Convection nonlinearity with additive noise."""
    space, a_op = _default_space_parts(n_modes)
    m = n_modes
    sigma = sigma0 / np.arange(1, m + 1)
    # Within the mode span, |<B(v1)-B(v2), w>| <= sqrt(2n) ||v2||_V ||w||^2,
    # absorbed by K = n/2 together with rho(v) = ||v||_V^2 (Young).
    K = 0.5 * n_modes + 1e-9
    drift = DriftModel(kind="burgers-convection", gain=_gain_first_modes(n_modes, d_control), K=K)
    noise = NoiseModel(kind="additive", sigma=sigma, m_noise=m, K6=0.0)
    cost = CostModel(q=1.0, r=0.1, g=1.0, u_ref=np.zeros(n_modes), u_T=np.zeros(n_modes),
                     C_L=1.0, C_K=1.0, k_L=1.0, k_K=1.0)
    controls = ControlSet(lower=-2.0 * np.ones(d_control), upper=2.0 * np.ones(d_control))
    if u0 is None:
        u0 = 0.5 * space.unit_mode(1)
    return ProblemSpec(space, a_op, drift, noise, cost, controls, horizon, n_steps, u0=u0)


def clipped_lq_problem(n_modes=4, n_steps=50, horizon=0.5, sigma0=0.0) -> ProblemSpec:
    """Deterministic tracking problem whose optimum pushes into the box bound."""
    base = linear_problem(n_modes=n_modes, n_steps=n_steps, horizon=horizon, d_control=1,
                          sigma0=max(sigma0, 1e-12))
    space = base.space
    u_ref = 1.5 * space.unit_mode(1)
    # r large enough that the optimum leaves the bound near the horizon:
    # the active set is mixed, which is the interesting regime to verify.
    cost = replace(base.cost, q=8.0, r=1.0, g=4.0, u_ref=u_ref, u_T=np.zeros(n_modes))
    sigma = sigma0 * np.ones(base.noise.m_noise) / np.arange(1, base.noise.m_noise + 1)
    noise = replace(base.noise, sigma=sigma)
    controls = ControlSet(lower=np.array([-0.8]), upper=np.array([0.8]))
    return replace(base, cost=cost, noise=noise, controls=controls, u0=np.zeros(n_modes))


def builtin_problem(name: str, **kwargs) -> ProblemSpec:
    factories = {
        "linear": linear_problem,
        "cubic": cubic_problem,
        "burgers": burgers_problem,
        "clipped-lq": clipped_lq_problem,
    }
    if name not in factories:
        raise ValueError(f"unknown built-in problem {name!r}; have {sorted(factories)}")
    return factories[name](**kwargs)


# --- config loading --------------------------------------------------------

_KNOWN_KEYS = {
    "space": {"n_modes"},
    "operator": {"diag", "theta"},
    "drift": {"kind", "c3", "gain", "K", "K2", "K3", "K4", "K5"},
    "noise": {"kind", "sigma", "m_noise", "saturation", "K6"},
    "cost": {"q", "r", "g", "u_ref", "u_T", "C_L", "C_K", "k_L", "k_K"},
    "controls": {"lower", "upper"},
    "time": {"horizon", "n_steps"},
    "initial": {"u0"},
}


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()])
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def _matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([_floats(r) for r in rows])


def _pad(vec: np.ndarray, n: int, what: str) -> np.ndarray:
    if vec.shape[0] > n:
        raise ConfigError(f"{what} has {vec.shape[0]} coefficients, more than n_modes={n}")
    out = np.zeros(n)
    out[: vec.shape[0]] = vec
    return out


def load_problem(path) -> ProblemSpec:
    """Read a ProblemSpec from an INI-style config; unknown keys are rejected."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # constant names are case-sensitive (K2 vs k_K)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    for section in parser.sections():
        if section == "run":
            continue  # provenance block in resolved-config copies, not problem data
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}] in {path}")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}] of {path}")
    for required in ("space", "drift", "noise", "cost", "controls", "time"):
        if required not in parser:
            raise ConfigError(f"missing section [{required}] in {path}")

    try:
        n_modes = parser.getint("space", "n_modes")
        space = SpectralSpace(n_modes)

        if "operator" in parser:
            diag = _floats(parser.get("operator", "diag", fallback="")) if parser.has_option("operator", "diag") else -space.eigenvalues
            theta = parser.getfloat("operator", "theta", fallback=2.0)
        else:
            diag, theta = -space.eigenvalues, 2.0
        a_op = LinearOperatorSpec(diag=diag, theta=theta)

        dsec = parser["drift"]
        gain = _matrix(dsec["gain"])
        if gain.shape[0] != n_modes:
            gain = np.vstack([gain, np.zeros((n_modes - gain.shape[0], gain.shape[1]))])
        drift = DriftModel(
            kind=dsec["kind"].strip(),
            gain=gain,
            c3=float(dsec.get("c3", 0.0)),
            K=float(dsec.get("K", 0.0)),
            K2=float(dsec.get("K2", 1.0)),
            K3=float(dsec.get("K3", 1.0)),
            K4=float(dsec.get("K4", 1.0)),
            K5=float(dsec.get("K5", 0.0)),
        )

        nsec = parser["noise"]
        sigma = _floats(nsec["sigma"])
        m_noise = int(nsec.get("m_noise", len(sigma)))
        if sigma.shape[0] == 1 and m_noise > 1:
            sigma = np.full(m_noise, sigma[0])
        noise = NoiseModel(
            kind=nsec["kind"].strip(),
            sigma=sigma,
            m_noise=m_noise,
            saturation=float(nsec.get("saturation", 1.0)),
            K6=float(nsec.get("K6", 0.0)),
        )

        csec = parser["cost"]
        cost = CostModel(
            q=float(csec["q"]),
            r=float(csec["r"]),
            g=float(csec["g"]),
            u_ref=_pad(_floats(csec.get("u_ref", "0")), n_modes, "u_ref"),
            u_T=_pad(_floats(csec.get("u_T", "0")), n_modes, "u_T"),
            C_L=float(csec.get("C_L", 1.0)),
            C_K=float(csec.get("C_K", 1.0)),
            k_L=float(csec.get("k_L", 1.0)),
            k_K=float(csec.get("k_K", 1.0)),
        )

        controls = ControlSet(lower=_floats(parser["controls"]["lower"]),
                              upper=_floats(parser["controls"]["upper"]))
        horizon = parser.getfloat("time", "horizon")
        n_steps = parser.getint("time", "n_steps")
        u0 = None
        if "initial" in parser and parser.has_option("initial", "u0"):
            u0 = _pad(_floats(parser["initial"]["u0"]), n_modes, "u0")
        return ProblemSpec(space, a_op, drift, noise, cost, controls, horizon, n_steps, u0=u0)
    except ConfigError:
        raise
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid problem config {path}: {exc}") from exc
