"""Semi-implicit Euler-Maruyama simulation of the controlled equation.

The stiff diagonal linear part is treated implicitly (per-mode solve
factor), drift and noise explicitly at the left endpoint.  Batches are
vectorized across paths; blown-up paths are flagged, never raised.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import models
from .models import ProblemSpec
from .noise import PathBatch, WienerPath

__all__ = [
    "ControlPath",
    "ForwardPath",
    "BatchForwardPaths",
    "CostEstimate",
    "constant_control",
    "is_admissible",
    "forward_step",
    "simulate_path",
    "simulate_batch",
    "path_cost",
    "estimate_cost",
    "export_forward_csv",
]

DEFAULT_GUARD = 1e8


@dataclass(frozen=True)
class ControlPath:
    """Piecewise-constant control values, one vector per time step."""

    values: np.ndarray  # (n_steps, d_control)

    def __post_init__(self):
        object.__setattr__(self, "values", np.atleast_2d(np.asarray(self.values, dtype=np.float64)))

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]


def constant_control(spec: ProblemSpec, phi) -> ControlPath:
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    return ControlPath(values=np.tile(phi, (spec.n_steps, 1)))


def is_admissible(spec: ProblemSpec, control: ControlPath) -> bool:
    v = control.values
    return bool(np.all(v >= spec.controls.lower) and np.all(v <= spec.controls.upper))


@dataclass
class ForwardPath:
    states: np.ndarray  # (n_steps+1, n_modes)
    wiener_ref: tuple[int, int]
    blowup_step: int | None = None

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class BatchForwardPaths:
    states: np.ndarray  # (count, n_steps+1, n_modes)
    seed: int
    path_ids: np.ndarray
    blowup_steps: np.ndarray  # int, -1 where the path stayed finite

    @property
    def count(self) -> int:
        return self.states.shape[0]

    @property
    def n_invalid(self) -> int:
        return int(np.sum(self.blowup_steps >= 0))

    def path(self, i: int) -> ForwardPath:
        step = int(self.blowup_steps[i])
        return ForwardPath(
            states=self.states[i],
            wiener_ref=(self.seed, int(self.path_ids[i])),
            blowup_step=None if step < 0 else step,
        )


def forward_step(spec: ProblemSpec, u: np.ndarray, phi: np.ndarray, dw: np.ndarray) -> np.ndarray:
    """One semi-implicit update; broadcasts over leading batch axes."""
    drift = models.drift_eval(spec, u, phi)
    inc = models.noise_apply(spec, u, dw)
    return (u + spec.dt * drift + inc) * spec.implicit_factor


def _guard_trace(spec: ProblemSpec, states: np.ndarray, m_guard: float) -> np.ndarray:
    """First step index at which the energy guard trips, else -1, per path."""
    lam = spec.space.eigenvalues
    hsq = np.sum(states * states, axis=-1)
    vsq_int = np.concatenate(
        [np.zeros(states.shape[:-2] + (1,)),
         np.cumsum(spec.dt * np.sum(lam * states[..., :-1, :] ** 2, axis=-1), axis=-1)],
        axis=-1,
    )
    bad = (~np.isfinite(hsq)) | (hsq >= m_guard) | (vsq_int >= m_guard)
    first = np.where(bad.any(axis=-1), bad.argmax(axis=-1), -1)
    return first


def simulate_batch(
    spec: ProblemSpec,
    u0: np.ndarray,
    control: ControlPath,
    batch: PathBatch,
    m_guard: float = DEFAULT_GUARD,
) -> BatchForwardPaths:
    if control.n_steps != spec.n_steps or batch.n_steps != spec.n_steps:
        raise ValueError("control and Wiener grids must match the problem grid")
    count = batch.count
    n = spec.space.n_modes
    states = np.zeros((count, spec.n_steps + 1, n))
    states[:, 0, :] = u0
    u = np.broadcast_to(np.asarray(u0, dtype=np.float64), (count, n)).copy()
    for k in range(spec.n_steps):
        u = forward_step(spec, u, control.values[k], batch.increments[:, k, :])
        u = np.where(np.isfinite(u), u, np.inf)
        states[:, k + 1, :] = u
    blowups = _guard_trace(spec, states, m_guard)
    # Freeze flagged paths at their last finite state to keep arrays usable.
    for i in np.nonzero(blowups >= 0)[0]:
        states[i, blowups[i]:, :] = states[i, max(blowups[i] - 1, 0), :]
    return BatchForwardPaths(states=states, seed=batch.seed, path_ids=batch.path_ids, blowup_steps=blowups)


def simulate_path(
    spec: ProblemSpec,
    u0: np.ndarray,
    control: ControlPath,
    wiener: WienerPath,
    m_guard: float = DEFAULT_GUARD,
) -> ForwardPath:
    batch = PathBatch(
        increments=wiener.increments[None, :, :],
        dt=wiener.dt,
        seed=wiener.seed,
        path_ids=np.array([wiener.path_id]),
    )
    return simulate_batch(spec, u0, control, batch, m_guard=m_guard).path(0)


def path_cost(spec: ProblemSpec, states: np.ndarray, control: ControlPath) -> float | np.ndarray:
    """Discretized cost: left-endpoint quadrature plus the terminal term."""
    running = models.cost_running(spec, states[..., :-1, :], control.values).value
    total = spec.dt * np.sum(running, axis=-1) + models.cost_terminal(spec, states[..., -1, :]).value
    return float(total) if np.ndim(total) == 0 else total


@dataclass
class CostEstimate:
    mean: float
    std_err: float
    n_paths: int
    invalid_paths: int

    @property
    def valid(self) -> bool:
        return self.invalid_paths == 0

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_err": self.std_err,
            "n_paths": self.n_paths,
            "invalid_paths": self.invalid_paths,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def estimate_cost(
    spec: ProblemSpec,
    u0: np.ndarray,
    control: ControlPath,
    batch: PathBatch,
    m_guard: float = DEFAULT_GUARD,
) -> CostEstimate:
    if batch.count < 1:
        raise ValueError("empty path batch")
    paths = simulate_batch(spec, u0, control, batch, m_guard=m_guard)
    costs = path_cost(spec, paths.states, control)
    costs = np.atleast_1d(costs)
    mean = float(np.mean(costs))
    std_err = float(np.std(costs, ddof=1) / np.sqrt(len(costs))) if len(costs) > 1 else 0.0
    return CostEstimate(mean=mean, std_err=std_err, n_paths=batch.count, invalid_paths=paths.n_invalid)


def export_forward_csv(spec: ProblemSpec, fpath: ForwardPath, file) -> None:
    """CSV trajectory dump: step, t, then one column per mode coefficient."""
    times = spec.times
    header = ["step", "t"] + [f"c{k}" for k in range(1, spec.space.n_modes + 1)]

    def _write(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k, row in enumerate(fpath.states):
            writer.writerow([k, repr(float(times[k]))] + [repr(float(x)) for x in row])

    if hasattr(file, "write"):
        _write(file)
    else:
        with open(file, "w", newline="") as fh:
            _write(fh)
