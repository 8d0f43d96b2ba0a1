"""Sine-spectral representation of the V ⊂ H ⊂ V' triple on the interval (0,1).

H = L²(0,1), V = H¹₀(0,1) with the homogeneous seminorm, basis
w_k(x) = √2 sin(kπx).  The Dirichlet Laplacian is diagonal in this basis
with eigenvalues λ_k = (kπ)², which makes all three norms closed-form and
the mode projection exact.  Fields are plain float64 coefficient arrays;
the trailing axis is always the mode axis so batches broadcast.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

__all__ = [
    "SpectralSpace",
    "Norms",
    "inner_h",
    "norms",
    "project_modes",
    "evaluate_at",
    "hs_norm",
    "hs_inner",
    "to_grid",
    "to_grid_dx",
    "to_coeffs",
    "save_field",
    "load_field",
    "FieldFormatError",
]


class FieldFormatError(ValueError):
    """Raised when a serialized field or path file cannot be decoded."""


class Norms(NamedTuple):
    h: float
    v: float
    v_dual: float


@lru_cache(maxsize=None)
def _eigenvalues(n_modes: int) -> np.ndarray:
    k = np.arange(1, n_modes + 1, dtype=np.float64)
    lam = (k * np.pi) ** 2
    lam.setflags(write=False)
    return lam


@lru_cache(maxsize=None)
def _eval_matrix(n_modes: int, grid_size: int) -> np.ndarray:
    """E[g, k] = w_{k+1}(x_g) on the interior grid x_g = (g+1)/(G+1)."""
    x = np.arange(1, grid_size + 1, dtype=np.float64) / (grid_size + 1)
    k = np.arange(1, n_modes + 1, dtype=np.float64)
    mat = np.sqrt(2.0) * np.sin(np.pi * np.outer(x, k))
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def _deriv_matrix(n_modes: int, grid_size: int) -> np.ndarray:
    """C[g, k] = w'_{k+1}(x_g)."""
    x = np.arange(1, grid_size + 1, dtype=np.float64) / (grid_size + 1)
    k = np.arange(1, n_modes + 1, dtype=np.float64)
    mat = np.sqrt(2.0) * (k * np.pi) * np.cos(np.pi * np.outer(x, k))
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class SpectralSpace:
    """First n_modes Dirichlet sine modes on (0,1)."""

    n_modes: int

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be positive, got {self.n_modes}")

    @property
    def eigenvalues(self) -> np.ndarray:
        return _eigenvalues(self.n_modes)

    @property
    def c_hv(self) -> float:
        # ‖v‖² ≤ c_HV ‖v‖_V², sharp at the first mode.
        return 1.0 / float(self.eigenvalues[0])

    @property
    def dealias_grid(self) -> int:
        # 4x modes keeps cubic products alias-free (modes up to 3n < G+1).
        return 4 * self.n_modes

    def zero_field(self) -> np.ndarray:
        return np.zeros(self.n_modes)

    def unit_mode(self, k: int) -> np.ndarray:
        a = np.zeros(self.n_modes)
        a[k - 1] = 1.0
        return a


def _check_modes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(
            f"mode count mismatch: {a.shape[-1]} vs {b.shape[-1]}"
        )


def inner_h(a: np.ndarray, b: np.ndarray) -> float | np.ndarray:
    """H inner product Σ a_k b_k (batched over leading axes)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_modes(a, b)
    out = np.sum(a * b, axis=-1)
    return float(out) if out.ndim == 0 else out


def norms(space: SpectralSpace, a: np.ndarray) -> Norms:
    """H, V and V' norms of a coefficient vector."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite coefficients")
    lam = space.eigenvalues[: a.shape[-1]]
    h = np.sqrt(np.sum(a * a, axis=-1))
    v = np.sqrt(np.sum(lam * a * a, axis=-1))
    v_dual = np.sqrt(np.sum(a * a / lam, axis=-1))
    if h.ndim == 0:
        return Norms(float(h), float(v), float(v_dual))
    return Norms(h, v, v_dual)


def project_modes(a: np.ndarray, n: int) -> np.ndarray:
    """Truncate to the first n modes (orthogonal projection)."""
    a = np.asarray(a, dtype=np.float64)
    if n < 1 or n > a.shape[-1]:
        raise ValueError(f"cannot project {a.shape[-1]} modes onto {n}")
    return a[..., :n].copy()


def evaluate_at(space: SpectralSpace, a: np.ndarray, x) -> float | np.ndarray:
    """Point value Σ a_k √2 sin(kπx) for x in (0,1)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ValueError("evaluation point must lie strictly inside (0,1)")
    a = np.asarray(a, dtype=np.float64)
    k = np.arange(1, a.shape[-1] + 1, dtype=np.float64)
    basis = np.sqrt(2.0) * np.sin(np.pi * np.multiply.outer(x, k))
    out = basis @ a
    return float(out) if out.ndim == 0 else out


def hs_norm(m: np.ndarray) -> float:
    """Hilbert-Schmidt (Frobenius) norm."""
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.sum(m * m)))


def hs_inner(m: np.ndarray, n: np.ndarray) -> float:
    m = np.asarray(m, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    if m.shape != n.shape:
        raise ValueError(f"shape mismatch: {m.shape} vs {n.shape}")
    return float(np.sum(m * n))


def to_grid(space: SpectralSpace, a: np.ndarray, grid_size: int | None = None) -> np.ndarray:
    """Values on the de-aliasing grid (trailing axis becomes grid points)."""
    g = grid_size or space.dealias_grid
    return np.asarray(a, dtype=np.float64) @ _eval_matrix(space.n_modes, g).T


def to_grid_dx(space: SpectralSpace, a: np.ndarray, grid_size: int | None = None) -> np.ndarray:
    """Spatial-derivative values on the de-aliasing grid."""
    g = grid_size or space.dealias_grid
    return np.asarray(a, dtype=np.float64) @ _deriv_matrix(space.n_modes, g).T


def to_coeffs(space: SpectralSpace, values: np.ndarray, grid_size: int | None = None) -> np.ndarray:
    """Project grid values back to the first n_modes sine coefficients.

    Exact (discrete sine orthogonality) for sine polynomials of degree up
    to the grid size, so pseudo-spectral products of band-limited fields
    come back alias-free.
    """
    g = grid_size or space.dealias_grid
    values = np.asarray(values, dtype=np.float64)
    return values @ _eval_matrix(space.n_modes, g) / (g + 1)


def save_field(a: np.ndarray, file) -> None:
    """Write a field as a little-endian uint32 mode count + float64 coeffs."""
    a = np.ascontiguousarray(np.asarray(a, dtype="<f8"))
    payload = struct.pack("<I", a.shape[0]) + a.tobytes()
    if hasattr(file, "write"):
        file.write(payload)
    else:
        with open(file, "wb") as fh:
            fh.write(payload)


def load_field(file) -> np.ndarray:
    if hasattr(file, "read"):
        raw = file.read()
    else:
        with open(file, "rb") as fh:
            raw = fh.read()
    if len(raw) < 4:
        raise FieldFormatError("field payload shorter than its header")
    (count,) = struct.unpack_from("<I", raw)
    expected = 4 + 8 * count
    if len(raw) != expected:
        raise FieldFormatError(
            f"field payload has {len(raw)} bytes, expected {expected}"
        )
    return np.frombuffer(raw, dtype="<f8", offset=4, count=count).copy()
