"""Truncated cylindrical Wiener increments with counter-based seeding.

Each path is addressed by (seed, path_id) through a Philox counter-based
generator, so regeneration is bit-identical regardless of scheduling and
perturbed/unperturbed runs can share increments exactly (common random
numbers).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .spectral import FieldFormatError

__all__ = ["WienerPath", "PathBatch", "generate", "generate_batch", "antithetic", "save", "load"]

_MAGIC = b"SMPSPDE-WIENER\x00\x01"  # 16 bytes: format tag + version
_HEADER = struct.Struct("<qqdqq")  # n_steps, m_noise, dt, seed, path_id


@dataclass(frozen=True)
class WienerPath:
    """Increment matrix (n_steps x m_noise), entry ~ N(0, dt)."""

    increments: np.ndarray
    dt: float
    seed: int
    path_id: int

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def m_noise(self) -> int:
        return self.increments.shape[1]


@dataclass(frozen=True)
class PathBatch:
    """Stacked increments (count x n_steps x m_noise) with distinct path ids."""

    increments: np.ndarray
    dt: float
    seed: int
    path_ids: np.ndarray

    @property
    def count(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    @property
    def m_noise(self) -> int:
        return self.increments.shape[2]

    def path(self, i: int) -> WienerPath:
        return WienerPath(
            increments=self.increments[i],
            dt=self.dt,
            seed=self.seed,
            path_id=int(self.path_ids[i]),
        )


def generate(seed: int, path_id: int, n_steps: int, m_noise: int, dt: float) -> WienerPath:
    """Deterministic increments for one path; equal arguments give equal bits."""
    if n_steps < 1 or m_noise < 1:
        raise ValueError("n_steps and m_noise must be >= 1")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), path_id & (2**64 - 1)]))
    inc = rng.standard_normal((n_steps, m_noise)) * np.sqrt(dt)
    inc.setflags(write=False)
    return WienerPath(increments=inc, dt=float(dt), seed=int(seed), path_id=int(path_id))


def generate_batch(seed: int, path_ids, n_steps: int, m_noise: int, dt: float) -> PathBatch:
    ids = np.asarray(list(path_ids), dtype=np.int64)
    if len(set(ids.tolist())) != len(ids):
        raise ValueError("path_ids must be distinct")
    inc = np.empty((len(ids), n_steps, m_noise))
    for i, pid in enumerate(ids):
        inc[i] = generate(seed, int(pid), n_steps, m_noise, dt).increments
    inc.setflags(write=False)
    return PathBatch(increments=inc, dt=float(dt), seed=int(seed), path_ids=ids)


def antithetic(path: WienerPath) -> WienerPath:
    """Entrywise negation; an involution."""
    inc = -path.increments
    inc.setflags(write=False)
    return WienerPath(increments=inc, dt=path.dt, seed=path.seed, path_id=path.path_id)


def save(path: WienerPath, file) -> None:
    header = _MAGIC + _HEADER.pack(path.n_steps, path.m_noise, path.dt, path.seed, path.path_id)
    body = np.ascontiguousarray(path.increments, dtype="<f8").tobytes()
    if hasattr(file, "write"):
        file.write(header + body)
    else:
        with open(file, "wb") as fh:
            fh.write(header + body)


def load(file) -> WienerPath:
    name = getattr(file, "name", None) or str(file)
    if hasattr(file, "read"):
        raw = file.read()
    else:
        with open(file, "rb") as fh:
            raw = fh.read()
    if len(raw) < len(_MAGIC) + _HEADER.size:
        raise FieldFormatError(f"{name}: truncated Wiener path header")
    if raw[: len(_MAGIC)] != _MAGIC:
        raise FieldFormatError(f"{name}: bad magic, not a Wiener path file")
    n_steps, m_noise, dt, seed, path_id = _HEADER.unpack_from(raw, len(_MAGIC))
    expected = len(_MAGIC) + _HEADER.size + 8 * n_steps * m_noise
    if len(raw) != expected:
        raise FieldFormatError(
            f"{name}: payload has {len(raw)} bytes, expected {expected}"
        )
    inc = np.frombuffer(raw, dtype="<f8", offset=len(_MAGIC) + _HEADER.size).reshape(n_steps, m_noise).copy()
    inc.setflags(write=False)
    return WienerPath(increments=inc, dt=dt, seed=seed, path_id=path_id)
