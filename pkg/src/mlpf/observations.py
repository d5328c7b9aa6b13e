"""Observation-increment data at a fixed finest resolution.

The stored primitive is the increment array at level ``L_data``; all coarser
views are exact partial sums of those increments, so every discretization
level consumes literally the same data.  Coarsening accumulates children
left to right, which pins the floating-point result bit-for-bit across runs.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .models import ModelSpec

__all__ = [
    "ObservationPath",
    "simulate_observations",
    "increments_at_level",
    "write_path",
    "read_path",
    "export_csv",
    "FrequencyExceededError",
    "PathFormatError",
]

_MAGIC = b"MLPFOBS1"
_MODES = ("pbar", "p")
MAX_INCREMENTS = 1 << 26


class FrequencyExceededError(ValueError):
    """A level finer than the stored data frequency was requested."""


class PathFormatError(ValueError):
    """A path file failed structural validation."""


@dataclass(frozen=True)
class ObservationPath:
    T: int
    L_data: int
    d_y: int
    increments: np.ndarray  # (T * 2**L_data, d_y)
    mode: str
    seed: int
    latent: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        inc = np.asarray(self.increments, dtype=float)
        expected = self.T * (1 << self.L_data)
        if inc.shape != (expected, self.d_y):
            raise ValueError(
                f"increments shape {inc.shape} != ({expected}, {self.d_y}) for T={self.T}, L_data={self.L_data}"
            )
        object.__setattr__(self, "increments", inc)
        self.increments.setflags(write=False)


def simulate_observations(mode: str, model: ModelSpec, T: int, L_data: int, seed: int) -> ObservationPath:
    """Generate a data path at resolution ``2**-L_data``.

    mode "pbar": increments are pure Brownian, N(0, step * I).
    mode "p": a latent fine-grid Euler signal path is simulated and each
    increment is h(x) * step + Brownian part; the Brownian stream is shared
    with the "pbar" mode so the two coincide when h is identically zero.
    """
    if T < 1 or L_data < 1:
        raise ValueError("need T >= 1 and L_data >= 1")
    n = T * (1 << L_data)
    if n > MAX_INCREMENTS:
        raise ValueError(f"T * 2**L_data = {n} exceeds the configured maximum {MAX_INCREMENTS}")
    if model.d_y != model.d_x and mode == "p":
        raise ValueError("latent generation currently requires d_y == d_x")
    delta = 2.0 ** (-L_data)
    g_obs = streams.generator(seed, streams.TAG_OBS)
    brownian = np.sqrt(delta) * g_obs.standard_normal((n, model.d_y))
    if mode == "pbar":
        return ObservationPath(T, L_data, model.d_y, brownian, "pbar", seed)
    if mode != "p":
        raise ValueError(f"mode must be one of {_MODES}")
    g_lat = streams.generator(seed, streams.TAG_LATENT)
    xi = np.sqrt(delta) * g_lat.standard_normal((n, model.d_x))
    latent = np.empty((n + 1, model.d_x))
    latent[0] = model.x_star
    x = model.x_star.copy()
    for k in range(n):
        sig = model.diffusion(x)
        x = x + model.drift(x) * delta + sig @ xi[k]
        latent[k + 1] = x
    h_vals = model.observation(latent[:-1])
    increments = h_vals * delta + brownian
    return ObservationPath(T, L_data, model.d_y, increments, "p", seed, latent=latent)


def increments_at_level(path: ObservationPath, l: int, p: int) -> np.ndarray:
    """Level-``l`` increments covering the unit interval [p, p+1), shape (2**l, d_y)."""
    if l < 0 or p < 0 or p >= path.T:
        raise ValueError(f"invalid level {l} or interval {p}")
    if l > path.L_data:
        raise FrequencyExceededError(
            f"level {l} exceeds the data observation frequency (L_data={path.L_data})"
        )
    per_unit = 1 << path.L_data
    block = path.increments[p * per_unit : (p + 1) * per_unit]
    if l == path.L_data:
        return block
    children = 1 << (path.L_data - l)
    grouped = block.reshape(1 << l, children, path.d_y)
    acc = grouped[:, 0].copy()
    for j in range(1, children):  # fixed left-to-right order: bit-stable coarsening
        acc += grouped[:, j]
    return acc


_HEADER = struct.Struct("<8sIIIQB")


def write_path(path: ObservationPath, file) -> None:
    """Write the binary path format (little-endian, increment-major)."""
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    f = open(file, "wb") if own else file
    try:
        f.write(_HEADER.pack(_MAGIC, path.T, path.L_data, path.d_y, path.seed, _MODES.index(path.mode)))
        f.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())
    finally:
        if own:
            f.close()


def read_path(file) -> ObservationPath:
    """Read a binary path file; raises PathFormatError on any malformation."""
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    f = open(file, "rb") if own else file
    try:
        head = f.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise PathFormatError("truncated header")
        magic, T, L_data, d_y, seed, mode_code = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise PathFormatError(f"bad magic {magic!r}")
        if mode_code >= len(_MODES):
            raise PathFormatError(f"unknown mode code {mode_code}")
        if T < 1 or L_data < 1 or d_y < 1:
            raise PathFormatError("invalid dimensions in header")
        n = T * (1 << L_data)
        body = f.read()
        expected = n * d_y * 8
        if len(body) != expected:
            raise PathFormatError(f"body has {len(body)} bytes, expected {expected}")
        inc = np.frombuffer(body, dtype="<f8").reshape(n, d_y).astype(float)
        return ObservationPath(T, L_data, d_y, inc, _MODES[mode_code], seed)
    finally:
        if own:
            f.close()


def export_csv(path: ObservationPath, file) -> None:
    """CSV export for inspection: header k,component,value."""
    own = isinstance(file, (str, bytes)) or hasattr(file, "__fspath__")
    f = open(file, "w", newline="") if own else file
    try:
        w = csv.writer(f)
        w.writerow(["k", "component", "value"])
        for k in range(path.increments.shape[0]):
            for c in range(path.d_y):
                w.writerow([k, c, repr(float(path.increments[k, c]))])
    finally:
        if own:
            f.close()
