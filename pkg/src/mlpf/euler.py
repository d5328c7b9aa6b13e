"""Euler propagation over one unit time interval with accumulated log-potentials.

All operations are vectorized over a leading particle axis.  The coupled
propagation drives the coarse chain with pairwise sums of the fine Brownian
increments, so its fine half is bit-identical to a standalone fine
propagation given the same noise block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ModelSpec

__all__ = [
    "UnitPropagation",
    "CoupledUnitPropagation",
    "log_potential",
    "propagate_unit",
    "propagate_unit_coupled",
]


@dataclass(frozen=True)
class UnitPropagation:
    """Result of propagating a batch of particles across one unit interval."""

    level: int
    endpoint: np.ndarray  # (N, d_x)
    log_g_total: np.ndarray  # (N,)
    partial_log_g: np.ndarray | None = None  # (N, 2**level) running sums
    intermediate_states: np.ndarray | None = None  # (N, 2**level + 1, d_x)


@dataclass(frozen=True)
class CoupledUnitPropagation:
    fine: UnitPropagation
    coarse: UnitPropagation


def log_potential(model: ModelSpec, x: np.ndarray, dy: np.ndarray, delta: float) -> np.ndarray:
    """log G for states x (N, d_x), observation increment dy (d_y,), step delta."""
    if delta <= 0:
        raise ValueError("step size must be positive")
    x = np.asarray(x, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(dy))):
        raise ValueError("non-finite inputs to log_potential")
    h = model.observation(x)
    return h @ dy - 0.5 * delta * np.einsum("...i,...i->...", h, h)


def propagate_unit(
    model: ModelSpec,
    l: int,
    x0: np.ndarray,
    obs: np.ndarray,
    noise: np.ndarray,
    retain: bool = False,
) -> UnitPropagation:
    """Iterate 2**l Euler steps from x0 (N, d_x), accumulating log-potentials.

    ``obs`` holds the 2**l level-l observation increments, ``noise`` the
    2**l Brownian increments per particle (shape (N, 2**l, d_x), each with
    covariance 2**-l * I).  The potential at each step is evaluated at the
    pre-step state; the endpoint's potential belongs to the next interval.
    """
    steps = 1 << l
    delta = 2.0 ** (-l)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n = x0.shape[0]
    obs = np.asarray(obs, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if obs.shape[0] != steps:
        raise ValueError(f"expected {steps} observation increments, got {obs.shape[0]}")
    if noise.shape[:2] != (n, steps):
        raise ValueError(f"noise shape {noise.shape} incompatible with ({n}, {steps}, d_x)")
    x = x0
    log_g = np.zeros(n)
    partials = np.empty((n, steps)) if retain else None
    states = np.empty((n, steps + 1, x0.shape[1])) if retain else None
    if retain:
        states[:, 0] = x
    for k in range(steps):
        log_g = log_g + log_potential(model, x, obs[k], delta)
        sig = model.diffusion(x)
        x = x + model.drift(x) * delta + np.einsum("nij,nj->ni", sig, noise[:, k])
        if retain:
            partials[:, k] = log_g
            states[:, k + 1] = x
    return UnitPropagation(l, x, log_g, partials, states)


def propagate_unit_coupled(
    model: ModelSpec,
    l: int,
    x_fine: np.ndarray,
    x_coarse: np.ndarray,
    obs_fine: np.ndarray,
    obs_coarse: np.ndarray,
    noise: np.ndarray,
    retain: bool = False,
) -> CoupledUnitPropagation:
    """Couple level-l and level-(l-1) propagation through common Brownian increments.

    The coarse chain consumes the pairwise sums of the fine noise, so both
    marginals coincide bit-for-bit with standalone propagations.
    """
    if l < 1:
        raise ValueError("coupled propagation needs l >= 1")
    noise = np.asarray(noise, dtype=float)
    fine = propagate_unit(model, l, x_fine, obs_fine, noise, retain=retain)
    coarse_noise = noise[:, 0::2] + noise[:, 1::2]
    coarse = propagate_unit(model, l - 1, x_coarse, obs_coarse, coarse_noise, retain=retain)
    return CoupledUnitPropagation(fine, coarse)
