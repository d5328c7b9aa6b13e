"""Signal/observation model family and the four built-in benchmark models.

All built-ins are scalar (d_x = d_y = 1) with identity observation function.
Drift and diffusion callables are vectorized over a leading particle axis:
they map arrays of shape (..., d_x) to (..., d_x) and (..., d_x, d_x).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["ModelSpec", "builtin_model", "langevin_drift", "BUILTIN_NAMES"]

BUILTIN_NAMES = ("ou", "langevin", "gbm", "nonlinear_sigma")


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of a signal/observation SDE pair."""

    name: str
    d_x: int
    d_y: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    observation: Callable[[np.ndarray], np.ndarray]
    x_star: np.ndarray
    is_linear_gaussian: bool = False
    has_constant_diffusion: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d_x < 1 or self.d_y < 1:
            raise ValueError("dimensions must be positive")
        object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float).reshape(self.d_x))


def langevin_drift(x, nu: float):
    """Half the score of a Student-t density (zero location, unit scale).

    Closed form -(nu+1) * x / (2 * (nu + x^2)); odd in x.
    """
    if nu <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {nu}")
    x = np.asarray(x, dtype=float)
    return -(nu + 1.0) * x / (2.0 * (nu + x * x))


def _scalar_model(name, drift, diffusion, x_star, params, *, linear=False, const_diff=False):
    return ModelSpec(
        name=name,
        d_x=1,
        d_y=1,
        drift=drift,
        diffusion=diffusion,
        observation=lambda x: x,
        x_star=np.array([x_star]),
        is_linear_gaussian=linear,
        has_constant_diffusion=const_diff,
        params=dict(params),
    )


def builtin_model(name: str, params: dict | None = None) -> ModelSpec:
    """Construct one of the four scalar benchmark models by name.

    Unknown parameter keys are rejected; omitted keys take the standard
    defaults (ou: theta=1, mu=0, sigma=0.5; langevin: nu=10;
    gbm: mu=0.02, sigma=0.2; nonlinear_sigma: theta=0, mu=0).
    """
    params = dict(params or {})
    if name == "ou":
        p = _take(params, theta=1.0, mu=0.0, sigma=0.5, x_star=0.0)
        if p["sigma"] <= 0:
            raise ValueError("ou: sigma must be positive")
        th, mu, sg = p["theta"], p["mu"], p["sigma"]
        return _scalar_model(
            "ou",
            lambda x: th * (mu - x),
            lambda x: np.full(np.shape(x) + (1,), sg),
            p["x_star"], p, linear=True, const_diff=True,
        )
    if name == "langevin":
        p = _take(params, nu=10.0, x_star=0.0)
        if p["nu"] <= 0:
            raise ValueError("langevin: nu must be positive")
        nu = p["nu"]
        return _scalar_model(
            "langevin",
            lambda x: langevin_drift(x, nu),
            lambda x: np.ones(np.shape(x) + (1,)),
            p["x_star"], p, const_diff=True,
        )
    if name == "gbm":
        # x_star defaults to 1: the process started at 0 is identically 0.
        p = _take(params, mu=0.02, sigma=0.2, x_star=1.0)
        if p["sigma"] <= 0:
            raise ValueError("gbm: sigma must be positive")
        mu, sg = p["mu"], p["sigma"]
        return _scalar_model(
            "gbm",
            lambda x: mu * x,
            lambda x: (sg * x)[..., None],
            p["x_star"], p,
        )
    if name == "nonlinear_sigma":
        p = _take(params, theta=0.0, mu=0.0, x_star=0.0)
        th, mu = p["theta"], p["mu"]
        return _scalar_model(
            "nonlinear_sigma",
            lambda x: th * (mu - x),
            lambda x: (1.0 / np.sqrt(1.0 + x * x))[..., None],
            p["x_star"], p,
        )
    raise ValueError(f"unknown model {name!r}; expected one of {BUILTIN_NAMES}")


def _take(params, **defaults):
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValueError(f"unknown parameter(s) {sorted(unknown)}; expected subset of {sorted(defaults)}")
    out = dict(defaults)
    out.update({k: float(v) for k, v in params.items()})
    return out
