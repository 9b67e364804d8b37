"""Forward-process parameterisations and the unified noise level.

Three sampler families are supported, each with its own trajectory
coordinate:

* ``ddpm`` -- discrete integer timesteps ``tau`` over a precomputed
  cumulative-product buffer ``alphabar`` (variance preserving,
  ``x = sqrt(abar) x0 + sqrt(1-abar) eps``),
* ``edm``  -- continuous noise level ``sigma`` (variance exploding,
  ``x = x0 + sigma * eps``),
* ``fm``   -- continuous interpolation time ``t`` in (0, 1)
  (``x = (1-t) eps + t x0``).

All three are compared through a single scalar noise level

    sigma_hat = sqrt(1 - abar_tau)   (ddpm)
              = sigma                (edm)
              = 1 - t                (fm)

which decreases strictly along any standard monotonic trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FAMILIES = ("ddpm", "edm", "fm")


class ParameterError(ValueError):
    """Invalid construction parameters."""


class DomainError(ValueError):
    """Coordinate outside the family's valid domain."""


@dataclass(frozen=True)
class AlphaBarBuffer:
    """Cumulative signal-retention buffer for the ddpm family.

    ``alphabar[t] = prod_{s<=t} (1 - beta_s)`` with ``beta_s`` linearly
    spaced from ``beta_start`` to ``beta_end`` over ``T`` steps.  Stored
    in float64 regardless of sampling precision so schedule lookups never
    drift from the generating betas.  Immutable after construction.
    """

    T: int
    alphabar: np.ndarray
    beta_start: float
    beta_end: float

    def __post_init__(self):
        ab = np.asarray(self.alphabar, dtype=np.float64)
        ab.setflags(write=False)
        object.__setattr__(self, "alphabar", ab)
        if ab.shape != (self.T,):
            raise ParameterError(f"alphabar must have shape ({self.T},), got {ab.shape}")
        if not (np.all(ab > 0.0) and np.all(ab < 1.0)):
            raise ParameterError("alphabar values must lie in (0, 1)")
        if not np.all(np.diff(ab) < 0.0):
            raise ParameterError("alphabar must be strictly decreasing")

    def sigma_hat(self, tau) -> np.ndarray | float:
        """Unified noise level sqrt(1 - alphabar[tau])."""
        tau = np.asarray(tau)
        if np.any(tau < 0) or np.any(tau > self.T - 1):
            raise DomainError(f"timestep out of range [0, {self.T - 1}]")
        out = np.sqrt(1.0 - self.alphabar[tau])
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EdmRange:
    """sigma range and shape exponent for the edm family."""

    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0

    def __post_init__(self):
        if not (0.0 < self.sigma_min < self.sigma_max):
            raise ParameterError("need 0 < sigma_min < sigma_max")
        if self.rho <= 0.0:
            raise ParameterError("rho must be positive")


@dataclass(frozen=True)
class FlowRange:
    """Interpolation-time endpoints for the fm family, strictly inside (0, 1)."""

    t_min: float = 0.001
    t_max: float = 0.999

    def __post_init__(self):
        if not (0.0 < self.t_min < self.t_max < 1.0):
            raise ParameterError("need 0 < t_min < t_max < 1")


@dataclass(frozen=True)
class UnifiedLevel:
    """A family tag plus its scalar noise level sigma_hat."""

    family: str
    sigma_hat: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}")
        if self.sigma_hat < 0.0:
            raise DomainError("sigma_hat must be nonnegative")


def build_linear_alphabar(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> AlphaBarBuffer:
    """Build the cumulative product buffer for a linear beta schedule.

    ``beta_s`` is linearly spaced from ``beta_start`` to ``beta_end``
    over ``T`` steps, so ``alphabar[0] = 1 - beta_start`` exactly.
    """
    if T < 2:
        raise ParameterError("T must be at least 2")
    if not (0.0 < beta_start < beta_end < 1.0):
        raise ParameterError("need 0 < beta_start < beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphabar = np.cumprod(1.0 - betas)
    return AlphaBarBuffer(T=T, alphabar=alphabar, beta_start=beta_start, beta_end=beta_end)


def sigma_hat(family: str, coordinate, process) -> UnifiedLevel:
    """Map a family-native coordinate to the unified noise level.

    ddpm: integer timestep against an AlphaBarBuffer; edm: sigma itself;
    fm: 1 - t.  Raises DomainError outside the family's domain.
    """
    if family == "ddpm":
        if not isinstance(process, AlphaBarBuffer):
            raise ParameterError("ddpm requires an AlphaBarBuffer")
        tau = int(coordinate)
        if tau != coordinate:
            raise DomainError("ddpm coordinate must be an integer timestep")
        return UnifiedLevel("ddpm", float(process.sigma_hat(tau)))
    if family == "edm":
        if not isinstance(process, EdmRange):
            raise ParameterError("edm requires an EdmRange")
        s = float(coordinate)
        if s < 0.0 or s > process.sigma_max:
            raise DomainError(f"sigma {s} outside [0, {process.sigma_max}]")
        return UnifiedLevel("edm", s)
    if family == "fm":
        if not isinstance(process, FlowRange):
            raise ParameterError("fm requires a FlowRange")
        t = float(coordinate)
        if t < process.t_min or t > process.t_max:
            raise DomainError(f"t {t} outside [{process.t_min}, {process.t_max}]")
        return UnifiedLevel("fm", 1.0 - t)
    raise ParameterError(f"unknown family {family!r}")
