"""Construction of monotonic and reheating sampling schedules.

A schedule is a length-``N+1`` coordinate sequence (integer timesteps for
ddpm, sigma values for edm, interpolation times for fm) driving ``N``
denoiser evaluations.  A transition ``i -> i+1`` is a *reheat step* when
the unified noise level increases, ``sigma_hat[i+1] > sigma_hat[i]``
(strict); equal consecutive levels count as denoising steps.

Four constructed families:

* monotonic     -- the common linear / Karras / uniform baseline,
* single_reheat -- one multiplicative backward jump at a chosen position,
  followed by a fresh linear descent,
* sawtooth      -- periodic multiplicative jumps every ``P`` steps,
* damped_osc    -- a damped sinusoid superimposed on the baseline ramp.

ddpm integerisation uses round-half-away-from-zero throughout so golden
files are stable across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .processes import (
    AlphaBarBuffer,
    DomainError,
    EdmRange,
    FlowRange,
    ParameterError,
)

KINDS = ("monotonic", "single_reheat", "sawtooth", "damped_osc", "adaptive")

#: Default hyperparameters for the schedule families.
SINGLE_REHEAT_DEFAULTS = {"t_reheat": 0.4, "delta": 0.15}
SAWTOOTH_DEFAULTS = {"period": 25, "delta_st": 0.08}
DAMPED_OSC_DEFAULTS = {"amplitude": 0.2, "damping": 2.5, "frequency": 4.0}


class UnsupportedScheduleError(ParameterError):
    """Requested (family, kind) combination is not defined."""


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _family_of(process) -> str:
    if isinstance(process, AlphaBarBuffer):
        return "ddpm"
    if isinstance(process, EdmRange):
        return "edm"
    if isinstance(process, FlowRange):
        return "fm"
    raise ParameterError(f"unrecognised process object {type(process).__name__}")


@dataclass(frozen=True)
class Schedule:
    """An immutable coordinate sequence plus its generating metadata."""

    family: str
    kind: str
    values: np.ndarray
    n: int
    process: AlphaBarBuffer | EdmRange | FlowRange
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        if _family_of(self.process) != self.family:
            raise ParameterError("process object does not match schedule family")
        vals = np.asarray(self.values)
        if vals.shape != (self.n + 1,):
            raise ParameterError(f"schedule must have length N+1={self.n + 1}, got {vals.shape}")
        if self.family == "ddpm":
            if not np.all(np.equal(np.mod(vals, 1), 0)):
                raise ParameterError("ddpm schedule values must be integers")
            vals = vals.astype(np.int64)
            T = self.process.T
            if vals[0] != T - 1 or vals[-1] != 0:
                raise ParameterError("ddpm schedule endpoints must be T-1 and 0")
            if vals.min() < 0 or vals.max() > T - 1:
                raise ParameterError("ddpm timesteps out of range")
        elif self.family == "edm":
            vals = vals.astype(np.float64)
            if not math.isclose(vals[0], self.process.sigma_max, rel_tol=1e-9):
                raise ParameterError("edm schedule must start at sigma_max")
            if vals[-1] != 0.0:
                raise ParameterError("edm schedule must end with the terminal sigma=0 entry")
            interior = vals[1:-1]
            lo, hi = self.process.sigma_min, self.process.sigma_max
            if interior.size and (interior.min() < lo * (1 - 1e-12) or interior.max() > hi * (1 + 1e-12)):
                raise ParameterError("edm interior sigmas out of [sigma_min, sigma_max]")
        else:
            vals = vals.astype(np.float64)
            lo, hi = self.process.t_min, self.process.t_max
            if not (math.isclose(vals[0], lo, rel_tol=1e-12) and math.isclose(vals[-1], hi, rel_tol=1e-12)):
                raise ParameterError("fm schedule endpoints must be t_min and t_max")
            if vals.min() < lo - 1e-15 or vals.max() > hi + 1e-15:
                raise ParameterError("fm times out of [t_min, t_max]")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.kind == "monotonic" and reheat_indices(self).size:
            raise ParameterError("monotonic schedule has a nonempty reheat set")

    def sigma_hat_values(self) -> np.ndarray:
        """Unified noise level at every schedule index."""
        if self.family == "ddpm":
            return np.sqrt(1.0 - self.process.alphabar[self.values])
        if self.family == "edm":
            return self.values.astype(np.float64)
        return 1.0 - self.values


def base_monotonic(family: str, process, N: int) -> Schedule:
    """The shared monotonic baseline for a family.

    ddpm: ``tau_i = round((T-1)(N-i)/N)`` with endpoints pinned.
    edm: the rho-warped sigma grid plus a terminal sigma=0 entry.
    fm: uniform grid on [t_min, t_max].
    """
    if N < 5:
        raise ParameterError("N must be at least 5")
    if family != _family_of(process):
        raise ParameterError("process object does not match requested family")
    if family == "ddpm":
        T = process.T
        i = np.arange(N + 1, dtype=np.float64)
        vals = _round_half_away((T - 1) * (N - i) / N).astype(np.int64)
        vals[0], vals[-1] = T - 1, 0
    elif family == "edm":
        inv = 1.0 / process.rho
        i = np.arange(N, dtype=np.float64)
        grid = process.sigma_max**inv + (i / (N - 1)) * (process.sigma_min**inv - process.sigma_max**inv)
        vals = np.append(grid**process.rho, 0.0)
    else:
        vals = np.linspace(process.t_min, process.t_max, N + 1)
    return Schedule(family=family, kind="monotonic", values=vals, n=N, process=process)


def _reheat_position(t_reheat: float, N: int) -> int:
    return int(np.clip(math.floor(t_reheat * N), 2, N - 3))


def single_reheat(base: Schedule, t_reheat: float = 0.4, delta: float = 0.15) -> Schedule:
    """One backward jump at index ``r = clip(floor(t_reheat*N), 2, N-3)``.

    ddpm: the entry at ``r`` becomes ``min(tau_r + max(floor(tau_r*delta), 1),
    T-1)`` and the remaining ``N-r`` entries restart as a linear descent to 0
    (the descent grid includes the jump value as its origin; the duplicate is
    dropped so the total length stays N+1).
    edm: the entry at ``r`` is replaced by the earlier, higher sigma at index
    ``r - max(1, floor(N*delta/2))`` (a stutter-and-recover).
    fm: the entry at ``r`` is lowered to ``max(t_r - delta*t_r, t_min)``.
    """
    if base.kind != "monotonic":
        raise ParameterError("single_reheat requires a monotonic base schedule")
    if delta <= 0.0:
        raise ParameterError("delta must be positive")
    N = base.n
    r = _reheat_position(t_reheat, N)
    params = {"t_reheat": t_reheat, "delta": delta, "r": r}
    if base.family == "ddpm":
        T = base.process.T
        tau_m = base.values
        jump = max(math.floor(tau_m[r] * delta), 1)
        peak = min(int(tau_m[r]) + jump, T - 1)
        tail = np.linspace(peak, 0.0, N - r + 1)[1:]
        vals = np.concatenate(
            [tau_m[:r], [peak], _round_half_away(tail).astype(np.int64)]
        )
    elif base.family == "edm":
        ell = max(1, math.floor(N * delta / 2.0))
        vals = base.values.copy()
        vals[r] = base.values[max(0, r - ell)]
        params["lookback"] = ell
    else:
        vals = base.values.copy()
        vals[r] = max(base.values[r] - delta * base.values[r], base.process.t_min)
    return Schedule(
        family=base.family, kind="single_reheat", values=vals, n=N, process=base.process, params=params
    )


def sawtooth(base: Schedule, period: int = 25, delta_st: float = 0.08) -> Schedule:
    """Periodic multiplicative jumps every ``period`` steps.

    ddpm: at each i in {P, 2P, ...} with i < N-2 and tau_i >= 5 the entry
    jumps by ``max(floor(tau_i * delta_st), 1)`` capped at T-1; the tau >= 5
    guard suppresses near-terminal jumps that would round to nothing.
    edm: the entry is replaced by the sigma ``ceil(N*delta_st/2)`` grid
    positions earlier.  Not defined for fm.
    """
    if base.kind != "monotonic":
        raise ParameterError("sawtooth requires a monotonic base schedule")
    if base.family == "fm":
        raise UnsupportedScheduleError("sawtooth is not defined in t-space")
    if period < 2:
        raise ParameterError("period must be at least 2")
    if delta_st <= 0.0:
        raise ParameterError("delta_st must be positive")
    N = base.n
    vals = base.values.copy()
    params = {"period": period, "delta_st": delta_st}
    if base.family == "ddpm":
        T = base.process.T
        for i in range(period, N, period):
            if i < N - 2 and base.values[i] >= 5:
                jump = max(math.floor(base.values[i] * delta_st), 1)
                vals[i] = min(int(base.values[i]) + jump, T - 1)
    else:
        shift = math.ceil(N * delta_st / 2.0)
        for i in range(period, N, period):
            if i < N - 2:
                vals[i] = base.values[max(0, i - shift)]
        params["lookback"] = shift
    return Schedule(
        family=base.family, kind="sawtooth", values=vals, n=N, process=base.process, params=params
    )


def damped_osc(process, N: int, amplitude: float = 0.2, damping: float = 2.5, frequency: float = 4.0) -> Schedule:
    """Damped sinusoid superimposed on the monotonic ramp.

    With normalised step coordinate ``s = i/N`` the perturbation is
    ``amplitude * exp(-damping*s) * sin(2*pi*frequency*s)``, applied to the
    timestep ramp (ddpm, scaled by T-1), to log-sigma (edm, scaled by
    |log sigma|), or to t (fm, scaled by 0.3*(t_max-t_min)).  Clipping to
    the family domain happens before ddpm rounding; endpoints are pinned
    last.
    """
    if amplitude < 0.0:
        raise ParameterError("amplitude must be nonnegative")
    if damping <= 0.0 or frequency <= 0.0:
        raise ParameterError("damping and frequency must be positive")
    if N < 5:
        raise ParameterError("N must be at least 5")
    family = _family_of(process)
    params = {"amplitude": amplitude, "damping": damping, "frequency": frequency}
    if family == "ddpm":
        T = process.T
        s = np.arange(N + 1, dtype=np.float64) / N
        raw = (1.0 - s) * (T - 1) + amplitude * (T - 1) * np.exp(-damping * s) * np.sin(2.0 * np.pi * frequency * s)
        vals = _round_half_away(np.clip(raw, 0.0, T - 1)).astype(np.int64)
        vals[0], vals[-1] = T - 1, 0
    elif family == "edm":
        karras = base_monotonic("edm", process, N).values[:-1]
        s = np.arange(N, dtype=np.float64) / N
        log_sigma = np.log(karras)
        pert = np.abs(log_sigma) * amplitude * np.exp(-damping * s) * np.sin(2.0 * np.pi * frequency * s)
        clipped = np.clip(log_sigma + pert, np.log(process.sigma_min), np.log(process.sigma_max))
        vals = np.append(np.exp(clipped), 0.0)
        vals[0] = process.sigma_max
    else:
        tm = np.linspace(process.t_min, process.t_max, N + 1)
        s = np.arange(N + 1, dtype=np.float64) / N
        scale = 0.3 * (process.t_max - process.t_min)
        pert = scale * amplitude * np.exp(-damping * s) * np.sin(2.0 * np.pi * frequency * s)
        vals = np.clip(tm + pert, process.t_min, process.t_max)
        vals[0], vals[-1] = process.t_min, process.t_max
    return Schedule(family=family, kind="damped_osc", values=vals, n=N, process=process, params=params)


def reheat_indices(s: Schedule) -> np.ndarray:
    """Indices i whose transition i -> i+1 strictly increases sigma_hat.

    Family conventions: ddpm tau[i+1] > tau[i]; edm sigma[i+1] > sigma[i];
    fm t[i+1] < t[i].  The edm terminal sigma=0 entry can never start or
    end a reheat (it is the last, strictly-smaller value).
    """
    v = s.values
    if s.family == "fm":
        mask = v[1:] < v[:-1]
    else:
        mask = v[1:] > v[:-1]
    return np.nonzero(mask)[0]


def overhead(s: Schedule) -> float:
    """Fraction of the covered noise range re-traversed by reheat steps.

    ``sum over reheats of (sigma_hat[i+1] - sigma_hat[i])`` divided by
    ``sigma_hat[0] - sigma_hat[N]``; zero iff the schedule is monotonic.
    """
    sh = s.sigma_hat_values()
    span = sh[0] - sh[-1]
    if span <= 0.0:
        raise DomainError("degenerate schedule: sigma_hat[0] must exceed sigma_hat[N]")
    idx = reheat_indices(s)
    return float(np.sum(sh[idx + 1] - sh[idx]) / span)


def schedule_rows(s: Schedule) -> list[tuple]:
    """Rows (index, coordinate, sigma_hat, is_reheat) for CSV export.

    ``is_reheat`` flags the row whose coordinate was *reached* by a reheat
    step, i.e. row i is flagged when transition i-1 -> i increased
    sigma_hat.
    """
    sh = s.sigma_hat_values()
    arrived_by_reheat = np.zeros(s.n + 1, dtype=np.int64)
    arrived_by_reheat[reheat_indices(s) + 1] = 1
    rows = []
    for i in range(s.n + 1):
        coord = int(s.values[i]) if s.family == "ddpm" else float(s.values[i])
        rows.append((i, coord, float(sh[i]), int(arrived_by_reheat[i])))
    return rows


def write_schedule_csv(s: Schedule, path) -> None:
    """Write ``index,coordinate,sigma_hat,is_reheat`` rows (deterministic bytes)."""
    lines = ["index,coordinate,sigma_hat,is_reheat"]
    for i, coord, sh, flag in schedule_rows(s):
        coord_txt = str(coord) if s.family == "ddpm" else repr(coord)
        lines.append(f"{i},{coord_txt},{sh!r},{flag}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
