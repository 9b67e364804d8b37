"""Schedule execution: sampler updates, batch runs, adaptive reheating.

The ddpm update is the generalized deterministic/stochastic transition

    x_next = sqrt(abar_next) x0_hat
           + sqrt(1 - abar_next - var) eps_tilde
           + sqrt(var) z

with ``eps_tilde`` recomputed from the (possibly clipped) prediction and
``var`` the eta-controlled per-step variance on denoising steps
(``abar_next > abar_cur``) and exactly zero on reheat steps, where the
update degenerates to re-corrupting the current prediction along the
identified noise direction.  edm and fm steps are plain Euler updates of
their respective ODEs and stay well-defined for backward steps.

Reproducibility contract: all randomness for sample ``i`` of a run comes
from a Philox stream keyed by ``(base_seed, i)``; the initial state is
drawn first, then one noise slot per transition in trajectory order.
Batch results are therefore bitwise independent of batch size, worker
count, and evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoisers import Denoiser
from .processes import AlphaBarBuffer, DomainError, ParameterError
from .rng import derive_seed, generator
from .schedules import Schedule, UnsupportedScheduleError, base_monotonic, reheat_indices


class SamplingError(RuntimeError):
    """Non-finite state or numerical-domain violation during a run."""


@dataclass(frozen=True)
class SamplerConfig:
    """Run options shared by all families."""

    eta: float = 0.0
    clip: float | None = None
    record_trajectory: bool = False
    base_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError("eta must lie in [0, 1]")
        if self.clip is not None and self.clip <= 0.0:
            raise ParameterError("clip bound must be positive")


@dataclass
class Trajectory:
    """Per-sample step records, NaN-padded to a common length.

    ``coords[s, j]`` is the coordinate of sample s's j-th denoiser
    evaluation; ``is_reheat`` flags evaluations reached by a reheat
    step; ``delta_ar`` is the RMS change of the clean prediction against
    the previous evaluation (NaN at j=0).
    """

    coords: np.ndarray
    sigma_hat: np.ndarray
    is_reheat: np.ndarray
    delta_ar: np.ndarray
    x0: np.ndarray
    lengths: np.ndarray


@dataclass
class SampleRun:
    """A seeded batch of final states plus accounting."""

    samples: np.ndarray
    nfe_used: int
    reheats_fired: int = 0
    trajectory: Trajectory | None = None
    reheats_per_sample: np.ndarray | None = None


def _check_finite(x: np.ndarray, step: int, coord) -> None:
    if not np.all(np.isfinite(x)):
        bad = int(np.count_nonzero(~np.isfinite(x).all(axis=-1)))
        raise SamplingError(f"non-finite state after step {step} (coordinate {coord}, {bad} samples)")


def _per_sample_noise(base_seed: int, n: int, d: int, n_slots: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Initial draws plus (optionally) one z slot per transition per sample."""
    init = np.empty((n, d))
    bank = np.empty((n, n_slots, d)) if n_slots > 0 else None
    for s in range(n):
        g = generator(base_seed, s)
        init[s] = g.standard_normal(d)
        if bank is not None:
            bank[s] = g.standard_normal((n_slots, d))
    return init, bank


def vp_transition(x, a_cur, a_next, x0_hat, eta: float = 0.0, z=None):
    """One generalized update in abar space given the clean prediction.

    Valid for arbitrary target abar (reheat steps get zero variance).
    Raises on the impossible ``1 - abar_next - var < 0`` (cannot occur
    for eta <= 1).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0] if x.ndim > 1 else 1
    a_c = np.broadcast_to(np.asarray(a_cur, dtype=np.float64), (n,))
    a_n = np.broadcast_to(np.asarray(a_next, dtype=np.float64), (n,))
    if np.any(a_c >= 1.0):
        raise DomainError("current abar must be < 1 (no noise left to identify)")
    col = (lambda v: v[:, None]) if x.ndim > 1 else (lambda v: v[0])
    eps_tilde = (x - col(np.sqrt(a_c)) * x0_hat) / col(np.sqrt(1.0 - a_c))
    denoising = a_n > a_c
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(
            denoising,
            eta**2 * (1.0 - a_n) / (1.0 - a_c) * (1.0 - a_c / a_n),
            0.0,
        )
    var = np.where(np.isfinite(var), var, 0.0)
    rem = 1.0 - a_n - var
    if np.any(rem < -1e-12):
        raise SamplingError("negative residual variance 1 - abar_next - var")
    rem = np.clip(rem, 0.0, None)
    out = col(np.sqrt(a_n)) * x0_hat + col(np.sqrt(rem)) * eps_tilde
    if np.any(var > 0.0):
        if z is None:
            raise ParameterError("stochastic step requires a noise draw z")
        out = out + col(np.sqrt(var)) * z
    return out


def ddim_step(x, tau_cur: int, tau_next: int, alphabar: AlphaBarBuffer, denoiser, eta: float = 0.0,
              clip: float | None = None, z=None):
    """One generalized ddim transition between buffer timesteps.

    ``denoiser(x, abar) -> x0_hat``; the prediction is clipped to
    ``[-clip, clip]`` when a bound is configured, and the noise estimate
    is recomputed from the clipped prediction.
    """
    for tau in (tau_cur, tau_next):
        if not 0 <= tau <= alphabar.T - 1:
            raise DomainError(f"timestep {tau} outside buffer range")
    a_cur = float(alphabar.alphabar[tau_cur])
    a_next = float(alphabar.alphabar[tau_next])
    x0_hat = denoiser(x, a_cur)
    if clip is not None:
        x0_hat = np.clip(x0_hat, -clip, clip)
    return vp_transition(x, a_cur, a_next, x0_hat, eta=eta, z=z)


def edm_euler_step(x, sigma_cur: float, sigma_next: float, denoiser):
    """Euler step of the sigma-space probability-flow ODE.

    ``x + (sigma_next - sigma_cur) * (x - D(x, sigma_cur)) / sigma_cur``;
    well-defined for either step direction, including reheats.
    """
    if sigma_cur <= 0.0:
        raise DomainError("edm step requires sigma_cur > 0")
    drift = (x - denoiser(x, sigma_cur)) / sigma_cur
    return x + (sigma_next - sigma_cur) * drift


def edm_heun_step(x, sigma_cur: float, sigma_next: float, denoiser):
    """Second-order (trapezoidal) corrector step; monotonic use only.

    Costs two denoiser evaluations except when stepping to sigma=0,
    where it falls back to plain Euler (one evaluation).  Backward steps
    are rejected: the corrector re-uses the slope at sigma_cur and has
    no defined meaning along a re-noising transition.
    """
    if sigma_next > sigma_cur:
        raise UnsupportedScheduleError("heun corrector does not support reheat steps")
    if sigma_cur <= 0.0:
        raise DomainError("edm step requires sigma_cur > 0")
    h = sigma_next - sigma_cur
    d_cur = (x - denoiser(x, sigma_cur)) / sigma_cur
    x_euler = x + h * d_cur
    if sigma_next == 0.0:
        return x_euler
    d_next = (x_euler - denoiser(x_euler, sigma_next)) / sigma_next
    return x + 0.5 * h * (d_cur + d_next)


def fm_euler_step(x, t_cur: float, t_next: float, velocity):
    """Euler step of the interpolation-time ODE; sign of dt unrestricted."""
    if not 0.0 < t_cur < 1.0:
        raise DomainError("fm step requires t_cur strictly inside (0, 1)")
    return x + (t_next - t_cur) * velocity(x, t_cur)


def _empty_trajectory(n: int, n_slots: int, d: int) -> Trajectory:
    return Trajectory(
        coords=np.full((n, n_slots), np.nan),
        sigma_hat=np.full((n, n_slots), np.nan),
        is_reheat=np.zeros((n, n_slots), dtype=np.int64),
        delta_ar=np.full((n, n_slots), np.nan),
        x0=np.full((n, n_slots, d), np.nan),
        lengths=np.zeros(n, dtype=np.int64),
    )


def run_ddpm(schedule: Schedule, denoiser: Denoiser, config: SamplerConfig,
             n_samples: int = 1, initial=None) -> SampleRun:
    """Iterate the generalized ddim update over a ddpm schedule.

    The initial state is standard normal (the variance-preserving
    prior).  Aborts with a diagnostic on any non-finite state.
    """
    if schedule.family != "ddpm":
        raise ParameterError("run_ddpm requires a ddpm schedule")
    if denoiser.family != "ddpm":
        raise ParameterError("denoiser family does not match the schedule")
    ab = schedule.process.alphabar
    vals = schedule.values
    N = schedule.n
    d = denoiser.gmm.d
    n = int(n_samples)
    init, bank = _per_sample_noise(config.base_seed, n, d, N if config.eta > 0.0 else 0)
    x = np.array(initial, dtype=np.float64, copy=True) if initial is not None else init
    traj = _empty_trajectory(n, N, d) if config.record_trajectory else None
    prev_x0 = None
    sh = schedule.sigma_hat_values()
    for i in range(N):
        a_cur = float(ab[vals[i]])
        a_next = float(ab[vals[i + 1]])
        x0_hat = denoiser(x, a_cur)
        if config.clip is not None:
            x0_hat = np.clip(x0_hat, -config.clip, config.clip)
        if traj is not None:
            traj.coords[:, i] = vals[i]
            traj.sigma_hat[:, i] = sh[i]
            traj.is_reheat[:, i] = 1 if (i > 0 and sh[i] > sh[i - 1]) else 0
            traj.x0[:, i] = x0_hat
            if prev_x0 is not None:
                traj.delta_ar[:, i] = np.sqrt(np.mean((x0_hat - prev_x0) ** 2, axis=1))
        z = bank[:, i, :] if bank is not None else None
        x = vp_transition(x, a_cur, a_next, x0_hat, eta=config.eta, z=z)
        _check_finite(x, i, int(vals[i + 1]))
        prev_x0 = x0_hat
    if traj is not None:
        traj.lengths[:] = N
    return SampleRun(samples=x, nfe_used=N, trajectory=traj)


def run_edm(schedule: Schedule, denoiser: Denoiser, config: SamplerConfig,
            n_samples: int = 1, heun: bool = False, initial=None) -> SampleRun:
    """Integrate an edm schedule with Euler (default) or Heun steps."""
    if schedule.family != "edm":
        raise ParameterError("run_edm requires an edm schedule")
    if denoiser.family != "edm":
        raise ParameterError("denoiser family does not match the schedule")
    if heun and reheat_indices(schedule).size:
        raise UnsupportedScheduleError("heun corrector requires a monotonic schedule")
    vals = schedule.values
    N = schedule.n
    d = denoiser.gmm.d
    n = int(n_samples)
    init, _ = _per_sample_noise(config.base_seed, n, d, 0)
    x = np.array(initial, dtype=np.float64, copy=True) if initial is not None else float(vals[0]) * init
    traj = _empty_trajectory(n, N, d) if config.record_trajectory else None
    prev_x0 = None
    nfe = 0
    for i in range(N):
        s_cur, s_next = float(vals[i]), float(vals[i + 1])
        if traj is not None:
            x0_hat = denoiser(x, s_cur)
            traj.coords[:, i] = s_cur
            traj.sigma_hat[:, i] = s_cur
            traj.is_reheat[:, i] = 1 if (i > 0 and s_cur > vals[i - 1]) else 0
            traj.x0[:, i] = x0_hat
            if prev_x0 is not None:
                traj.delta_ar[:, i] = np.sqrt(np.mean((x0_hat - prev_x0) ** 2, axis=1))
            prev_x0 = x0_hat
        if heun:
            x = edm_heun_step(x, s_cur, s_next, denoiser)
            nfe += 1 if s_next == 0.0 else 2
        else:
            x = edm_euler_step(x, s_cur, s_next, denoiser)
            nfe += 1
        _check_finite(x, i, s_next)
    if traj is not None:
        traj.lengths[:] = N
    return SampleRun(samples=x, nfe_used=nfe, trajectory=traj)


def run_fm(schedule: Schedule, denoiser: Denoiser, config: SamplerConfig,
           n_samples: int = 1, initial=None) -> SampleRun:
    """Integrate an fm schedule with Euler steps from a standard-normal prior."""
    if schedule.family != "fm":
        raise ParameterError("run_fm requires an fm schedule")
    if denoiser.family != "fm":
        raise ParameterError("denoiser family does not match the schedule")
    vals = schedule.values
    N = schedule.n
    d = denoiser.gmm.d
    n = int(n_samples)
    init, _ = _per_sample_noise(config.base_seed, n, d, 0)
    x = np.array(initial, dtype=np.float64, copy=True) if initial is not None else init
    traj = _empty_trajectory(n, N, d) if config.record_trajectory else None
    prev_x0 = None
    for i in range(N):
        t_cur, t_next = float(vals[i]), float(vals[i + 1])
        if traj is not None:
            x0_hat = denoiser.predict_x0(x, t_cur)
            traj.coords[:, i] = t_cur
            traj.sigma_hat[:, i] = 1.0 - t_cur
            traj.is_reheat[:, i] = 1 if (i > 0 and t_cur < vals[i - 1]) else 0
            traj.x0[:, i] = x0_hat
            if prev_x0 is not None:
                traj.delta_ar[:, i] = np.sqrt(np.mean((x0_hat - prev_x0) ** 2, axis=1))
            prev_x0 = x0_hat
        x = fm_euler_step(x, t_cur, t_next, denoiser)
        _check_finite(x, i, t_next)
    if traj is not None:
        traj.lengths[:] = N
    return SampleRun(samples=x, nfe_used=N, trajectory=traj)


def run_schedule(schedule: Schedule, denoiser: Denoiser, config: SamplerConfig,
                 n_samples: int = 1, heun: bool = False) -> SampleRun:
    """Dispatch a schedule to its family's runner."""
    if schedule.family == "ddpm":
        return run_ddpm(schedule, denoiser, config, n_samples)
    if schedule.family == "edm":
        return run_edm(schedule, denoiser, config, n_samples, heun=heun)
    return run_fm(schedule, denoiser, config, n_samples)


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    calibration_nfe: int
    k_cal: int
    n: int
    percentile: float


def calibrate_ar_threshold(denoiser: Denoiser, alphabar: AlphaBarBuffer, N: int = 50,
                           k_cal: int = 100, percentile: float = 80.0, seed: int = 0,
                           eta: float = 0.0) -> CalibrationResult:
    """Data-driven trigger threshold for adaptive reheating.

    Runs ``k_cal`` monotonic ddpm trajectories of ``N`` steps and returns
    the requested percentile of every observed RMS prediction change,
    plus the one-shot calibration cost ``k_cal * N`` evaluations.
    """
    if k_cal < 1:
        raise ParameterError("k_cal must be at least 1")
    if not 0.0 < percentile <= 100.0:
        raise ParameterError("percentile must lie in (0, 100]")
    base = base_monotonic("ddpm", alphabar, N)
    config = SamplerConfig(eta=eta, record_trajectory=True, base_seed=seed)
    run = run_ddpm(base, denoiser, config, n_samples=k_cal)
    deltas = run.trajectory.delta_ar[:, 1:]
    threshold = float(np.percentile(deltas.ravel(), percentile))
    return CalibrationResult(threshold=threshold, calibration_nfe=k_cal * N,
                             k_cal=k_cal, n=N, percentile=percentile)


def run_adaptive(base: Schedule, denoiser: Denoiser, threshold: float,
                 delta_tau: int = 50, max_reheats: int = 15,
                 config: SamplerConfig = SamplerConfig(), n_samples: int = 1) -> SampleRun:
    """Online reheating on top of a monotonic ddpm schedule.

    After each base-schedule evaluation at index i >= 1, if the RMS
    prediction change exceeds ``threshold`` and budget remains, one extra
    evaluation is inserted at ``min(tau_i + delta_tau, T-1)`` before the
    run resumes the original tail (each trigger costs exactly +1 NFE).
    Triggers are only examined at base-schedule evaluations; the RMS
    change itself is computed between consecutive evaluations of any
    kind.  ``reheats_fired`` reports the busiest sample of the batch;
    per-sample counts ride along.
    """
    if base.family != "ddpm" or base.kind != "monotonic":
        raise ParameterError("adaptive reheating requires a monotonic ddpm schedule")
    if denoiser.family != "ddpm":
        raise ParameterError("denoiser family does not match the schedule")
    if delta_tau < 1:
        raise ParameterError("delta_tau must be at least 1")
    if max_reheats < 0:
        raise ParameterError("max_reheats must be nonnegative")
    ab = base.process.alphabar
    T = base.process.T
    vals = base.values
    N = base.n
    d = denoiser.gmm.d
    n = int(n_samples)
    n_slots = N + max_reheats
    init, bank = _per_sample_noise(config.base_seed, n, d, n_slots if config.eta > 0.0 else 0)
    x = init
    pos = np.zeros(n, dtype=np.int64)          # base-schedule index of the current coordinate
    coord = np.full(n, vals[0], dtype=np.int64)
    inserted = np.zeros(n, dtype=bool)          # current evaluation is an inserted reheat
    fired = np.zeros(n, dtype=np.int64)
    ordinal = np.zeros(n, dtype=np.int64)       # evaluations done so far, per sample
    done = np.zeros(n, dtype=bool)
    prev_x0 = np.zeros((n, d))
    traj = _empty_trajectory(n, n_slots, d) if config.record_trajectory else None
    prev_sh = np.full(n, np.nan)
    for _ in range(n_slots):
        active = np.nonzero(~done)[0]
        if active.size == 0:
            break
        a_cur = ab[coord[active]]
        x0_hat = denoiser(x[active], a_cur)
        if config.clip is not None:
            x0_hat = np.clip(x0_hat, -config.clip, config.clip)
        delta = np.sqrt(np.mean((x0_hat - prev_x0[active]) ** 2, axis=1))
        first = ordinal[active] == 0
        delta[first] = np.nan
        if traj is not None:
            j = ordinal[active]
            sh_cur = np.sqrt(1.0 - a_cur)
            traj.coords[active, j] = coord[active]
            traj.sigma_hat[active, j] = sh_cur
            traj.is_reheat[active, j] = (sh_cur > prev_sh[active]).astype(np.int64)
            traj.x0[active, j] = x0_hat
            traj.delta_ar[active, j] = delta
            prev_sh[active] = sh_cur
        trigger = (
            (~inserted[active])
            & (pos[active] >= 1)
            & (fired[active] < max_reheats)
            & (delta > threshold)
        )
        next_coord = np.empty(active.size, dtype=np.int64)
        at_insert = inserted[active]
        next_coord[at_insert] = vals[pos[active][at_insert] + 1]
        base_rows = ~at_insert
        adv = base_rows & ~trigger
        next_coord[adv] = vals[pos[active][adv] + 1]
        next_coord[trigger] = np.minimum(coord[active][trigger] + delta_tau, T - 1)
        z = bank[active, ordinal[active], :] if bank is not None else None
        x[active] = vp_transition(x[active], a_cur, ab[next_coord], x0_hat, eta=config.eta, z=z)
        _check_finite(x[active], int(ordinal[active].max()), "adaptive")
        pos[active[at_insert]] += 1
        pos[active[adv]] += 1
        fired[active[trigger]] += 1
        inserted[active] = trigger
        coord[active] = next_coord
        prev_x0[active] = x0_hat
        ordinal[active] += 1
        done[active] = (pos[active] >= N) & ~inserted[active]
    if traj is not None:
        traj.lengths[:] = ordinal
    reheats = int(fired.max()) if n else 0
    return SampleRun(samples=x, nfe_used=N + reheats, reheats_fired=reheats,
                     trajectory=traj, reheats_per_sample=fired)


def decompose_noise(z, eps_tilde):
    """Split z into components parallel and orthogonal to eps_tilde.

    Returns (z_par, z_perp) with z = z_par + z_perp exactly; raises on a
    zero reference direction.
    """
    z = np.asarray(z, dtype=np.float64)
    e = np.asarray(eps_tilde, dtype=np.float64)
    norms = np.linalg.norm(e, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DomainError("eps_tilde must be nonzero")
    unit = e / norms
    z_par = np.sum(z * unit, axis=-1, keepdims=True) * unit
    return z_par, z - z_par


def _deterministic_step(x, denoiser: Denoiser, sh_cur: float, sh_next: float, x0_hat=None):
    """One eta=0 transition between unified noise levels, any direction."""
    if denoiser.family == "ddpm":
        a_cur = 1.0 - sh_cur**2
        a_next = 1.0 - sh_next**2
        if x0_hat is None:
            x0_hat = denoiser(x, a_cur)
        return vp_transition(x, a_cur, a_next, x0_hat)
    if denoiser.family == "edm":
        if x0_hat is None:
            x0_hat = denoiser(x, sh_cur)
        return x + (sh_next - sh_cur) * (x - x0_hat) / sh_cur
    t_cur = 1.0 - sh_cur
    if x0_hat is None:
        x0_hat = denoiser(x, t_cur)  # velocity, not x0, for fm
    return x + ((1.0 - sh_next) - t_cur) * x0_hat


def reheat_displacement(x, sh_cur: float, sh_peak: float, sh_next: float,
                        denoiser: Denoiser, family: str):
    """Squared gap between reheat-then-denoise and the direct step.

    Both paths are deterministic (eta=0): the reheat path steps
    ``sh_cur -> sh_peak -> sh_next`` while the direct path steps
    ``sh_cur -> sh_next``; both start from the same prediction at
    ``sh_cur``.  Returns ||x_R - x_D||^2 (per row for batched x).
    """
    x_r, x_d = reheat_paths(x, sh_cur, sh_peak, sh_next, denoiser, family)
    gap = x_r - x_d
    out = np.sum(np.asarray(gap) ** 2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def reheat_paths(x, sh_cur: float, sh_peak: float, sh_next: float,
                 denoiser: Denoiser, family: str):
    """The two endpoint states behind ``reheat_displacement``."""
    if family != denoiser.family:
        raise ParameterError("family tag does not match the denoiser")
    if not sh_peak > sh_cur >= sh_next >= 0.0:
        raise ParameterError("need sh_peak > sh_cur >= sh_next >= 0")
    if sh_cur <= 0.0:
        raise DomainError("sh_cur must be positive")
    x = np.asarray(x, dtype=np.float64)
    level_cur = denoiser.level_of_sigma_hat(sh_cur)
    pred = denoiser(x, level_cur)
    up = _deterministic_step(x, denoiser, sh_cur, sh_peak, x0_hat=pred)
    x_r = _deterministic_step(up, denoiser, sh_peak, sh_next)
    x_d = _deterministic_step(x, denoiser, sh_cur, sh_next, x0_hat=pred)
    return x_r, x_d


def displacement_probes(denoiser: Denoiser, sh_cur: float, sh_peak: float, sh_next: float,
                        n: int, seed: int = 0) -> np.ndarray:
    """Displacement vectors x_R - x_D over forward-marginal draws at sh_cur."""
    rng = generator(derive_seed("displacement-probes", seed))
    x = denoiser.sample_marginal(sh_cur, n, rng)
    x_r, x_d = reheat_paths(x, sh_cur, sh_peak, sh_next, denoiser, denoiser.family)
    return x_r - x_d
