"""Desk-scale laboratory for non-monotonic noise schedules in diffusion-style samplers."""

from .denoisers import (
    Denoiser,
    GmmSpec,
    bayes_fm_velocity,
    bayes_ve,
    bayes_vp,
    estimate_eps,
    estimate_lipschitz,
    perturb,
)
from .metrics import (
    GaussianFit,
    LinearFit,
    PowerlawFit,
    SscReport,
    fit_gaussian,
    frechet_distance,
    linear_slope_fit,
    paired_stats,
    penalty,
    powerlaw_fit,
    ssc,
)
from .processes import (
    AlphaBarBuffer,
    DomainError,
    EdmRange,
    FlowRange,
    ParameterError,
    UnifiedLevel,
    build_linear_alphabar,
    sigma_hat,
)
from .samplers import (
    CalibrationResult,
    SampleRun,
    SamplerConfig,
    SamplingError,
    Trajectory,
    calibrate_ar_threshold,
    ddim_step,
    decompose_noise,
    displacement_probes,
    edm_euler_step,
    edm_heun_step,
    fm_euler_step,
    reheat_displacement,
    run_adaptive,
    run_ddpm,
    run_edm,
    run_fm,
    run_schedule,
    vp_transition,
)
from .schedules import (
    Schedule,
    UnsupportedScheduleError,
    base_monotonic,
    damped_osc,
    overhead,
    reheat_indices,
    sawtooth,
    single_reheat,
    write_schedule_csv,
)

__version__ = "0.1.0"
