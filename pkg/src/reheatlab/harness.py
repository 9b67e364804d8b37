"""Experiment orchestration behind the command-line verbs.

Every command is a pure function of (config, output directory, workers):
given the same config and seed it produces byte-identical files, under
any worker count.  Wall-clock timings are informational only and go to a
``*.timing.json`` sidecar so the canonical outputs stay reproducible.

Within one command, a schedule variant and its monotonic control always
run at equal sample counts and share the same per-sample noise streams,
so their quality difference isolates the schedule choice.  The quality
noise floor is the standard deviation of the control metric across
re-seeded runs.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .denoisers import Denoiser
from .metrics import GaussianFit, fit_gaussian, frechet_distance, linear_slope_fit, ssc
from .rng import derive_seed, generator
from .samplers import (
    SamplerConfig,
    calibrate_ar_threshold,
    run_adaptive,
    run_schedule,
)
from .schedules import overhead, reheat_indices, write_schedule_csv

SCHEMA_VERSION = 1

PARETO_METHODS = (
    ("ddim", "monotonic", 0.0),
    ("ddpm-eta1", "monotonic", 1.0),
    ("reheat-det", "single_reheat", 0.0),
    ("reheat-stoch", "single_reheat", 0.5),
)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header: str, rows: list[str]) -> None:
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")


def _write_timing(path: Path, seconds: float) -> None:
    _write_json(path, {"schema_version": SCHEMA_VERSION, "wall_clock_seconds": seconds,
                       "note": "informational sidecar; excluded from determinism guarantees"})


def reference_fit(config: ExperimentConfig) -> GaussianFit:
    """Moment fit of ground-truth draws from the data distribution."""
    rng = generator(derive_seed(config.base_seed, "reference"))
    gmm = config.build_gmm()
    return fit_gaussian(gmm.sample(config.n_reference, rng))


def _run_fd(config: ExperimentConfig, denoiser: Denoiser, schedule, ref: GaussianFit,
            seed: int, eta: float | None = None) -> float:
    sampler = SamplerConfig(eta=config.eta if eta is None else eta,
                            clip=config.clip, base_seed=seed)
    run = run_schedule(schedule, denoiser, sampler, n_samples=config.n_samples)
    return frechet_distance(fit_gaussian(run.samples), ref)


def noise_floor(config: ExperimentConfig, denoiser: Denoiser, N: int, ref: GaussianFit) -> float:
    """Std of the control metric across re-seeded monotonic runs."""
    if config.noise_floor_runs < 2:
        raise ConfigError("noise_floor_runs must be at least 2")
    base = config.build_schedule(N, kind="monotonic")
    fds = [
        _run_fd(config, denoiser, base, ref, derive_seed(config.base_seed, "floor", k))
        for k in range(config.noise_floor_runs)
    ]
    return float(np.std(fds, ddof=1))


def cmd_schedule_dump(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    """Write one schedule CSV per configured budget."""
    if config.schedule_kind == "adaptive":
        raise ConfigError("adaptive schedules are realised online; nothing static to dump")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for N in config.nfe_list:
        sched = config.build_schedule(N)
        path = out_dir / f"schedule_{config.family}_{config.schedule_kind}_N{N}.csv"
        write_schedule_csv(sched, path)
        written.append(path)
    return written


def cmd_run(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    """Sample-quality report for the configured schedule vs its control."""
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    denoiser = config.build_denoiser()
    ref = reference_fit(config)
    rows = []
    for N in config.nfe_list:
        seed = derive_seed(config.base_seed, "batch", N)
        control = config.build_schedule(N, kind="monotonic")
        fd_mono = _run_fd(config, denoiser, control, ref, seed)
        if config.schedule_kind == "adaptive":
            cal = calibrate_ar_threshold(denoiser, config.build_process(), N=config.n_cal,
                                         k_cal=config.k_cal, percentile=config.percentile,
                                         seed=derive_seed(config.base_seed, "calibration"))
            sampler = SamplerConfig(eta=config.eta, clip=config.clip, base_seed=seed)
            run = run_adaptive(control, denoiser, cal.threshold, config.delta_tau,
                               config.max_reheats, sampler, n_samples=config.n_samples)
            fd = frechet_distance(fit_gaussian(run.samples), ref)
            nfe_used, reheats, over = run.nfe_used, run.reheats_fired, 0.0
        else:
            sched = config.build_schedule(N)
            fd = _run_fd(config, denoiser, sched, ref, seed)
            nfe_used, reheats, over = N, int(reheat_indices(sched).size), overhead(sched)
        rows.append({
            "nfe": N,
            "nfe_used": nfe_used,
            "fd": fd,
            "fd_monotonic": fd_mono,
            "penalty": fd - fd_mono,
            "reheat_steps": reheats,
            "overhead": over,
        })
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "run",
        "family": config.family,
        "schedule_kind": config.schedule_kind,
        "model_kind": config.model_kind,
        "eta": config.eta,
        "n_samples": config.n_samples,
        "n_reference": config.n_reference,
        "base_seed": config.base_seed,
        "rows": rows,
    }
    json_path = out_dir / "run_report.json"
    _write_json(json_path, report)
    csv_path = out_dir / "run_report.csv"
    header = "nfe,nfe_used,fd,fd_monotonic,penalty,reheat_steps,overhead"
    _write_csv(csv_path, header, [
        f"{r['nfe']},{r['nfe_used']},{r['fd']!r},{r['fd_monotonic']!r},"
        f"{r['penalty']!r},{r['reheat_steps']},{r['overhead']!r}" for r in rows
    ])
    _write_timing(out_dir / "run_report.timing.json", time.perf_counter() - start)
    return [json_path, csv_path]


@dataclass(frozen=True)
class _CellSpec:
    config: ExperimentConfig
    t_reheat: float
    delta: float
    nfe: int
    seed: int


def _ablation_cell(spec: _CellSpec) -> tuple[float, int]:
    config = spec.config
    denoiser = config.build_denoiser()
    ref = reference_fit(config)
    sched = config.build_schedule(spec.nfe, kind="single_reheat",
                                  t_reheat=spec.t_reheat, delta=spec.delta)
    fd = _run_fd(config, denoiser, sched, ref, spec.seed)
    return fd, int(reheat_indices(sched).size)


def cmd_ablation(config: ExperimentConfig, out_dir: Path, workers: int = 1) -> list[Path]:
    """Position x magnitude grid for the single-reheat schedule.

    Emits per-cell penalties, per-magnitude summary statistics, and
    per-position linear slopes of penalty against magnitude.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    denoiser = config.build_denoiser()
    ref = reference_fit(config)
    N = config.ablation_nfe
    seed = derive_seed(config.base_seed, "batch", N)
    fd_mono = _run_fd(config, denoiser, config.build_schedule(N, kind="monotonic"), ref, seed)
    floor = noise_floor(config, denoiser, N, ref)

    specs = [
        _CellSpec(config=config, t_reheat=t, delta=dl, nfe=N, seed=seed)
        for t in config.t_reheat_grid
        for dl in config.delta_grid
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_ablation_cell, specs, chunksize=4))
    else:
        results = [_ablation_cell(s) for s in specs]

    cell_rows = []
    penalties = {}
    reheat_counts = {}
    for spec, (fd, reheats) in zip(specs, results):
        pen = fd - fd_mono
        penalties[(spec.t_reheat, spec.delta)] = pen
        reheat_counts[(spec.t_reheat, spec.delta)] = reheats
        cell_rows.append(
            f"{spec.t_reheat!r},{spec.delta!r},{fd!r},{fd_mono!r},{pen!r},{reheats}"
        )
    cells_path = out_dir / "ablation_cells.csv"
    _write_csv(cells_path, "t_reheat,delta,fd,fd_monotonic,penalty,reheat_steps", cell_rows)

    summary_rows = []
    for dl in config.delta_grid:
        col = [penalties[(t, dl)] for t in config.t_reheat_grid]
        beats = sum(1 for p in col if p < -floor)
        reheats = sorted(reheat_counts[(t, dl)] for t in config.t_reheat_grid)
        median_reheats = reheats[len(reheats) // 2]
        summary_rows.append(
            f"{dl!r},{min(col)!r},{float(np.median(col))!r},{max(col)!r},"
            f"{beats},{len(col)},{median_reheats}"
        )
    summary_path = out_dir / "ablation_summary.csv"
    _write_csv(summary_path,
               "delta,min_penalty,median_penalty,max_penalty,beat_baseline,positions,median_reheat_steps",
               summary_rows)

    slope_rows = []
    if len(config.delta_grid) >= 3:
        for t in config.t_reheat_grid:
            fit = linear_slope_fit(list(config.delta_grid),
                                   [penalties[(t, dl)] for dl in config.delta_grid])
            slope_rows.append(f"{t!r},{fit.slope!r},{fit.intercept!r},{fit.r2!r}")
    slopes_path = out_dir / "ablation_slopes.csv"
    _write_csv(slopes_path, "t_reheat,slope,intercept,r2", slope_rows)

    meta_path = out_dir / "ablation_meta.json"
    _write_json(meta_path, {
        "schema_version": SCHEMA_VERSION,
        "command": "ablation",
        "family": config.family,
        "nfe": N,
        "cells": len(specs),
        "fd_monotonic": fd_mono,
        "noise_floor": floor,
        "n_samples": config.n_samples,
        "base_seed": config.base_seed,
    })
    _write_timing(out_dir / "ablation.timing.json", time.perf_counter() - start)
    return [cells_path, summary_path, slopes_path, meta_path]


def cmd_ssc(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    """Schedule sensitivity at the largest configured budget.

    Penalties whose magnitude sits below twice the empirical noise floor
    (the same indistinguishability bound a re-seeded control satisfies)
    are treated as zero before the ratio and flagged; raw values are
    reported alongside.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    denoiser = config.build_denoiser()
    ref = reference_fit(config)
    N = max(config.nfe_list)
    seed = derive_seed(config.base_seed, "batch", N)
    fd_mono = _run_fd(config, denoiser, config.build_schedule(N, kind="monotonic"), ref, seed)
    fd_sr = _run_fd(config, denoiser, config.build_schedule(N, kind="single_reheat"), ref, seed)
    fd_do = _run_fd(config, denoiser, config.build_schedule(N, kind="damped_osc"), ref, seed)
    floor = noise_floor(config, denoiser, N, ref)
    raw_do = fd_do - fd_mono
    raw_sr = fd_sr - fd_mono
    floored_do = 0.0 if abs(raw_do) < 2.0 * floor else raw_do
    floored_sr = 0.0 if abs(raw_sr) < 2.0 * floor else raw_sr
    report = ssc(floored_do, floored_sr, nfe=N, noise_floor=floor)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "ssc",
        "family": config.family,
        "model_kind": config.model_kind,
        "nfe": N,
        "n_samples": config.n_samples,
        "base_seed": config.base_seed,
        "fd_monotonic": fd_mono,
        "fd_single_reheat": fd_sr,
        "fd_damped_osc": fd_do,
        "raw_delta_sr": raw_sr,
        "raw_delta_do": raw_do,
        "delta_sr_below_floor": abs(raw_sr) < 2.0 * floor,
        "delta_do_below_floor": abs(raw_do) < 2.0 * floor,
        "ssc": report.to_dict(),
    }
    path = out_dir / "ssc_report.json"
    _write_json(path, payload)
    _write_timing(out_dir / "ssc.timing.json", time.perf_counter() - start)
    return [path]


def cmd_pareto(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    """Quality/budget sweep for the four standard method variants."""
    if config.family != "ddpm":
        raise ConfigError("the pareto sweep varies eta and is defined for the ddpm family")
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    denoiser = config.build_denoiser()
    ref = reference_fit(config)
    rows = []
    for N in config.nfe_list:
        seed = derive_seed(config.base_seed, "batch", N)
        for method, kind, eta in PARETO_METHODS:
            sched = config.build_schedule(N, kind=kind)
            fd = _run_fd(config, denoiser, sched, ref, seed, eta=eta)
            reheats = int(reheat_indices(sched).size)
            rows.append(f"{method},{N},{N},{reheats},{fd!r}")
        if config.pareto_adaptive:
            cal = calibrate_ar_threshold(denoiser, config.build_process(), N=config.n_cal,
                                         k_cal=config.k_cal, percentile=config.percentile,
                                         seed=derive_seed(config.base_seed, "calibration"))
            sampler = SamplerConfig(eta=0.0, clip=config.clip, base_seed=seed)
            run = run_adaptive(config.build_schedule(N, kind="monotonic"), denoiser,
                               cal.threshold, config.delta_tau, config.max_reheats,
                               sampler, n_samples=config.n_samples)
            fd = frechet_distance(fit_gaussian(run.samples), ref)
            rows.append(f"adaptive,{N},{run.nfe_used},{run.reheats_fired},{fd!r}")
    path = out_dir / "pareto.csv"
    _write_csv(path, "method,nfe,nfe_used,reheat_steps,fd", rows)
    _write_timing(out_dir / "pareto.timing.json", time.perf_counter() - start)
    return [path]


def cmd_calibrate(config: ExperimentConfig, out_dir: Path) -> list[Path]:
    """Adaptive-reheat threshold calibration report."""
    if config.family != "ddpm":
        raise ConfigError("adaptive calibration is defined for the ddpm family")
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    denoiser = config.build_denoiser()
    cal = calibrate_ar_threshold(denoiser, config.build_process(), N=config.n_cal,
                                 k_cal=config.k_cal, percentile=config.percentile,
                                 seed=derive_seed(config.base_seed, "calibration"))
    path = out_dir / "calibration.json"
    _write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "command": "calibrate",
        "family": config.family,
        "threshold": cal.threshold,
        "calibration_nfe": cal.calibration_nfe,
        "k_cal": cal.k_cal,
        "n": cal.n,
        "percentile": cal.percentile,
        "base_seed": config.base_seed,
    })
    _write_timing(out_dir / "calibration.timing.json", time.perf_counter() - start)
    return [path]
