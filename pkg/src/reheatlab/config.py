"""Experiment configuration: flat key/value sections, strictly parsed.

One section per subsystem.  Every key has a default, so an empty file is
a valid experiment; unknown sections or keys are hard errors to prevent
silent hyperparameter drift.  Mixture specs serialize to the same format
(``[model]`` section) for round-tripping.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields

import numpy as np

from .denoisers import Denoiser, GmmSpec, perturb
from .processes import (
    AlphaBarBuffer,
    EdmRange,
    FlowRange,
    ParameterError,
    build_linear_alphabar,
)
from .schedules import Schedule, base_monotonic, damped_osc, sawtooth, single_reheat


class ConfigError(ParameterError):
    """Malformed, unknown, or out-of-range configuration entry."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_vectors(text: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_parse_float_list(row) for row in text.split(";") if row.strip())


def _parse_clip(text: str):
    lowered = text.strip().lower()
    if lowered in ("none", "off", ""):
        return None
    return float(text)


@dataclass
class ExperimentConfig:
    """All knobs of one experiment, defaulted to the standard table."""

    # [model]
    model_kind: str = "bayes"            # bayes | perturbed
    d: int = 2
    layout: str = "ring"                 # ring | explicit
    components: int = 8
    radius: float = 12.0
    std: float = 1.0
    weights: tuple = ()
    means: tuple = ()
    stds: tuple = ()
    eps_amp: float = 8.0
    eps_center: float = 0.997
    eps_width: float = 0.005
    field_seed: int = 7

    # [process]
    family: str = "ddpm"
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    rho: float = 7.0
    t_min: float = 0.001
    t_max: float = 0.999

    # [schedule]
    schedule_kind: str = "monotonic"
    t_reheat: float = 0.4
    delta: float = 0.15
    period: int = 25
    delta_st: float = 0.08
    amplitude: float = 0.2
    damping: float = 2.5
    frequency: float = 4.0

    # [sampler]
    eta: float = 0.0
    clip: float | None = None

    # [adaptive]
    delta_tau: int = 50
    max_reheats: int = 15
    percentile: float = 80.0
    k_cal: int = 100
    n_cal: int = 50

    # [run]
    nfe_list: tuple = (10, 25, 50, 100)
    n_samples: int = 16384
    n_reference: int = 16384
    base_seed: int = 0
    noise_floor_runs: int = 10
    ablation_nfe: int = 25
    t_reheat_grid: tuple = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    delta_grid: tuple = (0.05, 0.10, 0.15, 0.20, 0.30, 0.50)
    pareto_adaptive: bool = False

    def build_process(self):
        if self.family == "ddpm":
            return build_linear_alphabar(self.T, self.beta_start, self.beta_end)
        if self.family == "edm":
            return EdmRange(sigma_min=self.sigma_min, sigma_max=self.sigma_max, rho=self.rho)
        if self.family == "fm":
            return FlowRange(t_min=self.t_min, t_max=self.t_max)
        raise ConfigError(f"unknown family {self.family!r}")

    def build_gmm(self) -> GmmSpec:
        if self.layout == "ring":
            return GmmSpec.ring(d=self.d, components=self.components,
                                radius=self.radius, std=self.std)
        if self.layout == "explicit":
            if not (self.weights and self.means and self.stds):
                raise ConfigError("explicit layout requires weights, means, and stds")
            return GmmSpec(means=np.array(self.means, dtype=np.float64),
                           stds=np.array(self.stds, dtype=np.float64),
                           weights=np.array(self.weights, dtype=np.float64))
        raise ConfigError(f"unknown layout {self.layout!r}")

    def build_denoiser(self) -> Denoiser:
        base = Denoiser(family=self.family, gmm=self.build_gmm())
        if self.model_kind == "bayes":
            return base
        if self.model_kind == "perturbed":
            return perturb(base, self.eps_amp, self.eps_center, self.eps_width, self.field_seed)
        raise ConfigError(f"unknown model kind {self.model_kind!r}")

    def build_schedule(self, N: int, kind: str | None = None, t_reheat: float | None = None,
                       delta: float | None = None) -> Schedule:
        kind = self.schedule_kind if kind is None else kind
        process = self.build_process()
        base = base_monotonic(self.family, process, N)
        if kind == "monotonic":
            return base
        if kind == "single_reheat":
            return single_reheat(base,
                                 self.t_reheat if t_reheat is None else t_reheat,
                                 self.delta if delta is None else delta)
        if kind == "sawtooth":
            return sawtooth(base, self.period, self.delta_st)
        if kind == "damped_osc":
            return damped_osc(process, N, self.amplitude, self.damping, self.frequency)
        raise ConfigError(f"{kind!r} is not a constructed schedule kind")


_SCHEMA = {
    "model": {
        "kind": ("model_kind", str),
        "d": ("d", int),
        "layout": ("layout", str),
        "components": ("components", int),
        "radius": ("radius", float),
        "std": ("std", float),
        "weights": ("weights", _parse_float_list),
        "means": ("means", _parse_vectors),
        "stds": ("stds", _parse_float_list),
        "eps_amp": ("eps_amp", float),
        "eps_center": ("eps_center", float),
        "eps_width": ("eps_width", float),
        "field_seed": ("field_seed", int),
    },
    "process": {
        "family": ("family", str),
        "t": ("T", int),
        "beta_start": ("beta_start", float),
        "beta_end": ("beta_end", float),
        "sigma_min": ("sigma_min", float),
        "sigma_max": ("sigma_max", float),
        "rho": ("rho", float),
        "t_min": ("t_min", float),
        "t_max": ("t_max", float),
    },
    "schedule": {
        "kind": ("schedule_kind", str),
        "t_reheat": ("t_reheat", float),
        "delta": ("delta", float),
        "period": ("period", int),
        "delta_st": ("delta_st", float),
        "amplitude": ("amplitude", float),
        "damping": ("damping", float),
        "frequency": ("frequency", float),
    },
    "sampler": {
        "eta": ("eta", float),
        "clip": ("clip", _parse_clip),
    },
    "adaptive": {
        "delta_tau": ("delta_tau", int),
        "max_reheats": ("max_reheats", int),
        "percentile": ("percentile", float),
        "k_cal": ("k_cal", int),
        "n_cal": ("n_cal", int),
    },
    "run": {
        "nfe_list": ("nfe_list", _parse_int_list),
        "n_samples": ("n_samples", int),
        "n_reference": ("n_reference", int),
        "base_seed": ("base_seed", int),
        "noise_floor_runs": ("noise_floor_runs", int),
        "ablation_nfe": ("ablation_nfe", int),
        "t_reheat_grid": ("t_reheat_grid", _parse_float_list),
        "delta_grid": ("delta_grid", _parse_float_list),
        "pareto_adaptive": ("pareto_adaptive", _parse_bool),
    },
}


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file (all sections optional) and apply CLI overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                attr, parse = _SCHEMA[section][key]
                try:
                    setattr(cfg, attr, parse(raw))
                except ConfigError:
                    raise
                except ValueError as exc:
                    raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc
    for attr, value in (overrides or {}).items():
        if not any(attr == name for name in (f.name for f in fields(ExperimentConfig))):
            raise ConfigError(f"unknown override {attr!r}")
        setattr(cfg, attr, value)
    return cfg


def gmm_to_config_text(gmm: GmmSpec) -> str:
    """Serialize a mixture as an explicit-layout ``[model]`` block."""
    means = "; ".join(",".join(repr(float(v)) for v in row) for row in gmm.means)
    stds = ",".join(repr(float(v)) for v in gmm.stds)
    weights = ",".join(repr(float(v)) for v in gmm.weights)
    return (
        "[model]\n"
        "layout = explicit\n"
        f"d = {gmm.d}\n"
        f"weights = {weights}\n"
        f"means = {means}\n"
        f"stds = {stds}\n"
    )
