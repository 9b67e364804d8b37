"""Ground-truth generative models and their Bayes-optimal denoisers.

The data distribution is an isotropic Gaussian mixture, for which the
posterior mean of the clean sample given a noisy observation is closed
form in every parameterisation:

* ddpm (variance preserving), level = abar:
    x | k ~ N(sqrt(abar) m_k, (abar s_k^2 + 1 - abar) I)
    E[x0 | x, k] = m_k + sqrt(abar) s_k^2 / v_k * (x - sqrt(abar) m_k)
* edm (variance exploding), level = sigma:
    x | k ~ N(m_k, (s_k^2 + sigma^2) I)
    E[x0 | x, k] = m_k + s_k^2 / v_k * (x - m_k)
* fm (linear interpolation), level = t, output is the velocity
    E[x0 - eps | x]:
    x | k ~ N(t m_k, (t^2 s_k^2 + (1-t)^2) I)
    E[x0 - eps | x, k] = m_k + (t s_k^2 - (1-t)) / v_k * (x - t m_k)

Component responsibilities are combined in log space (log-sum-exp) so
the posterior survives vanishing noise levels.  A controlled departure
from Bayes optimality is realised by adding a fixed smooth vector field
gated by a Gaussian bump in sigma_hat; the bump amplitude directly sets
the root-mean-square denoiser error at the bump center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .processes import DomainError, ParameterError
from .rng import derive_seed, generator

_FIELD_WAVES = 8
_FIELD_WAVE_SCALE = 1.5
_FIELD_NORM_DRAWS = 16384


@dataclass(frozen=True)
class GmmSpec:
    """Isotropic Gaussian mixture in R^d, 2 <= d <= 8.

    ``means`` is (K, d), ``stds`` and ``weights`` are (K,).  Weights must
    sum to one within 1e-12.
    """

    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        stds = np.asarray(self.stds, dtype=np.float64).ravel()
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        K, d = means.shape
        if not 2 <= d <= 8:
            raise ParameterError(f"dimension must be in [2, 8], got {d}")
        if stds.shape != (K,) or weights.shape != (K,):
            raise ParameterError("stds and weights must have one entry per component")
        if np.any(stds <= 0.0):
            raise ParameterError("component stds must be positive")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ParameterError("weights must be nonnegative and sum to 1 within 1e-12")
        for arr in (means, stds, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        object.__setattr__(self, "weights", weights)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @property
    def K(self) -> int:
        return self.means.shape[0]

    @classmethod
    def ring(cls, d: int = 2, components: int = 8, radius: float = 1.0, std: float = 0.15) -> "GmmSpec":
        """Equal-weight components on a circle in the first two coordinates."""
        angles = 2.0 * np.pi * np.arange(components) / components
        means = np.zeros((components, d))
        means[:, 0] = radius * np.cos(angles)
        means[:, 1] = radius * np.sin(angles)
        return cls(means=means, stds=np.full(components, std), weights=np.full(components, 1.0 / components))

    @classmethod
    def single(cls, mean, std: float = 1.0) -> "GmmSpec":
        mean = np.asarray(mean, dtype=np.float64)
        return cls(means=mean[None, :], stds=np.array([std]), weights=np.array([1.0]))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(self.K, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.d))
        return self.means[comps] + self.stds[comps, None] * eps


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _level_array(level, n: int) -> np.ndarray:
    lv = np.asarray(level, dtype=np.float64)
    if lv.ndim == 0:
        return np.full(n, float(lv))
    if lv.shape != (n,):
        raise ParameterError(f"level must be scalar or shape ({n},), got {lv.shape}")
    return lv


def _mixture_posterior(x, gmm: GmmSpec, mean_scale, var_k, coef_k) -> np.ndarray:
    """Responsibility-weighted combination of per-component affine maps.

    Returns sum_k r_k(x) * (m_k + coef_k * (x - mean_scale * m_k)) with
    r_k computed by log-sum-exp over the marginal component likelihoods
    N(x; mean_scale * m_k, var_k I).
    """
    n, d = x.shape
    centers = mean_scale[:, None, None] * gmm.means[None, :, :]  # (n, K, d)
    diff = x[:, None, :] - centers
    sq = np.sum(diff * diff, axis=2)  # (n, K)
    log_resp = np.log(gmm.weights)[None, :] - 0.5 * (sq / var_k + d * np.log(2.0 * np.pi * var_k))
    log_resp -= log_resp.max(axis=1, keepdims=True)
    resp = np.exp(log_resp)
    resp /= resp.sum(axis=1, keepdims=True)
    comp_out = gmm.means[None, :, :] + coef_k[:, :, None] * diff  # (n, K, d)
    return np.sum(resp[:, :, None] * comp_out, axis=1)


def bayes_vp(x, alphabar, gmm: GmmSpec) -> np.ndarray:
    """Posterior mean of x0 under x = sqrt(abar) x0 + sqrt(1-abar) eps."""
    xb, squeeze = _as_batch(x)
    a = _level_array(alphabar, xb.shape[0])
    if np.any(a <= 0.0) or np.any(a > 1.0):
        raise DomainError("alphabar must lie in (0, 1]")
    s2 = gmm.stds**2
    v = a[:, None] * s2[None, :] + (1.0 - a)[:, None]  # (n, K)
    coef = np.sqrt(a)[:, None] * s2[None, :] / v
    out = _mixture_posterior(xb, gmm, np.sqrt(a), v, coef)
    return out[0] if squeeze else out


def bayes_ve(x, sigma, gmm: GmmSpec) -> np.ndarray:
    """Posterior mean of x0 under x = x0 + sigma eps."""
    xb, squeeze = _as_batch(x)
    s = _level_array(sigma, xb.shape[0])
    if np.any(s < 0.0):
        raise DomainError("sigma must be nonnegative")
    s2 = gmm.stds**2
    v = s2[None, :] + (s**2)[:, None]
    coef = s2[None, :] / v
    out = _mixture_posterior(xb, gmm, np.ones_like(s), v, coef)
    return out[0] if squeeze else out


def bayes_fm_velocity(x, t, gmm: GmmSpec) -> np.ndarray:
    """Posterior mean velocity E[x0 - eps | x] under x = (1-t) eps + t x0."""
    xb, squeeze = _as_batch(x)
    tv = _level_array(t, xb.shape[0])
    if np.any(tv <= 0.0) or np.any(tv >= 1.0):
        raise DomainError("t must lie strictly inside (0, 1)")
    s2 = gmm.stds**2
    v = (tv**2)[:, None] * s2[None, :] + ((1.0 - tv) ** 2)[:, None]
    coef = (tv[:, None] * s2[None, :] - (1.0 - tv)[:, None]) / v
    out = _mixture_posterior(xb, gmm, tv, v, coef)
    return out[0] if squeeze else out


@dataclass(frozen=True)
class Perturbation:
    """Smooth unit-RMS vector field gated by a Gaussian bump in sigma_hat.

    The field is a fixed sum of 8 seeded random-direction sinusoids of x,
    normalised to unit root-mean-square norm over draws from the forward
    marginal at the bump center, so the injected denoiser error at the
    center equals ``eps_amp``.
    """

    eps_amp: float
    center: float
    width: float
    field_seed: int
    waves: np.ndarray
    phases: np.ndarray
    directions: np.ndarray
    norm: float

    def gate(self, sigma_hat) -> np.ndarray:
        sh = np.asarray(sigma_hat, dtype=np.float64)
        return np.exp(-((sh - self.center) ** 2) / (2.0 * self.width**2))

    def field(self, x: np.ndarray) -> np.ndarray:
        phase = x @ self.waves.T + self.phases[None, :]  # (n, J)
        return (np.sin(phase) @ self.directions) / self.norm


@dataclass(frozen=True)
class Denoiser:
    """Callable (x, level) -> prediction for one sampler family.

    ``level`` is family-native: abar for ddpm, sigma for edm, t for fm;
    scalar or one value per row of x.  Output is the predicted clean
    sample for ddpm/edm and the velocity for fm.  Pure function of its
    inputs; safe for concurrent evaluation.
    """

    family: str
    gmm: GmmSpec
    perturbation: Perturbation | None = None

    def __post_init__(self):
        if self.family not in ("ddpm", "edm", "fm"):
            raise ParameterError(f"unknown family {self.family!r}")

    @property
    def kind(self) -> str:
        if self.perturbation is not None:
            return "perturbed"
        return {"ddpm": "bayes-vp", "edm": "bayes-ve", "fm": "bayes-fm-velocity"}[self.family]

    def bayes_base(self) -> "Denoiser":
        if self.perturbation is None:
            return self
        return Denoiser(family=self.family, gmm=self.gmm)

    def __call__(self, x, level) -> np.ndarray:
        if self.family == "ddpm":
            out = bayes_vp(x, level, self.gmm)
        elif self.family == "edm":
            out = bayes_ve(x, level, self.gmm)
        else:
            out = bayes_fm_velocity(x, level, self.gmm)
        p = self.perturbation
        if p is None or p.eps_amp == 0.0:
            return out
        xb, squeeze = _as_batch(x)
        lv = _level_array(level, xb.shape[0])
        bump = p.eps_amp * p.gate(self.sigma_hat_of(lv))
        extra = bump[:, None] * p.field(xb)
        return out + (extra[0] if squeeze else extra)

    def predict_x0(self, x, level) -> np.ndarray:
        """Predicted clean sample; converts the fm velocity via x + (1-t) v."""
        out = self(x, level)
        if self.family != "fm":
            return out
        xb, squeeze = _as_batch(x)
        tv = _level_array(level, xb.shape[0])
        x0 = xb + (1.0 - tv)[:, None] * (out if not squeeze else out[None, :])
        return x0[0] if squeeze else x0

    def sigma_hat_of(self, level):
        lv = np.asarray(level, dtype=np.float64)
        if self.family == "ddpm":
            return np.sqrt(1.0 - lv)
        if self.family == "edm":
            return lv
        return 1.0 - lv

    def level_of_sigma_hat(self, sigma_hat):
        sh = np.asarray(sigma_hat, dtype=np.float64)
        if self.family == "ddpm":
            if np.any(sh > 1.0):
                raise DomainError("ddpm sigma_hat must lie in [0, 1]")
            return 1.0 - sh**2
        if self.family == "edm":
            return sh
        if np.any(sh <= 0.0) or np.any(sh >= 1.0):
            raise DomainError("fm sigma_hat must lie strictly inside (0, 1)")
        return 1.0 - sh

    def sample_marginal(self, sigma_hat: float, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw x from the family's forward marginal at noise level sigma_hat."""
        x0 = self.gmm.sample(n, rng)
        eps = rng.standard_normal((n, self.gmm.d))
        sh = float(sigma_hat)
        if self.family == "ddpm":
            if sh > 1.0:
                raise DomainError("ddpm sigma_hat must lie in [0, 1]")
            return math.sqrt(1.0 - sh**2) * x0 + sh * eps
        if self.family == "edm":
            return x0 + sh * eps
        return (1.0 - sh) * x0 + sh * eps


def perturb(base: Denoiser, eps_amp: float, center: float, width: float, field_seed: int) -> Denoiser:
    """Attach a controlled error field to a Bayes denoiser.

    The returned denoiser is ``D*(x, level) + eps_amp * g(sigma_hat) * u(x)``
    with g a Gaussian bump centered at ``center`` (std ``width``) and u a
    fixed unit-RMS field, deterministic given ``field_seed``.
    """
    if base.perturbation is not None:
        raise ParameterError("base denoiser is already perturbed")
    if eps_amp < 0.0:
        raise ParameterError("eps_amp must be nonnegative")
    if width <= 0.0:
        raise ParameterError("width must be positive")
    rng = generator(derive_seed("perturbation-field", field_seed))
    d = base.gmm.d
    waves = _FIELD_WAVE_SCALE * rng.standard_normal((_FIELD_WAVES, d))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=_FIELD_WAVES)
    directions = rng.standard_normal((_FIELD_WAVES, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    probe = Perturbation(
        eps_amp=1.0, center=center, width=width, field_seed=field_seed,
        waves=waves, phases=phases, directions=directions, norm=1.0,
    )
    xs = base.sample_marginal(center, _FIELD_NORM_DRAWS, rng)
    norm = float(np.sqrt(np.mean(np.sum(probe.field(xs) ** 2, axis=1))))
    if norm == 0.0:
        norm = 1.0
    pert = Perturbation(
        eps_amp=float(eps_amp), center=float(center), width=float(width), field_seed=int(field_seed),
        waves=waves, phases=phases, directions=directions, norm=norm,
    )
    return Denoiser(family=base.family, gmm=base.gmm, perturbation=pert)


def estimate_eps(denoiser: Denoiser, gmm: GmmSpec, sigma_hat: float, n: int, seed: int = 0) -> tuple[float, float]:
    """Root-mean-square gap to the Bayes denoiser at one noise level.

    Monte-Carlo average of ||D - D*||^2 over ``n`` forward-process draws;
    returns (rms, standard error of the rms via the delta method).
    """
    if n < 1000:
        raise ParameterError("need at least 10^3 draws")
    rng = generator(derive_seed("estimate-eps", seed))
    probe = Denoiser(family=denoiser.family, gmm=gmm)
    x = probe.sample_marginal(sigma_hat, n, rng)
    level = denoiser.level_of_sigma_hat(sigma_hat)
    diff = denoiser(x, level) - denoiser.bayes_base()(x, level)
    sq = np.sum(diff * diff, axis=1)
    m2 = float(np.mean(sq))
    if m2 == 0.0:
        return 0.0, 0.0
    se_m2 = float(np.std(sq, ddof=1) / math.sqrt(n))
    rms = math.sqrt(m2)
    return rms, se_m2 / (2.0 * rms)


def estimate_lipschitz(denoiser: Denoiser, sigma_hat: float, n_pairs: int, radius: float, seed: int = 0) -> float:
    """Empirical lower bound on the local Lipschitz constant at sigma_hat.

    Max difference quotient over ``n_pairs`` pairs (x, x + radius*v) with
    x from the forward marginal and v uniform on the sphere.  A sampled
    maximum, hence a lower bound on the true local constant.
    """
    if n_pairs < 1000:
        raise ParameterError("need at least 10^3 pairs")
    if radius <= 0.0:
        raise ParameterError("radius must be positive")
    rng = generator(derive_seed("estimate-lipschitz", seed))
    x = denoiser.sample_marginal(sigma_hat, n_pairs, rng)
    v = rng.standard_normal((n_pairs, denoiser.gmm.d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    level = denoiser.level_of_sigma_hat(sigma_hat)
    delta = denoiser(x + radius * v, level) - denoiser(x, level)
    return float(np.max(np.linalg.norm(delta, axis=1) / radius))
