"""Sample-quality and schedule-sensitivity statistics.

Quality is measured as the Fréchet distance between moment-matched
Gaussians fitted to raw sample coordinates,

    FD = sqrt( ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}) ),

the low-dimensional analogue of feature-space Fréchet metrics.  The
matrix square root is taken through the symmetrised product
``sqrt(S_a) S_b sqrt(S_a)`` with tiny negative eigenvalues clamped.

The schedule sensitivity coefficient is the clipped penalty ratio

    SSC = [penalty_osc]_+ / [penalty_single]_+

with the convention 0/0 = 0; a strictly positive numerator over a zero
denominator is reported as an infinite sentinel, never silently divided.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .processes import ParameterError


@dataclass(frozen=True)
class GaussianFit:
    """Sample mean and unbiased covariance of a batch."""

    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ParameterError(f"covariance must be ({d}, {d}), got {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ParameterError("covariance must be symmetric within 1e-10")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(samples) -> GaussianFit:
    """Moment fit; requires more samples than dimensions."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n <= d:
        raise ParameterError(f"insufficient data: need n > d, got n={n}, d={d}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    return GaussianFit(mean=mean, cov=cov, n=n)


def _clamped_eigvals(mat: np.ndarray, clamp_rel: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition with tiny negative eigenvalues clamped to zero.

    Negatives beyond ``clamp_rel`` of the largest eigenvalue indicate a
    genuinely indefinite input and raise.
    """
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    tol = clamp_rel * max(float(w.max()), 0.0)
    if np.any(w < -tol):
        raise ParameterError("matrix has a significantly negative eigenvalue")
    return np.clip(w, 0.0, None), v


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    w, v = _clamped_eigvals(mat)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    """Fréchet distance between two Gaussian fits of equal dimension."""
    if a.d != b.d:
        raise ParameterError(f"dimension mismatch: {a.d} vs {b.d}")
    sa = _sqrtm_psd(a.cov)
    w, _ = _clamped_eigvals(sa @ b.cov @ sa)
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    trace_term = float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sum(np.sqrt(w)))
    return math.sqrt(max(mean_term + trace_term, 0.0))


def penalty(fd_variant: float, fd_monotonic: float) -> float:
    """Quality penalty of a schedule variant relative to its monotonic control."""
    if not (math.isfinite(fd_variant) and math.isfinite(fd_monotonic)):
        raise ParameterError("penalty requires finite distances")
    return fd_variant - fd_monotonic


@dataclass(frozen=True)
class SscReport:
    """Clipped penalty ratio plus the measurement context."""

    delta_do: float
    delta_sr: float
    ssc: float
    nfe: int | None = None
    noise_floor: float | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "delta_do": self.delta_do,
            "delta_sr": self.delta_sr,
            "ssc": "inf" if math.isinf(self.ssc) else self.ssc,
            "nfe": self.nfe,
            "noise_floor": self.noise_floor,
            "degenerate": self.degenerate,
        }


def ssc(delta_do: float, delta_sr: float, nfe: int | None = None,
        noise_floor: float | None = None) -> SscReport:
    """Schedule sensitivity coefficient from the two default penalties.

    Negative penalties clip to zero.  0/0 -> 0; a positive numerator over
    a zero denominator is reported as an infinite sentinel with the
    ``degenerate`` flag set (the ratio is undefined in that case).
    """
    p_do = max(float(delta_do), 0.0)
    p_sr = max(float(delta_sr), 0.0)
    if p_do == 0.0:
        value, degenerate = 0.0, False
    elif p_sr == 0.0:
        value, degenerate = math.inf, True
        warnings.warn("SSC numerator positive but denominator clipped to zero; reporting inf sentinel")
    else:
        value, degenerate = p_do / p_sr, False
    return SscReport(delta_do=float(delta_do), delta_sr=float(delta_sr), ssc=value,
                     nfe=nfe, noise_floor=noise_floor, degenerate=degenerate)


@dataclass(frozen=True)
class PowerlawFit:
    """Penalty ~ NFE^(-b) fitted on log-log axes."""

    b: float
    log_amplitude: float
    r2: float
    n_used: int
    n_excluded: int


def powerlaw_fit(nfe_list, penalty_list) -> PowerlawFit:
    """Least-squares slope of log-penalty on log-NFE; returns b = -slope.

    Nonpositive penalties have no logarithm and are excluded with a
    warning; at least two positive points must remain.
    """
    nfe = np.asarray(nfe_list, dtype=np.float64)
    pen = np.asarray(penalty_list, dtype=np.float64)
    if nfe.shape != pen.shape or nfe.ndim != 1:
        raise ParameterError("nfe_list and penalty_list must be equal-length 1-D sequences")
    keep = pen > 0.0
    n_excluded = int(np.count_nonzero(~keep))
    if n_excluded:
        warnings.warn(f"powerlaw_fit: excluded {n_excluded} nonpositive penalties (log undefined)")
    if np.count_nonzero(keep) < 2:
        raise ParameterError("need at least two positive penalties to fit a power law")
    lx = np.log(nfe[keep])
    ly = np.log(pen[keep])
    slope, intercept, r2 = _ols(lx, ly)
    return PowerlawFit(b=-slope, log_amplitude=intercept, r2=r2,
                       n_used=int(np.count_nonzero(keep)), n_excluded=n_excluded)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if np.ptp(x) == 0.0:
        raise ParameterError("degenerate fit: all abscissa values equal")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(np.sum(dx * dx))
    slope = float(np.sum(dx * dy)) / sxx
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    ss_tot = float(np.sum(dy * dy))
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    slope: float
    r2: float


def linear_slope_fit(delta_list, penalty_list) -> LinearFit:
    """Ordinary least squares of penalty on reheat magnitude."""
    x = np.asarray(delta_list, dtype=np.float64)
    y = np.asarray(penalty_list, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ParameterError("need at least three (delta, penalty) points")
    slope, intercept, r2 = _ols(x, y)
    return LinearFit(intercept=intercept, slope=slope, r2=r2)


def paired_stats(list_a, list_b) -> dict:
    """Correlations and offset statistics of two matched measurement lists.

    Pearson on raw values, Spearman on ranks, mean and sample standard
    deviation of (b - a).
    """
    a = np.asarray(list_a, dtype=np.float64)
    b = np.asarray(list_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ParameterError("paired_stats requires equal-length 1-D lists of size >= 2")
    diff = b - a
    return {
        "pearson": float(stats.pearsonr(a, b).statistic),
        "spearman": float(stats.spearmanr(a, b).statistic),
        "mean_offset": float(diff.mean()),
        "offset_std": float(diff.std(ddof=1)),
    }
