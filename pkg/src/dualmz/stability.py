"""Long-term statistics: moving averages, time bins, tide residuals and
overlapping Allan deviation."""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .phases import LaserConfig, BraggOrder, DualTiming, SequenceTiming, scale_factor
from .series import GravitySeries, PhaseSeries
from .tides import TideModel, TideConstituent, tide_at, default_tide_model

__all__ = [
    "TideModel", "TideConstituent", "tide_at", "default_tide_model",
    "AllanCurve", "WindowTooLarge", "SeriesTooShort",
    "moving_average", "bin_by_time", "BinnedSeries",
    "residuals_vs_tide", "ResidualReport",
    "allan_deviation", "default_taus", "compact_series",
    "closed_mz_scale_comparison", "ScaleComparison",
]

log = logging.getLogger(__name__)


class WindowTooLarge(Exception):
    pass


class SeriesTooShort(Exception):
    """Not enough samples for at least two clusters at the largest tau."""


@dataclass(frozen=True)
class AllanCurve:
    taus: np.ndarray  # s, increasing
    adev: np.ndarray  # same units as the input series
    n_samples_per_tau: np.ndarray  # averaging lengths m


@dataclass(frozen=True)
class BinnedSeries:
    bin_centers: np.ndarray  # s
    means: np.ndarray
    standard_errors: np.ndarray  # nan for singleton bins
    counts: np.ndarray


@dataclass(frozen=True)
class ResidualReport:
    timestamps: np.ndarray  # s
    residuals_ugal: np.ndarray
    se_ugal: float
    other_se_ugal: float | None = None
    se_ratio: float | None = None  # other / primary


def _series_arrays(series):
    """(timestamps, values, quality) with gravity expressed in uGal."""
    if isinstance(series, GravitySeries):
        return series.timestamps, series.g_ugal, series.quality
    if isinstance(series, PhaseSeries):
        return series.timestamps, series.values, series.quality
    if isinstance(series, BinnedSeries):
        q = np.ones(series.bin_centers.shape, dtype=bool)
        return series.bin_centers, series.means, q
    raise TypeError(f"unsupported series type {type(series).__name__}")


def moving_average(series, window: int):
    """Centered moving mean over quality-true points.

    Output length is input length - window + 1; window positions containing
    no good point are masked.  Returns the same series type as the input.
    """
    t, v, q = _series_arrays(series)
    n = t.size
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > n:
        raise WindowTooLarge(f"window {window} exceeds series length {n}")
    if isinstance(series, PhaseSeries) and series.wrapped:
        raise ValueError("moving_average requires an unwrapped phase series")
    val_cum = np.concatenate([[0.0], np.cumsum(np.where(q, v, 0.0))])
    cnt_cum = np.concatenate([[0], np.cumsum(q.astype(int))])
    sums = val_cum[window:] - val_cum[:-window]
    counts = cnt_cum[window:] - cnt_cum[:-window]
    good = counts > 0
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=good)
    centers = 0.5 * (t[: n - window + 1] + t[window - 1:])
    if isinstance(series, GravitySeries):
        return GravitySeries(centers, means * 1e-8, series.source, good)
    return PhaseSeries(centers, means, series.source, good, wrapped=False)


def bin_by_time(series, bin_width: float) -> BinnedSeries:
    """Per-bin mean and standard error of the mean; empty bins are omitted.

    Singleton bins get a nan standard error.
    """
    if bin_width <= 0.0:
        raise ValueError("bin_width must be > 0")
    t, v, q = _series_arrays(series)
    t, v = t[q], v[q]
    if t.size == 0:
        return BinnedSeries(*(np.array([]) for _ in range(4)))
    idx = np.floor((t - t[0]) / bin_width).astype(int)
    centers, means, errors, counts = [], [], [], []
    for b in np.unique(idx):
        sel = idx == b
        n = int(sel.sum())
        vals = v[sel]
        centers.append(t[0] + (b + 0.5) * bin_width)
        means.append(vals.mean())
        errors.append(vals.std(ddof=1) / math.sqrt(n) if n > 1 else math.nan)
        counts.append(n)
    return BinnedSeries(
        np.array(centers), np.array(means), np.array(errors),
        np.array(counts, dtype=int),
    )


def residuals_vs_tide(series, model: TideModel, other=None,
                      remove_mean: bool = True) -> ResidualReport:
    """Series minus the tide model, with the residual spread as summary.

    A constant instrument offset is removed by default.  When ``other`` is
    given its residual spread and the other/primary ratio are included, which
    is how paired pipelines are compared.
    """
    def _residuals(s):
        t, v, q = _series_arrays(s)
        t, v = t[q], v[q]
        resid = v - tide_at(model, t)
        if remove_mean and resid.size:
            resid = resid - resid.mean()
        return t, resid

    t, resid = _residuals(series)
    se = float(resid.std(ddof=1)) if resid.size > 1 else 0.0
    other_se = ratio = None
    if other is not None:
        _, other_resid = _residuals(other)
        other_se = float(other_resid.std(ddof=1)) if other_resid.size > 1 else 0.0
        ratio = other_se / se if se > 0.0 else math.inf
    return ResidualReport(t, resid, se, other_se, ratio)


def compact_series(series):
    """Drop masked points and re-space timestamps uniformly for ADEV.

    Simple documented bias: surviving points are treated as adjacent shots.
    Warns when more than 5% of the series was dropped.
    """
    t, v, q = _series_arrays(series)
    dropped = int(np.count_nonzero(~q))
    if dropped == 0:
        return series
    if dropped > 0.05 * t.size:
        log.warning(
            "compact_series: %.1f%% of points dropped; ADEV taus are biased",
            100.0 * dropped / t.size,
        )
    step = float(np.median(np.diff(t))) if t.size > 1 else 1.0
    kept = np.flatnonzero(q)
    new_t = t[0] + step * np.arange(kept.size)
    if isinstance(series, GravitySeries):
        return GravitySeries(new_t, series.g_values[kept], series.source,
                             np.ones(kept.size, dtype=bool))
    return PhaseSeries(new_t, v[kept], series.source,
                       np.ones(kept.size, dtype=bool), wrapped=series.wrapped)


def default_taus(n_samples: int, tau0: float, points_per_decade: int = 8):
    """Log-spaced averaging times up to half the series length."""
    m_max = n_samples // 2
    if m_max < 1:
        raise SeriesTooShort("need at least 2 samples")
    grid = np.geomspace(1, m_max, max(2, int(points_per_decade * math.log10(m_max) + 1)))
    ms = np.unique(np.round(grid).astype(int))
    return ms * tau0


def allan_deviation(series, taus) -> AllanCurve:
    """Overlapping Allan deviation of a uniformly sampled series.

    Each tau must be an integer multiple of the sampling period.  For white
    noise of per-sample std sigma the expectation is sigma/sqrt(m) at
    tau = m*tau0.  Raises ``SeriesTooShort`` when fewer than two clusters fit
    at the largest tau.
    """
    t, v, q = _series_arrays(series)
    if not np.all(q):
        raise ValueError("mask gaps first (see compact_series)")
    n = v.size
    if n < 2:
        raise SeriesTooShort("need at least 2 samples")
    steps = np.diff(t)
    tau0 = float(steps[0])
    if not np.allclose(steps, tau0, rtol=1e-9, atol=0.0):
        raise ValueError("series must be uniformly sampled")
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    ms = taus / tau0
    m_int = np.round(ms).astype(int)
    if np.any(np.abs(ms - m_int) > 1e-6) or np.any(m_int < 1):
        raise ValueError("every tau must be a positive multiple of the shot period")
    if np.any(2 * m_int > n):
        raise SeriesTooShort(
            f"largest tau needs {2 * int(m_int.max())} samples, series has {n}"
        )
    cum = np.concatenate([[0.0], np.cumsum(v)])
    adev = np.empty(m_int.size)
    for i, m in enumerate(m_int):
        block = (cum[m:] - cum[:-m]) / m  # overlapping m-sample means
        diff = block[m:] - block[:-m]
        adev[i] = math.sqrt(0.5 * float(np.mean(diff * diff)))
    order = np.argsort(taus)
    return AllanCurve(taus[order], adev[order], m_int[order])


@dataclass(frozen=True)
class ScaleComparison:
    scale_ratio: float  # dual / closed scale factors
    dual_single_shot_ugal: float
    closed_single_shot_ugal: float
    sensitivity_ratio: float  # closed / dual measured single-shot noise
    n_samples: int


def closed_mz_scale_comparison(
    timing_closed: SequenceTiming,
    dual: DualTiming,
    laser: LaserConfig,
    order: BraggOrder,
    dual_single_shot_ugal: float = 200.0,
    closed_single_shot_ugal: float = 1200.0,
    n_samples: int = 2000,
    seed: int = 0,
) -> ScaleComparison:
    """Scale-factor and Monte Carlo sensitivity ratio against a closed MZ.

    The closed sequence must be symmetric (delta_t = 0); its scale factor is
    2*n*k*T^2.  The single-shot noise levels are configured (the closed
    interferometer is mirror-noise limited at short T), so the sensitivity
    ratio reproduces rather than predicts the configured budget.
    """
    if timing_closed.delta_t != 0.0:
        raise ValueError("closed sequence must have delta_t = 0")
    s_dual = scale_factor(laser, order, dual)
    s_closed = (
        2.0 * order.n * laser.wavenumber_k * timing_closed.t_interrogation ** 2
    )
    rng = np.random.default_rng(seed)
    dual_draws = rng.normal(0.0, dual_single_shot_ugal, n_samples)
    closed_draws = rng.normal(0.0, closed_single_shot_ugal, n_samples)
    ratio = float(closed_draws.std(ddof=1) / dual_draws.std(ddof=1))
    return ScaleComparison(
        scale_ratio=s_dual / s_closed,
        dual_single_shot_ugal=dual_single_shot_ugal,
        closed_single_shot_ugal=closed_single_shot_ugal,
        sensitivity_ratio=ratio,
        n_samples=n_samples,
    )
