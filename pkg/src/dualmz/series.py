"""Per-run phases to gravity time series: differencing, unwrapping, inversion."""

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .constants import MICROGAL
from .phases import ZeroScaleFactor, open_scale_factor, scale_factor, wrap_phase

log = logging.getLogger(__name__)


class Source(enum.Enum):
    SIGNAL = "signal"
    REFERENCE = "reference"
    DUAL = "dual"


class TimestampMismatch(Exception):
    """Series to be combined do not share timestamps."""


@dataclass(eq=False)
class PhaseSeries:
    timestamps: np.ndarray  # s, strictly increasing
    values: np.ndarray  # rad
    source: Source
    quality: np.ndarray  # bool, per-point converged flags
    wrapped: bool = True

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.quality = np.asarray(self.quality, dtype=bool)
        if not (self.timestamps.shape == self.values.shape == self.quality.shape):
            raise ValueError("timestamps, values and quality must align")
        if self.timestamps.size > 1 and np.any(np.diff(self.timestamps) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.values[self.quality])):
            raise ValueError("values must be finite where quality is true")


@dataclass(eq=False)
class GravitySeries:
    timestamps: np.ndarray  # s
    g_values: np.ndarray  # m/s^2
    source: Source
    quality: np.ndarray

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.g_values = np.asarray(self.g_values, dtype=float)
        self.quality = np.asarray(self.quality, dtype=bool)

    @property
    def g_ugal(self) -> np.ndarray:
        return self.g_values / MICROGAL


def phase_series_from_fits(records, source: Source) -> PhaseSeries:
    """Wrapped phase series from campaign fit records (quality = converged)."""
    attr = "phase_sig" if source is not Source.REFERENCE else "phase_ref"
    timestamps, values, quality = [], [], []
    for rec in records:
        timestamps.append(rec.timestamp)
        ok = rec.converged and rec.result is not None
        quality.append(ok)
        values.append(getattr(rec.result.params, attr) if ok else 0.0)
    return PhaseSeries(
        np.array(timestamps), np.array(values), source,
        np.array(quality, dtype=bool), wrapped=True,
    )


def dual_difference(sig: PhaseSeries, ref: PhaseSeries) -> PhaseSeries:
    """Pointwise wrapped difference sig - ref; bad points stay masked."""
    if not (sig.wrapped and ref.wrapped):
        raise ValueError("dual_difference expects wrapped inputs")
    if sig.timestamps.shape != ref.timestamps.shape or not np.array_equal(
        sig.timestamps, ref.timestamps
    ):
        raise TimestampMismatch("signal and reference timestamps differ")
    return PhaseSeries(
        sig.timestamps.copy(),
        wrap_phase(sig.values - ref.values),
        Source.DUAL,
        sig.quality & ref.quality,
        wrapped=True,
    )


def unwrap_series(series: PhaseSeries, flag_threshold: float = math.pi / 2) -> PhaseSeries:
    """Nearest-multiple-of-2pi unwrapping over the quality-true points.

    Masked points are carried through unchanged (still masked).  Steps larger
    than ``flag_threshold`` after unwrapping are counted and logged; they
    usually indicate the per-step change assumption was violated.
    """
    if not series.wrapped:
        raise ValueError("series is already unwrapped")
    values = series.values.copy()
    good = np.flatnonzero(series.quality)
    if good.size:
        unwrapped = np.unwrap(series.values[good])
        values[good] = unwrapped
        big = int(np.count_nonzero(np.abs(np.diff(unwrapped)) > flag_threshold))
        if big:
            log.warning(
                "unwrap: %d step(s) exceed %.3f rad after unwrapping", big,
                flag_threshold,
            )
    return PhaseSeries(
        series.timestamps.copy(), values, series.source,
        series.quality.copy(), wrapped=False,
    )


def to_gravity(
    series: PhaseSeries, scenario, scale: str = "own"
) -> GravitySeries:
    """Convert an unwrapped phase series to gravity, g = g_hat + phase / S.

    ``scale="own"`` uses each source's exact sensitivity (the dual scale
    factor for the dual series, the single-sequence coefficient for the
    signal or reference series), giving exact noiseless round trips.
    ``scale="instrument"`` converts every source with the dual scale factor,
    i.e. on the instrument's common gravity calibration; this is how
    side-by-side comparison series are reported.
    """
    if series.wrapped:
        raise ValueError("unwrap the series before converting to gravity")
    if scale not in ("own", "instrument"):
        raise ValueError("scale must be 'own' or 'instrument'")
    laser, order = scenario.laser, scenario.orders[0]
    if scale == "instrument" or series.source is Source.DUAL:
        s = scale_factor(laser, order, scenario.dual)
    elif series.source is Source.SIGNAL:
        s = open_scale_factor(laser, order, scenario.dual.signal)
    else:
        s = open_scale_factor(laser, scenario.orders[1], scenario.dual.reference)
    if s == 0.0:
        raise ZeroScaleFactor(f"zero scale factor for {series.source}")
    g_hat = scenario.g_estimate()
    return GravitySeries(
        series.timestamps.copy(),
        g_hat + series.values / s,
        series.source,
        series.quality.copy(),
    )


def pixel_reference_phase(fit, z_pixel: float) -> float:
    """Signal phase re-referenced to a camera pixel (legacy protocol).

    Models the single-interferometer scheme whose bias under reference-frame
    motion the dual difference removes.
    """
    params = fit.params
    return float(
        wrap_phase(
            params.phase_sig + params.fringe_wavenumber * (params.z0 - z_pixel)
        )
    )


def campaign_phase_series(records) -> dict[str, PhaseSeries]:
    """Signal, reference and dual wrapped phase series from fit records."""
    sig = phase_series_from_fits(records, Source.SIGNAL)
    ref = phase_series_from_fits(records, Source.REFERENCE)
    return {"signal": sig, "reference": ref, "dual": dual_difference(sig, ref)}


def campaign_gravity(
    records, scenario, comparison_scale: str = "instrument"
) -> dict[str, GravitySeries]:
    """Unwrapped gravity series per source from campaign fit records.

    The dual series always uses its own (exact) scale factor; signal and
    reference use ``comparison_scale``.
    """
    phases = campaign_phase_series(records)
    out = {}
    for name, series in phases.items():
        scale = "own" if name == "dual" else comparison_scale
        out[name] = to_gravity(unwrap_series(series), scenario, scale=scale)
    return out
