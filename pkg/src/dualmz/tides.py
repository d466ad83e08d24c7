"""Harmonic surrogate for the local solid-Earth tide gravity signal.

A handful of named constituents with configurable amplitudes stands in for a
full ephemeris tide computation; campaigns only need a known injected ground
truth.
"""

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Principal constituent periods (hours).
CONSTITUENT_PERIODS_H = {
    "M2": 12.4206,
    "S2": 12.0000,
    "N2": 12.6583,
    "K1": 23.9345,
    "O1": 25.8193,
    "P1": 24.0659,
}


@dataclass(frozen=True)
class TideConstituent:
    name: str
    amplitude_ugal: float
    period_s: float
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.period_s <= 0.0:
            raise ValueError("constituent period must be > 0")
        if self.amplitude_ugal < 0.0:
            raise ValueError("constituent amplitude must be >= 0")

    @classmethod
    def named(cls, name: str, amplitude_ugal: float, phase_rad: float = 0.0):
        try:
            period_h = CONSTITUENT_PERIODS_H[name]
        except KeyError:
            raise ValueError(f"unknown constituent {name!r}") from None
        return cls(name, amplitude_ugal, period_h * 3600.0, phase_rad)


@dataclass(frozen=True)
class TideModel:
    constituents: tuple[TideConstituent, ...] = ()
    mean_offset_ugal: float = 0.0

    @classmethod
    def from_named(cls, entries, mean_offset_ugal: float = 0.0) -> "TideModel":
        """Build from (name, amplitude_ugal, phase_rad) triples."""
        return cls(
            tuple(TideConstituent.named(n, a, p) for n, a, p in entries),
            mean_offset_ugal,
        )


def tide_at(model: TideModel, t):
    """Tide gravity perturbation at time(s) ``t`` in uGal."""
    total = model.mean_offset_ugal + np.zeros_like(np.asarray(t, dtype=float))
    for c in model.constituents:
        total = total + c.amplitude_ugal * np.cos(TWO_PI * t / c.period_s + c.phase_rad)
    if np.ndim(t) == 0:
        return float(total)
    return total


def default_tide_model() -> TideModel:
    """Three-constituent default: semidiurnal M2 plus diurnal O1 and K1."""
    return TideModel.from_named(
        [("M2", 50.0, 0.0), ("O1", 30.0, 1.3), ("K1", 30.0, 2.1)]
    )
