"""Closed-form phase models for open Mach-Zehnder Bragg interferometers.

Conventions: the vertical axis points downward so that g > 0, all phases are
real-valued (unwrapped), and pulses are treated as ideal and instantaneous.
"""

import enum
import math
from dataclasses import dataclass, field

from .constants import RB87_MASS, recoil_frequency

TWO_PI = 2.0 * math.pi

# Tolerance for the "equal total drop time" invariant of a dual sequence (s).
DROP_TIME_TOL = 1e-12


class ZeroScaleFactor(Exception):
    """Raised when a phase-to-gravity conversion has no sensitivity."""


def wrap_phase(phi):
    """Wrap phase(s) into (-pi, pi]."""
    return math.pi - (math.pi - phi) % TWO_PI


@dataclass(frozen=True)
class LaserConfig:
    """Two-photon Bragg beam parameters.

    ``recoil_omega_r`` may be omitted, in which case it is derived from
    hbar*k^2/(2m); if given it must match the derived value to 1e-12 relative.
    """

    wavenumber_k: float  # mean two-photon wavenumber (rad/m)
    recoil_omega_r: float | None = None  # rad/s
    atom_mass: float = RB87_MASS  # kg

    def __post_init__(self):
        if not (self.wavenumber_k > 0.0 and math.isfinite(self.wavenumber_k)):
            raise ValueError("wavenumber_k must be positive and finite")
        if self.atom_mass <= 0.0:
            raise ValueError("atom_mass must be positive")
        derived = recoil_frequency(self.wavenumber_k, self.atom_mass)
        if self.recoil_omega_r is None:
            object.__setattr__(self, "recoil_omega_r", derived)
        elif abs(self.recoil_omega_r - derived) > 1e-12 * derived:
            raise ValueError(
                f"recoil_omega_r={self.recoil_omega_r} inconsistent with "
                f"hbar*k^2/(2m)={derived}"
            )


@dataclass(frozen=True)
class BraggOrder:
    """Momentum transfer order n = n_f - n_i and mean order n_bar = n_f + n_i."""

    n: int
    n_bar: int

    def __post_init__(self):
        if self.n == 0:
            raise ValueError("momentum transfer order n must be nonzero")
        if (self.n - self.n_bar) % 2 != 0:
            raise ValueError("n and n_bar must have the same parity")


@dataclass(frozen=True)
class SequenceTiming:
    """Timing of one asymmetric pi/2 - pi - pi/2 sequence.

    ``t_exp`` is the interval from trap release to the first pi/2 pulse;
    ``t_split`` (interval from the splitting pulse to the sequence start)
    is carried for bookkeeping only and does not enter any phase.
    """

    t_exp: float  # release to first pi/2 pulse (s)
    t_interrogation: float  # T, beamsplitter to mirror (s)
    delta_t: float  # temporal asymmetry of the second half (s)
    t_sep: float  # last pulse to imaging (s)
    t_split: float = 0.0  # bookkeeping only (s)

    def __post_init__(self):
        for name in ("t_exp", "t_interrogation", "delta_t", "t_sep", "t_split"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.t_interrogation <= 0.0:
            raise ValueError("t_interrogation must be > 0")
        if self.t_sep <= 0.0:
            raise ValueError("pulse times must be strictly ordered (t_sep > 0)")

    @property
    def t1(self) -> float:
        return self.t_exp

    @property
    def t2(self) -> float:
        return self.t_exp + self.t_interrogation

    @property
    def t3(self) -> float:
        return self.t_exp + 2.0 * self.t_interrogation + self.delta_t

    @property
    def t_drop(self) -> float:
        """Total release-to-imaging time (s)."""
        return self.t3 + self.t_sep


@dataclass(frozen=True)
class DetuningRamp:
    """Linear two-photon detuning ramp delta(t) = delta_0 + alpha*t."""

    delta_0: float  # rad/s
    alpha: float  # rad/s^2

    def __post_init__(self):
        if not (math.isfinite(self.delta_0) and math.isfinite(self.alpha)):
            raise ValueError("ramp parameters must be finite")

    @classmethod
    def resonant(
        cls,
        laser: LaserConfig,
        order: BraggOrder,
        g_estimate: float,
        v0_estimate: float = 0.0,
    ) -> "DetuningRamp":
        """Ramp that keeps the transition resonant for the given estimates."""
        delta_0 = 4.0 * order.n_bar * laser.recoil_omega_r + 2.0 * laser.wavenumber_k * v0_estimate
        alpha = 2.0 * laser.wavenumber_k * g_estimate
        return cls(delta_0=delta_0, alpha=alpha)

    def g_estimate(self, laser: LaserConfig) -> float:
        """Gravity estimate implied by the chirp rate (m/s^2)."""
        return self.alpha / (2.0 * laser.wavenumber_k)


@dataclass(frozen=True)
class PhysicalState:
    """True gravity and mean vertical release velocity."""

    g_true: float  # m/s^2
    v0: float  # m/s, positive downward

    def __post_init__(self):
        if not (math.isfinite(self.g_true) and math.isfinite(self.v0)):
            raise ValueError("state must be finite")


class Ordering(enum.Enum):
    """Placement of the reference sequence relative to the signal sequence."""

    REFERENCE_AFTER = "reference_after"
    REFERENCE_INTERIOR = "reference_interior"
    # Reference window brushing the final signal pulse; the pulse-separation
    # overlap is neglected and the reference-after phase difference is used.
    EXPERIMENT_OVERLAP = "experiment_overlap"


@dataclass(frozen=True)
class DualTiming:
    """Paired signal/reference sequences measured at one total drop time."""

    signal: SequenceTiming
    reference: SequenceTiming
    ordering: Ordering = Ordering.REFERENCE_AFTER

    def __post_init__(self):
        if abs(self.signal.t_drop - self.reference.t_drop) > DROP_TIME_TOL:
            raise ValueError(
                f"total drop times differ: {self.signal.t_drop} vs "
                f"{self.reference.t_drop}"
            )
        if self.signal.delta_t != self.reference.delta_t:
            raise ValueError("signal and reference must share delta_t")

    @property
    def t_drop(self) -> float:
        return self.signal.t_drop


def detuning_at(
    t: float,
    laser: LaserConfig,
    order: BraggOrder,
    ramp: DetuningRamp,
    state: PhysicalState,
) -> float:
    """Instantaneous atom-light detuning of the Bragg transition (rad/s).

    Linear in time: the slope is set by the error between true gravity and the
    chirp's gravity estimate, the offset by recoil, velocity and ramp offset.
    """
    if t < 0.0:
        raise ValueError("t must be >= 0")
    k = laser.wavenumber_k
    delta_g = state.g_true - ramp.alpha / (2.0 * k)
    offset = order.n * (
        4.0 * order.n_bar * laser.recoil_omega_r + 2.0 * k * state.v0 - ramp.delta_0
    )
    return 2.0 * order.n * k * delta_g * t + offset


def open_mz_phase(
    laser: LaserConfig,
    order: BraggOrder,
    timing: SequenceTiming,
    ramp: DetuningRamp,
    state: PhysicalState,
) -> float:
    """Phase of a single open Mach-Zehnder sequence (rad, unwrapped).

    Equals the detuning integrated over the second free-evolution interval
    minus the first, evaluated in closed form.
    """
    k = laser.wavenumber_k
    big_t = timing.t_interrogation
    dt = timing.delta_t
    delta_g = state.g_true - ramp.alpha / (2.0 * k)
    gravity_term = (
        2.0 * order.n * k * delta_g
        * (big_t**2 + 2.0 * big_t * dt + 0.5 * dt**2 + timing.t_exp * dt)
    )
    velocity_term = (
        order.n
        * (4.0 * order.n_bar * laser.recoil_omega_r + 2.0 * k * state.v0 - ramp.delta_0)
        * dt
    )
    return gravity_term + velocity_term


def open_scale_factor(
    laser: LaserConfig, order: BraggOrder, timing: SequenceTiming
) -> float:
    """Gravity sensitivity of a single open sequence (rad per m/s^2)."""
    big_t = timing.t_interrogation
    dt = timing.delta_t
    return (
        2.0 * order.n * laser.wavenumber_k
        * (big_t**2 + 2.0 * big_t * dt + 0.5 * dt**2 + timing.t_exp * dt)
    )


def _check_shared_ramp(ramps: tuple[DetuningRamp, DetuningRamp]) -> None:
    if ramps[0].alpha != ramps[1].alpha:
        raise ValueError("signal and reference ramps must share the chirp rate")


def _dual_phase_value(
    laser: LaserConfig,
    order: BraggOrder,
    dual: DualTiming,
    ramps: tuple[DetuningRamp, DetuningRamp],
    state: PhysicalState,
) -> float:
    delta_g = state.g_true - ramps[0].alpha / (2.0 * laser.wavenumber_k)
    return scale_factor(laser, order, dual) * delta_g


def dual_phase(
    laser: LaserConfig,
    order: BraggOrder,
    dual: DualTiming,
    ramps: tuple[DetuningRamp, DetuningRamp],
    state: PhysicalState,
) -> float:
    """Signal-minus-reference phase for a non-interior reference (rad).

    Exactly independent of the mean release velocity: both sequences share the
    same velocity phase, which cancels in the subtraction.  Requires both
    ramps to target the same gravity estimate.
    """
    if dual.ordering is Ordering.REFERENCE_INTERIOR:
        raise ValueError("use dual_phase_interior for an interior reference")
    _check_shared_ramp(ramps)
    return _dual_phase_value(laser, order, dual, ramps, state)


def interior_reference_correction(
    laser: LaserConfig,
    orders: tuple[BraggOrder, BraggOrder],
    dual: DualTiming,
) -> float:
    """Extra signal phase from retuning the laser onto an interior reference."""
    order_sig, order_ref = orders
    t_ref = dual.reference.t_interrogation
    return (
        4.0 * order_sig.n * laser.recoil_omega_r
        * (order_sig.n_bar - order_ref.n_bar)
        * (2.0 * t_ref + dual.signal.delta_t)
    )


def dual_phase_interior(
    laser: LaserConfig,
    orders: tuple[BraggOrder, BraggOrder],
    dual: DualTiming,
    ramps: tuple[DetuningRamp, DetuningRamp],
    state: PhysicalState,
) -> float:
    """Dual phase when the reference runs inside the signal's free evolution.

    The reference window must sit strictly between the signal mirror pulse and
    the signal's final beamsplitter.
    """
    if dual.ordering is not Ordering.REFERENCE_INTERIOR:
        raise ValueError("dual.ordering must be REFERENCE_INTERIOR")
    sig, ref = dual.signal, dual.reference
    if not (sig.t2 < ref.t1 and ref.t3 < sig.t3):
        raise ValueError(
            "reference window is not strictly interior to the signal's "
            "second free-evolution interval"
        )
    _check_shared_ramp(ramps)
    if orders[0].n != orders[1].n:
        raise ValueError("both sequences must use the same transfer order n")
    base = _dual_phase_value(laser, orders[0], dual, ramps, state)
    return base + interior_reference_correction(laser, orders, dual)


def scale_factor(laser: LaserConfig, order: BraggOrder, dual: DualTiming) -> float:
    """Gravity sensitivity of the dual phase difference (rad per m/s^2)."""
    t_sig = dual.signal.t_interrogation
    t_ref = dual.reference.t_interrogation
    sep_diff = dual.signal.t_sep - dual.reference.t_sep
    return (
        2.0 * order.n * laser.wavenumber_k
        * (t_sig**2 - t_ref**2 - sep_diff * dual.signal.delta_t)
    )


def invert_gravity(
    delta_phi: float,
    laser: LaserConfig,
    order: BraggOrder,
    dual: DualTiming,
    ramp: DetuningRamp,
) -> float:
    """Gravity estimate from an (unwrapped) dual phase (m/s^2).

    Note the 2*pi ambiguity of wrapped phases: one fringe corresponds to
    2*pi / scale_factor in gravity.
    """
    s = scale_factor(laser, order, dual)
    if s == 0.0:
        raise ZeroScaleFactor("dual timing has zero gravity sensitivity")
    return ramp.g_estimate(laser) + delta_phi / s
