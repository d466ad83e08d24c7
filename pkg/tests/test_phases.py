import math

import numpy as np
import pytest

from dualmz import (
    BraggOrder,
    DetuningRamp,
    DualTiming,
    LaserConfig,
    Ordering,
    PhysicalState,
    SequenceTiming,
    ZeroScaleFactor,
    detuning_at,
    dual_phase,
    dual_phase_interior,
    interior_reference_correction,
    invert_gravity,
    open_mz_phase,
    open_scale_factor,
    scale_factor,
)
from dualmz.constants import RB87_D2_WAVENUMBER

from conftest import open_phase_quadrature, random_dual_setup, random_single_setup

K_EXAMPLE = 8.0553e6  # rad/m, value used by the worked examples


def example_laser():
    return LaserConfig(K_EXAMPLE)


def paper_dual(ordering=Ordering.REFERENCE_AFTER):
    sig = SequenceTiming(t_exp=67.55e-3, t_interrogation=70e-3,
                         delta_t=0.45e-3, t_sep=8e-3)
    ref = SequenceTiming(t_exp=205.5e-3, t_interrogation=1e-3,
                         delta_t=0.45e-3, t_sep=8.05e-3)
    return DualTiming(sig, ref, ordering)


# ---------------------------------------------------------------------------
# domain types

def test_laser_recoil_derived_and_validated():
    laser = LaserConfig(K_EXAMPLE)
    expected = 1.054571817e-34 * K_EXAMPLE**2 / (2 * 1.44316e-25)
    assert laser.recoil_omega_r == pytest.approx(expected, rel=1e-14)
    LaserConfig(K_EXAMPLE, recoil_omega_r=expected)  # consistent value accepted
    with pytest.raises(ValueError):
        LaserConfig(K_EXAMPLE, recoil_omega_r=expected * (1 + 1e-9))
    with pytest.raises(ValueError):
        LaserConfig(-1.0)


def test_default_laser_recoil_matches_experiment():
    laser = LaserConfig(RB87_D2_WAVENUMBER)
    assert laser.recoil_omega_r / (2 * math.pi) == pytest.approx(3771.0, rel=3e-4)


def test_bragg_order_invariants():
    BraggOrder(1, -5)
    BraggOrder(2, 4)
    with pytest.raises(ValueError):
        BraggOrder(0, 0)
    with pytest.raises(ValueError):
        BraggOrder(1, 2)  # parity mismatch


def test_sequence_timing_invariants():
    with pytest.raises(ValueError):
        SequenceTiming(t_exp=-1e-3, t_interrogation=0.07, delta_t=0.0, t_sep=8e-3)
    with pytest.raises(ValueError):
        SequenceTiming(t_exp=0.0, t_interrogation=0.0, delta_t=0.0, t_sep=8e-3)
    with pytest.raises(ValueError):
        SequenceTiming(t_exp=0.0, t_interrogation=0.07, delta_t=0.0, t_sep=0.0)
    t = SequenceTiming(t_exp=67.55e-3, t_interrogation=70e-3, delta_t=0.45e-3,
                       t_sep=8e-3)
    assert t.t_drop == pytest.approx(0.216, abs=1e-15)


def test_dual_timing_rejects_mismatched_drop_and_asymmetry():
    sig = SequenceTiming(t_exp=0.06755, t_interrogation=0.07, delta_t=0.45e-3,
                         t_sep=8e-3)
    bad = SequenceTiming(t_exp=0.2055, t_interrogation=1e-3, delta_t=0.45e-3,
                         t_sep=9e-3)
    with pytest.raises(ValueError):
        DualTiming(sig, bad)
    bad_dt = SequenceTiming(t_exp=0.20545, t_interrogation=1e-3, delta_t=0.5e-3,
                            t_sep=8.05e-3)
    with pytest.raises(ValueError):
        DualTiming(sig, bad_dt)


# ---------------------------------------------------------------------------
# detuning

def test_detuning_zero_on_exact_resonance():
    laser = example_laser()
    order = BraggOrder(1, 1)
    state = PhysicalState(g_true=9.81, v0=1.7e-3)
    ramp = DetuningRamp.resonant(laser, order, g_estimate=9.81, v0_estimate=1.7e-3)
    for t in (0.0, 0.05, 0.1, 0.216):
        assert detuning_at(t, laser, order, ramp, state) == 0.0


def test_detuning_gravity_error_example():
    laser = example_laser()
    order = BraggOrder(1, 1)
    ramp = DetuningRamp.resonant(laser, order, g_estimate=9.8)
    state = PhysicalState(g_true=9.8 + 1e-6, v0=0.0)
    xi = detuning_at(0.1, laser, order, ramp, state)
    assert xi == pytest.approx(1.611, rel=1e-3)
    delta_g = state.g_true - ramp.alpha / (2 * laser.wavenumber_k)
    assert xi == pytest.approx(2 * laser.wavenumber_k * delta_g * 0.1, rel=1e-12)


def test_detuning_velocity_offset_example():
    laser = example_laser()
    order = BraggOrder(1, 1)
    ramp = DetuningRamp.resonant(laser, order, g_estimate=9.8)
    state = PhysicalState(g_true=9.8, v0=1e-3)
    xi0 = detuning_at(0.0, laser, order, ramp, state)
    assert xi0 == pytest.approx(1.611e4, rel=1e-3)


def test_detuning_rejects_negative_time():
    laser = example_laser()
    order = BraggOrder(1, 1)
    ramp = DetuningRamp.resonant(laser, order, 9.8)
    with pytest.raises(ValueError):
        detuning_at(-1.0, laser, order, ramp, PhysicalState(9.8, 0.0))


# ---------------------------------------------------------------------------
# single-sequence phase

def test_open_phase_closed_limit():
    laser = example_laser()
    order = BraggOrder(1, 3)
    timing = SequenceTiming(t_exp=0.05, t_interrogation=0.07, delta_t=0.0,
                            t_sep=8e-3)
    ramp = DetuningRamp(delta_0=12345.0, alpha=2 * laser.wavenumber_k * 9.79)
    state = PhysicalState(g_true=9.79 + 3e-5, v0=2e-3)
    delta_g = state.g_true - 9.79
    expected = 2 * order.n * laser.wavenumber_k * delta_g * timing.t_interrogation**2
    assert open_mz_phase(laser, order, timing, ramp, state) == expected


def test_open_phase_paper_style_value_vs_quadrature():
    laser = example_laser()
    order = BraggOrder(1, 1)
    timing = SequenceTiming(t_exp=67.05e-3, t_interrogation=70e-3,
                            delta_t=0.45e-3, t_sep=8e-3)
    ramp = DetuningRamp.resonant(laser, order, g_estimate=9.7996)
    state = PhysicalState(g_true=9.7996 + 1e-6, v0=0.0)
    phi = open_mz_phase(laser, order, timing, ramp, state)
    oracle = open_phase_quadrature(laser, order, timing, ramp, state)
    assert phi == pytest.approx(oracle, rel=1e-10)
    assert phi == pytest.approx(8.045e-2, rel=1e-3)


def test_open_phase_velocity_term():
    laser = example_laser()
    order = BraggOrder(1, 1)
    timing = SequenceTiming(t_exp=67.05e-3, t_interrogation=70e-3,
                            delta_t=0.45e-3, t_sep=8e-3)
    ramp = DetuningRamp.resonant(laser, order, g_estimate=9.7996)
    state = PhysicalState(g_true=9.7996, v0=1e-3)
    phi = open_mz_phase(laser, order, timing, ramp, state)
    expected = 2 * laser.wavenumber_k * 1e-3 * 0.45e-3
    assert phi == pytest.approx(expected, rel=1e-12)
    assert phi == pytest.approx(7.25, rel=1e-3)
    assert phi == pytest.approx(
        open_phase_quadrature(laser, order, timing, ramp, state), rel=1e-10
    )


def test_open_phase_matches_quadrature_randomized(rng):
    for _ in range(200):
        laser, order, timing, ramp, state = random_single_setup(rng)
        phi = open_mz_phase(laser, order, timing, ramp, state)
        oracle = open_phase_quadrature(laser, order, timing, ramp, state)
        assert abs(phi - oracle) <= 1e-10 * max(abs(phi), abs(oracle), 1e-8)


# ---------------------------------------------------------------------------
# dual phase

def test_dual_phase_symmetric_cancellation():
    laser = example_laser()
    order = BraggOrder(1, 1)
    sig = SequenceTiming(t_exp=0.05, t_interrogation=0.07, delta_t=0.45e-3,
                         t_sep=8e-3)
    ref = SequenceTiming(t_exp=0.05, t_interrogation=0.07, delta_t=0.45e-3,
                         t_sep=8e-3)
    dual = DualTiming(sig, ref)
    ramps = (DetuningRamp.resonant(laser, order, 9.8),
             DetuningRamp.resonant(laser, order, 9.8))
    for v0, dg in ((0.0, 0.0), (3e-3, 1e-4), (-5e-3, -2e-4)):
        state = PhysicalState(9.8 + dg, v0)
        assert dual_phase(laser, order, dual, ramps, state) == 0.0


def test_dual_phase_paper_value_and_oracle():
    laser = example_laser()
    order = BraggOrder(1, 1)
    orders = (BraggOrder(1, 1), BraggOrder(1, -5))
    dual = paper_dual()
    ramps = (DetuningRamp.resonant(laser, orders[0], 9.7996),
             DetuningRamp.resonant(laser, orders[1], 9.7996))
    state = PhysicalState(9.7996 + 1e-6, v0=3e-3)
    value = dual_phase(laser, order, dual, ramps, state)
    assert value == pytest.approx(7.893e-2, rel=1e-3)
    # independent route: quadrature of each sequence, then subtraction
    oracle = open_phase_quadrature(
        laser, orders[0], dual.signal, ramps[0], state
    ) - open_phase_quadrature(laser, orders[1], dual.reference, ramps[1], state)
    assert value == pytest.approx(oracle, rel=1e-9)


def test_dual_phase_velocity_independent_bitwise(rng):
    for _ in range(30):
        laser, orders, dual, ramps, state = random_dual_setup(rng)
        results = {
            dual_phase(laser, orders[0], dual, ramps,
                       PhysicalState(state.g_true, v0))
            for v0 in (-5e-3, 0.0, 5e-3)
        }
        assert len(results) == 1


def test_dual_phase_rejects_interior_ordering():
    laser = example_laser()
    dual = paper_dual(Ordering.REFERENCE_INTERIOR)
    ramps = (DetuningRamp.resonant(laser, BraggOrder(1, 1), 9.8),
             DetuningRamp.resonant(laser, BraggOrder(1, -5), 9.8))
    with pytest.raises(ValueError):
        dual_phase(laser, BraggOrder(1, 1), dual, ramps, PhysicalState(9.8, 0.0))


def test_dual_phase_rejects_mismatched_chirp():
    laser = example_laser()
    dual = paper_dual()
    ramps = (DetuningRamp.resonant(laser, BraggOrder(1, 1), 9.8),
             DetuningRamp.resonant(laser, BraggOrder(1, -5), 9.81))
    with pytest.raises(ValueError):
        dual_phase(laser, BraggOrder(1, 1), dual, ramps, PhysicalState(9.8, 0.0))


def test_dual_phase_affine_in_gravity_error(rng):
    for _ in range(20):
        laser, orders, dual, ramps, state = random_dual_setup(rng)
        s = scale_factor(laser, orders[0], dual)
        h = 1e-5
        lo = dual_phase(laser, orders[0], dual, ramps,
                        PhysicalState(state.g_true - h, state.v0))
        hi = dual_phase(laser, orders[0], dual, ramps,
                        PhysicalState(state.g_true + h, state.v0))
        assert (hi - lo) / (2 * h) == pytest.approx(s, rel=1e-9)


# ---------------------------------------------------------------------------
# interior reference

def interior_dual():
    sig = SequenceTiming(t_exp=30e-3, t_interrogation=70e-3, delta_t=0.45e-3,
                         t_sep=20e-3)
    # window [106, 108.45] ms sits inside the signal's [100, 170.45] ms arm
    ref = SequenceTiming(t_exp=106e-3, t_interrogation=1e-3, delta_t=0.45e-3,
                         t_sep=sig.t_drop - (106e-3 + 2.45e-3))
    return DualTiming(sig, ref, Ordering.REFERENCE_INTERIOR)


def test_interior_equal_mean_momentum_reduces_to_dual():
    laser = example_laser()
    orders = (BraggOrder(1, 1), BraggOrder(1, 1))
    dual = interior_dual()
    ramps = (DetuningRamp.resonant(laser, orders[0], 9.8),
             DetuningRamp.resonant(laser, orders[1], 9.8))
    state = PhysicalState(9.8 + 5e-5, 1e-3)
    after = DualTiming(dual.signal, dual.reference, Ordering.REFERENCE_AFTER)
    assert dual_phase_interior(laser, orders, dual, ramps, state) == pytest.approx(
        dual_phase(laser, orders[0], after, ramps, state), rel=1e-14
    )


def test_interior_correction_paper_momentum_states():
    laser = LaserConfig(RB87_D2_WAVENUMBER)
    orders = (BraggOrder(1, 1), BraggOrder(1, -5))
    sig = SequenceTiming(t_exp=30e-3, t_interrogation=70e-3, delta_t=0.45e-3,
                         t_sep=20e-3)
    ref = SequenceTiming(t_exp=106e-3, t_interrogation=1e-3, delta_t=0.45e-3,
                         t_sep=sig.t_drop - (106e-3 + 2.45e-3))
    dual = DualTiming(sig, ref, Ordering.REFERENCE_INTERIOR)
    corr = interior_reference_correction(laser, orders, dual)
    assert corr == pytest.approx(4 * laser.recoil_omega_r * 6 * 2.45e-3, rel=1e-14)
    assert corr == pytest.approx(1.393e3, rel=1e-3)


def test_interior_only_correction_survives_at_zero_error():
    laser = example_laser()
    orders = (BraggOrder(1, 1), BraggOrder(1, -5))
    dual = interior_dual()
    ramps = (DetuningRamp.resonant(laser, orders[0], 9.8),
             DetuningRamp.resonant(laser, orders[1], 9.8))
    state = PhysicalState(9.8, 0.0)  # delta_g = 0, v0 = 0
    assert dual_phase_interior(laser, orders, dual, ramps, state) == (
        interior_reference_correction(laser, orders, dual)
    )


def test_interior_rejects_non_interior_window():
    laser = example_laser()
    orders = (BraggOrder(1, 1), BraggOrder(1, -5))
    dual = paper_dual(Ordering.REFERENCE_INTERIOR)  # brushes the last pulse
    sig = dual.signal
    late = SequenceTiming(t_exp=sig.t3 + 1e-3, t_interrogation=1e-3,
                          delta_t=0.45e-3,
                          t_sep=sig.t_drop - (sig.t3 + 1e-3 + 2.45e-3))
    bad = DualTiming(sig, late, Ordering.REFERENCE_INTERIOR)
    ramps = (DetuningRamp.resonant(laser, orders[0], 9.8),
             DetuningRamp.resonant(laser, orders[1], 9.8))
    with pytest.raises(ValueError):
        dual_phase_interior(laser, orders, bad, ramps, PhysicalState(9.8, 0.0))


# ---------------------------------------------------------------------------
# scale factor and inversion

def test_scale_factor_paper_value():
    laser = example_laser()
    s = scale_factor(laser, BraggOrder(1, 1), paper_dual())
    assert s == pytest.approx(7.893e4, rel=1e-3)


def test_scale_factor_zero_and_linearity_in_n():
    laser = example_laser()
    sig = SequenceTiming(t_exp=0.05, t_interrogation=0.07, delta_t=0.45e-3,
                         t_sep=8e-3)
    dual0 = DualTiming(sig, sig)
    assert scale_factor(laser, BraggOrder(1, 1), dual0) == 0.0
    dual = paper_dual()
    assert scale_factor(laser, BraggOrder(2, 2), dual) == (
        2.0 * scale_factor(laser, BraggOrder(1, 1), dual)
    )


def test_invert_gravity_round_trip():
    laser = example_laser()
    orders = (BraggOrder(1, 1), BraggOrder(1, -5))
    dual = paper_dual()
    ramps = (DetuningRamp.resonant(laser, orders[0], 9.7995),
             DetuningRamp.resonant(laser, orders[1], 9.7995))
    state = PhysicalState(9.7996, v0=2e-3)
    phi = dual_phase(laser, orders[0], dual, ramps, state)
    g = invert_gravity(phi, laser, orders[0], dual, ramps[0])
    assert g == pytest.approx(9.7996, rel=1e-12)


def test_invert_gravity_round_trip_higher_order():
    laser = example_laser()
    orders = (BraggOrder(2, 2), BraggOrder(2, -6))
    dual = paper_dual()
    ramps = (DetuningRamp.resonant(laser, orders[0], 9.7995),
             DetuningRamp.resonant(laser, orders[1], 9.7995))
    state = PhysicalState(9.7996, v0=-1e-3)
    phi = dual_phase(laser, orders[0], dual, ramps, state)
    g = invert_gravity(phi, laser, orders[0], dual, ramps[0])
    assert g == pytest.approx(9.7996, rel=1e-12)


def test_invert_gravity_zero_phase_gives_estimate():
    laser = example_laser()
    ramp = DetuningRamp.resonant(laser, BraggOrder(1, 1), 9.7995)
    g = invert_gravity(0.0, laser, BraggOrder(1, 1), paper_dual(), ramp)
    assert g == pytest.approx(9.7995, rel=1e-14)


def test_invert_gravity_fringe_ambiguity():
    laser = example_laser()
    order = BraggOrder(1, 1)
    dual = paper_dual()
    ramp = DetuningRamp.resonant(laser, order, 9.7995)
    g0 = invert_gravity(0.3, laser, order, dual, ramp)
    g1 = invert_gravity(0.3 + 2 * math.pi, laser, order, dual, ramp)
    assert g1 - g0 == pytest.approx(7.96e-5, rel=1e-3)


def test_invert_gravity_zero_scale_raises():
    laser = example_laser()
    sig = SequenceTiming(t_exp=0.05, t_interrogation=0.07, delta_t=0.45e-3,
                         t_sep=8e-3)
    dual0 = DualTiming(sig, sig)
    ramp = DetuningRamp.resonant(laser, BraggOrder(1, 1), 9.8)
    with pytest.raises(ZeroScaleFactor):
        invert_gravity(0.1, laser, BraggOrder(1, 1), dual0, ramp)


def test_signal_scale_to_dual_scale_ratio():
    laser = example_laser()
    order = BraggOrder(1, 1)
    dual = paper_dual()
    ratio = open_scale_factor(laser, order, dual.signal) / scale_factor(
        laser, order, dual
    )
    assert ratio == pytest.approx(1.019, rel=1e-3)
