"""Shared test oracles and generators.

The quadrature oracle rebuilds the instantaneous detuning from raw inputs and
integrates it numerically; it never calls the closed-form phase code it
checks.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from dualmz import (
    BraggOrder,
    DetuningRamp,
    DualTiming,
    LaserConfig,
    Ordering,
    PhysicalState,
    SequenceTiming,
)


def xi_reference(t, k, omega_r, n, n_bar, delta_0, alpha, g_true, v0):
    """Independent evaluation of the time-dependent atom-light detuning."""
    delta_g = g_true - alpha / (2.0 * k)
    return 2.0 * n * k * delta_g * t + n * (4.0 * n_bar * omega_r + 2.0 * k * v0 - delta_0)


def open_phase_quadrature(laser, order, timing, ramp, state) -> float:
    """Adaptive quadrature of the detuning over the two free-evolution arms."""
    args = (
        laser.wavenumber_k, laser.recoil_omega_r, order.n, order.n_bar,
        ramp.delta_0, ramp.alpha, state.g_true, state.v0,
    )
    second, _ = quad(xi_reference, timing.t2, timing.t3, args=args,
                     epsabs=1e-14, epsrel=1e-13, limit=200)
    first, _ = quad(xi_reference, timing.t1, timing.t2, args=args,
                    epsabs=1e-14, epsrel=1e-13, limit=200)
    return second - first


def random_single_setup(rng):
    """Random but physical single-sequence parameters for property tests."""
    laser = LaserConfig(rng.uniform(7.5e6, 8.5e6))
    n = int(rng.choice([-2, -1, 1, 2]))
    n_bar = n + 2 * int(rng.integers(-3, 4))
    order = BraggOrder(n, n_bar)
    timing = SequenceTiming(
        t_exp=rng.uniform(1e-3, 0.2),
        t_interrogation=rng.uniform(1e-3, 0.2),
        delta_t=rng.uniform(0.0, 2e-3),
        t_sep=rng.uniform(1e-3, 0.2),
    )
    g_hat = rng.uniform(9.7, 9.9)
    v0_hat = rng.uniform(-5e-3, 5e-3)
    ramp = DetuningRamp.resonant(laser, order, g_hat, v0_hat)
    state = PhysicalState(
        g_true=g_hat + rng.uniform(-1e-3, 1e-3),
        v0=rng.uniform(-5e-3, 5e-3),
    )
    return laser, order, timing, ramp, state


def random_dual_setup(rng, interior=False):
    """Random dual timing with matched drop times (and shared ramp targets)."""
    laser = LaserConfig(rng.uniform(7.5e6, 8.5e6))
    n = int(rng.choice([1, 2]))
    order_sig = BraggOrder(n, n + 2 * int(rng.integers(-2, 3)))
    order_ref = BraggOrder(n, n + 2 * int(rng.integers(-2, 3)))
    delta_t = rng.uniform(1e-5, 2e-3)
    t_sig = rng.uniform(0.03, 0.1)
    t_ref = rng.uniform(1e-3, 5e-3)
    ref_span = 2.0 * t_ref + delta_t
    sig = SequenceTiming(
        t_exp=rng.uniform(0.02, 0.08),
        t_interrogation=t_sig,
        delta_t=delta_t,
        t_sep=rng.uniform(ref_span + 2e-3, ref_span + 0.03),
    )
    if interior:
        # Reference window strictly inside the signal's second interval.
        lo = sig.t2 + 1e-4
        hi = sig.t3 - ref_span - 1e-4
        t_exp_ref = rng.uniform(lo, min(hi, lo + 0.05))
    else:
        t_exp_ref = sig.t3 + rng.uniform(1e-4, sig.t_sep - ref_span - 1e-3)
    t_sep_ref = sig.t_drop - (t_exp_ref + 2.0 * t_ref + delta_t)
    ref = SequenceTiming(
        t_exp=t_exp_ref, t_interrogation=t_ref, delta_t=delta_t, t_sep=t_sep_ref,
    )
    ordering = Ordering.REFERENCE_INTERIOR if interior else Ordering.REFERENCE_AFTER
    dual = DualTiming(sig, ref, ordering)
    g_hat = rng.uniform(9.7, 9.9)
    v0_hat = rng.uniform(-2e-3, 2e-3)
    ramps = (
        DetuningRamp.resonant(laser, order_sig, g_hat, v0_hat),
        DetuningRamp.resonant(laser, order_ref, g_hat, v0_hat),
    )
    state = PhysicalState(
        g_true=g_hat + rng.uniform(-1e-3, 1e-3), v0=rng.uniform(-5e-3, 5e-3)
    )
    return laser, (order_sig, order_ref), dual, ramps, state


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
