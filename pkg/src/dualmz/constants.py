"""Physical constants for a rubidium-87 two-photon Bragg gravimeter."""

import math

HBAR = 1.054571817e-34  # reduced Planck constant (J s)
RB87_MASS = 1.44316e-25  # 87Rb atomic mass (kg)
RB87_D2_WAVELENGTH = 780.241e-9  # 87Rb D2 transition wavelength (m)

# Mean wavenumber of the counter-propagating beams near the D2 line (rad/m)
RB87_D2_WAVENUMBER = 2.0 * math.pi / RB87_D2_WAVELENGTH

MICROGAL = 1.0e-8  # 1 uGal in m/s^2


def recoil_frequency(wavenumber_k: float, atom_mass: float = RB87_MASS) -> float:
    """Photon-recoil angular frequency hbar*k^2/(2m), in rad/s."""
    return HBAR * wavenumber_k**2 / (2.0 * atom_mass)
