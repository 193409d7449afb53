"""Physical constants (CODATA, via scipy.constants) and unit helpers."""

import math

from scipy import constants as _c

HBAR = _c.hbar
PLANCK = _c.h
EPSILON_0 = _c.epsilon_0
SPEED_OF_LIGHT = _c.c
BOLTZMANN = _c.k
ELEMENTARY_CHARGE = _c.e
BOHR_MAGNETON = _c.physical_constants["Bohr magneton"][0]
BOHR_MAGNETON_HZ_PER_T = _c.physical_constants["Bohr magneton in Hz/T"][0]

DEBYE = 1e-21 / SPEED_OF_LIGHT  # C*m

TWO_PI = 2.0 * math.pi

# Gaussian FWHM = FWHM_PER_SIGMA * sigma
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


def to_angular(f_hz):
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * f_hz


def to_ordinary(w_rad):
    """Angular frequency (rad/s) to ordinary frequency (Hz)."""
    return w_rad / TWO_PI
