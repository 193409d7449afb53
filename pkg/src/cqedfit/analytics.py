"""Closed-form cavity-QED, photon-budget and spectroscopy formulas.

Frequencies and rates are ordinary (Hz); where a formula needs angular
units the 2 pi is applied here. Most functions accept numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constants import (
    BOHR_MAGNETON_HZ_PER_T,
    BOLTZMANN,
    EPSILON_0,
    HBAR,
    SPEED_OF_LIGHT,
    TWO_PI,
)

# FDTD-simulated ZPL Purcell factor of the device at unity quantum efficiency
SIMULATED_ZPL_PURCELL = 470.0
SILICON_INDEX = 3.505


def _fraction(name, v):
    if not (0.0 <= v <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {v!r}")


# ---------------------------------------------------------------- data types
@dataclass(frozen=True)
class RateBudget:
    """Split of the total decay rate into ZPL, phonon-sideband and non-radiative parts (Hz)."""

    gamma_zpl: float
    gamma_psb: float
    gamma_nr: float
    dw: float
    eta_qe: float

    def __post_init__(self):
        for name in ("gamma_zpl", "gamma_psb", "gamma_nr", "dw", "eta_qe"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def gamma0(self) -> float:
        return self.gamma_zpl + self.gamma_psb + self.gamma_nr


@dataclass(frozen=True)
class EfficiencyChain:
    """Per-stage collection efficiencies.

    The cavity chain is cavity -> grating coupler -> fibre path -> detector.
    The optional waveguide variant replaces the first two stages by the
    waveguide efficiency and the grating collection efficiency.
    """

    eta_cav: float
    eta_gc: float
    eta_path: float
    eta_snspd: float
    eta_wg: float | None = None
    eta_col: float | None = None

    def __post_init__(self):
        for name in ("eta_cav", "eta_gc", "eta_path", "eta_snspd", "eta_wg", "eta_col"):
            v = getattr(self, name)
            if v is not None:
                _fraction(name, v)


@dataclass(frozen=True)
class PurcellFit:
    """Parameters of the decay-rate Lorentzian: peak enhancement, width (Hz), far-detuned level."""

    p_t: float
    kappa_tilde: float
    gamma_inf_ratio: float = 1.0

    def __post_init__(self):
        if not self.p_t > 0:
            raise ValueError("p_t must be positive")
        if not self.kappa_tilde > 0:
            raise ValueError("kappa_tilde must be positive")


@dataclass(frozen=True)
class ZeemanModel:
    """Differential g-factor, optical linewidth (Hz) and ``mu_B / h`` (Hz/T)."""

    delta_g: float
    linewidth: float
    mu_b_over_h: float = BOHR_MAGNETON_HZ_PER_T

    def __post_init__(self):
        if self.delta_g < 0:
            raise ValueError("delta_g must be non-negative")
        if not self.linewidth > 0:
            raise ValueError("linewidth must be positive")


@dataclass(frozen=True)
class ThermalModel:
    """``Gamma(T) = p0 + p_t_coeff / (exp(e_a / k_B T) - 1)``; ``p0``, ``p_t_coeff`` in Hz, ``e_a`` in J."""

    p0: float
    p_t_coeff: float
    e_a: float
    k_b: float = BOLTZMANN

    def __post_init__(self):
        for name in ("p0", "p_t_coeff", "e_a", "k_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


# ------------------------------------------------------------ Purcell & rates
def purcell_lorentzian(delta_ac, fit: PurcellFit):
    """``Gamma_cav / Gamma_0 = P_t / (1 + (2 delta_ac / kappa_tilde)^2) + Gamma_inf / Gamma_0``."""
    delta_ac = np.asarray(delta_ac, dtype=float)
    out = fit.p_t / (1.0 + (2.0 * delta_ac / fit.kappa_tilde) ** 2) + fit.gamma_inf_ratio
    return out if out.ndim else float(out)


def fit_purcell_lorentzian(curve):
    """Least-squares :class:`PurcellFit` to a decay-enhancement curve, centred at zero detuning.

    Returns ``(PurcellFit, FitResult)``.
    """
    from .curvefit import fit_lorentzian

    res = fit_lorentzian(curve, center=0.0)
    return PurcellFit(res["amplitude"], res["fwhm"], res["offset"]), res


def bad_cavity_purcell(g, kappa, gamma0):
    """Cavity-induced enhancement ``4 g^2 / (kappa Gamma_0)`` for ``g << kappa``."""
    return 4.0 * np.asarray(g) ** 2 / (np.asarray(kappa) * np.asarray(gamma0))


def rate_decomposition(gamma0: float, dw: float, eta_qe: float) -> RateBudget:
    """Split ``gamma0`` given the Debye-Waller factor and the quantum efficiency."""
    _fraction("dw", dw)
    _fraction("eta_qe", eta_qe)
    if gamma0 < 0:
        raise ValueError("gamma0 must be non-negative")
    radiative = eta_qe * gamma0
    return RateBudget(
        gamma_zpl=dw * radiative,
        gamma_psb=(1.0 - dw) * radiative,
        gamma_nr=gamma0 - radiative,
        dw=dw,
        eta_qe=eta_qe,
    )


def beta_factor(p_t):
    """Fraction of emission funnelled into the cavity, ``P_t / (P_t + 1)``."""
    p_t = np.asarray(p_t, dtype=float)
    if np.any(p_t < 0):
        raise ValueError("p_t must be non-negative")
    out = p_t / (p_t + 1.0)
    return out if out.ndim else float(out)


def zpl_purcell_bound(p_t: float, dw: float) -> float:
    """Lower bound on the ZPL Purcell factor, ``P_t / DW``."""
    if not 0 < dw <= 1:
        raise ValueError("dw must lie in (0, 1]")
    return p_t / dw


def qe_lower_bound(p_t: float, dw: float, p_sim_unity_qe: float = SIMULATED_ZPL_PURCELL) -> float:
    """Smallest quantum efficiency consistent with the measured enhancement.

    The measurement implies ``P_ZPL >= P_t / (DW eta)`` while the simulated
    ceiling scales as ``eta P_sim``; they cross at ``sqrt(P_t / (DW P_sim))``.

    Raises
    ------
    ValueError
        If the square-root argument exceeds 1 (no feasible efficiency).
    """
    if not p_sim_unity_qe > 0:
        raise ValueError("p_sim_unity_qe must be positive")
    if not 0 < dw <= 1:
        raise ValueError("dw must lie in (0, 1]")
    arg = p_t / (dw * p_sim_unity_qe)
    if arg > 1.0:
        raise ValueError(
            f"infeasible: P_t / (DW P_sim) = {arg:.3g} > 1, the simulated ceiling cannot explain the enhancement"
        )
    return math.sqrt(arg)


def local_field_factor(n_host: float) -> float:
    """Local-field correction ``(3 n^2 / (2 n^2 + 1))^2``."""
    return (3.0 * n_host**2 / (2.0 * n_host**2 + 1.0)) ** 2


def dipole_moment(dw: float, eta_qe: float, gamma0: float, omega: float, n_host: float = SILICON_INDEX) -> float:
    """Transition dipole (C m) from the ZPL radiative rate.

    Solves ``DW eta_qe Gamma_0 = L n d^2 w^3 / (3 pi eps0 hbar c^3)`` with the
    local-field factor ``L`` and all rates angular.
    """
    gamma_zpl = TWO_PI * dw * eta_qe * gamma0
    w = TWO_PI * omega
    denom = local_field_factor(n_host) * n_host * w**3
    return math.sqrt(gamma_zpl * 3.0 * math.pi * EPSILON_0 * HBAR * SPEED_OF_LIGHT**3 / denom)


def zpl_rate_from_dipole(d: float, omega: float, n_host: float = SILICON_INDEX) -> float:
    """Inverse of :func:`dipole_moment`: the ZPL rate (Hz) radiated by dipole ``d``."""
    w = TWO_PI * omega
    rate = local_field_factor(n_host) * n_host * d**2 * w**3 / (3.0 * math.pi * EPSILON_0 * HBAR * SPEED_OF_LIGHT**3)
    return rate / TWO_PI


def coupling_from_sim_purcell(p_sim, kappa_tilde, gamma0):
    """Coupling ``g = sqrt(P_sim kappa_tilde Gamma_0) / 2`` (Hz)."""
    out = np.sqrt(np.asarray(p_sim, dtype=float) * kappa_tilde * gamma0) / 2.0
    return out if out.ndim else float(out)


def kappa_tilde_approx(kappa, gamma_d):
    """Dephasing-broadened width ``kappa + 2 Gamma_d``."""
    return kappa + 2.0 * gamma_d


# ---------------------------------------------------------- photon budget
def system_efficiency(chain: EfficiencyChain) -> float:
    """``eta_cav eta_gc eta_path eta_snspd``."""
    return chain.eta_cav * chain.eta_gc * chain.eta_path * chain.eta_snspd


def waveguide_system_efficiency(chain: EfficiencyChain) -> float:
    """``eta_wg eta_col eta_path eta_snspd`` for an emitter in a bare waveguide."""
    if chain.eta_wg is None or chain.eta_col is None:
        raise ValueError("waveguide chain needs eta_wg and eta_col")
    return chain.eta_wg * chain.eta_col * chain.eta_path * chain.eta_snspd


def eta_cav_from_reflection(r: float, over_coupled: bool = False) -> float:
    """Cavity-to-waveguide fraction from the on/off-resonance reflection ratio.

    Inverts ``R = (1 - 2 eta)^2`` on the under-coupled branch
    ``eta = (1 - sqrt R) / 2``; ``over_coupled=True`` returns the other root.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"reflection ratio must lie in [0, 1], got {r!r}")
    root = math.sqrt(r)
    return (1.0 + root) / 2.0 if over_coupled else (1.0 - root) / 2.0


def saturation_counts(eta_sys: float, beta: float, t0: float, tau: float) -> float:
    """Saturated detections per pulse, ``0.5 eta_sys beta exp(-t0 / tau)``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return 0.5 * eta_sys * beta * math.exp(-t0 / tau)


class WaveguideBounds(NamedTuple):
    lower: float
    upper: float
    infeasible: bool


def waveguide_efficiency_bounds(c_sat, t0, tau, eta_col, eta_path, eta_snspd, eta_qe_range) -> WaveguideBounds:
    """Bounds on the waveguide efficiency implied by a saturated count level.

    ``eta_wg(eta_qe) = c_sat exp(t0 / tau) / (0.5 eta_qe eta_col eta_path eta_snspd)``;
    the upper bound comes from the lowest quantum efficiency. ``infeasible``
    is set when the upper bound exceeds 1.
    """
    lo_qe, hi_qe = map(float, eta_qe_range)
    if not c_sat > 0:
        raise ValueError("c_sat must be positive")
    if not (0 < lo_qe <= hi_qe <= 1):
        raise ValueError("eta_qe_range must satisfy 0 < lo <= hi <= 1")
    base = c_sat * math.exp(t0 / tau) / (0.5 * eta_col * eta_path * eta_snspd)
    lower, upper = base / hi_qe, base / lo_qe
    return WaveguideBounds(lower, upper, upper > 1.0)


# ------------------------------------------------------------ spectroscopy
def g2_snr_limit(a):
    """Background-limited ``g2(0) = (2A + 1) / (A + 1)^2`` for signal-to-background ``A``."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("signal-to-background ratio must be non-negative")
    # 1 - (A / (A + 1))^2 equals the ratio above and cannot round past 1
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(a), 0.0, 1.0 - (a / (a + 1.0)) ** 2)
    return out if out.ndim else float(out)


def zeeman_amplitude(b, m: ZeemanModel):
    """Relative PLE amplitude at field ``b`` (T): ``G^2 / (G^2 + (|dg| mu_B B / h)^2)``."""
    split = m.delta_g * m.mu_b_over_h * np.asarray(b, dtype=float)
    out = m.linewidth**2 / (m.linewidth**2 + split**2)
    return out if np.ndim(out) else float(out)


def thermal_linewidth(t, m: ThermalModel):
    """``Gamma(T) = p0 + p_t_coeff / (exp(e_a / k_B T) - 1)`` in Hz; ``T = 0`` gives ``p0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("temperature must be non-negative")
    with np.errstate(divide="ignore", over="ignore"):
        x = np.where(t > 0, m.e_a / (m.k_b * np.where(t > 0, t, 1.0)), np.inf)
        out = m.p0 + m.p_t_coeff / np.expm1(x)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class NearestNeighbour:
    """Nearest-neighbour statistics of randomly placed spins with density ``rho`` (nm^-3)."""

    rho_nm3: float

    @property
    def mean_separation(self) -> float:
        """Mean nearest-neighbour distance in nm, ``Gamma(4/3) (4 pi rho / 3)^(-1/3)``."""
        return math.gamma(4.0 / 3.0) * (4.0 * math.pi * self.rho_nm3 / 3.0) ** (-1.0 / 3.0)

    def pdf(self, r_nm):
        """``w(r) = 4 pi rho r^2 exp(-(4 pi rho / 3) r^3)`` in nm^-1."""
        r = np.asarray(r_nm, dtype=float)
        return 4.0 * math.pi * self.rho_nm3 * r**2 * np.exp(-(4.0 * math.pi * self.rho_nm3 / 3.0) * r**3)


def nuclear_spin_separation(rho_cm3: float) -> tuple[float, NearestNeighbour]:
    """Mean nearest-neighbour separation (nm) for a spin density in cm^-3, plus its distribution."""
    if not rho_cm3 > 0:
        raise ValueError("density must be positive")
    nn = NearestNeighbour(rho_cm3 * 1e-21)
    return nn.mean_separation, nn
