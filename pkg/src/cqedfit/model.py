"""Driven emitter-cavity model and the simulated observables built on it.

The emitter is a two-level system coupled to one cavity mode and driven
semiclassically by a rectangular laser pulse. In the frame rotating at the
laser frequency::

    H = D_a s+s- + D_c a^+a + g (s+ a + s- a^+) + (W/2)(s+ + s-)

with ``D_a = w_a - w_L``, ``D_c = w_c - w_L`` and Rabi frequency
``W = 2 g sqrt(N_ph)``, where ``N_ph`` is the empty-cavity photon number the
laser would build up. Losses are cavity decay ``sqrt(kappa) a``, spontaneous
emission ``sqrt(gamma0) s-`` and pure dephasing ``sqrt(gamma_d / 2) s_z``.
Spectral diffusion is a static Gaussian spread of the emitter frequency
(FWHM ``2 gamma_sd``), averaged over with a fixed quadrature.

Every public quantity is in ordinary units (Hz, s, W); the factor of 2 pi is
applied inside.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from . import quantum
from ._solver import PulseSolver
from .constants import FWHM_PER_SIGMA, HBAR, TWO_PI
from .curve import SimCurve
from .curvefit import FitError, fit_exponential, fit_gaussian
from .quantum import TRUNCATION_TOL, HilbertSpace, TruncationError

MAX_N_MAX = 16


class ModelWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SystemParams:
    """Rates and detunings of the emitter-cavity system, in Hz (not rad/s).

    ``delta_ac`` is the cavity-emitter detuning ``w_c - w_a``.
    """

    g: float
    kappa: float
    gamma0: float
    gamma_d: float = 0.0
    gamma_sd: float = 0.0
    omega_a: float = 226.141974e12
    eta_cav: float = 0.358
    delta_ac: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa", "gamma0", "omega_a"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        for name in ("gamma_d", "gamma_sd"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative, got {v!r}")
        if not (0.0 <= self.eta_cav <= 0.5):
            raise ValueError(f"eta_cav must lie in [0, 0.5] (under-coupled), got {self.eta_cav!r}")
        if not math.isfinite(self.delta_ac):
            raise ValueError("delta_ac must be finite")
        if self.g >= self.kappa:
            warnings.warn(
                f"g = {self.g:.3g} Hz is not below kappa = {self.kappa:.3g} Hz; "
                "outside the bad-cavity regime the model's assumptions weaken",
                ModelWarning,
                stacklevel=3,
            )

    @property
    def omega_c(self) -> float:
        return self.omega_a + self.delta_ac

    def replace(self, **changes) -> SystemParams:
        return replace(self, **changes)

    @classmethod
    def reference(cls) -> SystemParams:
        """Best-fit parameters of the cavity-coupled emitter studied in the source experiment."""
        return cls(
            g=42.4e6,
            kappa=5.22e9,
            gamma0=169.3e3,
            gamma_d=0.645e9,
            gamma_sd=1.69e9,
            omega_a=226.141974e12,
            eta_cav=0.358,
            delta_ac=0.0,
        )


@dataclass(frozen=True)
class DriveSpec:
    """Laser pulse and detection settings.

    ``omega_l`` is the absolute laser frequency in Hz; ``t0`` is the dead time
    after the pulse before photons are counted.
    """

    p_in: float
    omega_l: float
    pulse_width: float = 900e-9
    repetition_period: float = 8e-6
    t0: float = 170e-9
    eta_sys: float = 0.091

    def __post_init__(self):
        if not (math.isfinite(self.p_in) and self.p_in >= 0):
            raise ValueError(f"p_in must be non-negative, got {self.p_in!r}")
        if not (self.pulse_width > 0):
            raise ValueError("pulse_width must be positive")
        if not (self.pulse_width < self.repetition_period):
            raise ValueError("pulse_width must be shorter than repetition_period")
        if not (self.t0 >= 0):
            raise ValueError("t0 must be non-negative")
        if self.pulse_width + self.t0 > self.repetition_period:
            raise ValueError("collection window starts after the repetition period ends")
        if not (0.0 <= self.eta_sys <= 1.0):
            raise ValueError("eta_sys must lie in [0, 1]")

    @property
    def collection_window(self) -> tuple[float, float]:
        """Start and end of photon counting, in seconds from the pulse start."""
        return (self.pulse_width + self.t0, self.repetition_period)

    def replace(self, **changes) -> DriveSpec:
        return replace(self, **changes)


@dataclass(frozen=True)
class ModelSettings:
    """Numerical knobs: Fock cutoff, diffusion quadrature size, trace sampling, worker threads."""

    n_max: int = 2
    n_quad: int = 21
    dt_record: float = 1e-9
    threads: int = 1
    auto_truncation: bool = True

    def __post_init__(self):
        if not (1 <= self.n_max <= MAX_N_MAX):
            raise ValueError(f"n_max must lie in [1, {MAX_N_MAX}]")
        if self.n_quad < 3 or self.n_quad % 2 == 0:
            raise ValueError("n_quad must be odd and at least 3")
        if not self.dt_record > 0:
            raise ValueError("dt_record must be positive")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass(frozen=True)
class DiffusionQuadrature:
    """Static emitter-frequency offsets (Hz) and their normalised weights."""

    offsets: np.ndarray
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if off.shape != w.shape or off.ndim != 1:
            raise ValueError("offsets and weights must be 1-D arrays of equal length")
        if abs(w.sum() - 1.0) > 1e-12 or np.any(w < 0):
            raise ValueError("weights must be non-negative and sum to 1")
        if not np.allclose(off, -off[::-1], rtol=0, atol=1e-9 * max(1.0, np.abs(off).max())):
            raise ValueError("offsets must be symmetric about zero")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "weights", w)

    def mean(self) -> float:
        return float(self.weights @ self.offsets)

    def variance(self) -> float:
        return float(self.weights @ (self.offsets - self.mean()) ** 2)


# ------------------------------------------------------------------ building blocks
def intracavity_photons(drive: DriveSpec, params: SystemParams) -> float:
    """Mean photon number the laser builds up in the empty cavity.

    ``N_ph = 4 (eta_cav / kappa) / (1 + (2 D_c / kappa)^2) * P_in / (hbar w_a)``
    with ``D_c = w_c - w_L`` (all in angular units).
    """
    kappa = TWO_PI * params.kappa
    d_c = TWO_PI * (params.omega_c - drive.omega_l)
    flux = drive.p_in / (HBAR * TWO_PI * params.omega_a)
    return 4.0 * (params.eta_cav / kappa) / (1.0 + (2.0 * d_c / kappa) ** 2) * flux


def rabi_frequency(n_ph: float, g: float) -> float:
    """``W = 2 g sqrt(N_ph)``; same units as ``g``."""
    if n_ph < 0:
        raise ValueError("photon number must be non-negative")
    return 2.0 * g * math.sqrt(n_ph)


def build_hamiltonian(params: SystemParams, omega_l: float, omega_rabi: float, hs: HilbertSpace, delta_offset: float = 0.0):
    """Hamiltonian over hbar in rad/s, in the frame rotating at ``omega_l``.

    ``delta_offset`` (Hz) shifts the emitter frequency, as used by the
    spectral-diffusion average.
    """
    d_a = TWO_PI * (params.omega_a + delta_offset - omega_l)
    d_c = TWO_PI * (params.omega_c - omega_l)
    g = TWO_PI * params.g
    om = TWO_PI * omega_rabi
    return (
        d_a * hs.atom_excitation
        + d_c * hs.photon_number
        + g * (hs.sigma_plus @ hs.a + hs.sigma_minus @ hs.a_dag)
        + 0.5 * om * (hs.sigma_plus + hs.sigma_minus)
    )


def jump_operators(params: SystemParams, hs: HilbertSpace) -> list[np.ndarray]:
    """``[sqrt(kappa) a, sqrt(gamma0) s-, sqrt(gamma_d / 2) s_z]`` with rates in rad/s."""
    return [
        math.sqrt(TWO_PI * params.kappa) * hs.a,
        math.sqrt(TWO_PI * params.gamma0) * hs.sigma_minus,
        math.sqrt(TWO_PI * params.gamma_d / 2.0) * hs.sigma_z,
    ]


def gaussian_quadrature_for_diffusion(gamma_sd: float, n_points: int = 21) -> DiffusionQuadrature:
    """Uniform grid over +-2.5 sigma with Gaussian weights, ``sigma = 2 gamma_sd / (2 sqrt(2 ln 2))``.

    ``gamma_sd = 0`` collapses to a single point at zero offset.
    """
    if n_points < 3 or n_points % 2 == 0:
        raise ValueError("n_points must be odd and at least 3")
    if gamma_sd < 0:
        raise ValueError("gamma_sd must be non-negative")
    if gamma_sd == 0:
        return DiffusionQuadrature(np.zeros(1), np.ones(1))
    sigma = 2.0 * gamma_sd / FWHM_PER_SIGMA
    offsets = np.linspace(-2.5 * sigma, 2.5 * sigma, n_points)
    offsets[n_points // 2] = 0.0
    offsets = 0.5 * (offsets - offsets[::-1])
    w = np.exp(-0.5 * (offsets / sigma) ** 2)
    return DiffusionQuadrature(offsets, w / w.sum())


def liouvillians(params: SystemParams, drive: DriveSpec, hs: HilbertSpace, delta_offset: float = 0.0):
    """Drive-on and drive-off generators for one diffusion offset."""
    om = rabi_frequency(intracavity_photons(drive, params), params.g)
    jumps = jump_operators(params, hs)
    l_on = quantum.build_liouvillian(build_hamiltonian(params, drive.omega_l, om, hs, delta_offset), jumps)
    l_off = quantum.build_liouvillian(build_hamiltonian(params, drive.omega_l, 0.0, hs, delta_offset), jumps)
    return l_on, l_off


# ------------------------------------------------------------------ batched engine
@lru_cache(maxsize=None)
def _solver(fock_dim: int) -> PulseSolver:
    return PulseSolver(fock_dim)


def _member_rates(points, quad: DiffusionQuadrature) -> np.ndarray:
    """Angular rates for every (point, offset) pair, point-major."""
    rows = []
    for params, drive in points:
        om = rabi_frequency(intracavity_photons(drive, params), params.g)
        base = [
            0.0,
            TWO_PI * (params.omega_c - drive.omega_l),
            TWO_PI * params.g,
            TWO_PI * om,
            TWO_PI * params.kappa,
            TWO_PI * params.gamma0,
            TWO_PI * params.gamma_d,
        ]
        d_a = TWO_PI * (params.omega_a - drive.omega_l)
        for off in quad.offsets:
            row = list(base)
            row[0] = d_a + TWO_PI * off
            rows.append(row)
    return np.array(rows, dtype=float)


def _simulate_points(points, settings: ModelSettings, with_trace: bool):
    """Counts (and optionally traces) for a list of ``(SystemParams, DriveSpec)``.

    All points must share pulse timing, detection efficiency and the spread of
    spectral diffusion.
    """
    if not points:
        return np.zeros(0), None, None
    ref_params, ref_drive = points[0]
    for p, d in points[1:]:
        if (d.pulse_width, d.repetition_period, d.t0, d.eta_sys) != (
            ref_drive.pulse_width,
            ref_drive.repetition_period,
            ref_drive.t0,
            ref_drive.eta_sys,
        ) or p.gamma_sd != ref_params.gamma_sd:
            raise ValueError("batched points must share pulse timing, eta_sys and gamma_sd")

    quad = gaussian_quadrature_for_diffusion(ref_params.gamma_sd, settings.n_quad)
    q = quad.weights.size
    rates = _member_rates(points, quad)
    decay_len = ref_drive.repetition_period - ref_drive.pulse_width
    window = (ref_drive.t0, decay_len)
    samples = None
    if with_trace:
        n = int(math.floor(decay_len / settings.dt_record * (1 + 1e-12)))
        samples = settings.dt_record * np.arange(n + 1)

    n_max = settings.n_max
    while True:
        solver = _solver(n_max + 1)
        chunks = np.array_split(np.arange(len(points)), min(settings.threads, len(points)))

        def run(idx):
            members = (idx[:, None] * q + np.arange(q)).reshape(-1)
            groups = np.arange(idx.size * q).reshape(idx.size, q)
            return solver.run(rates[members], groups, quad.weights, ref_drive.pulse_width, window, samples)

        if len(chunks) == 1:
            results = [run(chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                results = list(pool.map(run, chunks))
        top = np.concatenate([r.top_population for r in results])
        worst = float(top.max())
        if worst <= TRUNCATION_TOL:
            break
        if not settings.auto_truncation or 2 * n_max > MAX_N_MAX:
            raise TruncationError(worst, n_max + 1)
        n_max *= 2

    eta = ref_drive.eta_sys
    counts = eta * np.concatenate([r.counts for r in results])
    traces = eta * np.concatenate([r.trace for r in results]) if with_trace else None
    info = {"n_max": n_max, "top_population": worst, "ill_conditioned": sum(r.ill_conditioned for r in results)}
    if with_trace:
        info["times"] = ref_drive.pulse_width + samples
    return counts, traces, info


# ------------------------------------------------------------------ observables
def simulate_pulse_cycle(params: SystemParams, drive: DriveSpec, settings: ModelSettings | None = None):
    """One excitation cycle: drive for ``pulse_width``, then free decay.

    Returns
    -------
    trace : SimCurve
        Detected photon rate ``eta_sys kappa <a^+ a>`` (1/s), diffusion
        averaged, from the end of the pulse to the end of the period. ``x`` is
        time since the pulse started.
    counts : float
        Expected detections per pulse: the rate integrated (in closed form)
        over the collection window ``[pulse_end + t0, period]``.
    """
    settings = settings or ModelSettings()
    counts, traces, info = _simulate_points([(params, drive)], settings, with_trace=True)
    start, stop = drive.collection_window
    trace = SimCurve(
        info["times"],
        traces[0],
        meta={
            "x_label": "time",
            "x_unit": "s",
            "y_label": "detected rate",
            "y_unit": "1/s",
            "pulse_end": drive.pulse_width,
            "collection_start": start,
            "collection_stop": stop,
            "n_max": info["n_max"],
        },
    )
    return trace, float(counts[0])


def extract_decay_rate(trace: SimCurve, fit_start: float | None = None) -> tuple[float, float]:
    """Single-exponential (no offset) decay rate of a simulated trace.

    The fit covers ``x >= fit_start`` (default: the trace's
    ``collection_start`` metadata, else its first sample). The rate is
    returned as an ordinary frequency, ``k / 2 pi`` in Hz, so that it
    compares directly with ``SystemParams.gamma0``; the lifetime is
    ``1 / (2 pi rate)``.

    A tail that has decayed below ``1e-12`` of the window's peak carries no
    weight in the least squares (and the solver truncates modes once they
    have decayed by ``e^-40``), so the window ends at the first such sample.

    Raises
    ------
    FitError
        Non-positive data in the window, or a rate indistinguishable from 0.
    """
    if fit_start is None:
        fit_start = trace.meta.get("collection_start", trace.x[0])
    win = trace.window(fit_start - 1e-15)
    if len(win) and np.max(win.y) > 0:
        faint = np.flatnonzero(win.y <= 1e-12 * np.max(win.y))
        if faint.size and np.all(win.y[faint[0] :] <= 1e-12 * np.max(win.y)):
            win = SimCurve(win.x[: faint[0]], win.y[: faint[0]], None, win.meta)
    if len(win) < 3:
        raise FitError("fewer than three samples in the fit window")
    if np.any(win.y <= 0):
        raise FitError("trace must be strictly positive over the fit window")
    res = fit_exponential(win, offset=False)
    if not res.converged:
        warnings.warn("decay fit did not converge", ModelWarning, stacklevel=2)
    return res["rate"] / TWO_PI, res.error("rate") / TWO_PI


def ple_spectrum(params: SystemParams, drive: DriveSpec, scan, settings: ModelSettings | None = None) -> SimCurve:
    """Counts per pulse versus absolute laser frequency ``scan`` (Hz).

    The intracavity photon number, and hence the Rabi frequency, is
    recomputed at each laser frequency since the laser-cavity detuning moves
    while ``delta_ac`` stays fixed.
    """
    settings = settings or ModelSettings()
    scan = np.asarray(scan, dtype=float)
    if drive.p_in == 0:
        warnings.warn("zero drive power: the spectrum is identically zero", ModelWarning, stacklevel=2)
    points = [(params, drive.replace(omega_l=float(w))) for w in scan]
    counts, _, info = _simulate_points(points, settings, with_trace=False)
    return SimCurve(
        scan,
        counts,
        meta={
            "x_label": "laser frequency",
            "x_unit": "Hz",
            "y_label": "counts per pulse",
            "y_unit": "",
            "p_in": drive.p_in,
            "delta_ac": params.delta_ac,
            "n_max": info["n_max"],
        },
    )


def default_ple_scan(params: SystemParams, n_points: int = 81, linewidth: float | None = None) -> np.ndarray:
    """Laser frequencies spanning +-2.5 linewidths around the emitter.

    Without an explicit ``linewidth`` the estimate combines dephasing and
    Purcell broadening with the diffusion FWHM in quadrature.
    """
    if linewidth is None:
        homogeneous = 2 * params.gamma_d + params.gamma0 + 4 * params.g**2 / params.kappa
        linewidth = math.hypot(homogeneous, 2 * params.gamma_sd)
    return params.omega_a + np.linspace(-2.5, 2.5, n_points) * linewidth


def ple_linewidth(curve: SimCurve):
    """Gaussian fit of a PLE spectrum: returns the :class:`FitResult`."""
    return fit_gaussian(curve)


def saturation_curve(params: SystemParams, drive_template: DriveSpec, powers, settings: ModelSettings | None = None) -> SimCurve:
    """Counts per pulse versus input power (W), laser on the emitter line (``omega_l = omega_a``).

    ``meta["asymptote"]`` is the count level at high power (the larger of
    1 uW and ten times the highest power requested) and
    ``meta["half_saturation_power"]`` the power giving half of it.
    """
    settings = settings or ModelSettings()
    powers = np.asarray(powers, dtype=float)
    drive = drive_template.replace(omega_l=params.omega_a)
    points = [(params, drive.replace(p_in=float(p))) for p in powers]
    counts, _, info = _simulate_points(points, settings, with_trace=False)

    p_high = max(1e-6, 10 * float(powers.max()) if powers.size else 1e-6)
    asym = saturation_level(params, drive, p_high, settings)
    p_half = half_saturation_power(params, drive, asym, settings)
    return SimCurve(
        powers,
        counts,
        meta={
            "x_label": "input power",
            "x_unit": "W",
            "y_label": "counts per pulse",
            "y_unit": "",
            "asymptote": asym,
            "asymptote_power": p_high,
            "half_saturation_power": p_half,
            "n_max": info["n_max"],
        },
    )


def saturation_level(params, drive, p_high=1e-6, settings=None) -> float:
    settings = settings or ModelSettings()
    counts, _, _ = _simulate_points([(params, drive.replace(p_in=p_high))], settings, with_trace=False)
    return float(counts[0])


def half_saturation_power(params, drive, asymptote, settings=None, p_lo=1e-15, p_hi=1e-6) -> float:
    """Power at which the counts reach half of ``asymptote`` (bisection in log power)."""
    settings = settings or ModelSettings()

    def excess(log_p):
        c, _, _ = _simulate_points([(params, drive.replace(p_in=math.exp(log_p)))], settings, with_trace=False)
        return float(c[0]) - 0.5 * asymptote

    lo, hi = math.log(p_lo), math.log(p_hi)
    if excess(lo) > 0 or excess(hi) < 0:
        return math.nan
    return math.exp(brentq(excess, lo, hi, xtol=1e-6))


def decay_vs_detuning(params: SystemParams, drive: DriveSpec, detunings, settings: ModelSettings | None = None) -> SimCurve:
    """Decay-rate enhancement ``Gamma_cav / gamma0`` against cavity detuning (Hz).

    The laser sits on the emitter line; each trace is fitted from
    ``pulse_end + t0`` onward with a single exponential. ``meta`` carries
    the counts, decay rates (Hz), lifetimes (s) and the fit errors of the
    enhancement for every detuning.
    """
    settings = settings or ModelSettings()
    detunings = np.asarray(detunings, dtype=float)
    drive = drive.replace(omega_l=params.omega_a)
    points = [(params.replace(delta_ac=float(d)), drive) for d in detunings]
    counts, traces, info = _simulate_points(points, settings, with_trace=True)
    start = drive.collection_window[0]
    rates = np.empty(detunings.size)
    errs = np.empty(detunings.size)
    for i in range(detunings.size):
        rates[i], errs[i] = extract_decay_rate(SimCurve(info["times"], traces[i]), start)
    ratios = rates / params.gamma0
    return SimCurve(
        detunings,
        ratios,
        meta={
            "x_label": "cavity detuning",
            "x_unit": "Hz",
            "y_label": "decay enhancement",
            "y_unit": "",
            "counts": counts.tolist(),
            "rates": rates.tolist(),
            "lifetimes": (1.0 / (TWO_PI * rates)).tolist(),
            "fit_errors": (errs / params.gamma0).tolist(),
            "n_max": info["n_max"],
        },
    )


@dataclass(frozen=True)
class SpectrumMap:
    """Counts per pulse on a (cavity detuning, laser frequency) grid."""

    detunings: np.ndarray
    scans: np.ndarray  # (rows, cols) laser frequencies per row
    counts: np.ndarray  # (rows, cols)

    def row(self, i: int) -> SimCurve:
        return SimCurve(self.scans[i], self.counts[i])


def spectrum_map_2d(params: SystemParams, drive: DriveSpec, detunings, scans, settings: ModelSettings | None = None) -> SpectrumMap:
    """PLE spectra for each cavity detuning.

    ``scans`` is either one scan shared by every row or one scan per row.
    Each row is exactly what :func:`ple_spectrum` returns for that detuning.
    """
    settings = settings or ModelSettings()
    detunings = np.asarray(detunings, dtype=float)
    scans = np.asarray(scans, dtype=float)
    if scans.ndim == 1:
        scans = np.tile(scans, (detunings.size, 1))
    if scans.shape[0] != detunings.size:
        raise ValueError("need one scan per detuning row")
    rows = [ple_spectrum(params.replace(delta_ac=float(d)), drive, scans[i], settings).y for i, d in enumerate(detunings)]
    return SpectrumMap(detunings, scans, np.array(rows))


def dead_time_correction(t0: float, lifetime: float) -> float:
    """Factor ``exp(t0 / tau)`` that restores counts lost during the dead time."""
    return math.exp(t0 / lifetime)
