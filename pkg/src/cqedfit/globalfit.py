"""Joint fit of the coupling, dephasing and spectral diffusion to three datasets.

The datasets are

``saturation``
    counts per pulse versus input power (laser on the emitter line);
``linewidth_vs_power``
    Gaussian FWHM of the PLE spectrum (Hz) versus input power;
``decay_vs_detuning``
    decay-rate enhancement ``Gamma_cav / gamma0`` versus cavity detuning (Hz).

The cost is ``sum_d weight_d sum_i ((model_i - data_i) / max|data_d|)^2``.
The saturation model carries a constant additive background (emission from
other, weakly coupled emitters), solved in closed form at every evaluation.
Minimisation is basin hopping over Nelder-Mead in coordinates rescaled to
the unit box, so the default hop step of 0.2 is 20 % of every range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curve import SimCurve
from .curvefit import FitError, fit_gaussian
from .model import (
    DriveSpec,
    ModelSettings,
    SystemParams,
    _simulate_points,
    decay_vs_detuning,
)
from .optimize import FitResult, Objective, basin_hopping
from .quantum import TruncationError

FREE_NAMES = ("g", "gamma_d", "gamma_sd")
DATASETS = ("saturation", "linewidth_vs_power", "decay_vs_detuning")

DEFAULT_BOUNDS = {
    "g": (10e6, 150e6),
    "gamma_d": (0.05e9, 2.5e9),
    "gamma_sd": (0.0, 4.0e9),
}


def default_linewidth_scan() -> np.ndarray:
    """Laser offsets from the emitter (Hz) used to measure each PLE linewidth."""
    return np.linspace(-15e9, 15e9, 25)


@dataclass
class GlobalFitConfig:
    """Settings of a global fit.

    ``base`` supplies every fixed system parameter (kappa, gamma0, eta_cav,
    omega_a) and the starting values of the free ones unless ``initial``
    overrides them. Names listed in ``fixed`` are held at their starting value.
    """

    base: SystemParams = field(default_factory=SystemParams.reference)
    drive: DriveSpec | None = None
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    initial: dict = field(default_factory=dict)
    fixed: tuple = ()
    weights: dict = field(default_factory=lambda: {k: 1.0 for k in DATASETS})
    n_hops: int = 25
    step_fraction: float = 0.2
    temperature: float = 1.0
    seed: int = 0
    settings: ModelSettings = field(default_factory=ModelSettings)
    linewidth_scan: np.ndarray = field(default_factory=default_linewidth_scan)
    decay_power: float = 1.21e-9
    fit_background: bool = True
    local_tol: float = 1e-9
    local_xtol: float = 1e-4
    local_max_eval: int = 300
    uncertainties: bool = True

    def __post_init__(self):
        if self.drive is None:
            self.drive = DriveSpec(p_in=0.0, omega_l=self.base.omega_a)
        for name, (lo, hi) in self.bounds.items():
            if name not in FREE_NAMES:
                raise ValueError(f"unknown fit parameter {name!r}")
            if not lo < hi:
                raise ValueError(f"bounds for {name} need lo < hi")
        for name in FREE_NAMES:
            if name not in self.bounds:
                raise ValueError(f"missing bounds for {name}")
        for name in self.fixed:
            if name not in FREE_NAMES:
                raise ValueError(f"cannot fix unknown parameter {name!r}")
        for k, w in self.weights.items():
            if k not in DATASETS:
                raise ValueError(f"unknown dataset {k!r}")
            if not w > 0:
                raise ValueError("dataset weights must be positive")
        if not self.decay_power > 0:
            raise ValueError("decay_power must be positive")
        if self.n_hops < 0:
            raise ValueError("n_hops must be non-negative")
        if not self.step_fraction > 0:
            raise ValueError("step_fraction must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        self.linewidth_scan = np.asarray(self.linewidth_scan, dtype=float)

    @property
    def free(self) -> tuple:
        return tuple(n for n in FREE_NAMES if n not in self.fixed)

    def start(self) -> dict:
        values = {n: getattr(self.base, n) for n in FREE_NAMES}
        values.update(self.initial)
        for n in self.free:
            lo, hi = self.bounds[n]
            if not lo <= values[n] <= hi:
                raise ValueError(f"initial {n} = {values[n]!r} lies outside its bounds")
        return values


# ------------------------------------------------------------- dataset models
def model_saturation(params: SystemParams, drive: DriveSpec, powers, settings: ModelSettings) -> np.ndarray:
    drive = drive.replace(omega_l=params.omega_a)
    points = [(params, drive.replace(p_in=float(p))) for p in np.asarray(powers, dtype=float)]
    counts, _, _ = _simulate_points(points, settings, with_trace=False)
    return counts


def model_linewidths(params: SystemParams, drive: DriveSpec, powers, scan_offsets, settings: ModelSettings) -> np.ndarray:
    """Gaussian FWHM (Hz) of the simulated PLE line at each power."""
    powers = np.asarray(powers, dtype=float)
    scan = params.omega_a + np.asarray(scan_offsets, dtype=float)
    points = [(params, drive.replace(p_in=float(p), omega_l=float(w))) for p in powers for w in scan]
    counts, _, _ = _simulate_points(points, settings, with_trace=False)
    counts = counts.reshape(powers.size, scan.size)
    out = np.empty(powers.size)
    for i in range(powers.size):
        res = fit_gaussian(SimCurve(scan, counts[i]))
        if res.flags.get("degenerate"):
            raise FitError("flat PLE spectrum")
        out[i] = abs(res["fwhm"])
    return out


def model_decay(params: SystemParams, drive: DriveSpec, detunings, settings: ModelSettings) -> np.ndarray:
    return decay_vs_detuning(params, drive, detunings, settings).y


def evaluate_models(params: SystemParams, datasets: dict, cfg: GlobalFitConfig) -> dict:
    """Model values at the abscissae of each dataset (no background)."""
    s = cfg.settings
    out = {}
    if "saturation" in datasets:
        out["saturation"] = model_saturation(params, cfg.drive, datasets["saturation"].x, s)
    if "linewidth_vs_power" in datasets:
        out["linewidth_vs_power"] = model_linewidths(
            params, cfg.drive, datasets["linewidth_vs_power"].x, cfg.linewidth_scan, s
        )
    if "decay_vs_detuning" in datasets:
        drive = cfg.drive.replace(p_in=cfg.decay_power)
        out["decay_vs_detuning"] = model_decay(params, drive, datasets["decay_vs_detuning"].x, s)
    return out


def _background(data: np.ndarray, model: np.ndarray) -> float:
    """Least-squares constant offset, constrained to be non-negative."""
    return max(0.0, float(np.mean(data - model)))


class _Cost:
    """Normalised weighted least-squares cost over the unit box of the free parameters."""

    def __init__(self, datasets: dict, cfg: GlobalFitConfig):
        self.datasets = datasets
        self.cfg = cfg
        self.free = cfg.free
        self.start = cfg.start()
        self.lo = np.array([cfg.bounds[n][0] for n in self.free])
        self.hi = np.array([cfg.bounds[n][1] for n in self.free])
        self.scale = {k: float(np.max(np.abs(c.y))) for k, c in datasets.items()}

    def to_values(self, z) -> dict:
        values = dict(self.start)
        values.update(zip(self.free, self.lo + np.asarray(z) * (self.hi - self.lo)))
        return values

    def to_unit(self, values: dict) -> np.ndarray:
        return np.array([(values[n] - lo) / (hi - lo) for n, lo, hi in zip(self.free, self.lo, self.hi)])

    def params(self, z) -> SystemParams:
        return self.cfg.base.replace(**self.to_values(z))

    def breakdown(self, z):
        """Per-dataset normalised residual vectors, model values and background."""
        models = evaluate_models(self.params(z), self.datasets, self.cfg)
        bg = 0.0
        if "saturation" in models and self.cfg.fit_background:
            bg = _background(self.datasets["saturation"].y, models["saturation"])
            models["saturation"] = models["saturation"] + bg
        resid = {k: (models[k] - self.datasets[k].y) / self.scale[k] for k in models}
        return resid, models, bg

    def __call__(self, z) -> float:
        try:
            resid, _, _ = self.breakdown(z)
        except (TruncationError, FitError, FloatingPointError, np.linalg.LinAlgError):
            return math.inf
        total = sum(self.cfg.weights.get(k, 1.0) * float(np.sum(r**2)) for k, r in resid.items())
        return total if math.isfinite(total) else math.inf


def _hessian(f, z, h=1e-3):
    n = z.size
    f0 = f(z)
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (f(z + ei) - 2 * f0 + f(z - ei)) / h**2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h
            hess[i, j] = hess[j, i] = (f(z + ei + ej) - f(z + ei - ej) - f(z - ei + ej) + f(z - ei - ej)) / (4 * h * h)
    return hess


def global_cqed_fit(datasets: dict, cfg: GlobalFitConfig | None = None) -> FitResult:
    """Fit ``(g, gamma_d, gamma_sd)`` jointly to the three datasets.

    Returns a :class:`FitResult` whose ``params`` are the free parameters in
    Hz (order of ``cfg.free``). ``residuals`` holds the norm of the
    normalised residuals per dataset; ``extra`` holds the fixed values, the
    saturation background and the model evaluated on each dataset's
    abscissa. Uncertainties (``stderr``) come from a finite-difference
    Hessian of the cost and are approximate.
    """
    cfg = cfg or GlobalFitConfig()
    missing = [k for k in DATASETS if k not in datasets]
    if missing:
        raise ValueError(f"missing datasets: {', '.join(missing)}")
    for k in DATASETS:
        if len(datasets[k]) == 0:
            raise ValueError(f"dataset {k!r} is empty")
    if not cfg.free:
        raise ValueError("nothing to fit: every parameter is fixed")

    cost = _Cost(datasets, cfg)
    obj = Objective(cost, bounds=[(0.0, 1.0)] * len(cost.free), names=cost.free)
    z0 = cost.to_unit(cost.start)
    res = basin_hopping(
        obj,
        z0,
        n_hops=cfg.n_hops,
        step=cfg.step_fraction,
        temperature=cfg.temperature,
        seed=cfg.seed,
        local_tol=cfg.local_tol,
        local_max_eval=cfg.local_max_eval,
        local_xtol=cfg.local_xtol,
    )
    z = res.params
    values = cost.to_values(z)
    resid, models, bg = cost.breakdown(z)
    n_points = sum(len(datasets[k]) for k in DATASETS)

    stderr = None
    if cfg.uncertainties and math.isfinite(res.cost):
        dof = max(n_points - len(cost.free) - int(cfg.fit_background), 1)
        s2 = res.cost / dof
        h = 1e-3
        # keep the stencil inside the box
        zc = np.clip(z, 2 * h, 1 - 2 * h)
        hess = _hessian(obj, zc, h)
        try:
            cov = 2.0 * s2 * np.linalg.inv(hess)
            var = np.diag(cov)
            stderr = np.where(var > 0, np.sqrt(np.abs(var)), math.nan) * (cost.hi - cost.lo)
        except np.linalg.LinAlgError:
            stderr = np.full(len(cost.free), math.nan)

    overlays = {k: SimCurve(datasets[k].x, models[k], meta={"y_label": f"model {k}"}) for k in models}
    return FitResult(
        params=np.array([values[n] for n in cost.free]),
        cost=res.cost,
        n_eval=res.n_eval,
        converged=res.converged,
        names=cost.free,
        stderr=stderr,
        residuals={k: float(np.sqrt(np.sum(r**2))) for k, r in resid.items()},
        message=res.message,
        history=res.history,
        extra={
            "values": values,
            "background": bg,
            "models": overlays,
            "seed": cfg.seed,
            "n_hops": cfg.n_hops,
        },
    )


# ------------------------------------------------------------- synthetic data
def default_dataset_grids() -> dict:
    """Abscissae mirroring the measured datasets: powers in W, detunings in Hz."""
    return {
        "saturation": np.array([0.1e-9, 0.3e-9, 1e-9, 3e-9, 10e-9, 30e-9]),
        "linewidth_vs_power": np.array([0.04e-9, 0.5e-9, 2e-9, 8e-9]),
        "decay_vs_detuning": np.linspace(-20e9, 20e9, 9),
    }


def synthesize_datasets(
    truth: SystemParams,
    cfg: GlobalFitConfig,
    grids: dict | None = None,
    noise: float = 0.01,
    seed: int = 0,
    background: float = 0.0,
) -> dict:
    """Simulated triple dataset with multiplicative Gaussian noise.

    Every point is multiplied by ``1 + noise * N(0, 1)``; ``sigma`` records
    ``noise * |clean value|``. ``background`` is added to the saturation
    counts before the noise.
    """
    grids = grids or default_dataset_grids()
    rng = np.random.default_rng(seed)
    data = {
        "saturation": SimCurve(grids["saturation"], np.zeros(len(grids["saturation"]))),
        "linewidth_vs_power": SimCurve(grids["linewidth_vs_power"], np.zeros(len(grids["linewidth_vs_power"]))),
        "decay_vs_detuning": SimCurve(grids["decay_vs_detuning"], np.zeros(len(grids["decay_vs_detuning"]))),
    }
    clean = evaluate_models(truth, data, cfg)
    clean["saturation"] = clean["saturation"] + background
    labels = {
        "saturation": ("input power", "W", "counts per pulse", ""),
        "linewidth_vs_power": ("input power", "W", "linewidth", "Hz"),
        "decay_vs_detuning": ("cavity detuning", "Hz", "decay enhancement", ""),
    }
    out = {}
    for k in DATASETS:
        y = clean[k]
        noisy = y * (1.0 + noise * rng.standard_normal(y.size))
        xl, xu, yl, yu = labels[k]
        out[k] = SimCurve(
            grids[k],
            noisy,
            sigma=np.maximum(noise * np.abs(y), 1e-300) if noise > 0 else None,
            meta={"x_label": xl, "x_unit": xu, "y_label": yl, "y_unit": yu, "synthetic": True, "seed": seed},
        )
    return out
