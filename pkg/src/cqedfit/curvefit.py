"""Least-squares line-shape and decay fits.

All fits use variable projection: the nonlinear parameters (centre, width,
rates) are searched with :func:`~cqedfit.optimize.nelder_mead`, and for each
trial the linear ones (amplitudes, offset) follow from a linear
least-squares solve. Widths and rates are searched in log space, which keeps
them positive.

Abscissae are shifted and scaled to ``[0, 1]`` before fitting, so absolute
laser frequencies (~1e14 Hz) and nanosecond time axes are handled alike.
Uncertainties come from the Jacobian at the optimum,
``cov = s^2 (J^T J)^-1`` with ``s^2`` the reduced residual variance.
"""

from __future__ import annotations

import math

import numpy as np

from .constants import FWHM_PER_SIGMA
from .curve import SimCurve
from .optimize import FitResult, Objective, nelder_mead


class FitError(RuntimeError):
    """A fit could not produce a meaningful estimate."""


# ----------------------------------------------------------------- line shapes
def gaussian(x, amplitude, center, fwhm, offset=0.0):
    sigma = fwhm / FWHM_PER_SIGMA
    return amplitude * np.exp(-0.5 * ((x - center) / sigma) ** 2) + offset


def lorentzian(x, amplitude, center, fwhm, offset=0.0):
    return amplitude / (1.0 + (2.0 * (x - center) / fwhm) ** 2) + offset


def exponential(t, amplitude, rate, offset=0.0):
    return amplitude * np.exp(-rate * t) + offset


def biexponential(t, amp1, rate1, amp2, rate2, offset=0.0):
    return amp1 * np.exp(-rate1 * t) + amp2 * np.exp(-rate2 * t) + offset


def r_squared(y, y_fit) -> float:
    y = np.asarray(y, dtype=float)
    ss_res = np.sum((y - y_fit) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)


# ------------------------------------------------------------------ machinery
def _weights(curve: SimCurve) -> np.ndarray:
    if curve.sigma is None:
        return np.ones(len(curve))
    s = np.asarray(curve.sigma)
    if np.any(s <= 0):
        raise FitError("sigma must be strictly positive")
    return 1.0 / s


def _linear_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least-squares coefficients for a few columns.

    Scaled normal equations are much cheaper than a full ``lstsq`` for two or
    three columns; badly conditioned systems still go through ``lstsq``.
    """
    m = a.shape[1]
    if m == 1:
        col = a[:, 0]
        return np.array([col @ b / max(col @ col, 1e-300)])
    gram = a.T @ a
    d = np.sqrt(np.diag(gram))
    if np.all(d > 0):
        gn = gram / np.outer(d, d)
        if np.linalg.cond(gn) < 1e8:
            return np.linalg.solve(gn, (a.T @ b) / d) / d
    return np.linalg.lstsq(a, b, rcond=None)[0]


def _varpro(u, y, w, design, theta0, step, n_restarts=1, max_eval=4000, bounds=None):
    """Minimise ``|w (y - A(theta) c)|^2`` over theta, with c solved linearly."""
    yw = y * w
    scale = max(float(np.sum(yw**2)), 1e-300)

    def linear(theta):
        a = design(theta, u) * w[:, None]
        c = _linear_solve(a, yw)
        return c, yw - a @ c

    def cost(theta):
        return float(np.sum(linear(theta)[1] ** 2)) / scale

    obj = Objective(cost, bounds)
    res = nelder_mead(obj, theta0, tol=1e-15, xtol=1e-9, max_eval=max_eval, step=step, n_restarts=n_restarts)
    c, r = linear(res.params)
    return res, c, float(np.sum(r**2))


def _covariance(model, p, u, y, w):
    """Reduced-chi-square-scaled covariance of ``model(u, *p)`` at ``p``."""
    p = np.asarray(p, dtype=float)
    n, m = y.size, p.size
    jac = np.empty((n, m))
    for i in range(m):
        h = 1e-6 * max(abs(p[i]), 1e-3)
        hi, lo = p.copy(), p.copy()
        hi[i] += h
        lo[i] -= h
        jac[:, i] = (model(u, *hi) - model(u, *lo)) / (2 * h) * w
    resid = (y - model(u, *p)) * w
    dof = max(n - m, 1)
    s2 = float(np.sum(resid**2)) / dof
    cov = np.linalg.pinv(jac.T @ jac) * s2
    return cov


class _Axis:
    """Affine map between data abscissa and the unit interval."""

    def __init__(self, x):
        self.origin = float(x[0]) if x[0] < x[-1] else float(x[-1])
        self.span = float(np.ptp(x)) or 1.0

    def to_unit(self, x):
        return (np.asarray(x) - self.origin) / self.span


def _check(curve: SimCurve, n_min: int):
    if len(curve) < n_min:
        raise FitError(f"need at least {n_min} points, got {len(curve)}")
    if not np.all(np.isfinite(curve.y)):
        raise FitError("data contain non-finite values")


# --------------------------------------------------------------- peak fitters
def _fit_peak(curve: SimCurve, shape, center=None) -> FitResult:
    _check(curve, 5)
    names = ("amplitude", "center", "fwhm", "offset")
    x, y = curve.x, curve.y
    w = _weights(curve)
    y_scale = float(np.max(np.abs(y)))
    if np.ptp(y) == 0:
        return FitResult(
            params=np.array([0.0, float(np.mean(x)), math.nan, float(y[0])]),
            cost=0.0,
            n_eval=0,
            converged=False,
            names=names,
            stderr=np.full(4, math.nan),
            flags={"degenerate": True, "low_significance": True},
            message="flat data: no peak to fit",
        )
    ax = _Axis(x)
    u = ax.to_unit(x)
    yn = y / y_scale

    # initial guess: strongest excursion from the median, width from half-level crossings
    med = np.median(yn)
    up = (yn.max() - med) >= (med - yn.min())
    i_pk = int(np.argmax(yn) if up else np.argmin(yn))
    half = 0.5 * (yn[i_pk] + med)
    inside = (yn >= half) if up else (yn <= half)
    du = np.min(np.abs(np.diff(u)))
    width0 = max(float(np.ptp(u[inside])) if inside.sum() > 1 else 0.0, 2 * du)
    u_c = None if center is None else float(ax.to_unit(center))
    c0 = u[i_pk] if u_c is None else u_c

    def design(theta, uu):
        cc = theta[0] if u_c is None else u_c
        fw = math.exp(theta[-1])
        return np.column_stack([shape(uu, 1.0, cc, fw), np.ones_like(uu)])

    # widths between one grid step and ten times the scanned range
    log_w = (math.log(du), math.log(10.0))
    width0 = min(max(width0, du), 10.0)
    if u_c is None:
        theta0 = np.array([c0, math.log(width0)])
        step = np.array([0.1 * width0 + du, 0.3])
        bounds = [(-0.5, 1.5), log_w]
    else:
        theta0 = np.array([math.log(width0)])
        step = np.array([0.3])
        bounds = [log_w]
    res, lin, rss = _varpro(u, yn, w, design, theta0, step, bounds=bounds)
    cc = res.params[0] if u_c is None else u_c
    fw = math.exp(res.params[-1])
    p_unit = np.array([lin[0], cc, fw, lin[1]])

    cov = _covariance(shape, p_unit, u, yn, w)
    err_unit = np.sqrt(np.clip(np.diag(cov), 0, None))
    if u_c is not None:
        err_unit[1] = 0.0
    to_data = np.array([y_scale, ax.span, ax.span, y_scale])
    params = p_unit * to_data
    params[1] += ax.origin
    stderr = err_unit * to_data

    y_fit = shape(x, *params)
    amp, amp_err = params[0], stderr[0]
    low = abs(amp) <= max(3 * amp_err, 1e-9 * y_scale)
    return FitResult(
        params=params,
        cost=rss * y_scale**2,
        n_eval=res.n_eval,
        converged=res.converged,
        names=names,
        stderr=stderr,
        residuals={"rss": rss * y_scale**2, "r2": r_squared(y, y_fit)},
        flags={"degenerate": False, "low_significance": bool(low)},
        message=res.message,
    )


def fit_gaussian(curve: SimCurve, center: float | None = None) -> FitResult:
    """Fit ``A exp(-(x - x0)^2 / (2 s^2)) + c``.

    Returns ``amplitude``, ``center``, ``fwhm`` (``2 sqrt(2 ln 2) s``) and
    ``offset`` with standard errors. Dips give a negative amplitude. Flat
    data are flagged ``degenerate``; amplitudes within three standard errors
    of zero are flagged ``low_significance``. Pass ``center`` to hold it fixed.
    """
    res = _fit_peak(curve, gaussian, center)
    res.extra["sigma"] = res["fwhm"] / FWHM_PER_SIGMA
    return res


def fit_lorentzian(curve: SimCurve, center: float | None = None) -> FitResult:
    """Fit ``A / (1 + (2 (x - x0) / w)^2) + c``; same conventions as :func:`fit_gaussian`."""
    return _fit_peak(curve, lorentzian, center)


# -------------------------------------------------------------- decay fitters
def _rate_guess(u, yn, offset: bool) -> float:
    base = yn.min() if offset else 0.0
    z = yn - base
    m = z > 0.05 * z.max()
    if m.sum() >= 2 and np.ptp(u[m]) > 0:
        slope = np.polyfit(u[m], np.log(z[m]), 1)[0]
        if slope < 0:
            return float(-slope)
    return 3.0


def fit_exponential(curve: SimCurve, offset: bool = True) -> FitResult:
    """Fit ``A exp(-k t) + c`` (``c`` omitted with ``offset=False``).

    ``amplitude`` refers to ``t = 0`` of the abscissa and ``rate`` is in
    inverse abscissa units. ``extra["lifetime"]`` is ``1/rate``.
    """
    _check(curve, 3 if not offset else 4)
    names = ("amplitude", "rate", "offset")
    t, y = curve.x, curve.y
    if np.ptp(y) == 0:
        raise FitError("constant data: decay rate is indistinguishable from zero")
    w = _weights(curve)
    ax = _Axis(t)
    u = ax.to_unit(t)
    y_scale = float(np.max(np.abs(y)))
    yn = y / y_scale

    def design(theta, uu):
        cols = [np.exp(-math.exp(theta[0]) * uu)]
        if offset:
            cols.append(np.ones_like(uu))
        return np.column_stack(cols)

    k0 = _rate_guess(u, yn, offset)
    res, lin, rss = _varpro(u, yn, w, design, np.array([math.log(k0)]), np.array([0.5]))
    k_u = math.exp(res.params[0])
    c_u = lin[1] if offset else 0.0

    def model(uu, a, k, c):
        return a * np.exp(-k * uu) + c

    p_unit = np.array([lin[0], k_u, c_u])
    if offset:
        cov = _covariance(model, p_unit, u, yn, w)
        err_unit = np.sqrt(np.clip(np.diag(cov), 0, None))
    else:
        cov = _covariance(lambda uu, a, k: model(uu, a, k, 0.0), p_unit[:2], u, yn, w)
        err_unit = np.append(np.sqrt(np.clip(np.diag(cov), 0, None)), 0.0)

    rate = k_u / ax.span
    # shift the amplitude reference from the first sample to t = 0
    shift = math.exp(rate * ax.origin)
    params = np.array([lin[0] * y_scale * shift, rate, c_u * y_scale])
    stderr = np.array([err_unit[0] * y_scale * shift, err_unit[1] / ax.span, err_unit[2] * y_scale])
    span_decays = k_u
    if not rate > 0 or span_decays < 1e-6:
        raise FitError("fitted rate is indistinguishable from zero")
    y_fit = exponential(t, *params)
    return FitResult(
        params=params,
        cost=rss * y_scale**2,
        n_eval=res.n_eval,
        converged=res.converged,
        names=names,
        stderr=stderr,
        residuals={"rss": rss * y_scale**2, "r2": r_squared(y, y_fit)},
        flags={"offset": offset},
        message=res.message,
        extra={"lifetime": 1.0 / rate},
    )


def fit_biexponential(curve: SimCurve, offset: bool = True) -> FitResult:
    """Fit ``A1 exp(-k1 t) + A2 exp(-k2 t) + c`` with ``k1 > k2``.

    ``extra`` carries the lifetimes, the amplitude weight of the fast
    component ``weight1 = A1 / (A1 + A2)`` and ``dominant_weight``. Rates
    within 5 % of each other are flagged ``ill_conditioned``.
    """
    _check(curve, 6 if offset else 5)
    names = ("amp1", "rate1", "amp2", "rate2", "offset")
    t, y = curve.x, curve.y
    if np.ptp(y) == 0:
        raise FitError("constant data: decay rates are indistinguishable from zero")
    w = _weights(curve)
    ax = _Axis(t)
    u = ax.to_unit(t)
    y_scale = float(np.max(np.abs(y)))
    yn = y / y_scale

    def design(theta, uu):
        cols = [np.exp(-math.exp(theta[0]) * uu), np.exp(-math.exp(theta[1]) * uu)]
        if offset:
            cols.append(np.ones_like(uu))
        return np.column_stack(cols)

    k0 = _rate_guess(u, yn, offset)
    best = None
    for fast, slow in ((2.0, 0.5), (1.3, 0.3), (3.0, 0.8), (1.1, 0.1), (6.0, 0.9)):
        theta0 = np.log([fast * k0, slow * k0])
        cand = _varpro(u, yn, w, design, theta0, np.array([0.3, 0.3]), n_restarts=1)
        if best is None or cand[2] < best[2]:
            best = cand
    res, lin, rss = best
    k = np.exp(res.params)
    a = lin[:2]
    if k[1] > k[0]:
        k, a = k[::-1], a[::-1]
    c_u = lin[2] if offset else 0.0

    def model(uu, a1, k1, a2, k2, c):
        return a1 * np.exp(-k1 * uu) + a2 * np.exp(-k2 * uu) + c

    p_unit = np.array([a[0], k[0], a[1], k[1], c_u])
    if offset:
        err_unit = np.sqrt(np.clip(np.diag(_covariance(model, p_unit, u, yn, w)), 0, None))
    else:
        cov = _covariance(lambda uu, a1, k1, a2, k2: model(uu, a1, k1, a2, k2, 0.0), p_unit[:4], u, yn, w)
        err_unit = np.append(np.sqrt(np.clip(np.diag(cov), 0, None)), 0.0)

    rates = k / ax.span
    shifts = np.exp(rates * ax.origin)
    params = np.array([a[0] * y_scale * shifts[0], rates[0], a[1] * y_scale * shifts[1], rates[1], c_u * y_scale])
    stderr = np.array(
        [
            err_unit[0] * y_scale * shifts[0],
            err_unit[1] / ax.span,
            err_unit[2] * y_scale * shifts[1],
            err_unit[3] / ax.span,
            err_unit[4] * y_scale,
        ]
    )
    total = params[0] + params[2]
    weight1 = params[0] / total if total != 0 else math.nan
    ill = abs(rates[0] - rates[1]) < 0.05 * max(rates)
    y_fit = biexponential(t, *params)
    return FitResult(
        params=params,
        cost=rss * y_scale**2,
        n_eval=res.n_eval,
        converged=res.converged,
        names=names,
        stderr=stderr,
        residuals={"rss": rss * y_scale**2, "r2": r_squared(y, y_fit)},
        flags={"ill_conditioned": bool(ill), "offset": offset},
        message=res.message,
        extra={
            "lifetime1": 1.0 / rates[0],
            "lifetime2": 1.0 / rates[1],
            "weight1": weight1,
            "dominant_weight": max(weight1, 1 - weight1),
        },
    )
