"""Derivative-free minimisation: Nelder-Mead simplex and basin hopping.

Both work on an :class:`Objective`, which wraps a scalar cost with box
bounds and counts evaluations. Points proposed outside the box are projected
onto it, so the cost function is only ever called inside its domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# reflection, expansion, contraction, shrink
NM_COEFFS = (1.0, 2.0, 0.5, 0.5)


class Objective:
    """Scalar cost with box bounds and an evaluation counter.

    Non-finite costs are mapped to ``+inf`` so that infeasible points are
    rejected by the simplex instead of poisoning it.
    """

    def __init__(self, func: Callable[[np.ndarray], float], bounds=None, names=None):
        self.func = func
        self.n_eval = 0
        if bounds is None:
            self.lower = self.upper = None
        else:
            b = np.asarray(bounds, dtype=float)
            if b.ndim != 2 or b.shape[1] != 2:
                raise ValueError("bounds must be a sequence of (lo, hi) pairs")
            if np.any(b[:, 0] >= b[:, 1]):
                raise ValueError("every bound needs lo < hi")
            self.lower, self.upper = b[:, 0].copy(), b[:, 1].copy()
        self.names = tuple(names) if names is not None else None

    def clip(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.lower is None:
            return x
        return np.clip(x, self.lower, self.upper)

    def within(self, x: np.ndarray) -> bool:
        if self.lower is None:
            return True
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def __call__(self, x: np.ndarray) -> float:
        self.n_eval += 1
        value = float(self.func(np.asarray(x, dtype=float)))
        return value if math.isfinite(value) else math.inf


@dataclass
class FitResult:
    """Outcome of a minimisation or curve fit.

    ``names`` label the entries of ``params`` (and of ``stderr`` when set);
    ``result["fwhm"]`` looks a parameter up by name.
    """

    params: np.ndarray
    cost: float
    n_eval: int
    converged: bool
    names: tuple = ()
    stderr: np.ndarray | None = None
    residuals: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    message: str = ""
    history: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        if name in self.names:
            return float(self.params[self.names.index(name)])
        if name in self.extra:
            return self.extra[name]
        raise KeyError(name)

    def error(self, name: str) -> float:
        if self.stderr is None:
            return math.nan
        return float(self.stderr[self.names.index(name)])

    def as_dict(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.params)}


def _initial_simplex(obj: Objective, x0: np.ndarray, step) -> np.ndarray:
    n = x0.size
    if step is None:
        step = np.where(x0 != 0, 0.05 * np.abs(x0), 2.5e-4)
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        xi = x0.copy()
        xi[i] += step[i]
        if obj.upper is not None and xi[i] > obj.upper[i]:
            xi[i] = x0[i] - step[i]
        simplex[i + 1] = obj.clip(xi)
    return simplex


def nelder_mead(
    obj: Objective,
    x0,
    tol: float = 1e-10,
    max_eval: int = 2000,
    *,
    xtol: float | None = None,
    step=None,
    n_restarts: int = 0,
) -> FitResult:
    """Minimise ``obj`` with the Nelder-Mead downhill simplex.

    Standard coefficients are used: reflection 1, expansion 2, contraction
    0.5, shrink 0.5. Vertices falling outside the bounds are clipped back.

    Parameters
    ----------
    obj : Objective
    x0 : array_like
        Starting point; must lie within the bounds.
    tol : float
        Converged once ``max(f) - min(f)`` over the simplex is below ``tol``.
    max_eval : int
        Evaluation budget for this call (restarts included). Exhaustion
        returns ``converged=False``.
    xtol : float, optional
        If given, additionally require every vertex to be within ``xtol`` of
        the best one (infinity norm).
    step : float or array_like, optional
        Initial simplex edge per coordinate. Defaults to 5 % of ``|x0|``
        (``2.5e-4`` for zero entries).
    n_restarts : int
        Rebuild the simplex around the optimum this many times after
        convergence. Cheap insurance against premature collapse.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    if not obj.within(x0):
        raise ValueError("x0 lies outside the bounds")
    alpha, gamma, rho, sigma = NM_COEFFS
    start_eval = obj.n_eval
    n = x0.size

    best_x = x0
    converged = False
    for attempt in range(n_restarts + 1):
        simplex = _initial_simplex(obj, best_x, step)
        fvals = np.array([obj(v) for v in simplex])
        converged = False
        while True:
            order = np.argsort(fvals, kind="stable")
            simplex, fvals = simplex[order], fvals[order]
            spread = fvals[-1] - fvals[0]
            small = np.isfinite(spread) and spread <= tol
            if small and xtol is not None:
                small = np.max(np.abs(simplex[1:] - simplex[0])) <= xtol
            if small:
                converged = True
                break
            if obj.n_eval - start_eval >= max_eval:
                break

            centroid = simplex[:-1].mean(axis=0)
            worst = simplex[-1]
            xr = obj.clip(centroid + alpha * (centroid - worst))
            fr = obj(xr)
            if fr < fvals[0]:
                xe = obj.clip(centroid + gamma * (xr - centroid))
                fe = obj(xe)
                if fe < fr:
                    simplex[-1], fvals[-1] = xe, fe
                else:
                    simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[-2]:
                simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[-1]:
                xc = obj.clip(centroid + rho * (xr - centroid))
                fc = obj(xc)
                if fc <= fr:
                    simplex[-1], fvals[-1] = xc, fc
                    continue
            else:
                xc = obj.clip(centroid + rho * (worst - centroid))
                fc = obj(xc)
                if fc < fvals[-1]:
                    simplex[-1], fvals[-1] = xc, fc
                    continue
            for i in range(1, n + 1):
                simplex[i] = obj.clip(simplex[0] + sigma * (simplex[i] - simplex[0]))
                fvals[i] = obj(simplex[i])

        i_best = int(np.argmin(fvals))
        best_x, best_f = simplex[i_best].copy(), float(fvals[i_best])
        if not converged:
            break

    return FitResult(
        params=best_x,
        cost=best_f,
        n_eval=obj.n_eval - start_eval,
        converged=converged,
        names=obj.names or (),
        message="converged" if converged else "evaluation budget exhausted",
    )


def basin_hopping(
    obj: Objective,
    x0,
    n_hops: int = 25,
    step=None,
    temperature: float = 1.0,
    seed: int = 0,
    *,
    local_tol: float = 1e-10,
    local_max_eval: int = 2000,
    local_xtol: float | None = None,
    callback: Callable | None = None,
) -> FitResult:
    """Global minimisation by random hops between Nelder-Mead local minima.

    Each hop perturbs the current point by ``step * U(-1, 1)`` per coordinate,
    minimises locally, and accepts the new minimum with the Metropolis
    probability ``min(1, exp(-(f_new - f_cur) / temperature))``. The best
    point ever visited is returned, so the reported cost never increases with
    more hops. A fixed ``seed`` makes the whole trajectory reproducible.

    ``step`` defaults to 20 % of each bound range (or 0.5 without bounds).
    """
    rng = np.random.default_rng(seed)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if step is None:
        step = 0.2 * (obj.upper - obj.lower) if obj.lower is not None else 0.5
    step = np.broadcast_to(np.asarray(step, dtype=float), x0.shape)
    start_eval = obj.n_eval

    local = dict(tol=local_tol, max_eval=local_max_eval, xtol=local_xtol)
    res = nelder_mead(obj, x0, **local)
    cur_x, cur_f = res.params, res.cost
    best = res
    history = [best.cost]
    n_accept = 0
    for hop in range(n_hops):
        trial = obj.clip(cur_x + step * rng.uniform(-1.0, 1.0, size=cur_x.size))
        res = nelder_mead(obj, trial, **local)
        u = rng.random()
        if res.cost < cur_f:
            accept = True
        elif temperature > 0 and math.isfinite(res.cost):
            accept = u < math.exp(-(res.cost - cur_f) / temperature)
        else:
            accept = False
        if accept:
            cur_x, cur_f = res.params, res.cost
            n_accept += 1
        if res.cost < best.cost:
            best = res
        history.append(best.cost)
        if callback is not None:
            callback(hop, res, accept)

    return FitResult(
        params=best.params,
        cost=best.cost,
        n_eval=obj.n_eval - start_eval,
        converged=best.converged,
        names=obj.names or (),
        message=f"{n_hops} hops, {n_accept} accepted",
        history=history,
    )
