"""Batched solver for the rectangular-pulse experiment.

Every simulated observable is built from many independent master-equation
solves (sweep points times spectral-diffusion offsets) that differ only in
a few scalar rates. This module does all of them at once.

* The Liouvillian is written in an orthonormal basis of Hermitian matrices,
  where it is real. It is linear in the seven rates
  ``(delta_a, delta_c, g, omega, kappa, gamma0, gamma_d)``, so a batch of
  generators is a single ``tensordot`` with seven precomputed pieces.
* Drive on: ``x(tau) = expm(R_on tau) x0`` with a batched ``expm``. The
  initial ground state is a single basis vector, so only one column is kept.
* Drive off: the Hamiltonian conserves the excitation number ``N`` and the
  jumps lower it on both sides of ``rho``, so the matrix elements with
  ``N_i = N_j >= 1`` form a closed block that contains ``<a^+ a>`` and the
  top-level population. That block is small (9x9 for three Fock levels) and
  is diagonalised once per member; the trace and its time integral then have
  closed forms.

When an eigenvector matrix is too ill-conditioned (near an exceptional
point) the member falls back to propagator stepping and an exact integral
through ``R^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .quantum import (
    HilbertSpace,
    commutator_superop,
    dissipator_superop,
    hermitian_basis,
    real_superoperator,
    vec,
)

RATE_NAMES = ("delta_a", "delta_c", "g", "omega", "kappa", "gamma0", "gamma_d")
EXPM_CHUNK = 512
COND_LIMIT = 1e10
# log-spaced probe times (relative to the decay window length) for the
# truncation check after the pulse
_TOP_PROBES = np.concatenate([[0.0], np.logspace(-6, 0, 61)])


@dataclass
class PulseResult:
    """Diffusion-averaged output for a batch of sweep points.

    ``counts`` and ``trace`` carry the cavity photon flux ``kappa <a^+ a>``
    (per second) *without* the detection efficiency; the caller multiplies.
    """

    counts: np.ndarray  # (P,) integral of the flux over the collection window
    trace: np.ndarray | None  # (P, S) flux at the requested sample times
    top_population: np.ndarray  # (P,) largest top-Fock-level population seen
    ill_conditioned: int  # number of members handled by the fallback


class PulseSolver:
    """Precomputed superoperator pieces for one Fock cutoff."""

    def __init__(self, fock_dim: int):
        self.space = HilbertSpace(fock_dim)
        hs = self.space
        d = hs.total_dim
        self.dim = d
        self.basis, pairs = hermitian_basis(d)

        sm, sp, a, ad, sz = hs.sigma_minus, hs.sigma_plus, hs.a, hs.a_dag, hs.sigma_z
        pieces = [
            commutator_superop(hs.atom_excitation),
            commutator_superop(hs.photon_number),
            commutator_superop(sp @ a + sm @ ad),
            commutator_superop(0.5 * (sp + sm)),
            dissipator_superop(a),
            dissipator_superop(sm),
            dissipator_superop(sz / np.sqrt(2.0)),
        ]
        self.pieces = np.array([real_superoperator(p, self.basis) for p in pieces])

        # coordinates of Tr(O rho) = sum_k x_k Tr(O B_k)
        def coords(op):
            return np.real(vec(op.T) @ self.basis)

        self.ground_index = int(np.flatnonzero(np.all(pairs == [0, 0], axis=1))[0])
        nexc = hs.excitation_numbers
        ni, nj = nexc[pairs[:, 0]], nexc[pairs[:, 1]]
        self.decay_block = np.flatnonzero((ni == nj) & (ni >= 1))
        self.photon_coords = coords(hs.photon_number)
        self.top_coords = coords(hs.top_level_projector)
        self.off_pieces = self.pieces[:, self.decay_block][:, :, self.decay_block]
        assert np.allclose(self.photon_coords[np.setdiff1d(np.arange(d * d), self.decay_block)], 0)

    def generators(self, rates: np.ndarray, drive: bool = True) -> np.ndarray:
        """Real generators for a ``(B, 7)`` array of angular rates."""
        rates = np.atleast_2d(np.asarray(rates, dtype=float))
        if not drive:
            rates = rates.copy()
            rates[:, 3] = 0.0
        return np.tensordot(rates, self.pieces, axes=(1, 0))

    def pulse_end(self, rates: np.ndarray, pulse_width: float) -> np.ndarray:
        """Real state coordinates at the end of the drive, shape ``(B, d**2)``."""
        rates = np.atleast_2d(np.asarray(rates, dtype=float))
        out = np.empty((rates.shape[0], self.dim**2))
        for lo in range(0, rates.shape[0], EXPM_CHUNK):
            gens = np.tensordot(rates[lo : lo + EXPM_CHUNK], self.pieces, axes=(1, 0))
            out[lo : lo + EXPM_CHUNK] = expm(gens * pulse_width)[:, :, self.ground_index]
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite state after the drive segment")
        return out

    def run(
        self,
        rates: np.ndarray,
        groups: np.ndarray,
        weights: np.ndarray,
        pulse_width: float,
        window: tuple[float, float],
        sample_times: np.ndarray | None = None,
    ) -> PulseResult:
        """Solve a batch and combine members into diffusion-averaged results.

        Parameters
        ----------
        rates : (B, 7) array
            Angular rates per member, in :data:`RATE_NAMES` order.
        groups : (P, Q) int array
            Member indices contributing to each sweep point.
        weights : (Q,) array
            Quadrature weights shared by every sweep point.
        pulse_width : float
            Drive duration in seconds.
        window : (start, stop)
            Collection window, in seconds after the end of the pulse.
        sample_times : array, optional
            Times after the end of the pulse at which to return the flux.
        """
        rates = np.atleast_2d(np.asarray(rates, dtype=float))
        groups = np.asarray(groups, dtype=int)
        weights = np.asarray(weights, dtype=float)
        s1, s2 = map(float, window)
        if not 0 <= s1 <= s2:
            raise ValueError("collection window must satisfy 0 <= start <= stop")

        x_end = self.pulse_end(rates, pulse_width)
        y = x_end[:, self.decay_block]
        top_member = x_end @ self.top_coords

        off_rates = rates.copy()
        off_rates[:, 3] = 0.0
        gens = np.tensordot(off_rates, self.off_pieces, axes=(1, 0))
        kappa = rates[:, 4]
        w, v = np.linalg.eig(gens)
        cond = np.linalg.cond(v)
        bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
        good = ~bad

        amp = np.zeros_like(w)
        top_amp = np.zeros_like(w)
        if np.any(good):
            c = np.linalg.solve(v[good], y[good][:, :, None])[:, :, 0]
            pv = np.einsum("k,bkm->bm", self.photon_coords[self.decay_block], v[good])
            tv = np.einsum("k,bkm->bm", self.top_coords[self.decay_block], v[good])
            amp[good] = kappa[good, None] * pv * c
            top_amp[good] = tv * c

        # truncation probe on a log grid spanning the decay window
        probes = _TOP_PROBES * max(s2, 1e-12)
        top_decay = np.zeros(rates.shape[0])
        if np.any(good):
            tp = np.real(np.einsum("bm,bms->bs", top_amp[good], np.exp(w[good][:, :, None] * probes)))
            top_decay[good] = tp.max(axis=1)

        counts_member = np.zeros(rates.shape[0])
        if np.any(good):
            counts_member[good] = np.real(np.sum(amp[good] * _window_integral(w[good], s1, s2), axis=1))

        fallback_traces = {}
        for b in np.flatnonzero(bad):
            r = gens[b]
            o = kappa[b] * self.photon_coords[self.decay_block]
            tvec = self.top_coords[self.decay_block]
            # integral of exp(R s) from s1 to s2 equals R^{-1}(exp(R s2) - exp(R s1))
            e1 = expm(r * s1) @ y[b]
            e2 = expm(r * s2) @ y[b]
            counts_member[b] = o @ np.linalg.solve(r, e2 - e1)
            top_decay[b] = max(tvec @ (expm(r * p) @ y[b]) for p in probes)
            if sample_times is not None:
                fallback_traces[b] = o @ _step_states(r, y[b], sample_times).T

        top_member = np.maximum(top_member, top_decay)
        counts = counts_member[groups] @ weights
        top = top_member[groups].max(axis=1)

        trace = None
        if sample_times is not None:
            s = np.asarray(sample_times, dtype=float)
            trace = np.zeros((groups.shape[0], s.size))
            for p in range(groups.shape[0]):
                members = groups[p]
                ok = good[members]
                if np.any(ok):
                    ww = w[members[ok]].reshape(-1)
                    aa = (amp[members[ok]] * weights[ok, None]).reshape(-1)
                    trace[p] = _mode_sum(aa, ww, s)
                for q in np.flatnonzero(~ok):
                    trace[p] += weights[q] * fallback_traces[members[q]]
        return PulseResult(counts, trace, top, int(bad.sum()))


def _window_integral(w: np.ndarray, s1: float, s2: float) -> np.ndarray:
    """``int_{s1}^{s2} exp(w s) ds`` evaluated stably for small ``|w|``."""
    span = s2 - s1
    z = w * span
    small = np.abs(z) < 1e-8
    safe_w = np.where(small, 1.0, w)
    full = np.exp(w * s1) * np.expm1(z) / safe_w
    series = np.exp(w * s1) * span * (1 + z / 2)
    return np.where(small, series, full)


def _mode_sum(amps: np.ndarray, rates: np.ndarray, times: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """``Re sum_k amps_k exp(rates_k t)`` at sorted non-negative ``times``.

    A mode is only evaluated up to the time where it has decayed by
    ``e^-40`` relative to its start; fast cavity modes then cost a handful
    of samples instead of the whole trace.
    """
    out = np.zeros(times.size)
    with np.errstate(divide="ignore"):
        life = np.where(rates.real < 0, -40.0 / rates.real, np.inf)
    n_alive = np.searchsorted(times, life, side="right")
    order = np.argsort(n_alive)
    amps, rates, n_alive = amps[order], rates[order], n_alive[order]
    start = 0
    # modes sorted by how many samples they need; evaluate in blocks of equal reach
    for reach in np.unique(n_alive):
        stop = np.searchsorted(n_alive, reach, side="right")
        if reach > 0:
            a, w = amps[start:stop], rates[start:stop]
            for lo in range(0, reach, chunk):
                hi = min(lo + chunk, reach)
                out[lo:hi] += np.real(np.exp(np.outer(times[lo:hi], w)) @ a)
        start = stop
    return out


def _step_states(r: np.ndarray, y0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """States ``exp(r t) y0`` at arbitrary sorted times by piecewise propagation."""
    out = np.empty((times.size, y0.size))
    y = y0.copy()
    t_prev = 0.0
    cache = {}
    for i, t in enumerate(times):
        dt = t - t_prev
        if dt > 0:
            key = round(dt, 18)
            if key not in cache:
                cache[key] = expm(r * dt)
            y = cache[key] @ y
        out[i] = y
        t_prev = t
    return out
