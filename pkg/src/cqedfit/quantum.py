"""Dense operator algebra on the atom x cavity space and Lindblad time evolution.

Conventions
-----------
* Composite ordering is atom (x) field; the atom basis is ``(|g>, |e>)`` and
  the field basis is the Fock ladder ``|0>, |1>, ..., |fock_dim-1>``. The
  composite index of ``|atom, n>`` is ``atom * fock_dim + n``.
* Density matrices are vectorized by **column stacking**,
  ``vec(rho)[i + d*j] = rho[i, j]`` (``order="F"`` in numpy), so
  ``vec(A X B) = (B^T (x) A) vec(X)``. With that convention the Lindblad
  generator reads::

      L = -i (I (x) H - H^T (x) I)
          + sum_k [ conj(C_k) (x) C_k - 1/2 (I (x) C_k^+ C_k + (C_k^+ C_k)^T (x) I) ]

* All operators are plain ``numpy`` complex arrays. Hamiltonians and rates are
  in angular units (rad/s); times are in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from .curve import SimCurve

TRACE_TOL = 1e-8
HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = 1e-8
TRUNCATION_TOL = 1e-6


class InvariantError(RuntimeError):
    """A density matrix left the physical set beyond tolerance."""


class TruncationError(RuntimeError):
    """The top Fock level became populated; the photon cutoff is too small."""

    def __init__(self, population, fock_dim):
        self.population = float(population)
        self.fock_dim = int(fock_dim)
        super().__init__(
            f"top Fock level population {self.population:.3e} exceeds "
            f"{TRUNCATION_TOL:g} with fock_dim={self.fock_dim}"
        )


@dataclass(frozen=True)
class HilbertSpace:
    """Two-level atom tensored with a truncated cavity mode."""

    fock_dim: int = 5
    atom_dim: int = 2

    def __post_init__(self):
        if self.atom_dim != 2:
            raise ValueError("the emitter is a two-level system (atom_dim=2)")
        if self.fock_dim < 2:
            raise ValueError("fock_dim must be at least 2")

    @property
    def total_dim(self) -> int:
        return self.atom_dim * self.fock_dim

    @property
    def n_max(self) -> int:
        return self.fock_dim - 1

    def index(self, atom: int, n: int) -> int:
        return atom * self.fock_dim + n

    def basis_state(self, atom: int, n: int) -> np.ndarray:
        psi = np.zeros(self.total_dim, dtype=complex)
        psi[self.index(atom, n)] = 1.0
        return psi

    def ground_state(self) -> np.ndarray:
        """``|g, 0><g, 0|``."""
        psi = self.basis_state(0, 0)
        return np.outer(psi, psi.conj())

    # single-subsystem pieces
    @cached_property
    def _atom_lower(self):
        return np.array([[0, 1], [0, 0]], dtype=complex)

    @cached_property
    def _field_lower(self):
        return np.diag(np.sqrt(np.arange(1, self.fock_dim)), 1).astype(complex)

    @cached_property
    def sigma_minus(self) -> np.ndarray:
        return tensor(self._atom_lower, np.eye(self.fock_dim))

    @cached_property
    def sigma_plus(self) -> np.ndarray:
        return self.sigma_minus.conj().T

    @cached_property
    def sigma_z(self) -> np.ndarray:
        return tensor(np.diag([-1.0, 1.0]).astype(complex), np.eye(self.fock_dim))

    @cached_property
    def a(self) -> np.ndarray:
        return tensor(np.eye(2), self._field_lower)

    @cached_property
    def a_dag(self) -> np.ndarray:
        return self.a.conj().T

    @cached_property
    def identity(self) -> np.ndarray:
        return np.eye(self.total_dim, dtype=complex)

    @cached_property
    def atom_excitation(self) -> np.ndarray:
        """``sigma_+ sigma_-``."""
        return self.sigma_plus @ self.sigma_minus

    @cached_property
    def photon_number(self) -> np.ndarray:
        """``a^+ a``."""
        return self.a_dag @ self.a

    @cached_property
    def top_level_projector(self) -> np.ndarray:
        p = np.zeros(self.fock_dim)
        p[-1] = 1.0
        return tensor(np.eye(2), np.diag(p)).astype(complex)

    @cached_property
    def excitation_numbers(self) -> np.ndarray:
        """Eigenvalue of ``sigma_+ sigma_- + a^+ a`` for each basis index."""
        atom = np.repeat(np.arange(2), self.fock_dim)
        n = np.tile(np.arange(self.fock_dim), 2)
        return atom + n


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product ``a (x) b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ValueError("tensor expects square matrices")
    return np.kron(a, b)


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return op.shape[0] == op.shape[1] and np.max(np.abs(op - op.conj().T), initial=0.0) < tol


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise ValueError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape((dim, dim), order="F")


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> -i [h, rho]``."""
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(eye, h) - np.kron(h.T, eye))


def dissipator_superop(c: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> c rho c^+ - {c^+ c, rho}/2``."""
    eye = np.eye(c.shape[0])
    cdc = c.conj().T @ c
    return np.kron(c.conj(), c) - 0.5 * (np.kron(eye, cdc) + np.kron(cdc.T, eye))


def build_liouvillian(h: np.ndarray, jumps=()) -> np.ndarray:
    """Lindblad generator acting on column-stacked density matrices.

    Parameters
    ----------
    h : (d, d) complex array
        Hamiltonian in rad/s. Must be Hermitian.
    jumps : sequence of (d, d) arrays
        Collapse operators ``C_k`` with the rates already folded in
        (``sqrt(kappa) a`` and so on).

    Returns
    -------
    (d**2, d**2) complex array
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("Hamiltonian must be square")
    if not is_hermitian(h, tol=1e-12 * max(1.0, np.max(np.abs(h), initial=0.0))):
        raise ValueError("Hamiltonian is not Hermitian")
    lv = commutator_superop(h)
    for c in jumps:
        c = np.asarray(c, dtype=complex)
        if c.shape != h.shape:
            raise ValueError(f"jump operator shape {c.shape} does not match Hamiltonian {h.shape}")
        lv = lv + dissipator_superop(c)
    return lv


def propagator(liouvillian: np.ndarray, dt: float) -> np.ndarray:
    """``exp(L dt)`` by scaling and squaring (scipy's Pade implementation)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    liouvillian = np.asarray(liouvillian)
    if not np.all(np.isfinite(liouvillian)):
        raise ValueError("Liouvillian has non-finite entries")
    out = expm(liouvillian * dt)
    if not np.all(np.isfinite(out)):
        raise ValueError("propagator has non-finite entries")
    return out


def check_density_matrix(rho: np.ndarray, where: str = "") -> None:
    """Raise :class:`InvariantError` unless ``rho`` is a valid state within tolerance."""
    rho = np.asarray(rho)
    suffix = f" at {where}" if where else ""
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm >= HERMITICITY_TOL:
        raise InvariantError(f"Hermiticity violated by {herm:.3e}{suffix}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) >= TRACE_TOL:
        raise InvariantError(f"trace {tr!r} deviates from 1{suffix}")
    lowest = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lowest <= -POSITIVITY_TOL:
        raise InvariantError(f"negative eigenvalue {lowest:.3e}{suffix}")


def evolve_trace(
    rho0,
    segments,
    observables,
    dt_record: float = 1e-9,
    *,
    truncation_projector=None,
    check: bool = True,
    labels=None,
):
    """Evolve through piecewise-constant generators and record expectation values.

    Parameters
    ----------
    rho0 : (d, d) array
        Initial density matrix.
    segments : sequence of (liouvillian, duration)
        Generators applied back to back; durations in seconds.
    observables : sequence of (d, d) arrays
    dt_record : float
        Sampling interval in seconds. Samples sit on the global grid
        ``k * dt_record`` starting at 0; steps straddling a segment boundary are
        split so the evolution stays exact.
    truncation_projector : (d, d) array, optional
        Projector on the top Fock level. When given, a
        :class:`TruncationError` is raised once its population exceeds
        ``TRUNCATION_TOL``.
    check : bool
        Verify trace, Hermiticity and positivity at every sample.

    Returns
    -------
    list of SimCurve, one per observable, with ``x`` in seconds.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    if check:
        check_density_matrix(rho0, "t=0")
    segments = [(np.asarray(lv), float(dur)) for lv, dur in segments]
    for lv, dur in segments:
        if dur <= 0:
            raise ValueError("segment durations must be positive")
        if lv.shape != (d * d, d * d):
            raise ValueError("segment Liouvillian does not match the state dimension")
    if dt_record <= 0:
        raise ValueError("dt_record must be positive")

    bounds = np.cumsum([0.0] + [dur for _, dur in segments])
    total = bounds[-1]
    n_steps = int(np.floor(total / dt_record * (1 + 1e-12)))
    times = dt_record * np.arange(n_steps + 1)

    cache: dict[tuple[int, float], np.ndarray] = {}

    def prop(seg, dur):
        key = (seg, round(dur, 18))
        if key not in cache:
            cache[key] = propagator(segments[seg][0], dur)
        return cache[key]

    obs = [np.asarray(o, dtype=complex) for o in observables]
    # Tr(O rho) = vec(O^T) . vec(rho)
    rows = np.array([vec(o.T) for o in obs]) if obs else np.zeros((0, d * d))
    proj_row = None if truncation_projector is None else vec(np.asarray(truncation_projector).T)

    v = vec(rho0).copy()
    values = np.empty((len(obs), times.size))
    seg = 0
    for k, t in enumerate(times):
        if k > 0:
            t_prev = times[k - 1]
            cursor = t_prev
            while cursor < t - 1e-21:
                while seg < len(segments) - 1 and cursor >= bounds[seg + 1] - 1e-21:
                    seg += 1
                stop = min(t, bounds[seg + 1])
                v = prop(seg, stop - cursor) @ v
                cursor = stop
        rho = unvec(v, d)
        if check:
            check_density_matrix(rho, f"t={t:.6g} s")
        if proj_row is not None:
            top = float(np.real(proj_row @ v))
            if top > TRUNCATION_TOL:
                raise TruncationError(top, truncation_projector.shape[0] // 2)
        values[:, k] = np.real(rows @ v)

    curves = []
    for i in range(len(obs)):
        label = labels[i] if labels else f"observable_{i}"
        curves.append(
            SimCurve(
                times,
                values[i],
                meta={"x_label": "time", "x_unit": "s", "y_label": label, "y_unit": ""},
            )
        )
    return curves


def evolve(rho0, segments) -> np.ndarray:
    """Final state after applying each ``(liouvillian, duration)`` in turn."""
    rho0 = np.asarray(rho0, dtype=complex)
    v = vec(rho0)
    for lv, dur in segments:
        v = propagator(lv, dur) @ v
    return unvec(v, rho0.shape[0])


def hermitian_basis(dim: int):
    """Orthonormal basis of Hermitian matrices, as column-stacked vectors.

    Returns
    -------
    basis : (dim**2, dim**2) complex array
        Column ``k`` is ``vec(B_k)``; the ``B_k`` are orthonormal under
        ``Tr(A^+ B)``. For any Hermitian ``rho`` the coordinates
        ``basis^H vec(rho)`` are real.
    pairs : (dim**2, 2) int array
        Matrix element ``(i, j)`` each basis element lives on
        (``i == j`` diagonal, ``i < j`` symmetric part, ``i > j`` antisymmetric).
    """
    cols = []
    pairs = []
    r2 = 1.0 / np.sqrt(2.0)
    for i in range(dim):
        for j in range(dim):
            b = np.zeros((dim, dim), dtype=complex)
            if i == j:
                b[i, i] = 1.0
            elif i < j:
                b[i, j] = b[j, i] = r2
            else:
                b[j, i] = -1j * r2
                b[i, j] = 1j * r2
            cols.append(vec(b))
            pairs.append((i, j))
    return np.array(cols).T, np.array(pairs)


def real_superoperator(liouvillian: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Express a Hermiticity-preserving superoperator in a Hermitian basis.

    The result is real; the discarded imaginary part is rounding noise.
    """
    out = basis.conj().T @ liouvillian @ basis
    scale = max(1.0, np.max(np.abs(out), initial=0.0))
    if np.max(np.abs(out.imag), initial=0.0) > 1e-9 * scale:
        raise ValueError("superoperator does not preserve Hermiticity")
    return np.ascontiguousarray(out.real)
