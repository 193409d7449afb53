import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cqedfit.quantum import (
    HilbertSpace,
    InvariantError,
    TruncationError,
    build_liouvillian,
    check_density_matrix,
    evolve,
    evolve_trace,
    hermitian_basis,
    propagator,
    real_superoperator,
    tensor,
    unvec,
    vec,
)

TWO_PI = 2 * math.pi
SM2 = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e| on the bare emitter, g = index 0
SZ2 = np.diag([-1.0, 1.0]).astype(complex)


def random_state(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = m @ m.conj().T
    return rho / np.trace(rho)


def random_hermitian(rng, d, scale=1.0):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (m + m.conj().T) / 2


# ------------------------------------------------------------------ algebra
def test_tensor_of_identities_is_identity():
    assert np.array_equal(tensor(np.eye(2), np.eye(3)), np.eye(6))


def test_sigma_z_tensor_identity_spectrum():
    ev = np.sort(np.linalg.eigvalsh(tensor(SZ2, np.eye(2))))
    assert np.allclose(ev, [-1, -1, 1, 1])


def test_ladder_action_e0_to_g1():
    hs = HilbertSpace(3)
    out = (hs.sigma_minus @ hs.a_dag) @ hs.basis_state(1, 0)
    assert np.allclose(out, hs.basis_state(0, 1))


def test_tensor_rejects_non_square():
    with pytest.raises(ValueError):
        tensor(np.ones((2, 3)), np.eye(2))


def test_hilbert_space_dimensions():
    hs = HilbertSpace(5)
    assert hs.total_dim == 10 and hs.n_max == 4
    with pytest.raises(ValueError):
        HilbertSpace(1)
    with pytest.raises(ValueError):
        HilbertSpace(3, atom_dim=3)


def test_operator_commutation_below_cutoff():
    hs = HilbertSpace(6)
    comm = hs.a @ hs.a_dag - hs.a_dag @ hs.a
    # [a, a^+] = 1 except on the truncated top level
    assert np.allclose(np.diag(comm)[:5], 1) and np.allclose(np.diag(comm)[6:11], 1)


@given(st.integers(2, 6), st.integers(0, 10_000))
def test_vectorization_round_trip(d, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    assert np.array_equal(unvec(vec(m)), m)
    # column stacking: consecutive entries walk down a column
    assert vec(m)[1] == m[1, 0]


@given(st.integers(0, 10_000))
def test_vec_identity_for_products(seed):
    rng = np.random.default_rng(seed)
    a, x, b = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
    assert np.allclose(vec(a @ x @ b), np.kron(b.T, a) @ vec(x))


# -------------------------------------------------------------- Liouvillian
def test_build_liouvillian_rejects_non_hermitian():
    with pytest.raises(ValueError):
        build_liouvillian(np.array([[0, 1], [0, 0]], dtype=complex))


def test_build_liouvillian_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        build_liouvillian(np.eye(2), [np.eye(3)])


@given(st.integers(0, 10_000))
def test_liouvillian_preserves_trace(seed):
    rng = np.random.default_rng(seed)
    d = 4
    lv = build_liouvillian(random_hermitian(rng, d), [rng.normal(size=(d, d)) for _ in range(2)])
    # Tr(L rho) = 0 for every rho  <=>  vec(I)^T L = 0
    assert np.max(np.abs(vec(np.eye(d)) @ lv)) < 1e-10 * max(1.0, np.max(np.abs(lv)))


def test_amplitude_damping_decay():
    g0 = TWO_PI * 169.3e3
    lv = build_liouvillian(np.zeros((2, 2)), [math.sqrt(g0) * SM2])
    rho_e = np.diag([0.0, 1.0]).astype(complex)
    curves = evolve_trace(rho_e, [(lv, 2e-6)], [np.diag([0.0, 1.0])], dt_record=10e-9)
    assert np.max(np.abs(curves[0].y - np.exp(-g0 * curves[0].x))) < 1e-6


def test_pure_dephasing_coherence():
    gd = TWO_PI * 0.645e9
    lv = build_liouvillian(np.zeros((2, 2)), [math.sqrt(gd / 2) * SZ2])
    rho = 0.5 * np.ones((2, 2), dtype=complex)
    t = 1e-9
    out = evolve(rho, [(lv, t)])
    assert np.allclose(np.diag(out).real, [0.5, 0.5])
    assert out[1, 0].real == pytest.approx(0.5 * math.exp(-gd * t), rel=1e-9)


@given(st.integers(0, 10_000))
def test_closed_system_conserves_purity(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, 4, 1e9)
    rho = random_state(rng, 4)
    p0 = np.trace(rho @ rho).real
    curves = evolve_trace(rho, [(build_liouvillian(h), 20e-9)], [], dt_record=1e-9)
    assert curves == []
    out = evolve(rho, [(build_liouvillian(h), 20e-9)])
    assert abs(np.trace(out @ out).real - p0) < 1e-8


# ---------------------------------------------------------------- propagator
def test_zero_liouvillian_gives_identity():
    assert np.allclose(propagator(np.zeros((4, 4)), 1e-6), np.eye(4))


def test_propagator_bulk_lifetime():
    g0 = TWO_PI * 169.3e3
    lv = build_liouvillian(np.zeros((2, 2)), [math.sqrt(g0) * SM2])
    rho = unvec(propagator(lv, 1 / g0) @ vec(np.diag([0.0, 1.0]).astype(complex)))
    assert rho[1, 1].real == pytest.approx(math.exp(-1), abs=1e-6)
    # 1 / Gamma_0 for Gamma_0 = 2 pi x 169.3 kHz is the quoted 940 ns
    assert 1 / g0 == pytest.approx(940e-9, rel=2e-3)


@given(st.integers(0, 10_000))
def test_propagator_semigroup(seed):
    rng = np.random.default_rng(seed)
    d = 4
    lv = build_liouvillian(random_hermitian(rng, d, 1e8), [1e4 * rng.normal(size=(d, d))])
    dt = 5e-9
    p1 = propagator(lv, dt)
    assert np.max(np.abs(p1 @ p1 - propagator(lv, 2 * dt))) < 1e-9


def test_propagator_errors():
    with pytest.raises(ValueError):
        propagator(np.zeros((4, 4)), 0.0)
    bad = np.zeros((4, 4))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        propagator(bad, 1.0)


# --------------------------------------------------------------- evolve_trace
def test_ground_state_without_drive_stays_dark():
    hs = HilbertSpace(3)
    lv = build_liouvillian(np.zeros((6, 6)), [hs.a, hs.sigma_minus])
    curves = evolve_trace(hs.ground_state(), [(lv, 100e-9)], [hs.atom_excitation])
    assert np.all(curves[0].y == 0)
    assert curves[0].x[1] - curves[0].x[0] == pytest.approx(1e-9)


def test_samples_land_on_global_grid_across_segments():
    hs = HilbertSpace(2)
    lv = build_liouvillian(np.zeros((4, 4)), [hs.sigma_minus])
    # boundary at 2.5 ns is not on the 1 ns grid; the split step must stay exact
    curves = evolve_trace(hs.basis_state(1, 0)[:, None] @ hs.basis_state(1, 0)[None, :].conj(),
                          [(lv, 2.5e-9), (lv, 2.5e-9)], [hs.atom_excitation], dt_record=1e-9)
    assert np.allclose(curves[0].x, np.arange(6) * 1e-9)
    assert np.allclose(curves[0].y, np.exp(-curves[0].x), atol=1e-12)


def test_invariant_violation_is_reported():
    lv = np.zeros((4, 4), dtype=complex)
    lv[0, 0] = 1e9  # grows the trace
    with pytest.raises(InvariantError, match="trace"):
        evolve_trace(np.diag([1.0, 0.0]).astype(complex), [(lv, 5e-9)], [], dt_record=1e-9)


def test_check_density_matrix_detects_negative_eigenvalue():
    with pytest.raises(InvariantError, match="negative"):
        check_density_matrix(np.diag([1.1, -0.1]).astype(complex))


def test_truncation_error_raised_when_top_level_fills():
    hs = HilbertSpace(2)
    drive = 1e9 * (hs.a + hs.a_dag)
    lv = build_liouvillian(drive, [1e3 * hs.a])
    with pytest.raises(TruncationError) as info:
        evolve_trace(hs.ground_state(), [(lv, 10e-9)], [], truncation_projector=hs.top_level_projector)
    assert info.value.fock_dim == 2 and info.value.population > 1e-6


@given(st.integers(0, 10_000))
def test_hermitian_basis_coordinates_are_real(seed):
    rng = np.random.default_rng(seed)
    d = 3
    basis, pairs = hermitian_basis(d)
    assert pairs.shape == (d * d, 2)
    assert np.allclose(basis.conj().T @ basis, np.eye(d * d))
    rho = random_state(rng, d)
    assert np.max(np.abs((basis.conj().T @ vec(rho)).imag)) < 1e-12
    lv = build_liouvillian(random_hermitian(rng, d), [rng.normal(size=(d, d))])
    r = real_superoperator(lv, basis)
    assert r.dtype == float
    assert np.allclose(basis @ (r @ (basis.conj().T @ vec(rho))), lv @ vec(rho))
