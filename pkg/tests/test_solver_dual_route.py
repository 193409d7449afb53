"""The batched pulse solver against a dense step-by-step propagation."""

import math

import numpy as np
import pytest

from cqedfit import _solver
from cqedfit.model import (
    DriveSpec,
    ModelSettings,
    SystemParams,
    gaussian_quadrature_for_diffusion,
    liouvillians,
    simulate_pulse_cycle,
)
from cqedfit.quantum import HilbertSpace, evolve_trace

TWO_PI = 2 * math.pi
N_QUAD = 5


def dense_reference(params, drive, n_max, dt):
    """Diffusion-averaged detected flux from explicit propagator stepping."""
    hs = HilbertSpace(n_max + 1)
    quad = gaussian_quadrature_for_diffusion(params.gamma_sd, N_QUAD)
    flux_op = drive.eta_sys * TWO_PI * params.kappa * hs.photon_number
    total = None
    for off, w in zip(quad.offsets, quad.weights):
        l_on, l_off = liouvillians(params, drive, hs, off)
        segs = [(l_on, drive.pulse_width), (l_off, drive.repetition_period - drive.pulse_width)]
        (curve,) = evolve_trace(hs.ground_state(), segs, [flux_op], dt_record=dt, check=False)
        total = w * curve.y if total is None else total + w * curve.y
    return curve.x, total


@pytest.fixture(scope="module")
def case():
    params = SystemParams.reference()
    drive = DriveSpec(p_in=1.21e-9, omega_l=params.omega_a, repetition_period=3e-6)
    return params, drive


@pytest.fixture(scope="module")
def dense(case):
    params, drive = case
    return dense_reference(params, drive, n_max=2, dt=1e-9)


def fast(case, **kw):
    params, drive = case
    settings = ModelSettings(n_max=2, n_quad=N_QUAD, dt_record=1e-9, auto_truncation=False, **kw)
    return simulate_pulse_cycle(params, drive, settings)


def test_trace_matches_dense_propagation(case, dense):
    t, ref = dense
    trace, _ = fast(case)
    after = t >= case[1].pulse_width - 1e-15
    assert np.allclose(trace.x, t[after], rtol=0, atol=1e-15)
    scale = np.max(ref[after])
    assert np.max(np.abs(trace.y - ref[after])) < 1e-6 * scale


def test_counts_match_integrated_dense_trace(case, dense):
    t, ref = dense
    _, counts = fast(case)
    start, stop = case[1].collection_window
    sel = (t >= start - 1e-15) & (t <= stop + 1e-15)
    approx = np.trapezoid(ref[sel], t[sel])
    assert counts == pytest.approx(approx, rel=1e-5)


def test_eig_fallback_agrees_with_eig_route(case, monkeypatch):
    trace_eig, counts_eig = fast(case)
    monkeypatch.setattr(_solver, "COND_LIMIT", 0.0)
    trace_fb, counts_fb = fast(case)
    assert counts_fb == pytest.approx(counts_eig, rel=1e-9)
    assert np.max(np.abs(trace_fb.y - trace_eig.y)) < 1e-9 * np.max(trace_eig.y)


@pytest.mark.parametrize(
    "changes, detuning",
    [({"gamma_sd": 0.0}, 0.0), ({"delta_ac": 3e9}, -2e9), ({"gamma_d": 0.0, "gamma_sd": 0.0}, 1e9)],
)
def test_other_operating_points(changes, detuning):
    params = SystemParams.reference().replace(**changes)
    drive = DriveSpec(p_in=5e-9, omega_l=params.omega_a + detuning, repetition_period=2e-6)
    t, ref = dense_reference(params, drive, n_max=2, dt=1e-9)
    trace, counts = fast((params, drive))
    after = t >= drive.pulse_width - 1e-15
    assert np.max(np.abs(trace.y - ref[after])) < 1e-6 * np.max(ref[after])
    start, stop = drive.collection_window
    sel = (t >= start - 1e-15) & (t <= stop + 1e-15)
    assert counts == pytest.approx(np.trapezoid(ref[sel], t[sel]), rel=1e-4)
