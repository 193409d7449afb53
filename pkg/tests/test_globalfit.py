import numpy as np
import pytest

from cqedfit.globalfit import (
    DATASETS,
    GlobalFitConfig,
    evaluate_models,
    global_cqed_fit,
    synthesize_datasets,
)
from cqedfit.model import DriveSpec, ModelSettings, SystemParams

TRUTH = SystemParams.reference()
GRIDS = {
    "saturation": np.array([0.3e-9, 3e-9, 30e-9]),
    "linewidth_vs_power": np.array([0.04e-9, 8e-9]),
    "decay_vs_detuning": np.array([-10e9, -3e9, 0.0, 3e9, 10e9]),
}


def small_config(**changes):
    kw = dict(
        base=TRUTH,
        drive=DriveSpec(p_in=0.0, omega_l=TRUTH.omega_a),
        settings=ModelSettings(n_quad=7),
        linewidth_scan=np.linspace(-12e9, 12e9, 13),
        n_hops=0,
        seed=1,
        uncertainties=False,
    )
    kw.update(changes)
    return GlobalFitConfig(**kw)


@pytest.fixture(scope="module")
def clean_data():
    return synthesize_datasets(TRUTH, small_config(), GRIDS, noise=0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(bounds={"g": (2.0, 1.0), "gamma_d": (0, 1), "gamma_sd": (0, 1)})
    with pytest.raises(ValueError):
        small_config(fixed=("kappa",))
    with pytest.raises(ValueError):
        small_config(weights={"saturation": 0.0})
    with pytest.raises(ValueError):
        small_config(initial={"g": 1e12}).start()


def test_synthetic_data_match_model(clean_data):
    models = evaluate_models(TRUTH, clean_data, small_config())
    for k in DATASETS:
        assert np.array_equal(models[k], clean_data[k].y)


def test_round_trip_from_offset_start(clean_data):
    start = {"g": 1.2 * TRUTH.g, "gamma_d": 0.8 * TRUTH.gamma_d, "gamma_sd": 1.2 * TRUTH.gamma_sd}
    fit = global_cqed_fit(clean_data, small_config(initial=start, n_hops=1))
    for name in ("g", "gamma_d", "gamma_sd"):
        assert fit[name] == pytest.approx(getattr(TRUTH, name), rel=0.05)
    assert set(fit.residuals) == set(DATASETS)
    assert fit.extra["background"] == pytest.approx(0.0, abs=1e-5)


def test_nested_model_cost_ordering(clean_data):
    free = global_cqed_fit(clean_data, small_config())
    restricted = global_cqed_fit(clean_data, small_config(fixed=("gamma_sd",), initial={"gamma_sd": 0.0}))
    assert restricted.names == ("g", "gamma_d")
    assert free.cost <= restricted.cost * (1 + 1e-6)
    # without diffusion, dephasing absorbs the missing width
    assert restricted["gamma_d"] > TRUTH.gamma_d


def test_fit_is_deterministic(clean_data):
    cfg = small_config(n_hops=1, initial={"g": 50e6}, local_max_eval=25)
    a, b = global_cqed_fit(clean_data, cfg), global_cqed_fit(clean_data, cfg)
    assert np.array_equal(a.params, b.params) and a.history == b.history


def test_missing_or_empty_dataset_rejected(clean_data):
    partial = {k: clean_data[k] for k in DATASETS[:2]}
    with pytest.raises(ValueError, match="missing"):
        global_cqed_fit(partial, small_config())
    with pytest.raises(ValueError, match="nothing to fit"):
        global_cqed_fit(clean_data, small_config(fixed=("g", "gamma_d", "gamma_sd")))


def test_noise_and_background_in_synthesis():
    data = synthesize_datasets(TRUTH, small_config(), GRIDS, noise=0.01, seed=3, background=1e-4)
    clean = synthesize_datasets(TRUTH, small_config(), GRIDS, noise=0.0, background=1e-4)
    rel = data["saturation"].y / clean["saturation"].y - 1
    assert np.all(np.abs(rel) < 0.05)
    assert np.allclose(data["saturation"].sigma, 0.01 * clean["saturation"].y)
