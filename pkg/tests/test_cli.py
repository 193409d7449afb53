import json

import numpy as np
import pytest

from cqedfit.cli import ANALYTIC, main
from cqedfit.dataio import read_curve, read_report, reference_config, strip_timestamp, write_curve
from cqedfit.globalfit import DATASETS, synthesize_datasets

FAST = ["--override", "numerics.n_quad=7", "--threads", "1"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_rows(text):
    lines = text.strip().splitlines()
    keys = lines[0].split(",")
    return [dict(zip(keys, line.split(","))) for line in lines[1:]]


# ------------------------------------------------------------------ simulate
def test_simulate_decay_lifetime(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "decay", "--out", str(tmp_path), "--format", "csv")
    assert code == 0
    row = csv_rows(out)[0]
    assert float(row["lifetime_s"]) == pytest.approx(136e-9, rel=0.15)
    assert (tmp_path / "decay.csv").is_file()
    summary = read_report(tmp_path / "decay_summary.json")
    assert summary["kind"] == "decay" and summary["rows"][0]["lifetime_s"] == float(row["lifetime_s"])


def test_detuning_single_row_equals_decay_summary(tmp_path, capsys):
    run(capsys, "simulate", "decay", "--out", str(tmp_path), *FAST)
    run(capsys, "simulate", "detuning", "--out", str(tmp_path), "--override", "sweeps.detunings_hz=[0]", *FAST)
    decay = read_report(tmp_path / "decay_summary.json")["rows"]
    det = read_report(tmp_path / "detuning_summary.json")["rows"]
    assert det == decay


def test_simulate_ple_zero_power_warns(tmp_path, capsys):
    code, out, err = run(
        capsys, "simulate", "ple", "--out", str(tmp_path), "--override", "drive.p_in_w=0", "sweeps.ple_points=9", *FAST
    )
    assert code == 0
    assert "warning: zero drive power" in err
    assert np.all(read_curve(tmp_path / "ple.csv").y == 0)
    assert "nan" in out


def test_simulate_saturation_and_map(tmp_path, capsys):
    over = ["--override", "sweeps.powers_nw=[0.1, 1, 10]", "sweeps.ple_points=9", "sweeps.map_detunings_ghz=[-5, 0, 5]"]
    code, out, _ = run(capsys, "simulate", "saturation", "--out", str(tmp_path), *over, *FAST)
    assert code == 0 and "asymptote" in out
    assert len(read_curve(tmp_path / "saturation.csv")) == 3
    code, _, _ = run(capsys, "simulate", "map2d", "--out", str(tmp_path), *over, *FAST)
    assert code == 0
    rows = read_report(tmp_path / "map2d_summary.json")["rows"]
    assert [r["delta_ac_hz"] for r in rows] == [-5e9, 0.0, 5e9]
    assert (tmp_path / "map2d.csv").read_text().count("\n") > 27


def test_simulate_is_reproducible(tmp_path, capsys):
    for d in ("a", "b"):
        run(capsys, "simulate", "decay", "--out", str(tmp_path / d), "--seed", "3", *FAST)
    assert (tmp_path / "a" / "decay.csv").read_bytes() == (tmp_path / "b" / "decay.csv").read_bytes()
    a = (tmp_path / "a" / "decay_summary.json").read_text()
    b = (tmp_path / "b" / "decay_summary.json").read_text()
    assert strip_timestamp(a) == strip_timestamp(b)
    assert json.loads(a)["seed"] == 3


# ------------------------------------------------------------------- errors
def test_validation_failure_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "decay", "--out", str(tmp_path), "--override", "system.kappa_hz=-1")
    assert code == 1 and "kappa must be positive" in err
    code, _, err = run(capsys, "simulate", "decay", "--out", str(tmp_path), "--override", "system.colour=1")
    assert code == 1 and "does not name" in err
    code, _, err = run(capsys, "simulate", "decay", "--config", str(tmp_path / "none.yaml"))
    assert code == 1 and "not found" in err


def test_truncation_failure_exit_code(tmp_path, capsys):
    over = ["--override", "drive.p_in_uw=100", "numerics.auto_truncation=false", "numerics.n_max=1"]
    code, _, err = run(capsys, "simulate", "decay", "--out", str(tmp_path), *over, *FAST[2:])
    assert code == 2 and "numerical failure" in err


def test_config_file_and_lax_mode(tmp_path, capsys):
    path = tmp_path / "cfg.yaml"
    path.write_text("system:\n  g_mhz: 42.4\n  kappa_ghz: 5.22\n  gamma0_khz: 169.3\n  colour: red\n")
    code, _, err = run(capsys, "config", "show", "--config", str(path))
    assert code == 1 and "unknown key" in err
    code, out, err = run(capsys, "config", "show", "--config", str(path), "--lax")
    assert code == 0 and "warning" in err and "g_hz: 42400000.0" in out


def test_config_template_and_override_echo(capsys):
    code, out, _ = run(capsys, "config", "template")
    assert code == 0 and "kappa_hz" in out
    code, out, _ = run(capsys, "config", "show", "--override", "system.g_mhz=40")
    assert out.splitlines()[0] == "# override: system.g_hz"
    assert "g_hz: 40000000.0" in out


# ----------------------------------------------------------------- analytic
@pytest.mark.parametrize(
    "argv, expected",
    [
        (["system-efficiency", "0.358", "0.461", "0.786", "0.703"], 0.0912),
        (["beta", "5.88"], 0.855),
        (["nuclear-separation", "2.34e21"], 0.42),
    ],
)
def test_analytic_examples(capsys, argv, expected):
    code, out, _ = run(capsys, "analytic", *argv)
    assert code == 0
    assert float(out.split()[0]) == pytest.approx(expected, abs=0.005)


def test_analytic_csv_and_list(capsys):
    code, out, _ = run(capsys, "analytic", "waveguide-bounds", "7e-4", "300e-9", "838.2e-9", "0.142", "0.786", "0.703", "0.234", "1", "--format", "csv")
    row = csv_rows(out)[0]
    assert float(row["result0"]) == pytest.approx(0.0255, rel=0.05)
    assert float(row["result1"]) == pytest.approx(0.109, rel=0.05)
    code, out, _ = run(capsys, "analytic", "list")
    assert all(name in out for name in ANALYTIC)


@pytest.mark.parametrize("argv", [["beta"], ["beta", "x"], ["nonsense", "1"], ["qe-bound", "200", "0.23", "470"]])
def test_analytic_errors(capsys, argv):
    code, _, err = run(capsys, "analytic", *argv)
    assert code == 1 and err.startswith("error:")


# ---------------------------------------------------------------------- fit
GRIDS = {
    "saturation": np.array([0.3e-9, 3e-9, 30e-9]),
    "linewidth_vs_power": np.array([0.04e-9, 8e-9]),
    "decay_vs_detuning": np.array([-10e9, -3e9, 0.0, 3e9, 10e9]),
}
FIT_FAST = ["--threads", "1", "--override", "numerics.n_quad=7", "fit.n_hops=0"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    cfg = reference_config()
    cfg = type(cfg)(**{**cfg.__dict__, "numerics": cfg.numerics.__class__(n_quad=7)})
    data = synthesize_datasets(cfg.system, cfg.global_fit_config(), GRIDS, noise=0.0)
    d = tmp_path_factory.mktemp("data")
    for k in DATASETS:
        write_curve(data[k], d / f"{k}.csv")
    return d


def test_fit_round_trip(data_dir, tmp_path, capsys):
    over = ["fit.initial.g_mhz=48", "fit.initial.gamma_d_ghz=0.55", "fit.local_max_eval=150"]
    code, out, _ = run(capsys, "fit", "--data-dir", str(data_dir), "--out", str(tmp_path), *FIT_FAST, *over, "--format", "csv")
    assert code == 0
    values = {r["parameter"]: float(r["value_hz"]) for r in csv_rows(out)}
    assert values["g"] == pytest.approx(42.4e6, rel=0.05)
    assert values["gamma_d"] == pytest.approx(0.645e9, rel=0.05)
    assert values["gamma_sd"] == pytest.approx(1.69e9, rel=0.05)
    report = read_report(tmp_path / "fit_report.json")
    assert set(report["parameters"]) == {"g", "gamma_d", "gamma_sd"}
    assert set(report["residuals"]) == set(DATASETS)
    for k in DATASETS:
        overlay = read_curve(tmp_path / f"overlay_{k}.csv")
        assert np.array_equal(overlay.x, GRIDS[k])


def test_fit_nested_and_deterministic(data_dir, tmp_path, capsys):
    budget = ["fit.local_max_eval=30"]
    for name in ("a", "b"):
        run(capsys, "fit", "--data-dir", str(data_dir), "--out", str(tmp_path / name), *FIT_FAST, *budget)
    a = (tmp_path / "a" / "fit_report.json").read_text()
    b = (tmp_path / "b" / "fit_report.json").read_text()
    assert strip_timestamp(a) == strip_timestamp(b)
    fixed = ["fit.fixed=[gamma_sd]", "fit.initial.gamma_sd_hz=0"]
    code, _, _ = run(capsys, "fit", "--data-dir", str(data_dir), "--out", str(tmp_path / "c"), *FIT_FAST, *budget, *fixed)
    assert code == 0
    restricted = read_report(tmp_path / "c" / "fit_report.json")
    assert restricted["fixed_values_hz"] == {"gamma_sd": 0.0}
    assert json.loads(a)["cost"] <= restricted["cost"]


def test_fit_missing_dataset(tmp_path, capsys):
    code, _, err = run(capsys, "fit", "--saturation", str(tmp_path / "none.csv"))
    assert code == 1 and "missing dataset" in err


def test_synth_writes_three_datasets(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--out", str(tmp_path), "--seed", "2", *FAST)
    assert code == 0
    for k in DATASETS:
        assert read_curve(tmp_path / f"{k}.csv").meta["seed"] == 2


# ---------------------------------------------------------------- reproduce
def test_reproduce_selected_criteria(tmp_path, capsys):
    code, out, _ = run(capsys, "reproduce", "--only", "6", "11", "12", "--out", str(tmp_path))
    assert code == 0
    doc = read_report(tmp_path / "acceptance_report.json")
    assert sorted(doc["criteria"], key=int) == ["6", "11", "12"]
    assert all(c["passed"] for c in doc["criteria"].values())
    assert "PASS" in out


def test_reproduce_perturbed_config_names_failure(tmp_path, capsys):
    code, out, err = run(capsys, "reproduce", "--only", "1", "--override", "system.g_mhz=20", "--out", str(tmp_path), *FAST)
    assert code == 3
    assert "failed criteria: 1" in err
    assert "FAIL" in out
