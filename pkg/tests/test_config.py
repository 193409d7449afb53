import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cqedfit.dataio import (
    ConfigError,
    ConfigWarning,
    apply_overrides,
    config_hash,
    dump_config,
    effective_overrides,
    load_config,
    parse_config,
    reference_config,
    save_config,
)

MINIMAL = """\
system:
  g_mhz: 42.4
  kappa_ghz: 5.22
  gamma0_khz: 169.3
"""


def test_minimal_config_fills_drive_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.drive.t0 == pytest.approx(170e-9)
    assert cfg.drive.repetition_period == pytest.approx(8e-6)
    assert cfg.drive.pulse_width == pytest.approx(900e-9)
    assert cfg.drive.omega_l == cfg.system.omega_a
    assert cfg.system.g == pytest.approx(42.4e6)
    assert cfg.seed == 0


def test_units_are_converted():
    cfg = parse_config(MINIMAL + "drive:\n  p_in_nw: 1.21\n  pulse_width_us: 0.5\n")
    assert cfg.drive.p_in == pytest.approx(1.21e-9)
    assert cfg.drive.pulse_width == pytest.approx(0.5e-6)


def test_unsigned_exponent_numbers_are_read():
    cfg = parse_config("system:\n  g_hz: 42.4e6\n  kappa_hz: 5.22e9\n  gamma0_hz: 169.3e3\n")
    assert cfg.system.kappa == 5.22e9


def test_negative_kappa_rejected_with_location():
    with pytest.raises(ConfigError, match="kappa must be positive") as info:
        parse_config(MINIMAL.replace("kappa_ghz: 5.22", "kappa_ghz: -5.22"))
    assert (info.value.line, info.value.column) == (3, 3)


@pytest.mark.parametrize(
    "text, message",
    [
        (MINIMAL.replace("g_mhz", "g_furlongs"), "unknown unit"),
        (MINIMAL.replace("g_mhz", "g_ns"), "time unit"),
        (MINIMAL.replace("g_mhz", "g"), "unit suffix"),
        (MINIMAL.replace("  g_mhz: 42.4\n", ""), "missing required field 'g'"),
        (MINIMAL + "drive:\n  eta_sys_hz: 0.1\n", "dimensionless"),
        (MINIMAL + "drive:\n  p_in_nw: lots\n", "expected a number"),
        (MINIMAL + "numerics:\n  n_max: 2.5\n", "integer"),
        ("drive:\n  p_in_nw: 1\n", "missing required section"),
        (MINIMAL + "fit:\n  bounds:\n    g_mhz: [20]\n", r"\[lo, hi\]"),
    ],
)
def test_validation_errors(text, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(text)


def test_yaml_syntax_error_has_position():
    with pytest.raises(ConfigError) as info:
        parse_config("system:\n  g_mhz: [1, 2\n")
    assert info.value.line is not None


def test_unknown_key_strict_and_lax():
    text = MINIMAL + "  colour: blue\n"
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(text)
    with pytest.warns(ConfigWarning, match="system.colour"):
        cfg = parse_config(text, strict=False)
    assert cfg.system.g == pytest.approx(42.4e6)


def test_round_trip_save_load(tmp_path):
    cfg = parse_config(MINIMAL + "fit:\n  fixed: gamma_sd\n  initial:\n    g_mhz: 50\nseed: 7\n")
    path = tmp_path / "cfg.yaml"
    save_config(cfg, path)
    again = load_config(path)
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)
    assert dump_config(again) == path.read_text()


def test_reference_round_trip_and_hash_sensitivity():
    cfg = reference_config()
    assert parse_config(dump_config(cfg)) == cfg
    other = apply_overrides(cfg, ["system.g_mhz=40"])
    assert config_hash(other) != config_hash(cfg)


def test_override_changes_exactly_the_named_key():
    cfg = reference_config()
    new = apply_overrides(cfg, ["system.g_mhz=40"])
    assert new.system.g == pytest.approx(40e6)
    assert effective_overrides(cfg, new) == ["system.g_hz"]
    listed = apply_overrides(cfg, ["sweeps.powers_nw=[1, 2]"])
    assert listed.sweeps.powers == pytest.approx((1e-9, 2e-9))
    seeded = apply_overrides(cfg, ["seed=9"])
    assert seeded.seed == 9 and effective_overrides(cfg, seeded) == ["seed"]
    tuned = apply_overrides(cfg, ["drive.laser_frequency_ghz=226142"])
    assert tuned.drive.omega_l == pytest.approx(226.142e12)


@pytest.mark.parametrize("bad", ["system.colour=3", "nosection.g_hz=1", "system.g_mhz", "system.g_mhz=[1"])
def test_bad_overrides_rejected(bad):
    with pytest.raises(ConfigError):
        apply_overrides(reference_config(), [bad])


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "absent.yaml")


def test_load_applies_overrides(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(MINIMAL)
    assert load_config(path, overrides=["drive.p_in_nw=2"]).drive.p_in == pytest.approx(2e-9)


def test_global_fit_config_carries_settings():
    cfg = apply_overrides(reference_config(), ["fit.n_hops=3", "seed=5", "numerics.n_quad=7"])
    gf = cfg.global_fit_config()
    assert gf.n_hops == 3 and gf.seed == 5 and gf.settings.n_quad == 7
    assert gf.base == cfg.system


@given(st.floats(1e6, 4e9), st.integers(0, 2**31 - 1))
def test_round_trip_property(g, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = apply_overrides(reference_config(), [f"system.g_hz={g!r}", f"seed={seed}"])
    assert parse_config(dump_config(cfg)) == cfg
