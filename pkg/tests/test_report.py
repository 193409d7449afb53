import json
import math

import numpy as np
import pytest

from cqedfit.curve import SimCurve
from cqedfit.dataio import (
    ReportError,
    config_hash,
    read_report,
    reference_config,
    render_document,
    strip_timestamp,
    write_report,
)
from cqedfit.dataio.report import fit_summary
from cqedfit.optimize import FitResult


def sample_fit():
    return FitResult(
        params=np.array([42.4e6, 0.645e9]),
        cost=1.5e-3,
        n_eval=120,
        converged=True,
        names=("g", "gamma_d"),
        stderr=np.array([1e5, math.nan]),
        residuals={"saturation": 0.01, "decay_vs_detuning": 0.02},
    )


def test_report_contents(tmp_path):
    h = config_hash(reference_config())
    write_report(sample_fit(), tmp_path / "r.json", config_hash=h, seed=4, extra={"datasets": {"a": "a.csv"}})
    doc = read_report(tmp_path / "r.json")
    assert doc["parameters"]["g"] == {"value": 42.4e6, "stderr": 1e5}
    assert doc["parameters"]["gamma_d"]["stderr"] is None
    assert doc["residuals"]["saturation"] == 0.01
    assert doc["config_hash"] == h == config_hash(reference_config())
    assert doc["seed"] == 4 and doc["datasets"] == {"a": "a.csv"}
    assert "_generated" in doc


def test_timestamp_isolated_to_second_line():
    a = render_document({"x": 1}, timestamp="2020-01-01T00:00:00+00:00")
    b = render_document({"x": 1})
    assert a.splitlines()[1].lstrip().startswith('"_generated"')
    assert a != b and strip_timestamp(a) == strip_timestamp(b)
    json.loads(a)


def test_values_are_made_json_safe():
    doc = json.loads(render_document({"arr": np.arange(3), "nan": math.inf, "c": SimCurve([0, 1], [2, 3])}, "t"))
    assert doc["arr"] == [0, 1, 2] and doc["nan"] is None and doc["c"]["y"] == [2.0, 3.0]


def test_empty_fit_rejected(tmp_path):
    empty = FitResult(params=np.array([]), cost=0.0, n_eval=0, converged=False)
    with pytest.raises(ReportError):
        write_report(empty, tmp_path / "r.json")


def test_reserved_and_clashing_keys(tmp_path):
    with pytest.raises(ReportError):
        render_document({"_generated": 1})
    with pytest.raises(ReportError, match="clash"):
        write_report(sample_fit(), tmp_path / "r.json", extra={"cost": 1})


def test_unnamed_parameters_get_positional_names():
    fit = FitResult(params=np.array([1.0, 2.0]), cost=0.0, n_eval=1, converged=True)
    assert list(fit_summary(fit)["parameters"]) == ["p0", "p1"]


def test_missing_report(tmp_path):
    with pytest.raises(ReportError):
        read_report(tmp_path / "none.json")
