"""CSV curve and table files.

Layout::

    # pulse_end = 9e-07
    # synthetic = true
    time (s),detected rate (1/s),sigma (1/s)
    0.0,1.25e5,1200.0
    ...

Lines starting with ``#`` before the header carry metadata as
``key = <JSON value>``. The header names each column as ``label (unit)``;
the unit part is optional. A curve has two or three columns: abscissa,
ordinate and, optionally, the per-point uncertainty. Numbers are written
with ``repr``, so a write/read cycle is lossless.
"""

from __future__ import annotations

import csv
import json
import math
import re
import warnings
from pathlib import Path

import numpy as np

from ..curve import SimCurve

_LABEL_KEYS = ("x_label", "x_unit", "y_label", "y_unit")
_HEADER_RE = re.compile(r"^\s*(.*?)\s*(?:\(([^()]*)\))?\s*$")


class CurveFileError(ValueError):
    """Malformed curve or table file."""


class CurveFileWarning(UserWarning):
    pass


def _num(v) -> str:
    v = float(v)
    return repr(v)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _column_name(label: str, unit: str) -> str:
    return f"{label} ({unit})" if unit else label


def write_table(columns: dict, path, meta: dict | None = None) -> None:
    """Write equal-length numeric columns; keys are ``"label (unit)"`` headers."""
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float).ravel() for n in names]
    if len({d.size for d in data}) > 1:
        raise ValueError("all columns must have the same length")
    lines = []
    for k in sorted(meta or {}):
        value = json.dumps((meta or {})[k], default=_json_default, sort_keys=True)
        lines.append(f"# {k} = {value}")
    lines.append(",".join(names))
    for row in zip(*data):
        lines.append(",".join(_num(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(path) -> tuple[list, np.ndarray, dict]:
    """Column names, an ``(rows, columns)`` array and the metadata of a table file."""
    path = Path(path)
    if not path.is_file():
        raise CurveFileError(f"file not found: {path}")
    meta: dict = {}
    header = None
    rows = []
    with path.open(newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if header is not None:
                    continue
                body = stripped[1:].strip()
                if "=" not in body:
                    continue  # free-form comment
                key, _, value = body.partition("=")
                try:
                    meta[key.strip()] = json.loads(value.strip())
                except json.JSONDecodeError:
                    raise CurveFileError(f"{path}:{lineno}: metadata value for {key.strip()!r} is not valid JSON") from None
                continue
            cells = next(csv.reader([stripped]))
            if header is None:
                header = [c.strip() for c in cells]
                continue
            if len(cells) != len(header):
                raise CurveFileError(
                    f"{path}: row {len(rows) + 1} (line {lineno}) has {len(cells)} cells, header has {len(header)}"
                )
            values = []
            for c in cells:
                try:
                    v = float(c)
                except ValueError:
                    raise CurveFileError(f"{path}: row {len(rows) + 1} (line {lineno}) has non-numeric cell {c.strip()!r}") from None
                if not math.isfinite(v):
                    raise CurveFileError(f"{path}: row {len(rows) + 1} (line {lineno}) contains {c.strip()}")
                values.append(v)
            rows.append(values)
    if header is None:
        raise CurveFileError(f"{path}: no header row")
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, arr, meta


def split_header(name: str) -> tuple[str, str]:
    """``"time (s)"`` -> ``("time", "s")``."""
    m = _HEADER_RE.match(name)
    return m.group(1), (m.group(2) or "").strip()


def write_curve(curve: SimCurve, path) -> None:
    """Write a :class:`SimCurve` as CSV. Labels and units come from ``meta``."""
    meta = dict(curve.meta)
    xl, xu = meta.pop("x_label", "x"), meta.pop("x_unit", "")
    yl, yu = meta.pop("y_label", "y"), meta.pop("y_unit", "")
    cols = {_column_name(xl, xu): curve.x, _column_name(yl, yu): curve.y}
    if curve.sigma is not None:
        cols[_column_name("sigma", yu)] = curve.sigma
    if len(cols) < (3 if curve.sigma is not None else 2):
        raise ValueError("column names must differ")
    write_table(cols, path, meta)


def read_curve(path) -> SimCurve:
    """Read a curve file written by :func:`write_curve` or by hand.

    A non-monotone abscissa is sorted (with a warning); repeated abscissa
    values are an error.
    """
    header, arr, meta = read_table(path)
    if len(header) not in (2, 3):
        raise CurveFileError(f"{path}: a curve needs 2 or 3 columns, found {len(header)}")
    if arr.shape[0] == 0:
        raise CurveFileError(f"{path}: no data rows")
    x, y = arr[:, 0], arr[:, 1]
    sigma = arr[:, 2] if len(header) == 3 else None
    d = np.diff(x)
    if x.size > 1 and not (np.all(d > 0) or np.all(d < 0)):
        order = np.argsort(x, kind="stable")
        x, y = x[order], y[order]
        sigma = None if sigma is None else sigma[order]
        if np.any(np.diff(x) == 0):
            raise CurveFileError(f"{path}: repeated abscissa value {x[np.flatnonzero(np.diff(x) == 0)[0]]!r}")
        warnings.warn(f"{path}: abscissa was not monotone; rows sorted", CurveFileWarning, stacklevel=2)
    xl, xu = split_header(header[0])
    yl, yu = split_header(header[1])
    labels = {"x_label": xl, "x_unit": xu, "y_label": yl, "y_unit": yu}
    for k in _LABEL_KEYS:
        meta.pop(k, None)
    # keep default labels out of meta so unlabelled curves round-trip unchanged
    defaults = {"x_label": "x", "x_unit": "", "y_label": "y", "y_unit": ""}
    meta.update({k: v for k, v in labels.items() if v != defaults[k]})
    return SimCurve(x, y, sigma, meta)
