"""JSON fit and run reports.

Reports are written with sorted keys and two-space indentation. The only
field that changes between identical runs is ``_generated`` (a UTC time
stamp), which always sits alone on the second line so that
:func:`strip_timestamp` can drop it before byte comparison. Non-finite
numbers are stored as ``null``.
"""

from __future__ import annotations

import datetime as _dt
import json
import math
from pathlib import Path

import numpy as np

from ..curve import SimCurve
from ..optimize import FitResult

TIMESTAMP_KEY = "_generated"


class ReportError(ValueError):
    pass


def _clean(obj):
    """Recursively convert to JSON-safe builtins."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, SimCurve):
        out = {"x": _clean(obj.x), "y": _clean(obj.y), "meta": _clean(obj.meta)}
        if obj.sigma is not None:
            out["sigma"] = _clean(obj.sigma)
        return out
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    return repr(obj)


def fit_summary(fit: FitResult) -> dict:
    """Parameters, uncertainties and diagnostics of a fit as plain data."""
    params = np.atleast_1d(np.asarray(fit.params, dtype=float))
    if params.size == 0:
        raise ReportError("fit result has no parameters")
    names = list(fit.names) or [f"p{i}" for i in range(params.size)]
    stderr = [math.nan] * params.size if fit.stderr is None else list(np.asarray(fit.stderr, dtype=float))
    return {
        "parameters": {n: {"value": float(v), "stderr": float(e)} for n, v, e in zip(names, params, stderr)},
        "cost": float(fit.cost),
        "n_eval": int(fit.n_eval),
        "converged": bool(fit.converged),
        "residuals": dict(fit.residuals),
        "flags": dict(fit.flags),
        "message": fit.message,
    }


def render_document(doc: dict, timestamp: str | None = None) -> str:
    if TIMESTAMP_KEY in doc:
        raise ReportError(f"{TIMESTAMP_KEY!r} is reserved")
    if timestamp is None:
        timestamp = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
    full = {TIMESTAMP_KEY: timestamp, **_clean(doc)}
    # "_" sorts before lowercase letters, so the stamp is always the first key
    return json.dumps(full, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_document(doc: dict, path, timestamp: str | None = None) -> str:
    text = render_document(doc, timestamp)
    Path(path).write_text(text)
    return text


def write_report(
    fit: FitResult,
    path,
    *,
    config_hash: str | None = None,
    seed: int | None = None,
    extra: dict | None = None,
    timestamp: str | None = None,
) -> str:
    """Write a fit report and return its text.

    The document holds the fitted parameters with uncertainties, the cost,
    per-dataset residual norms, flags, the configuration hash and the seed;
    ``extra`` adds caller-specific sections (e.g. fixed parameters).
    """
    doc = fit_summary(fit)
    doc["config_hash"] = config_hash
    doc["seed"] = seed
    if extra:
        clash = set(extra) & set(doc)
        if clash:
            raise ReportError(f"extra keys clash with report fields: {sorted(clash)}")
        doc.update(extra)
    return write_document(doc, path, timestamp)


def read_report(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ReportError(f"report not found: {path}")
    return json.loads(path.read_text())


def strip_timestamp(text: str) -> str:
    """Report text without the ``_generated`` line."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.lstrip().startswith(f'"{TIMESTAMP_KEY}"'))
