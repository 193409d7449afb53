"""Experiment configuration documents.

A config is a YAML mapping with the sections ``system``, ``drive``,
``efficiency``, ``sweeps``, ``fit`` and ``numerics`` plus a top-level
``seed``. Every dimensioned number carries its unit as a key suffix::

    system:
      g_mhz: 42.4
      kappa_ghz: 5.22
      gamma0_khz: 169.3
    drive:
      p_in_nw: 1.21
      pulse_width_ns: 900

Frequencies are ordinary (not angular) Hz-family values. Dimensionless
fields (efficiencies, counts, seeds) take no suffix. Accepted suffixes:

========== ===========================================
quantity   suffixes
========== ===========================================
frequency  ``hz``, ``khz``, ``mhz``, ``ghz``, ``thz``
time       ``s``, ``ms``, ``us``, ``ns``, ``ps``
power      ``w``, ``mw``, ``uw``, ``nw``, ``pw``
========== ===========================================

Only ``system.g``, ``system.kappa`` and ``system.gamma0`` are required;
everything else has a default. :func:`save_config` writes the canonical
form (SI units, every field present), which loads back to an identical
config.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ..analytics import EfficiencyChain
from ..globalfit import DATASETS, DEFAULT_BOUNDS, FREE_NAMES, GlobalFitConfig
from ..model import DriveSpec, ModelSettings, SystemParams

UNITS = {
    "frequency": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "thz": 1e12},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "power": {"w": 1.0, "mw": 1e-3, "uw": 1e-6, "nw": 1e-9, "pw": 1e-12},
}
SI_SUFFIX = {"frequency": "hz", "time": "s", "power": "w"}
_SUFFIX_KIND = {s: kind for kind, table in UNITS.items() for s in table}


class ConfigError(ValueError):
    """Invalid configuration document; ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class ConfigWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Sweeps:
    """Abscissae of the simulated sweeps.

    ``ple_scan_hz`` holds laser offsets from the emitter line; when empty the
    default scan of ``ple_points`` points over +-2.5 estimated linewidths is used.
    """

    powers: tuple = (1e-11, 3e-11, 1e-10, 3e-10, 1e-9, 3e-9, 1e-8, 3e-8, 1e-7)
    detunings: tuple = tuple(np.linspace(-25e9, 25e9, 15).tolist())
    ple_scan: tuple = ()
    ple_points: int = 81
    map_detunings: tuple = (-10e9, -5e9, 0.0, 5e9, 10e9)


@dataclass(frozen=True)
class FitSettings:
    """Global-fit options; bounds and initial values in Hz."""

    n_hops: int = 25
    step_fraction: float = 0.2
    temperature: float = 1.0
    bounds: dict = field(default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_BOUNDS.items()})
    initial: dict = field(default_factory=dict)
    fixed: tuple = ()
    weights: dict = field(default_factory=lambda: {k: 1.0 for k in DATASETS})
    decay_power: float = 1.21e-9
    fit_background: bool = True
    local_max_eval: int = 300
    noise: float = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemParams
    drive: DriveSpec
    efficiency: EfficiencyChain = field(default_factory=lambda: EfficiencyChain(0.358, 0.461, 0.786, 0.703))
    sweeps: Sweeps = field(default_factory=Sweeps)
    fit: FitSettings = field(default_factory=FitSettings)
    numerics: ModelSettings = field(default_factory=ModelSettings)
    seed: int = 0

    def global_fit_config(self, **changes) -> GlobalFitConfig:
        f = self.fit
        kw = dict(
            base=self.system,
            drive=self.drive.replace(p_in=0.0, omega_l=self.system.omega_a),
            bounds={k: tuple(v) for k, v in f.bounds.items()},
            initial=dict(f.initial),
            fixed=tuple(f.fixed),
            weights=dict(f.weights),
            n_hops=f.n_hops,
            step_fraction=f.step_fraction,
            temperature=f.temperature,
            seed=self.seed,
            settings=self.numerics,
            decay_power=f.decay_power,
            fit_background=f.fit_background,
            local_max_eval=f.local_max_eval,
        )
        kw.update(changes)
        return GlobalFitConfig(**kw)


def reference_config() -> ExperimentConfig:
    """Reference emitter-cavity parameters, driven at 1.21 nW on the emitter line."""
    system = SystemParams.reference()
    return ExperimentConfig(system, DriveSpec(p_in=1.21e-9, omega_l=system.omega_a))


# field tables: key -> (quantity kind or None, required)
_SYSTEM = {
    "g": ("frequency", True),
    "kappa": ("frequency", True),
    "gamma0": ("frequency", True),
    "gamma_d": ("frequency", False),
    "gamma_sd": ("frequency", False),
    "omega_a": ("frequency", False),
    "eta_cav": (None, False),
    "delta_ac": ("frequency", False),
}
_DRIVE = {
    "p_in": ("power", False),
    "laser_frequency": ("frequency", False),
    "pulse_width": ("time", False),
    "repetition_period": ("time", False),
    "t0": ("time", False),
    "eta_sys": (None, False),
}
_EFFICIENCY = {"eta_cav": (None, False), "eta_gc": (None, False), "eta_path": (None, False), "eta_snspd": (None, False)}
_SWEEPS = {
    "powers": ("power", False),
    "detunings": ("frequency", False),
    "ple_scan": ("frequency", False),
    "ple_points": ("int", False),
    "map_detunings": ("frequency", False),
}
_FIT = {
    "n_hops": ("int", False),
    "step_fraction": (None, False),
    "temperature": (None, False),
    "bounds": ("nested", False),
    "initial": ("nested", False),
    "fixed": ("names", False),
    "weights": ("nested", False),
    "decay_power": ("power", False),
    "fit_background": ("bool", False),
    "local_max_eval": ("int", False),
    "noise": (None, False),
}
_NUMERICS = {
    "n_max": ("int", False),
    "n_quad": ("int", False),
    "dt_record": ("time", False),
    "threads": ("int", False),
    "auto_truncation": ("bool", False),
}
_SECTIONS = {
    "system": _SYSTEM,
    "drive": _DRIVE,
    "efficiency": _EFFICIENCY,
    "sweeps": _SWEEPS,
    "fit": _FIT,
    "numerics": _NUMERICS,
}


# --------------------------------------------------------------------- parsing
def _marks(node, path=(), out=None):
    """Map dotted key paths to (line, column) of their YAML nodes."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (str(k.value),)
            out[".".join(key)] = (k.start_mark.line + 1, k.start_mark.column + 1)
            _marks(v, key, out)
    return out


def _parse_text(text: str, source: str = "<string>"):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigError(f"{source}: YAML parse error: {exc.problem or exc}", line, col) from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: YAML parse error: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{source}: top level must be a mapping", 1, 1)
    return doc, _marks(node)


def split_unit(key: str):
    """``"g_mhz"`` -> ``("g", "mhz")``; keys without a known suffix return ``(key, None)``."""
    base, _, suffix = key.rpartition("_")
    if base and suffix in _SUFFIX_KIND:
        return base, suffix
    return key, None


class _Reader:
    def __init__(self, marks: dict, strict: bool):
        self.marks = marks
        self.strict = strict

    def error(self, path: str, message: str):
        line, col = self.marks.get(path, (None, None))
        return ConfigError(f"{path}: {message}", line, col)

    def number(self, path: str, value, kind):
        if isinstance(value, bool):
            raise self.error(path, "expected a number, got a boolean")
        if isinstance(value, str):
            # YAML 1.1 reads "5.22e9" (no sign in the exponent) as a string
            try:
                value = float(value)
            except ValueError:
                raise self.error(path, f"expected a number, got {value!r}") from None
        if not isinstance(value, (int, float)):
            raise self.error(path, f"expected a number, got {type(value).__name__}")
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise self.error(path, f"expected an integer, got {value!r}")
            return int(value)
        value = float(value)
        if not math.isfinite(value):
            raise self.error(path, "value must be finite")
        return value

    def section(self, name: str, raw, table: dict) -> dict:
        """Validated values of one section in SI units, keyed by field name."""
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise self.error(name, "section must be a mapping")
        out = {}
        for key, value in raw.items():
            path = f"{name}.{key}"
            base, unit = split_unit(str(key))
            if base not in table:
                bare_base, _, maybe_unit = str(key).rpartition("_")
                if bare_base in table and table[bare_base][0] in UNITS:
                    raise self.error(path, f"unknown unit {maybe_unit!r}")
                self._unknown(path)
                continue
            kind = table[base][0]
            if base in out:
                raise self.error(path, f"{base!r} given more than once")
            if kind in UNITS:
                if unit is None:
                    raise self.error(path, f"{base!r} needs a {kind} unit suffix, e.g. {base}_{SI_SUFFIX[kind]}")
                if _SUFFIX_KIND[unit] != kind:
                    raise self.error(path, f"unit {unit!r} is a {_SUFFIX_KIND[unit]} unit, {base!r} is a {kind}")
                scale = UNITS[kind][unit]
                if isinstance(value, list):
                    out[base] = tuple(self.number(path, v, kind) * scale for v in value)
                else:
                    out[base] = self.number(path, value, kind) * scale
                continue
            if unit is not None:
                raise self.error(path, f"{base!r} is dimensionless and takes no unit suffix")
            if kind == "bool":
                if not isinstance(value, bool):
                    raise self.error(path, "expected true or false")
                out[base] = value
            elif kind == "names":
                if isinstance(value, str):
                    value = [value]
                if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
                    raise self.error(path, "expected a list of parameter names")
                out[base] = tuple(value)
            elif kind == "nested":
                out[base] = self._nested(path, base, value)
            else:
                out[base] = self.number(path, value, kind)
        for key, (kind, required) in table.items():
            if required and key not in out:
                hint = f" (e.g. {key}_{SI_SUFFIX[kind]})" if kind in UNITS else ""
                raise self.error(name, f"missing required field {key!r}{hint}")
        return out

    def _nested(self, path, base, value):
        if not isinstance(value, dict):
            raise self.error(path, "expected a mapping")
        out = {}
        for k, v in value.items():
            sub = f"{path}.{k}"
            if base == "weights":
                if k not in DATASETS:
                    self._unknown(sub)
                    continue
                out[k] = self.number(sub, v, None)
                continue
            name, unit = split_unit(str(k))
            if name not in FREE_NAMES:
                self._unknown(sub)
                continue
            if unit is None or _SUFFIX_KIND[unit] != "frequency":
                raise self.error(sub, f"{name!r} needs a frequency unit suffix, e.g. {name}_hz")
            scale = UNITS["frequency"][unit]
            if base == "bounds":
                if not isinstance(v, list) or len(v) != 2:
                    raise self.error(sub, "bounds need [lo, hi]")
                out[name] = tuple(self.number(sub, x, None) * scale for x in v)
            else:
                out[name] = self.number(sub, v, None) * scale
        return out

    def _unknown(self, path):
        if self.strict:
            raise self.error(path, "unknown key")
        line, col = self.marks.get(path, (None, None))
        where = f" (line {line}, column {col})" if line is not None else ""
        warnings.warn(f"ignoring unknown config key {path}{where}", ConfigWarning, stacklevel=4)


def _build(doc: dict, marks: dict, strict: bool) -> ExperimentConfig:
    rd = _Reader(marks, strict)
    for key in doc:
        if key not in _SECTIONS and key != "seed":
            rd._unknown(str(key))
    if "system" not in doc:
        raise ConfigError("missing required section 'system'", 1, 1)
    sec = {name: rd.section(name, doc.get(name), table) for name, table in _SECTIONS.items()}
    seed = rd.number("seed", doc.get("seed", 0), "int")

    def make(path, cls, **kw):
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            msg = str(exc)
            # point at the offending key when the message names it
            for key in marks:
                head, _, leaf = key.rpartition(".")
                if head == path and msg.startswith(split_unit(leaf)[0] + " "):
                    raise rd.error(key, msg) from None
            raise rd.error(path, msg) from None

    system = make("system", SystemParams, **sec["system"])
    d = dict(sec["drive"])
    omega_l = d.pop("laser_frequency", system.omega_a)
    drive = make("drive", DriveSpec, omega_l=omega_l, p_in=d.pop("p_in", 0.0), **d)
    eff = make("efficiency", EfficiencyChain, **{**_default_kwargs(EfficiencyChain(0.358, 0.461, 0.786, 0.703)), **sec["efficiency"]})
    sweeps = make("sweeps", Sweeps, **sec["sweeps"])
    for name in ("powers", "detunings", "ple_scan", "map_detunings"):
        v = getattr(sweeps, name)
        if not isinstance(v, tuple):
            raise rd.error(f"sweeps.{name}", "expected a list")
    fit_kw = dict(sec["fit"])
    if "bounds" in fit_kw:
        fit_kw["bounds"] = {**{k: tuple(v) for k, v in DEFAULT_BOUNDS.items()}, **fit_kw["bounds"]}
    if "weights" in fit_kw:
        fit_kw["weights"] = {**{k: 1.0 for k in DATASETS}, **fit_kw["weights"]}
    fit = make("fit", FitSettings, **fit_kw)
    numerics = make("numerics", ModelSettings, **sec["numerics"])
    cfg = ExperimentConfig(system, drive, eff, sweeps, fit, numerics, seed)
    try:
        cfg.global_fit_config()
    except ValueError as exc:
        raise rd.error("fit", str(exc)) from None
    return cfg


def _default_kwargs(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj) if getattr(obj, f.name) is not None}


# ------------------------------------------------------------------ public API
def parse_config(text: str, strict: bool = True, source: str = "<string>") -> ExperimentConfig:
    doc, marks = _parse_text(text, source)
    return _build(doc, marks, strict)


def load_config(path, strict: bool = True, overrides=()) -> ExperimentConfig:
    """Read, validate and default a config file.

    ``strict`` rejects unknown keys; otherwise they are ignored with a
    :class:`ConfigWarning`. ``overrides`` are ``"section.key=value"``
    strings applied on top of the file (see :func:`apply_overrides`).
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg = parse_config(path.read_text(), strict=strict, source=str(path))
    return apply_overrides(cfg, overrides) if overrides else cfg


def to_document(cfg: ExperimentConfig) -> dict:
    """Canonical nested mapping in SI units with every field present."""
    s, d = cfg.system, cfg.drive
    system = {
        "g_hz": s.g,
        "kappa_hz": s.kappa,
        "gamma0_hz": s.gamma0,
        "gamma_d_hz": s.gamma_d,
        "gamma_sd_hz": s.gamma_sd,
        "omega_a_hz": s.omega_a,
        "eta_cav": s.eta_cav,
        "delta_ac_hz": s.delta_ac,
    }
    drive = {
        "p_in_w": d.p_in,
        "pulse_width_s": d.pulse_width,
        "repetition_period_s": d.repetition_period,
        "t0_s": d.t0,
        "eta_sys": d.eta_sys,
    }
    if d.omega_l != s.omega_a:
        drive["laser_frequency_hz"] = d.omega_l
    e = cfg.efficiency
    sw, f, n = cfg.sweeps, cfg.fit, cfg.numerics
    return {
        "seed": cfg.seed,
        "system": system,
        "drive": drive,
        "efficiency": {"eta_cav": e.eta_cav, "eta_gc": e.eta_gc, "eta_path": e.eta_path, "eta_snspd": e.eta_snspd},
        "sweeps": {
            "powers_w": list(sw.powers),
            "detunings_hz": list(sw.detunings),
            "ple_scan_hz": list(sw.ple_scan),
            "ple_points": sw.ple_points,
            "map_detunings_hz": list(sw.map_detunings),
        },
        "fit": {
            "n_hops": f.n_hops,
            "step_fraction": f.step_fraction,
            "temperature": f.temperature,
            "bounds": {f"{k}_hz": list(v) for k, v in f.bounds.items()},
            "initial": {f"{k}_hz": v for k, v in f.initial.items()},
            "fixed": list(f.fixed),
            "weights": dict(f.weights),
            "decay_power_w": f.decay_power,
            "fit_background": f.fit_background,
            "local_max_eval": f.local_max_eval,
            "noise": f.noise,
        },
        "numerics": {
            "n_max": n.n_max,
            "n_quad": n.n_quad,
            "dt_record_s": n.dt_record,
            "threads": n.threads,
            "auto_truncation": n.auto_truncation,
        },
    }


def _plain(obj):
    """Convert numpy scalars so the YAML dumper emits plain numbers."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


class _Dumper(yaml.SafeDumper):
    pass


# mappings as blocks, lists inline
_Dumper.add_representer(list, lambda d, v: d.represent_sequence("tag:yaml.org,2002:seq", v, flow_style=True))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.dump(_plain(to_document(cfg)), Dumper=_Dumper, sort_keys=False, default_flow_style=False, width=100)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical document; equal configs hash equally."""
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


def apply_overrides(cfg: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``"section.key=value"`` overrides.

    The key must name an existing field; its unit suffix may differ from
    the canonical one (``system.g_mhz=40`` replaces ``g_hz``). Values are
    parsed as YAML, so lists are written ``[1e-9, 2e-9]``.
    """
    doc = to_document(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, text = item.partition("=")
        parts = key.strip().split(".")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: cannot parse value ({exc})") from None
        if parts == ["seed"]:
            doc["seed"] = value
            continue
        node = doc
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"override {key!r} does not name an existing config key")
            node = node[p]
        leaf = parts[-1]
        base, _ = split_unit(leaf)
        match = [k for k in node if k == leaf or split_unit(k)[0] == base] if isinstance(node, dict) else []
        if not match:
            if parts[0] == "drive" and base == "laser_frequency":
                match = []
            elif len(parts) == 3 and parts[1] in ("initial",) and base in FREE_NAMES:
                match = []
            else:
                raise ConfigError(f"override {key!r} does not name an existing config key")
        for k in match:
            del node[k]
        node[leaf] = value
    return _build(doc, {}, strict=True)


def effective_overrides(before: ExperimentConfig, after: ExperimentConfig) -> list:
    """Dotted canonical keys whose values differ between two configs."""

    def flat(d, prefix=""):
        out = {}
        for k, v in d.items():
            if isinstance(v, dict):
                out.update(flat(v, f"{prefix}{k}."))
            else:
                out[f"{prefix}{k}"] = v
        return out

    a, b = flat(to_document(before)), flat(to_document(after))
    return sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
