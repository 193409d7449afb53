"""Configuration documents, CSV curve files and JSON reports."""

from .config import (
    ConfigError,
    ConfigWarning,
    ExperimentConfig,
    FitSettings,
    Sweeps,
    apply_overrides,
    config_hash,
    dump_config,
    effective_overrides,
    load_config,
    parse_config,
    reference_config,
    save_config,
    to_document,
)
from .curves import CurveFileError, CurveFileWarning, read_curve, read_table, write_curve, write_table
from .report import ReportError, read_report, render_document, strip_timestamp, write_document, write_report

__all__ = [
    "ConfigError",
    "ConfigWarning",
    "CurveFileError",
    "CurveFileWarning",
    "ExperimentConfig",
    "FitSettings",
    "ReportError",
    "Sweeps",
    "apply_overrides",
    "config_hash",
    "dump_config",
    "effective_overrides",
    "load_config",
    "parse_config",
    "read_curve",
    "read_report",
    "read_table",
    "reference_config",
    "render_document",
    "save_config",
    "strip_timestamp",
    "to_document",
    "write_curve",
    "write_document",
    "write_report",
    "write_table",
]
