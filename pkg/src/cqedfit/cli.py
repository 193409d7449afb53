"""Command-line interface.

Subcommands::

    cqedfit simulate {decay,ple,saturation,detuning,map2d}
    cqedfit synth        # synthetic triple dataset for the global fit
    cqedfit fit          # global fit of (g, gamma_d, gamma_sd)
    cqedfit analytic NAME ARGS...
    cqedfit reproduce    # acceptance suite, run twice for determinism
    cqedfit config {show,template}

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 acceptance
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analytics as an
from .acceptance import CRITERIA, Context, reproduce
from .curve import SimCurve
from .curvefit import FitError, fit_gaussian
from .dataio import (
    ConfigError,
    CurveFileError,
    ReportError,
    apply_overrides,
    config_hash,
    dump_config,
    effective_overrides,
    load_config,
    read_curve,
    reference_config,
    write_curve,
    write_document,
    write_report,
    write_table,
)
from .globalfit import DATASETS, global_cqed_fit, synthesize_datasets
from .model import (
    decay_vs_detuning,
    default_ple_scan,
    extract_decay_rate,
    ple_spectrum,
    saturation_curve,
    simulate_pulse_cycle,
    spectrum_map_2d,
)
from .quantum import InvariantError, TruncationError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3


# ------------------------------------------------------------------- helpers
def _load(args):
    """Effective config: file (or the reference set), overrides, then --seed and --threads."""
    base = load_config(args.config, strict=not args.lax) if args.config else reference_config()
    cfg = apply_overrides(base, args.override) if args.override else base
    if args.override and args.verbose:
        for key in effective_overrides(base, cfg):
            print(f"override: {key}", file=sys.stderr)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    threads = args.threads or os.cpu_count() or 1
    cfg = dataclasses.replace(cfg, numerics=dataclasses.replace(cfg.numerics, threads=threads))
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _emit(rows: list[dict], fmt: str, stream=None) -> None:
    """Print summary rows as CSV or as an aligned table."""
    stream = stream or sys.stdout
    if not rows:
        return
    keys = list(rows[0])
    if fmt == "csv":
        print(",".join(keys), file=stream)
        for r in rows:
            print(",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k]) for k in keys), file=stream)
        return
    cells = [[_fmt(r[k]) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    print("  ".join(k.ljust(w) for k, w in zip(keys, widths)), file=stream)
    for c in cells:
        print("  ".join(v.ljust(w) for v, w in zip(c, widths)), file=stream)


def _summary_doc(kind, cfg, rows) -> dict:
    return {"kind": kind, "config_hash": config_hash(cfg), "seed": cfg.seed, "rows": rows}


def _scan(cfg, params=None):
    params = params or cfg.system
    if cfg.sweeps.ple_scan:
        return params.omega_a + np.asarray(cfg.sweeps.ple_scan)
    return default_ple_scan(params, cfg.sweeps.ple_points)


def _peak_summary(curve: SimCurve, omega_a: float) -> dict:
    res = fit_gaussian(curve)
    if res.flags.get("degenerate"):
        return {"fwhm_hz": math.nan, "peak_offset_hz": math.nan, "peak_counts": float(np.max(curve.y))}
    return {
        "fwhm_hz": abs(res["fwhm"]),
        "peak_offset_hz": res["center"] - omega_a,
        "peak_counts": float(np.max(curve.y)),
    }


# --------------------------------------------------------------- subcommands
def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    s, d, n = cfg.system, cfg.drive, cfg.numerics
    kind = args.kind
    if kind == "decay":
        trace, counts = simulate_pulse_cycle(s, d, n)
        rate, err = extract_decay_rate(trace)
        write_curve(trace, out / "decay.csv")
        rows = [
            {
                "delta_ac_hz": s.delta_ac,
                "counts_per_pulse": counts,
                "decay_rate_hz": rate,
                "enhancement": rate / s.gamma0,
                "lifetime_s": 1.0 / (2 * math.pi * rate),
            }
        ]
    elif kind == "ple":
        curve = ple_spectrum(s, d, _scan(cfg), n)
        write_curve(curve, out / "ple.csv")
        rows = [{"p_in_w": d.p_in, "delta_ac_hz": s.delta_ac, **_peak_summary(curve, s.omega_a)}]
    elif kind == "saturation":
        curve = saturation_curve(s, d, cfg.sweeps.powers, n)
        write_curve(curve, out / "saturation.csv")
        rows = [
            {
                "asymptote": curve.meta["asymptote"],
                "asymptote_power_w": curve.meta["asymptote_power"],
                "half_saturation_power_w": curve.meta["half_saturation_power"],
            }
        ]
    elif kind == "detuning":
        curve = decay_vs_detuning(s, d, cfg.sweeps.detunings, n)
        write_curve(curve, out / "detuning.csv")
        rows = [
            {
                "delta_ac_hz": float(x),
                "counts_per_pulse": c,
                "decay_rate_hz": rate,
                "enhancement": float(y),
                "lifetime_s": life,
            }
            for x, y, c, rate, life in zip(
                curve.x, curve.y, curve.meta["counts"], curve.meta["rates"], curve.meta["lifetimes"]
            )
        ]
    else:  # map2d
        dets = np.asarray(cfg.sweeps.map_detunings, dtype=float)
        scan = _scan(cfg)
        m = spectrum_map_2d(s, d, dets, scan, n)
        write_table(
            {
                "cavity detuning (Hz)": np.repeat(dets, scan.size),
                "laser frequency (Hz)": m.scans.ravel(),
                "counts per pulse": m.counts.ravel(),
            },
            out / "map2d.csv",
            {"p_in": d.p_in, "rows": int(dets.size), "columns": int(scan.size)},
        )
        rows = [{"delta_ac_hz": float(x), **_peak_summary(m.row(i), s.omega_a)} for i, x in enumerate(dets)]
    write_document(_summary_doc(kind, cfg, rows), out / f"{kind}_summary.json")
    _emit(rows, args.format)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    gcfg = cfg.global_fit_config()
    data = synthesize_datasets(cfg.system, gcfg, noise=cfg.fit.noise, seed=cfg.seed, background=args.background)
    for k in DATASETS:
        write_curve(data[k], out / f"{k}.csv")
    rows = [{"dataset": k, "points": len(data[k]), "file": str(out / f"{k}.csv")} for k in DATASETS]
    _emit(rows, args.format)
    return EXIT_OK


def _dataset_paths(args) -> dict:
    paths = {}
    if args.data_dir:
        for k in DATASETS:
            paths[k] = Path(args.data_dir) / f"{k}.csv"
    for k, attr in (("saturation", "saturation"), ("linewidth_vs_power", "linewidth"), ("decay_vs_detuning", "decay")):
        if getattr(args, attr):
            paths[k] = Path(getattr(args, attr))
    missing = [k for k in DATASETS if k not in paths]
    if missing:
        raise ConfigError(f"missing dataset(s): {', '.join(missing)}")
    for k, p in paths.items():
        if not p.is_file():
            raise ConfigError(f"dataset file not found for {k}: {p}")
    return paths


def cmd_fit(args) -> int:
    cfg = _load(args)
    paths = _dataset_paths(args)
    out = _out_dir(args)
    data = {k: read_curve(p) for k, p in paths.items()}
    res = global_cqed_fit(data, cfg.global_fit_config())
    for k, curve in res.extra["models"].items():
        src = data[k].meta
        meta = {key: src[key] for key in ("x_label", "x_unit") if key in src}
        meta.update({"y_label": f"model {src.get('y_label', k)}", "y_unit": src.get("y_unit", "")})
        write_curve(SimCurve(curve.x, curve.y, meta=meta), out / f"overlay_{k}.csv")
    extra = {
        "fixed_values_hz": {k: v for k, v in res.extra["values"].items() if k not in res.names},
        "saturation_background": res.extra["background"],
        "datasets": {k: str(p) for k, p in sorted(paths.items())},
        "n_hops": res.extra["n_hops"],
    }
    write_report(res, out / "fit_report.json", config_hash=config_hash(cfg), seed=cfg.seed, extra=extra)
    rows = [{"parameter": n, "value_hz": res[n], "stderr_hz": res.error(n)} for n in res.names]
    _emit(rows, args.format)
    if args.verbose:
        print(f"cost {res.cost:.6g} after {res.n_eval} evaluations", file=sys.stderr)
    return EXIT_OK


# name -> (function of floats, argument names, description)
ANALYTIC = {
    "system-efficiency": (
        lambda c, gc, p, d: an.system_efficiency(an.EfficiencyChain(c, gc, p, d)),
        ("eta_cav", "eta_gc", "eta_path", "eta_snspd"),
        "product of the collection efficiencies",
    ),
    "beta": (an.beta_factor, ("p_t",), "cavity funnelling fraction P_t/(P_t+1)"),
    "zpl-bound": (an.zpl_purcell_bound, ("p_t", "dw"), "lower bound on the ZPL Purcell factor"),
    "qe-bound": (an.qe_lower_bound, ("p_t", "dw", "p_sim"), "lower bound on the quantum efficiency"),
    "nuclear-separation": (
        lambda rho: an.nuclear_spin_separation(rho)[0],
        ("rho_cm3",),
        "mean nearest-neighbour spin separation (nm)",
    ),
    "dipole-moment": (an.dipole_moment, ("dw", "eta_qe", "gamma0_hz", "omega_hz", "n_host"), "transition dipole (C m)"),
    "coupling": (an.coupling_from_sim_purcell, ("p_sim", "kappa_tilde_hz", "gamma0_hz"), "coupling g (Hz)"),
    "kappa-tilde": (an.kappa_tilde_approx, ("kappa_hz", "gamma_d_hz"), "kappa + 2 gamma_d (Hz)"),
    "saturation-counts": (an.saturation_counts, ("eta_sys", "beta", "t0_s", "tau_s"), "saturated counts per pulse"),
    "eta-cav": (an.eta_cav_from_reflection, ("reflection",), "under-coupled cavity efficiency"),
    "g2-limit": (an.g2_snr_limit, ("snr",), "background-limited g2(0)"),
    "purcell-lorentzian": (
        lambda d, p, k, g: an.purcell_lorentzian(d, an.PurcellFit(p, k, g)),
        ("delta_ac_hz", "p_t", "kappa_tilde_hz", "gamma_inf_ratio"),
        "decay enhancement at a cavity detuning",
    ),
    "zeeman": (
        lambda b, dg, lw: an.zeeman_amplitude(b, an.ZeemanModel(dg, lw)),
        ("b_t", "delta_g", "linewidth_hz"),
        "relative PLE amplitude in a magnetic field",
    ),
    "thermal": (
        lambda t, p0, pt, ea_mev: an.thermal_linewidth(t, an.ThermalModel(p0, pt, ea_mev * 1e-3 * 1.602176634e-19)),
        ("t_k", "p0_hz", "p_t_hz", "e_a_mev"),
        "temperature-dependent linewidth (Hz)",
    ),
    "waveguide-bounds": (
        lambda c, t0, tau, col, path, det, lo, hi: tuple(an.waveguide_efficiency_bounds(c, t0, tau, col, path, det, (lo, hi)))[:2],
        ("c_sat", "t0_s", "tau_s", "eta_col", "eta_path", "eta_snspd", "eta_qe_lo", "eta_qe_hi"),
        "bounds on the waveguide efficiency (lower, upper)",
    ),
}


def cmd_analytic(args) -> int:
    if args.name == "list":
        rows = [{"name": k, "arguments": " ".join(v[1]), "description": v[2]} for k, v in ANALYTIC.items()]
        _emit(rows, args.format)
        return EXIT_OK
    if args.name not in ANALYTIC:
        raise ConfigError(f"unknown formula {args.name!r}; try 'analytic list'")
    func, names, _ = ANALYTIC[args.name]
    if len(args.values) != len(names):
        raise ConfigError(f"{args.name} takes {len(names)} argument(s): {' '.join(names)}")
    try:
        values = [float(v) for v in args.values]
    except ValueError as exc:
        raise ConfigError(f"arguments must be numbers ({exc})") from None
    result = func(*values)
    results = result if isinstance(result, tuple) else (result,)
    if args.format == "csv":
        print(",".join(["formula", *names, *(f"result{i}" if len(results) > 1 else "result" for i in range(len(results)))]))
        print(",".join([args.name, *map(repr, values), *(repr(float(r)) for r in results)]))
    else:
        print(" ".join(f"{float(r):.6g}" for r in results))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    cfg = _load(args) if args.config or args.override else None
    if cfg is None:
        ctx = Context(seed=args.seed if args.seed is not None else Context().seed)
        ctx = dataclasses.replace(ctx, settings=dataclasses.replace(ctx.settings, threads=args.threads or os.cpu_count() or 1))
        chash = None
    else:
        ctx = Context(system=cfg.system, drive=cfg.drive, settings=cfg.numerics, seed=cfg.seed)
        chash = config_hash(cfg)
    out = _out_dir(args)

    def progress(r):
        if args.verbose:
            print(r.line(), file=sys.stderr)

    results, doc = reproduce(ctx, args.only, chash, progress)
    write_document(doc, out / "acceptance_report.json")
    rows = [{"criterion": r.id, "result": "PASS" if r.passed else "FAIL", "name": r.name, "detail": r.detail} for r in results]
    _emit(rows, args.format)
    failed = [r.id for r in results if not r.passed]
    if failed:
        print(f"failed criteria: {', '.join(map(str, failed))}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_config(args) -> int:
    if args.action == "template":
        sys.stdout.write(dump_config(reference_config()))
        return EXIT_OK
    cfg = _load(args)
    if args.override:
        base = load_config(args.config, strict=not args.lax) if args.config else reference_config()
        for key in effective_overrides(base, apply_overrides(base, args.override)):
            print(f"# override: {key}")
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


# ---------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (default: the reference parameter set)")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: logical cores)")
    common.add_argument(
        "--override",
        action="extend",
        nargs="+",
        default=[],
        metavar="KEY=VALUE",
        help="dotted config overrides, e.g. system.g_mhz=40 (repeatable)",
    )
    common.add_argument("--format", choices=("csv", "table"), default="table", help="summary output format")
    common.add_argument("--lax", action="store_true", help="warn about unknown config keys instead of failing")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cqedfit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a simulated measurement")
    p.add_argument("kind", choices=("decay", "ple", "saturation", "detuning", "map2d"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic triple dataset")
    p.add_argument("--background", type=float, default=0.0, help="constant added to the saturation counts")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", parents=[common], help="global fit of g, gamma_d and gamma_sd")
    p.add_argument("--data-dir", help="directory holding saturation.csv, linewidth_vs_power.csv, decay_vs_detuning.csv")
    p.add_argument("--saturation", help="counts per pulse vs input power (W)")
    p.add_argument("--linewidth", help="PLE FWHM (Hz) vs input power (W)")
    p.add_argument("--decay", help="decay enhancement vs cavity detuning (Hz)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("analytic", parents=[common], help="evaluate a closed-form formula ('analytic list' for names)")
    p.add_argument("name")
    p.add_argument("values", nargs="*")
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("reproduce", parents=[common], help="run the acceptance suite twice and report")
    p.add_argument("--only", type=int, nargs="+", choices=CRITERIA, metavar="N", help="run only these criteria")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("config", parents=[common], help="print the effective or the template config")
    p.add_argument("action", choices=("show", "template"))
    p.set_defaults(func=cmd_config)
    return parser


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    previous = warnings.showwarning
    warnings.showwarning = _show_warning
    try:
        return args.func(args)
    except (TruncationError, InvariantError, FitError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CurveFileError, ReportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    finally:
        warnings.showwarning = previous


if __name__ == "__main__":
    sys.exit(main())
