"""Command-line entry point: ``optoent run | figure | sweep | validate``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import PRESET_NAMES, ConfigError, RunConfig, config_from_mapping, load_config, load_preset
from .core import ParameterError
from .entanglement import ESD_THRESHOLD, UnphysicalCovariance
from .noise import CAVITY_NOISE_FACTOR, ConvergenceError
from .propagator import DEFAULT_K_DT
from .runner import Curve, combined_table, execute, validate_suite

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_VALIDATION = 4


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _clean(obj):
    """JSON-safe copy: NaN and infinities become null, numpy scalars become floats."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(key, "expected key=value")
        value = value.strip()
        if value.startswith("["):
            out[key.strip()] = json.loads(value)
        else:
            out[key.strip()] = value
    return out


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file of RunConfig keys")
    p.add_argument("--out", help="output directory")
    p.add_argument("--grid-dt", type=float, help="quadrature step kappa dtau")
    p.add_argument("--samples", type=int, help="number of time samples after t = 0")
    p.add_argument("--seed", type=int, help="seed for the Monte Carlo checks")
    p.add_argument("--mode", choices=["full", "noise-free", "baseline", "compare"])
    p.add_argument("--workers", type=int, help="processes for sweep points")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optoent", description="Optomechanical entanglement dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="time traces for one configuration")
    _common_flags(run)

    fig = sub.add_parser("figure", help="reproduce a figure preset")
    fig.add_argument("name", choices=PRESET_NAMES)
    _common_flags(fig)

    sweep = sub.add_parser("sweep", help="quantities at t_max along a detuning or intensity axis")
    _common_flags(sweep)
    sweep.add_argument("--axis", choices=["detuning", "intensity", "stability"])
    sweep.add_argument("--start", type=float)
    sweep.add_argument("--stop", type=float)
    sweep.add_argument("--steps", type=int)
    sweep.add_argument("--scale", choices=["linear", "log"])

    val = sub.add_parser("validate", help="run the built-in oracle suite")
    _common_flags(val)
    return parser


def resolve_config(args, base: RunConfig | None = None) -> RunConfig:
    """Preset or defaults, then the config file, then flags (flags win)."""
    cfg = base or RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    flags = {
        "out": args.out,
        "grid_dt": args.grid_dt,
        "samples": args.samples,
        "seed": args.seed,
        "mode": args.mode,
        "workers": args.workers,
    }
    for attr, key in (("axis", "sweep"), ("start", "sweep_start"), ("stop", "sweep_stop"),
                      ("steps", "sweep_steps"), ("scale", "sweep_scale")):
        if hasattr(args, attr):
            flags[key] = getattr(args, attr)
    changes = {k: v for k, v in flags.items() if v is not None}
    changes.update(_parse_set(args.set))
    cfg = config_from_mapping(changes, cfg)
    if args.command == "sweep" and cfg.sweep == "none":
        raise ConfigError("sweep", "sweep needs an axis (--axis or 'sweep' in the config)")
    if args.command == "run" and cfg.sweep != "none":
        cfg = replace(cfg, sweep="none")
    return cfg.validate()


def manifest(cfg: RunConfig, curves: list[Curve], files: list[str], argv: list[str]) -> dict:
    nodes = int(math.ceil(cfg.t_max / cfg.grid_dt - 1e-9)) + 1
    return _clean(
        {
            "tool": "artifact",
            "version": tool_version(),
            "command": list(argv),
            "config": cfg.to_dict(),
            "grid": {
                "dt": cfg.grid_dt,
                "refine": cfg.grid_refine,
                "rtol": cfg.grid_rtol,
                "tau_nodes_at_t_max": nodes,
                "k_nodes_at_t_max": (nodes - 1) * cfg.grid_refine + 1,
                "time_samples": cfg.samples + 1,
                "closed_form_k_dt": DEFAULT_K_DT,
            },
            "constants": {
                "cavity_noise_factor": CAVITY_NOISE_FACTOR,
                "esd_zero": cfg.esd_zero,
                "default_esd_zero": ESD_THRESHOLD,
                "plateau_window": cfg.plateau_window,
                "plateau_drift": cfg.plateau_drift,
                "units": "kappa = 1; detunings in omega_m",
            },
            "curves": [
                {
                    "label": c.label,
                    "columns": c.table.columns,
                    "rows": len(c.table.rows),
                    "params": c.params,
                    "features": c.features,
                    "diagnostics": c.diagnostics,
                }
                for c in curves
            ],
            "files": files,
        }
    )


def write_outputs(cfg: RunConfig, curves: list[Curve], argv: list[str]) -> list[str]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for c in curves:
        path = out / f"{c.label}.csv"
        path.write_text(c.table.to_csv())
        files.append(path.name)
    if len(curves) > 1:
        path = out / f"{cfg.name}_combined.csv"
        path.write_text(combined_table(curves).to_csv())
        files.append(path.name)
    man = out / f"{cfg.name}_manifest.json"
    files.append(man.name)
    man.write_text(json.dumps(manifest(cfg, curves, files, argv), indent=2, sort_keys=True) + "\n")
    return files


def _num(x, fmt=".4g") -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "-"
    return format(x, fmt)


def summary_lines(curves: list[Curve]) -> list[str]:
    lines = []
    for c in curves:
        f = c.features
        if "steady_value" in f:
            intervals = ", ".join(f"[{a:.3f}, {b:.3f}]" for a, b in f["zero_intervals"]) or "none"
            lines.append(
                f"{c.label}: final E_N={_num(f['steady_value'])} max={_num(f['maximum'])} "
                f"plateau drift={_num(f['plateau_drift'], '.3%')} "
                f"first death={_num(f['first_death'], '.3f')} final death={_num(f['final_death'], '.3f')} "
                f"revivals={len(f['revival_times'])} zero intervals: {intervals}"
            )
        elif "sweep_max" in f:
            m = f["sweep_max"]
            line = (f"{c.label}: max {_num(m['max'])} at {_num(m['argmax'])} "
                    f"({'interior' if m['interior'] else 'at the edge'})")
            if "max_abs_E_N_difference" in f:
                line += (f"; {f['common_points']} stable points, "
                         f"max |E_N - E_N baseline| = {_num(f['max_abs_E_N_difference'])}")
            gap = f.get("n_cav_fluct_gap_first_last")
            if gap:
                line += f"; |n_fluct - n_fluct baseline| {_num(gap[0])} -> {_num(gap[1])} along the axis"
            lines.append(line)
        elif "s2_min" in f:
            lines.append(
                f"{c.label}: {f['points']} points, min s2={_num(f['s2_min'])}, "
                f"stable fraction={_num(f['stable_fraction'], '.3f')}, "
                f"eigenvalue agreement={_num(f['eigen_agreement'], '.3%')}, "
                f"s1 boundary points={f['boundary_points']}, bistable={f['any_bistable']}"
            )
        elif "stable" in f:
            lines.append(f"{c.label}: baseline stable={f['stable']}")
    return lines


def _simulate(cfg: RunConfig, argv: list[str]) -> int:
    curves = execute(cfg)
    files = write_outputs(cfg, curves, argv)
    for line in summary_lines(curves):
        print(line)
    print(f"wrote {len(files)} files to {cfg.out}")
    return EXIT_OK


def _validate(cfg: RunConfig) -> int:
    checks = validate_suite(cfg)
    failed = 0
    for ch in checks:
        tol = "info" if math.isinf(ch.tolerance) else f"< {ch.tolerance:g}"
        status = "PASS" if ch.passed else "FAIL"
        failed += not ch.passed
        msg = f" ({ch.message})" if ch.message else ""
        print(f"{status} {ch.name}: {ch.measured:.3e} [{tol}]{msg}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VALIDATION


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        base = load_preset(args.name) if args.command == "figure" else None
        if base is not None and args.out is None:
            base = replace(base, out=str(Path("out") / args.name))
        cfg = resolve_config(args, base)
        if args.command == "validate":
            return _validate(cfg)
        return _simulate(cfg, argv)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (UnphysicalCovariance, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
