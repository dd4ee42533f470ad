"""Computations behind the command-line tool: traces, sweeps, stability maps
and the oracle suite.  Everything here returns tables and plain dicts; file
output lives in ``cli``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baseline import (
    UnstableSteadyState,
    diffusion_matrix,
    drift_matrix,
    lyapunov_residual,
    routh_hurwitz,
    solve_lyapunov,
    stability_map,
    steady_covariance_for,
)
from .config import RunConfig
from .core import CW, SystemParams
from .entanglement import (
    cavity_fluctuation_number,
    default_times,
    entanglement_trace,
    evolve_covariance,
    initial_covariance,
    log_negativity,
    trace_features,
)
from .noise import ConvergenceError, Grid, covariance_noise, monte_carlo_kernel_check
from .propagator import closed_form_propagator, product_integration_propagator, symplectic_defect
from .thermal import measure_relaxation_rate, relax_occupation

MEAN_COLUMNS = ("mean_x_c", "mean_p_c", "mean_x_m", "mean_p_m")
BASELINE_COLUMNS = ("E_N_baseline", "n_cav_fluct_baseline", "s1", "s2", "stable")


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, str):
        return value
    return f"{float(value):.17g}"


@dataclass
class Curve:
    """One constituent dataset of a run or figure."""

    label: str
    table: Table
    params: dict
    features: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def grid_of(cfg: RunConfig) -> Grid:
    return Grid(dt=cfg.grid_dt, refine=cfg.grid_refine, rtol=cfg.grid_rtol)


def _variants(cfg: RunConfig) -> list[tuple[str, float]]:
    if not cfg.variants:
        return [(cfg.mode, cfg.n_m)]
    out = []
    for v in cfg.variants:
        mode, _, occ = str(v).partition(":")
        out.append((mode, float(occ)))
    return out


def _label(cfg: RunConfig, delta0: float | None, mode: str, n_m: float, many_variants: bool) -> str:
    parts = [cfg.name]
    if delta0 is not None:
        parts.append(f"d{delta0:+g}")
    if many_variants:
        parts.append(f"{mode}_n{n_m:g}")
    return "_".join(parts)


def baseline_point(params: SystemParams, amplitude: float) -> dict:
    """Baseline steady-state quantities; NaN entanglement where unstable."""
    rep = routh_hurwitz(params, amplitude)
    out = {"s1": rep.s1, "s2": rep.s2, "stable": rep.stable, "E_N_baseline": math.nan, "n_cav_fluct_baseline": math.nan}
    if rep.stable:
        v = steady_covariance_for(params, rep.steady.G, rep.steady.Delta)
        out["E_N_baseline"] = log_negativity(v)
        out["n_cav_fluct_baseline"] = cavity_fluctuation_number(v)
    return out


def trace_curve(cfg: RunConfig, delta0: float, mode: str, n_m: float, label: str) -> Curve:
    """E_N(t) and companions for one detuning and mode."""
    params = cfg.system(delta0=delta0, n_m=n_m)
    drive = cfg.drive_profile()
    times = default_times(cfg.t_max, cfg.samples)
    if mode == "baseline":
        b = baseline_point(params, cfg.E)
        cols = ["delta0_over_omega_m", "E_over_kappa", "E_N", "n_cav_fluct", "s1", "s2", "stable"]
        row = [delta0, cfg.E, b["E_N_baseline"], b["n_cav_fluct_baseline"], b["s1"], b["s2"], b["stable"]]
        return Curve(label, Table(cols, [row]), asdict(params), features={"stable": bool(b["stable"])})
    tr = entanglement_trace(params, drive, times, grid_of(cfg), include_noise=(mode != "noise-free"))
    cols = ["t_kappa", "E_N", *MEAN_COLUMNS, "n_cav_fluct"]
    rows = [[t, e, *m, n] for t, e, m, n in zip(tr.times, tr.log_negativity, tr.means, tr.cavity_fluctuation)]
    if mode == "compare":
        b = baseline_point(params, cfg.E)
        cols += list(BASELINE_COLUMNS)
        rows = [r + [b[c] for c in BASELINE_COLUMNS] for r in rows]
    feats = trace_features(tr.times, tr.log_negativity, zero=cfg.esd_zero, plateau_window=cfg.plateau_window)
    features = {
        "steady_value": feats.steady_value,
        "plateau_drift": feats.plateau_drift,
        "plateaus": feats.plateau_drift <= cfg.plateau_drift,
        "maximum": feats.maximum,
        "death_times": feats.death_times,
        "revival_times": feats.revival_times,
        "zero_intervals": feats.zero_intervals(float(tr.times[-1])),
        "first_death": feats.first_death,
        "final_death": feats.final_death,
    }
    return Curve(label, Table(cols, rows), asdict(params), features, dict(tr.diagnostics))


def _sweep_values(cfg: RunConfig) -> np.ndarray:
    if cfg.sweep_steps == 1:
        return np.array([cfg.sweep_start])
    if cfg.sweep_scale == "log":
        return np.geomspace(cfg.sweep_start, cfg.sweep_stop, cfg.sweep_steps)
    return np.linspace(cfg.sweep_start, cfg.sweep_stop, cfg.sweep_steps)


def sweep_point(task) -> dict:
    """E_N and cavity fluctuation at t_max for one sweep point (picklable task)."""
    cfg, delta0, amplitude, mode, n_m = task
    params = cfg.system(delta0=delta0, n_m=n_m)
    out = {}
    if mode != "baseline":
        v = evolve_covariance(params, cfg.drive_profile(amplitude), cfg.t_max, grid_of(cfg), include_noise=(mode != "noise-free"))
        out["E_N"] = log_negativity(v)
        out["n_cav_fluct"] = cavity_fluctuation_number(v)
    if mode in ("baseline", "compare"):
        out.update(baseline_point(params, amplitude))
    return out


def _pool_map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _interior_max(x: np.ndarray, y: np.ndarray) -> dict:
    finite = np.isfinite(y)
    if not finite.any():
        return {"argmax": None, "max": None, "interior": False}
    idx = int(np.nanargmax(np.where(finite, y, -np.inf)))
    return {"argmax": float(x[idx]), "max": float(y[idx]), "interior": 0 < idx < y.size - 1}


def sweep_curves(cfg: RunConfig) -> list[Curve]:
    """Detuning or intensity sweeps at t_max, one curve per detuning/variant."""
    values = _sweep_values(cfg)
    variants = _variants(cfg)
    many = len(variants) > 1
    axis = "delta0_over_omega_m" if cfg.sweep == "detuning" else "E_over_kappa"
    fixed = [None] if cfg.sweep == "detuning" else cfg.detunings()
    curves = []
    for d0 in fixed:
        for mode, n_m in variants:
            if cfg.sweep == "detuning":
                tasks = [(cfg, float(v), cfg.E, mode, n_m) for v in values]
            else:
                tasks = [(cfg, d0, float(v), mode, n_m) for v in values]
            results = _pool_map(sweep_point, tasks, cfg.workers)
            cols = [axis]
            if mode != "baseline":
                cols += ["E_N", "n_cav_fluct"]
            if mode in ("baseline", "compare"):
                cols += list(BASELINE_COLUMNS)
            rows = [[float(v)] + [r[c] for c in cols[1:]] for v, r in zip(values, results)]
            table = Table(cols, rows)
            key = "E_N" if mode != "baseline" else "E_N_baseline"
            feats = {"sweep_max": _interior_max(values, table.column(key))}
            if mode == "compare":
                ours, base = table.column("E_N"), table.column("E_N_baseline")
                nf_o, nf_b = table.column("n_cav_fluct"), table.column("n_cav_fluct_baseline")
                ok = np.isfinite(base)
                feats["common_points"] = int(ok.sum())
                feats["max_abs_E_N_difference"] = float(np.max(np.abs(ours - base)[ok])) if ok.any() else None
                diff = np.abs(nf_o - nf_b)[ok]
                feats["n_cav_fluct_difference"] = [float(a - b) if np.isfinite(b) else None for a, b in zip(nf_o, nf_b)]
                feats["n_cav_fluct_gap_first_last"] = [float(diff[0]), float(diff[-1])] if diff.size else None
            label = _label(cfg, d0, mode, n_m, many)
            params = cfg.system(delta0=cfg.delta0 if d0 is None else d0, n_m=n_m)
            curves.append(Curve(label, table, asdict(params), feats))
    return curves


def stability_curves(cfg: RunConfig) -> list[Curve]:
    """(Delta0, E) map of the Routh-Hurwitz quantities plus the s1 sign boundary."""
    d0 = _sweep_values(cfg)
    amps = (
        np.array([cfg.sweep2_start])
        if cfg.sweep2_steps == 1
        else np.linspace(cfg.sweep2_start, cfg.sweep2_stop, cfg.sweep2_steps)
    )
    params = cfg.system()
    smap = stability_map(params, d0, amps)
    cols = ["delta0_over_omega_m", "E_over_kappa", "s1", "s2", "stable", "max_real_eigenvalue", "eigen_agrees", "bistable"]
    rows = []
    for i, x in enumerate(d0):
        for j, a in enumerate(amps):
            eig_stable = smap.max_real[i, j] < 0
            rows.append([x, a, smap.s1[i, j], smap.s2[i, j], smap.stable[i, j], smap.max_real[i, j],
                         eig_stable == smap.stable[i, j], smap.bistable[i, j]])
    boundary = smap.boundary_points()
    btable = Table(["delta0_over_omega_m", "E_over_kappa"], [list(p) for p in boundary])
    agrees = np.array([r[6] for r in rows], dtype=bool)
    feats = {
        "points": len(rows),
        "s2_min": float(smap.s2.min()),
        "s2_always_positive": bool((smap.s2 > 0).all()),
        "stable_fraction": float(smap.stable.mean()),
        "eigen_agreement": float(agrees.mean()),
        "boundary_points": len(boundary),
        "any_bistable": bool(smap.bistable.any()),
    }
    return [
        Curve(f"{cfg.name}_map", Table(cols, rows), asdict(params), feats),
        Curve(f"{cfg.name}_boundary", btable, asdict(params), {"boundary_points": len(boundary)}),
    ]


def execute(cfg: RunConfig) -> list[Curve]:
    """Run every constituent curve of a configuration."""
    cfg.validate()
    if cfg.sweep == "stability":
        return stability_curves(cfg)
    if cfg.sweep in ("detuning", "intensity"):
        return sweep_curves(cfg)
    variants = _variants(cfg)
    many = len(variants) > 1
    multi = len(cfg.detunings()) > 1 or bool(cfg.curves)
    curves = []
    for d0 in cfg.detunings():
        for mode, n_m in variants:
            label = _label(cfg, d0 if multi else None, mode, n_m, many)
            curves.append(trace_curve(cfg, d0, mode, n_m, label))
    return curves


def combined_table(curves: list[Curve]) -> Table:
    """Long-format concatenation with a leading ``curve`` column.

    Columns are the union in order of first appearance; missing entries are NaN.
    """
    cols = []
    for c in curves:
        for name in c.table.columns:
            if name not in cols:
                cols.append(name)
    rows = []
    for c in curves:
        index = {n: i for i, n in enumerate(c.table.columns)}
        for r in c.table.rows:
            rows.append([c.label] + [r[index[n]] if n in index else math.nan for n in cols])
    return Table(["curve"] + cols, rows)


# ---------------------------------------------------------------- oracle suite


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    message: str = ""


def validate_suite(cfg: RunConfig, weak_amplitude: float = 1e4) -> list[Check]:
    """Built-in oracle checks at the configuration's system parameters.

    The closed-form propagator is compared to the time-ordered product
    integral at a weak drive, where the commuting-generator approximation is
    accurate; at the configured drive the same error is reported as
    information only.  V2 convergence uses the configured grid step.
    """
    checks = []
    t = cfg.t_max
    worst, worst_symp = 0.0, 0.0
    for d0 in (-1.0, -0.5, 1.0):
        p = cfg.system(delta0=d0)
        a = np.asarray(closed_form_propagator(p, CW(weak_amplitude), t, 0.0))
        b = np.asarray(product_integration_propagator(p, CW(weak_amplitude), t, 0.0))
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(b)))
        worst_symp = max(worst_symp, symplectic_defect(a), symplectic_defect(b))
    checks.append(Check("propagator closed form vs product integration (weak drive)", worst, 1e-4, worst < 1e-4,
                        f"E/kappa={weak_amplitude:g}, kappa t={t:g}"))
    checks.append(Check("propagator symplecticity", worst_symp, 1e-8, worst_symp < 1e-8))

    p = cfg.system()
    a = np.asarray(closed_form_propagator(p, cfg.drive_profile(), t, 0.0))
    b = np.asarray(product_integration_propagator(p, cfg.drive_profile(), t, 0.0))
    info = float(np.linalg.norm(a - b) / np.linalg.norm(b))
    checks.append(Check("propagator closed form vs product integration (configured drive, info)", info, math.inf, True,
                        "commuting-generator error grows as (g E)^2"))

    rep = monte_carlo_kernel_check(1.0, 1.0, samples=10_000, seed=cfg.seed)
    checks.append(Check("noise kernel Monte Carlo (max deviation in standard errors)", rep.max_deviation_se, 5.0,
                        rep.passed(5.0), f"seed {cfg.seed}, 10000 samples"))

    try:
        _, crep = covariance_noise(p, cfg.drive_profile(), t, grid_of(cfg), return_report=True)
        checks.append(Check("V2 half-resolution convergence", crep.rel_change, cfg.grid_rtol, crep.converged,
                            f"grid step {cfg.grid_dt:g}"))
    except ConvergenceError as exc:
        checks.append(Check("V2 half-resolution convergence", exc.report.rel_change, cfg.grid_rtol, False,
                            f"{exc} Try --grid-dt {cfg.grid_dt / 4:g}."))

    worst_res = 0.0
    for d0 in (0.5, 1.0, 2.0):
        pr = cfg.system(delta0=d0)
        rh = routh_hurwitz(pr, cfg.E)
        if rh.stable:
            a_mat = drift_matrix(pr, rh.steady.G, rh.steady.Delta)
            d_mat = diffusion_matrix(pr)
            worst_res = max(worst_res, lyapunov_residual(a_mat, solve_lyapunov(a_mat, d_mat), d_mat))
    checks.append(Check("Lyapunov residual (stable red detunings)", worst_res, 1e-10, worst_res < 1e-10))
    v0 = steady_covariance_for(p, 0.0, p.delta0)
    dev = float(np.max(np.abs(v0 - initial_covariance(p.replace(n_m=p.n_th)))))
    checks.append(Check("Lyapunov G=0 equals uncoupled thermal covariance", dev, 1e-10, dev < 1e-10))

    occ = relax_occupation(3.0, 3.0, 1.0, 5.0).occupation
    checks.append(Check("thermal oracle equilibrium stationarity", abs(occ - 3.0), 1e-10, abs(occ - 3.0) < 1e-10))
    fit = measure_relaxation_rate(5.0, 1.0, 1.0, 3.0)
    checks.append(Check("thermal relaxation rate / gamma_m (info)", fit.rate_factor, math.inf, True,
                        "closed form exp(-rate gamma_m t); printed factor 1/2"))
    return checks
