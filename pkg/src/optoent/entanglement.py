"""Correlation matrices, logarithmic negativity and entanglement traces.

Convention: V_ij = 1/2 <u_i u_j + u_j u_i> - <u_i><u_j> with
u = (x_c, p_c, x_m, p_m); the vacuum has V = I/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DriveProfile, SystemParams
from .noise import Grid, _mean_from_family, _v2_from_family, covariance_noise
from .propagator import J, propagator_family

ESD_THRESHOLD = 1e-9
SYMMETRY_TOL = 1e-12
PHYSICAL_TOL = 1e-9


class UnphysicalCovariance(ValueError):
    pass


def initial_covariance(params: SystemParams) -> np.ndarray:
    """Cavity vacuum times a mechanical thermal state of occupation n_m."""
    return np.diag([0.5, 0.5, params.n_m + 0.5, params.n_m + 0.5])


def blocks(v: np.ndarray):
    v = np.asarray(v, dtype=float)
    return v[:2, :2], v[2:, 2:], v[:2, 2:]


def symplectic_eigenvalues(v: np.ndarray) -> np.ndarray:
    """Symplectic spectrum of a 4x4 covariance (moduli of eig(i J V)), ascending."""
    ev = np.abs(np.linalg.eigvals(1j * J @ np.asarray(v, dtype=float)))
    return np.sort(ev)[::2]


def is_physical(v: np.ndarray, tol: float = PHYSICAL_TOL) -> bool:
    v = np.asarray(v, dtype=float)
    if np.max(np.abs(v - v.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(v))):
        return False
    return bool(symplectic_eigenvalues(v)[0] >= 0.5 - tol)


def smallest_pt_eigenvalue(v: np.ndarray) -> float:
    """eta^- of the partially transposed state, from Sigma and det V.

    eta^- = sqrt((Sigma - sqrt(Sigma^2 - 4 det V)) / 2); the factor 4 is what
    makes the vacuum (V = I/2) come out at exactly 1/2.  Evaluated as
    sqrt(2 det V / (Sigma + sqrt(Sigma^2 - 4 det V))), which is the same number
    without the cancellation for strongly entangled states.
    """
    a, b, c = blocks(v)
    sigma = np.linalg.det(a) + np.linalg.det(b) - 2.0 * np.linalg.det(c)
    det_v = np.linalg.det(v)
    disc = sigma**2 - 4.0 * det_v
    if disc < 0:
        if disc < -1e-12 * max(1.0, sigma**2):
            raise UnphysicalCovariance(f"Sigma^2 - 4 det V = {disc:.3e} < 0")
        disc = 0.0
    denom = sigma + math.sqrt(disc)
    if denom <= 0 or det_v <= 0:
        return math.sqrt(max(sigma - math.sqrt(disc), 0.0) / 2.0)
    return math.sqrt(2.0 * det_v / denom)


def log_negativity(v: np.ndarray) -> float:
    """E_N = max(0, -ln 2 eta^-)."""
    v = np.asarray(v, dtype=float)
    eta = smallest_pt_eigenvalue(v)
    if eta < 0.5 - 1e-6 and not is_physical(v):
        raise UnphysicalCovariance(f"eta^- = {eta:.6g} and V violates the uncertainty relation")
    if eta <= 0.0:
        raise UnphysicalCovariance("eta^- vanished")
    return max(0.0, -math.log(2.0 * eta))


def cavity_fluctuation_number(v: np.ndarray) -> float:
    """<da^dag da> = (V11 + V22 - 1)/2."""
    v = np.asarray(v, dtype=float)
    return 0.5 * (v[0, 0] + v[1, 1] - 1.0)


def _v1(params: SystemParams, phi0: np.ndarray) -> np.ndarray:
    v1 = phi0 @ initial_covariance(params) @ phi0.T
    return 0.5 * (v1 + v1.T)


def evolve_covariance(
    params: SystemParams,
    drive: DriveProfile,
    t: float,
    grid: Grid | None = None,
    include_noise: bool = True,
) -> np.ndarray:
    """V(t) = Phi(t, 0) V(0) Phi(t, 0)^T + V2(t)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    grid = grid or Grid()
    if t == 0:
        return initial_covariance(params)
    fam = propagator_family(params, drive, t, grid.dt, grid.refine)
    v = _v1(params, fam.phi[0])
    if include_noise:
        v = v + covariance_noise(params, drive, t, grid)
    if not is_physical(v):
        raise UnphysicalCovariance(f"evolved covariance at t={t} is unphysical")
    return v


@dataclass
class EntanglementTrace:
    times: np.ndarray
    log_negativity: np.ndarray
    means: np.ndarray | None = None
    cavity_fluctuation: np.ndarray | None = None
    covariances: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def entanglement_trace(
    params: SystemParams,
    drive: DriveProfile,
    times,
    grid: Grid | None = None,
    include_noise: bool = True,
    with_means: bool = True,
) -> EntanglementTrace:
    """E_N(t), cavity fluctuation number and means at each time.

    Every time is computed independently.  The half-resolution convergence
    check on V2 runs once, at the last time, where the grid is longest.
    """
    grid = grid or Grid()
    times = np.asarray(times, dtype=float)
    en = np.zeros(times.size)
    nfl = np.zeros(times.size)
    means = np.zeros((times.size, 4))
    covs = np.zeros((times.size, 4, 4))
    for i, t in enumerate(times):
        if t == 0:
            v = initial_covariance(params)
        else:
            fam = propagator_family(params, drive, t, grid.dt, grid.refine)
            v = _v1(params, fam.phi[0])
            if include_noise:
                v = v + _v2_from_family(params, fam)
            if with_means:
                means[i] = _mean_from_family(params, fam)
        if not is_physical(v):
            raise UnphysicalCovariance(f"evolved covariance at t={t} is unphysical")
        covs[i] = v
        en[i] = log_negativity(v)
        nfl[i] = cavity_fluctuation_number(v)
    diagnostics = {}
    if include_noise and grid.check and times.size and times.max() > 0 and params.g > 0:
        _, report = covariance_noise(params, drive, float(times.max()), grid, return_report=True)
        diagnostics = {
            "v2_rel_change_half_resolution": report.rel_change,
            "v2_rel_error_richardson": report.rel_error,
        }
    return EntanglementTrace(
        times=times,
        log_negativity=en,
        means=means if with_means else None,
        cavity_fluctuation=nfl,
        covariances=covs,
        diagnostics=diagnostics,
    )


def default_times(t_max: float = 15.0, samples: int = 600) -> np.ndarray:
    return np.linspace(0.0, t_max, samples + 1)


@dataclass
class TraceFeatures:
    steady_value: float
    plateau_drift: float
    maximum: float
    death_times: list
    revival_times: list
    final_death: float | None = None

    @property
    def has_esd(self) -> bool:
        return bool(self.death_times)

    @property
    def first_death(self) -> float | None:
        return self.death_times[0] if self.death_times else None

    @property
    def revived(self) -> bool:
        return bool(self.revival_times)

    def zero_intervals(self, t_end: float) -> list[tuple[float, float]]:
        """(death, revival) pairs; an unrevived death runs to ``t_end``."""
        out = []
        for i, d in enumerate(self.death_times):
            r = self.revival_times[i] if i < len(self.revival_times) else t_end
            out.append((d, r))
        return out


def _crossing(t0, t1, y0, y1, level):
    if y1 == y0:
        return t1
    return t0 + (level - y0) * (t1 - t0) / (y1 - y0)


def trace_features(
    times,
    values,
    zero: float = ESD_THRESHOLD,
    plateau_window: float = 0.2,
) -> TraceFeatures:
    """Sudden-death and revival times plus plateau statistics.

    A death is a transition from E_N > zero to E_N <= zero after entanglement
    has appeared; a revival is the reverse.  Crossing times are linearly
    interpolated.  ``final_death`` is the onset of the zero interval that
    lasts to the end of the window (None if the trace ends entangled).
    ``plateau_drift`` is the spread of the last ``plateau_window`` fraction
    of the window divided by the trace maximum.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    alive = values > zero
    deaths, revivals = [], []
    seen = bool(alive[0]) if values.size else False
    for i in range(1, values.size):
        if alive[i - 1] and not alive[i]:
            deaths.append(_crossing(times[i - 1], times[i], values[i - 1], values[i], zero))
        elif not alive[i - 1] and alive[i] and seen:
            revivals.append(_crossing(times[i - 1], times[i], values[i - 1], values[i], zero))
        seen = seen or alive[i]
    final_death = deaths[-1] if deaths and len(deaths) > len(revivals) else None
    cut = times[0] + (1.0 - plateau_window) * (times[-1] - times[0])
    tail = values[times >= cut - 1e-12 * max(1.0, abs(cut))]
    peak = float(values.max()) if values.size else 0.0
    spread = float(tail.max() - tail.min()) if tail.size else 0.0
    drift = spread / peak if peak > 0 else (0.0 if spread == 0 else math.inf)
    return TraceFeatures(
        steady_value=float(values[-1]),
        plateau_drift=drift,
        maximum=peak,
        death_times=deaths,
        revival_times=revivals,
        final_death=final_death,
    )
