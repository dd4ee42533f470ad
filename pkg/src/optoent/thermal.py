"""Thermal relaxation of the mechanical mode in a truncated Fock space.

Integrates the population equations of the damped-oscillator master equation

    dp_n/dt = gamma (N + 1) [(n + 1) p_{n+1} - n p_n]
            + gamma N [n p_{n-1} - (n + 1) p_n]

(N the reservoir occupation), which is all the Lindblad channel does to a
diagonal state.  Used to check equilibrium invariance and to measure the
relaxation rate of the mean occupation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import diags

TRUNCATION_LIMIT = 1e-10


class TruncationError(RuntimeError):
    pass


@dataclass
class FockThermalState:
    probabilities: np.ndarray
    occupation: float
    truncated: bool = False

    @property
    def n_max(self) -> int:
        return self.probabilities.size - 1


def geometric_state(occupation: float, n_max: int) -> np.ndarray:
    """Thermal populations n^k/(1+n)^(k+1), renormalized on 0..n_max."""
    k = np.arange(n_max + 1)
    if occupation == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return p
    r = occupation / (1.0 + occupation)
    logp = k * math.log(r) - math.log1p(occupation)
    p = np.exp(logp)
    return p / p.sum()


def generator_matrix(n_th: float, gamma: float, n_max: int):
    """Sparse birth-death generator with a reflecting top level."""
    n = np.arange(n_max + 1, dtype=float)
    down = gamma * (n_th + 1.0) * n  # rate n -> n-1
    up = gamma * n_th * (n + 1.0)  # rate n -> n+1
    up[-1] = 0.0
    diag = -(down + up)
    return diags([diag, down[1:], up[:-1]], [0, 1, -1], format="csr")


def default_n_max(n_m: float, n_th: float) -> int:
    return int(math.ceil(10 * max(n_m, n_th) + 20))


def relax_occupation(
    n_m: float,
    n_th: float,
    gamma_m: float,
    t: float,
    n_max: int | None = None,
    rtol: float = 1e-11,
    atol: float = 1e-14,
    max_doublings: int = 6,
) -> FockThermalState:
    """Evolve a thermal state of occupation n_m coupled to a bath at n_th.

    The cutoff starts at 10 max(n_m, n_th) + 20 and doubles while the top
    population exceeds 1e-10 at the start or the end of the evolution.
    """
    if n_max is None:
        n_max = default_n_max(n_m, n_th)
    if n_max < default_n_max(n_m, n_th):
        raise ValueError("n_max must be >= 10 max(n_m, n_th) + 20")
    for _ in range(max_doublings + 1):
        p0 = geometric_state(n_m, n_max)
        if p0[-1] > TRUNCATION_LIMIT or geometric_state(n_th, n_max)[-1] > TRUNCATION_LIMIT:
            n_max *= 2
            continue
        if t == 0:
            p = p0
        else:
            gen = generator_matrix(n_th, gamma_m, n_max)
            sol = solve_ivp(
                lambda _t, y: gen @ y,
                (0.0, t),
                p0,
                method="Radau",
                jac=gen,
                rtol=rtol,
                atol=atol,
            )
            if not sol.success:
                raise RuntimeError(sol.message)
            p = sol.y[:, -1]
        if p[-1] <= TRUNCATION_LIMIT:
            occ = float(np.dot(np.arange(n_max + 1), p))
            return FockThermalState(p, occ, truncated=False)
        n_max *= 2
    raise TruncationError(f"top population above {TRUNCATION_LIMIT} even at n_max={n_max}")


def closed_form_occupation(n_m: float, n_th: float, gamma_m: float, t: float, rate_factor: float) -> float:
    """n_th + (n_m - n_th) exp(-rate_factor gamma_m t).

    rate_factor 1/2 is the factor printed for the super-operator solution;
    the population equations relax at rate_factor 1.
    """
    return n_th + (n_m - n_th) * math.exp(-rate_factor * gamma_m * t)


@dataclass
class RelaxationFit:
    times: np.ndarray
    occupations: np.ndarray
    rate: float
    rate_factor: float
    max_geometric_defect: float


def geometric_defect(p: np.ndarray, floor: float = 1e-6) -> float:
    """Max spread of p_{n+1}/p_n over levels with p_n above ``floor``."""
    mask = p[:-1] > floor
    mask &= p[1:] > floor
    if mask.sum() < 2:
        return 0.0
    ratios = p[1:][mask] / p[:-1][mask]
    return float((ratios.max() - ratios.min()) / max(ratios.mean(), 1e-300))


def measure_relaxation_rate(
    n_m: float, n_th: float, gamma_m: float, t_end: float, points: int = 9
) -> RelaxationFit:
    """Fit log|n(t) - n_th| linearly in t and report the decay rate.

    ``rate_factor`` is the fitted rate in units of gamma_m.
    """
    if n_m == n_th:
        raise ValueError("need n_m != n_th to measure a relaxation rate")
    times = np.linspace(0.0, t_end, points)
    states = [relax_occupation(n_m, n_th, gamma_m, float(t)) for t in times]
    occ = np.array([s.occupation for s in states])
    defect = max(geometric_defect(s.probabilities) for s in states)
    y = np.log(np.abs(occ - n_th))
    slope = np.polyfit(times, y, 1)[0]
    rate = -float(slope)
    return RelaxationFit(times, occ, rate, rate / gamma_m, defect)
