"""Fluctuation-expansion baseline: classical steady state, stability and the
steady covariance of the fluctuations.

Conventions follow the formulas this comparison is built on: the stationary
amplitude is alpha_s = E/(kappa + i Delta) with kappa as amplitude decay,
G = sqrt(2) g |alpha_s| and Delta = Delta0 - g^2 |alpha_s|^2 / omega_m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import SystemParams
from .entanglement import cavity_fluctuation_number, log_negativity

# permutation from (dq, dp, dX, dY) to (x_c, p_c, x_m, p_m)
_ORDER = [2, 3, 0, 1]


class UnstableSteadyState(ValueError):
    """The classical steady state fails the Routh-Hurwitz conditions."""


class Bistability(RuntimeError):
    def __init__(self, message: str, roots):
        super().__init__(message)
        self.roots = roots


@dataclass(frozen=True)
class ClassicalSteadyState:
    alpha_s: complex
    G: float
    Delta: float
    iterations: int = 0
    intensity_roots: tuple = ()

    @property
    def bistable(self) -> bool:
        return len(self.intensity_roots) > 1


def intensity_cubic_roots(params: SystemParams, amplitude: float) -> np.ndarray:
    """Positive real roots I = |alpha_s|^2 of I (kappa^2 + (Delta0 - c I)^2) = E^2, c = g^2/omega_m."""
    c = params.g**2 / params.omega_m
    d0, k = params.delta0, params.kappa
    if c == 0:
        return np.array([amplitude**2 / (k**2 + d0**2)])
    coeffs = [c**2, -2.0 * c * d0, k**2 + d0**2, -(amplitude**2)]
    roots = np.roots(coeffs)
    real = roots[np.abs(roots.imag) <= 1e-9 * np.maximum(1.0, np.abs(roots))].real
    return np.sort(real[real > 0])


def classical_steady_state(
    params: SystemParams,
    amplitude: float,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    damping: float = 0.5,
) -> ClassicalSteadyState:
    """Damped fixed-point iteration on Delta, started from the uncoupled value.

    Raises Bistability (carrying all positive intensity roots) when the
    iteration does not settle within ``max_iter`` steps.
    """
    k, d0 = params.kappa, params.delta0
    shift = params.g**2 / params.omega_m
    roots = tuple(intensity_cubic_roots(params, amplitude)) if amplitude > 0 else (0.0,)
    delta = d0
    it = 0
    for it in range(1, max_iter + 1):
        intensity = amplitude**2 / (k**2 + delta**2)
        target = d0 - shift * intensity
        new = (1.0 - damping) * delta + damping * target
        if abs(new - delta) <= tol * max(1.0, abs(new)):
            delta = new
            break
        delta = new
    else:
        raise Bistability(
            f"fixed point did not converge in {max_iter} iterations; intensity roots {roots}", roots
        )
    # one exact update so that Delta = Delta0 - g^2 |alpha|^2/omega_m holds to rounding
    alpha = amplitude / complex(k, delta)
    delta = d0 - shift * abs(alpha) ** 2
    alpha = amplitude / complex(k, delta)
    return ClassicalSteadyState(
        alpha_s=alpha,
        G=math.sqrt(2.0) * params.g * abs(alpha),
        Delta=delta,
        iterations=it,
        intensity_roots=roots,
    )


def drift_matrix(params: SystemParams, G: float, Delta: float) -> np.ndarray:
    """Linearized drift for (x_c, p_c, x_m, p_m); Brownian mechanical damping on p_m."""
    k, w, gm = params.kappa, params.omega_m, params.gamma_m
    a = np.array(
        [
            [0.0, w, 0.0, 0.0],
            [-w, -gm, G, 0.0],
            [0.0, 0.0, -k, Delta],
            [G, 0.0, -Delta, -k],
        ]
    )
    return a[np.ix_(_ORDER, _ORDER)]


def diffusion_matrix(params: SystemParams) -> np.ndarray:
    d = np.diag([0.0, params.gamma_m * (2.0 * params.n_th + 1.0), params.kappa, params.kappa])
    return d[np.ix_(_ORDER, _ORDER)]


@dataclass(frozen=True)
class StabilityReport:
    s1: float
    s2: float
    stable: bool
    drift_eigen_max_real: float
    eigen_agrees: bool
    steady: ClassicalSteadyState | None = None


def routh_hurwitz_values(params: SystemParams, G: float, Delta: float) -> tuple[float, float]:
    k, w, gm = params.kappa, params.omega_m, params.gamma_m
    s1 = (
        2.0
        * gm
        * k
        * (
            (k**2 + (w - Delta) ** 2) * (k**2 + (w + Delta) ** 2)
            + gm * ((gm + 2.0 * k) * (k**2 + Delta**2) + 2.0 * k * w**2)
        )
        + Delta * w * G**2 * (gm + 2.0 * k) ** 2
    )
    s2 = w * (k**2 + Delta**2) - G**2 * Delta
    return s1, s2


def routh_hurwitz(params: SystemParams, amplitude: float) -> StabilityReport:
    ss = classical_steady_state(params, amplitude)
    s1, s2 = routh_hurwitz_values(params, ss.G, ss.Delta)
    stable = s1 > 0 and s2 > 0
    max_re = float(np.max(np.linalg.eigvals(drift_matrix(params, ss.G, ss.Delta)).real))
    return StabilityReport(
        s1=s1,
        s2=s2,
        stable=stable,
        drift_eigen_max_real=max_re,
        eigen_agrees=stable == (max_re < 0),
        steady=ss,
    )


def solve_lyapunov(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Solve A V + V A^T = -D as a 16x16 linear system."""
    n = a.shape[0]
    eye = np.eye(n)
    op = np.kron(eye, a) + np.kron(a, eye)
    v = np.linalg.solve(op, -d.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (v + v.T)


def lyapunov_residual(a: np.ndarray, v: np.ndarray, d: np.ndarray) -> float:
    return float(np.linalg.norm(a @ v + v @ a.T + d) / max(np.linalg.norm(d), 1e-300))


def steady_covariance_for(params: SystemParams, G: float, Delta: float) -> np.ndarray:
    return solve_lyapunov(drift_matrix(params, G, Delta), diffusion_matrix(params))


def baseline_steady_covariance(params: SystemParams, amplitude: float) -> np.ndarray:
    report = routh_hurwitz(params, amplitude)
    if not report.stable:
        raise UnstableSteadyState(
            f"Routh-Hurwitz fails (s1={report.s1:.3e}, s2={report.s2:.3e}); no steady state"
        )
    return steady_covariance_for(params, report.steady.G, report.steady.Delta)


def baseline_log_negativity(params: SystemParams, amplitude: float) -> float:
    return log_negativity(baseline_steady_covariance(params, amplitude))


def baseline_cavity_fluctuation(params: SystemParams, amplitude: float) -> float:
    return cavity_fluctuation_number(baseline_steady_covariance(params, amplitude))


@dataclass
class StabilityMap:
    delta0: np.ndarray
    amplitude: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    max_real: np.ndarray
    bistable: np.ndarray = field(default=None)

    @property
    def stable(self) -> np.ndarray:
        return (self.s1 > 0) & (self.s2 > 0)

    def boundary_points(self) -> list[tuple[float, float]]:
        """(Delta0, E) where s1 changes sign between neighbouring detunings (linear interpolation)."""
        pts = []
        for j, amp in enumerate(self.amplitude):
            row = self.s1[:, j]
            for i in range(row.size - 1):
                if np.sign(row[i]) != np.sign(row[i + 1]) and row[i] != row[i + 1]:
                    x = self.delta0[i] - row[i] * (self.delta0[i + 1] - self.delta0[i]) / (row[i + 1] - row[i])
                    pts.append((float(x), float(amp)))
        return pts


def stability_map(params: SystemParams, delta0_values, amplitudes) -> StabilityMap:
    delta0_values = np.asarray(delta0_values, dtype=float)
    amplitudes = np.asarray(amplitudes, dtype=float)
    shape = (delta0_values.size, amplitudes.size)
    s1 = np.zeros(shape)
    s2 = np.zeros(shape)
    mr = np.zeros(shape)
    bi = np.zeros(shape, dtype=bool)
    for i, d0 in enumerate(delta0_values):
        p = params.replace(delta0=float(d0))
        for j, amp in enumerate(amplitudes):
            rep = routh_hurwitz(p, float(amp))
            s1[i, j], s2[i, j], mr[i, j] = rep.s1, rep.s2, rep.drift_eigen_max_real
            bi[i, j] = rep.steady.bistable
    return StabilityMap(delta0_values, amplitudes, s1, s2, mr, bi)
