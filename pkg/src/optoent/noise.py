"""Colored reservoir noise: kernels, the noise covariance V2 and the mean motion.

The decayed-plus-noise operators use

    n_l(t, tau) = sqrt(gamma_l) int_tau^t e^{-gamma_l (s - tau)/2} xi_l(s) ds

with white xi_l.  Integrating the delta correlations over the overlap of the
two exponential windows gives the common kernel

    k_l(tau1, tau2) = e^{-gamma_l |tau1 - tau2|/2} - e^{-gamma_l (2t - tau1 - tau2)/2}

with <n n^dag> = (N_l + 1) k_l and <n^dag n> = N_l k_l.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .core import DriveProfile, SystemParams
from .propagator import PropagatorFamily, propagator_family

DEFAULT_GRID_DT = 5e-3
DEFAULT_CONVERGENCE_RTOL = 1e-3

# Prefactor of the cavity-noise rows f3, f4.  Deriving them from the
# Heisenberg equations with x = (b + b^dag)/sqrt(2) gives sqrt(2); the
# printed rows carry 1.  See README ("Conventions").
CAVITY_NOISE_FACTOR = math.sqrt(2.0)


class ConvergenceError(RuntimeError):
    """Halving the quadrature grid changed V2 by more than the tolerance."""

    def __init__(self, message: str, report: "ConvergenceReport"):
        super().__init__(message)
        self.report = report


def commutator_kernel(gamma: float, t: float, tau1, tau2):
    """e^{-gamma |tau1 - tau2|/2} - e^{-gamma (2t - tau1 - tau2)/2}.

    Evaluated as e^{-gamma |tau1 - tau2|/2} (1 - e^{-gamma (t - max(tau1, tau2))})
    with expm1, which avoids cancellation for the tiny mechanical damping.
    """
    tau1 = np.asarray(tau1, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    later = np.maximum(tau1, tau2)
    return -np.exp(-0.5 * gamma * np.abs(tau1 - tau2)) * np.expm1(-gamma * (t - later))


@dataclass(frozen=True)
class NoiseKernelSet:
    """Two-time kernels of the colored noises for a fixed final time ``t``.

    ``*_sym`` are symmetrized correlators 1/2 <{n(tau1), n^dag(tau2)}>;
    ``*_commutator`` are [n(tau1), n^dag(tau2)].
    """

    t: float
    gamma_m: float
    kappa: float
    n_th: float
    n_c: float

    def mech_commutator(self, tau1, tau2):
        return commutator_kernel(self.gamma_m, self.t, tau1, tau2)

    def cav_commutator(self, tau1, tau2):
        return commutator_kernel(self.kappa, self.t, tau1, tau2)

    def mech_sym(self, tau1, tau2):
        return (self.n_th + 0.5) * self.mech_commutator(tau1, tau2)

    def cav_sym(self, tau1, tau2):
        return (self.n_c + 0.5) * self.cav_commutator(tau1, tau2)

    def commutator_kernel(self, tau1, tau2, channel: str = "m"):
        return self.mech_commutator(tau1, tau2) if channel == "m" else self.cav_commutator(tau1, tau2)


def base_kernels(params: SystemParams, t: float) -> NoiseKernelSet:
    if not t > 0:
        raise ValueError("t must be > 0")
    return NoiseKernelSet(t=t, gamma_m=params.gamma_m, kappa=params.kappa, n_th=params.n_th, n_c=params.n_c)


@dataclass
class KernelCheckReport:
    gamma: float
    t: float
    occupation: float
    samples: int
    grid: np.ndarray
    estimate: np.ndarray
    analytic: np.ndarray
    standard_error: np.ndarray
    max_deviation_se: float
    max_standard_error: float

    def passed(self, n_se: float = 5.0) -> bool:
        return self.max_deviation_se <= n_se


def monte_carlo_kernel_check(
    gamma: float,
    t: float,
    samples: int = 10_000,
    seed: int = 0,
    occupation: float = 0.0,
    grid_points: int = 6,
    substeps: int = 200,
    batch: int = 2_000,
) -> KernelCheckReport:
    """Estimate the symmetrized kernel of n(t, tau) by sampling white noise.

    The noise is drawn as complex Gaussian increments on ``substeps`` bins per
    coarse interval; n(t, tau_j) is the defining integral evaluated as a
    midpoint sum.  Returns the deviation from the analytic kernel in units of
    the sampling standard error.
    """
    if samples < 10_000:
        raise ValueError("samples must be >= 1e4")
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, t, grid_points, endpoint=False)
    n_bins = (grid_points) * substeps
    h = t / n_bins
    mids = (np.arange(n_bins) + 0.5) * h
    # start index of tau_j among the fine bins
    starts = np.arange(grid_points) * substeps
    sym_var = occupation + 0.5
    sums = np.zeros((grid_points, grid_points))
    sums_sq = np.zeros((grid_points, grid_points))
    done = 0
    while done < samples:
        nb = min(batch, samples - done)
        # <|dW|^2> = sym_var * h for each bin; real and imaginary parts share it.
        dw = rng.standard_normal((nb, n_bins)) + 1j * rng.standard_normal((nb, n_bins))
        dw *= math.sqrt(sym_var * h / 2.0)
        weights = np.exp(-0.5 * gamma * mids)
        # tail sums from each fine bin to the end
        tail = np.cumsum((dw * weights)[:, ::-1], axis=1)[:, ::-1]
        n_vals = math.sqrt(gamma) * np.exp(0.5 * gamma * grid)[None, :] * tail[:, starts]
        prod = np.real(n_vals[:, :, None] * np.conj(n_vals[:, None, :]))
        sums += prod.sum(axis=0)
        sums_sq += (prod**2).sum(axis=0)
        done += nb
    mean = sums / samples
    var = np.maximum(sums_sq / samples - mean**2, 0.0)
    se = np.sqrt(var / (samples - 1))
    analytic = sym_var * commutator_kernel(gamma, t, grid[:, None], grid[None, :])
    dev = np.abs(mean - analytic)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(se > 0, dev / np.where(se > 0, se, 1.0), np.where(dev > 0, np.inf, 0.0))
    return KernelCheckReport(
        gamma=gamma,
        t=t,
        occupation=occupation,
        samples=samples,
        grid=grid,
        estimate=mean,
        analytic=analytic,
        standard_error=se,
        max_deviation_se=float(np.max(ratio)),
        max_standard_error=float(np.max(se)),
    )


def noise_amplitudes(params: SystemParams, t: float, taus, d_values):
    """Operator coefficients of the noise drive.

    Returns (alpha_m, alpha_c, f_det): the stochastic rows are
    alpha n + alpha^* n^dag for the mechanical (alpha_m) and cavity (alpha_c)
    noises, and f_det is the deterministic |D|^2 part.  Shapes (N, 4).
    """
    taus = np.asarray(taus, dtype=float)
    d = np.asarray(d_values, dtype=complex)
    g = params.g
    phase = params.omega_m * taus
    cos_t, sin_t = np.cos(phase), np.sin(phase)
    env_c = np.exp(-0.5 * params.kappa * (t - taus))
    env_m = np.exp(-0.5 * params.gamma_m * (t - taus))
    n = taus.size
    # f1, f2 multiply e^{-i w tau} n_m + e^{i w tau} n_m^dag
    alpha_m = np.zeros((n, 4), dtype=complex)
    rot = np.exp(-1j * phase)
    alpha_m[:, 0] = -math.sqrt(2.0) * g * env_c * d.imag * rot
    alpha_m[:, 1] = math.sqrt(2.0) * g * env_c * d.real * rot
    # f3, f4 multiply D^* n_c + D n_c^dag + |D|^2
    pref = CAVITY_NOISE_FACTOR * g * env_m
    alpha_c = np.zeros((n, 4), dtype=complex)
    alpha_c[:, 2] = -pref * sin_t * np.conj(d)
    alpha_c[:, 3] = pref * cos_t * np.conj(d)
    f_det = np.zeros((n, 4))
    f_det[:, 2] = -pref * sin_t * np.abs(d) ** 2
    f_det[:, 3] = pref * cos_t * np.abs(d) ** 2
    return alpha_m, alpha_c, f_det


def trapezoid_weights(taus: np.ndarray) -> np.ndarray:
    w = np.zeros(taus.size)
    if taus.size > 1:
        h = np.diff(taus)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
    return w


def kernel_quadratic_form(gamma: float, t: float, taus, b, method: str = "running") -> np.ndarray:
    """sum_ij k(tau_i, tau_j) b_i b_j^H for weighted amplitudes b (shape (N, 4)).

    For tau_i >= tau_j the kernel factorizes as c_i rho^(i - j) with
    c_i = 1 - e^{-gamma (t - tau_i)}, so ``running`` accumulates the lower
    triangle with a first-order recursion (O(N), uniform grid) and adds its
    Hermitian transpose.  ``direct`` forms the N x N kernel matrix.
    """
    taus = np.asarray(taus, dtype=float)
    b = np.asarray(b, dtype=complex)
    if method == "direct":
        kern = commutator_kernel(gamma, t, taus[:, None], taus[None, :])
        return b.T @ kern @ np.conj(b)
    if method != "running":
        raise ValueError(f"unknown method {method!r}")
    c = -np.expm1(-gamma * (t - taus))
    cb = c[:, None] * b
    diag = cb.T @ np.conj(b)
    if taus.size == 1:
        return diag
    h = taus[1] - taus[0]
    rho = math.exp(-0.5 * gamma * h)
    # running[i] = sum_{j <= i} rho^(i - j) b_j
    running = lfilter([1.0], [1.0, -rho], b, axis=0)
    lower = cb.T @ np.conj(running)
    return lower + lower.conj().T - diag


def _v2_from_family(params: SystemParams, fam: PropagatorFamily, method: str = "running") -> np.ndarray:
    alpha_m, alpha_c, _ = noise_amplitudes(params, fam.t, fam.taus, fam.displacement)
    w = trapezoid_weights(fam.taus)
    b_m = w[:, None] * np.einsum("kij,kj->ki", fam.phi, alpha_m)
    b_c = w[:, None] * np.einsum("kij,kj->ki", fam.phi, alpha_c)
    v2 = (2.0 * params.n_th + 1.0) * kernel_quadratic_form(params.gamma_m, fam.t, fam.taus, b_m, method)
    v2 = v2 + (2.0 * params.n_c + 1.0) * kernel_quadratic_form(params.kappa, fam.t, fam.taus, b_c, method)
    v2 = np.real(v2)
    return 0.5 * (v2 + v2.T)


def _mean_from_family(params: SystemParams, fam: PropagatorFamily) -> np.ndarray:
    _, _, f_det = noise_amplitudes(params, fam.t, fam.taus, fam.displacement)
    w = trapezoid_weights(fam.taus)
    return np.einsum("k,kij,kj->i", w, fam.phi, f_det)


@dataclass
class ConvergenceReport:
    dt: float
    coarse: np.ndarray
    fine: np.ndarray
    extrapolated: np.ndarray
    rel_change: float
    rel_error: float
    tolerance: float

    @property
    def converged(self) -> bool:
        return self.rel_change <= self.tolerance


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


@dataclass(frozen=True)
class Grid:
    """Quadrature grid: V2 step ``dt`` and the K refinement factor."""

    dt: float = DEFAULT_GRID_DT
    refine: int = 5
    rtol: float = DEFAULT_CONVERGENCE_RTOL
    check: bool = True


def covariance_noise(
    params: SystemParams,
    drive: DriveProfile,
    t: float,
    grid: Grid | None = None,
    identity_propagator: bool = False,
    method: str = "running",
    return_report: bool = False,
):
    """Noise part V2(t) of the correlation matrix.

    With ``grid.check`` the result is recomputed on a grid twice as coarse and
    a ConvergenceError is raised when any entry moves by more than
    ``grid.rtol`` relative to the largest entry.
    """
    grid = grid or Grid()
    if t == 0 or params.g == 0:
        v2 = np.zeros((4, 4))
        report = ConvergenceReport(grid.dt, v2, v2, v2, 0.0, 0.0, grid.rtol)
        return (v2, report) if return_report else v2
    fam = propagator_family(params, drive, t, grid.dt, grid.refine, identity=identity_propagator)
    v2 = _v2_from_family(params, fam, method)
    report = None
    if grid.check:
        coarse_fam = propagator_family(params, drive, t, 2 * grid.dt, grid.refine, identity=identity_propagator)
        v2_coarse = _v2_from_family(params, coarse_fam, method)
        extrapolated = v2 + (v2 - v2_coarse) / 3.0
        report = ConvergenceReport(
            dt=grid.dt,
            coarse=v2_coarse,
            fine=v2,
            extrapolated=extrapolated,
            rel_change=_relative(v2, v2_coarse),
            rel_error=_relative(v2, extrapolated),
            tolerance=grid.rtol,
        )
        if report.rel_change > grid.rtol:
            raise ConvergenceError(
                f"V2 changed by {report.rel_change:.3e} (relative) when the grid step was "
                f"doubled from {grid.dt:g}; tolerance {grid.rtol:g}. Use a smaller grid step.",
                report,
            )
    return (v2, report) if return_report else v2


def mean_trajectory(params: SystemParams, drive: DriveProfile, times, grid: Grid | None = None) -> np.ndarray:
    """<v(t)> for each requested time; the initial state has zero means."""
    grid = grid or Grid()
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.zeros((times.size, 4))
    for i, t in enumerate(times):
        if t > 0:
            out[i] = _mean_from_family(params, propagator_family(params, drive, t, grid.dt, grid.refine))
    return out
