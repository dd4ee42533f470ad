"""Generator of the linearized quadrature dynamics and its propagators.

For a fixed final time t the quadrature vector v = (x_c, p_c, x_m, p_m)
obeys dv/dtau = M(t, tau) v + f(t, tau) on 0 <= tau <= t.  ``M`` couples the
cavity pair only to the mechanical pair, and it is Hamiltonian: M = J S with
S symmetric, so every propagator it generates is symplectic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .core import DriveProfile, SystemParams, displacement_on_grid, eval_displacement

# Symplectic form for the ordering (x_c, p_c, x_m, p_m).
J = np.array(
    [
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0, 0.0],
    ]
)

SERIES_THRESHOLD = 1e-12
K_STRUCTURE_RTOL = 1e-9
DEFAULT_K_DT = 1e-3


class StructureError(RuntimeError):
    """K(t, tau)^2 is not proportional to the identity."""


class StepTooCoarse(ValueError):
    pass


@dataclass(frozen=True)
class Propagator4:
    entries: np.ndarray
    t_from: float
    t_to: float

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def coefficients_from_displacement(params: SystemParams, t: float, taus, d_values) -> np.ndarray:
    """l1..l4 at each tau as an array of shape (4, len(taus)).

    Uses i(D - D^*) = -2 Im D, so all four come out real.
    """
    taus = np.asarray(taus, dtype=float)
    envelope = params.g * np.exp(-0.5 * (params.kappa + params.gamma_m) * (t - taus))
    cos_t = np.cos(params.omega_m * taus)
    sin_t = np.sin(params.omega_m * taus)
    re2 = 2.0 * np.real(d_values)
    im2 = 2.0 * np.imag(d_values)
    return envelope * np.array([re2 * cos_t, re2 * sin_t, -im2 * cos_t, -im2 * sin_t])


def coefficients(params: SystemParams, drive: DriveProfile, t: float, taus) -> np.ndarray:
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    d_values = np.array([eval_displacement(params, drive, float(s)) for s in taus])
    return coefficients_from_displacement(params, t, taus, d_values)


def matrix_from_coefficients(l1, l2, l3, l4) -> np.ndarray:
    """Assemble generator-shaped matrices; works elementwise on arrays."""
    l1, l2, l3, l4 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (l1, l2, l3, l4)))
    out = np.zeros(l1.shape + (4, 4))
    out[..., 0, 2] = l3
    out[..., 0, 3] = l4
    out[..., 1, 2] = l1
    out[..., 1, 3] = l2
    out[..., 2, 0] = -l2
    out[..., 2, 1] = l4
    out[..., 3, 0] = l1
    out[..., 3, 1] = -l3
    return out


def generator(params: SystemParams, drive: DriveProfile, t: float, tau: float) -> np.ndarray:
    """M(t, tau) as a 4x4 real matrix."""
    if not 0 <= tau <= t:
        raise ValueError("need 0 <= tau <= t")
    l = coefficients(params, drive, t, [tau])[:, 0]
    return matrix_from_coefficients(*l)


def hamiltonian_part(m: np.ndarray) -> np.ndarray:
    """S with m = J S.  S is symmetric exactly when m is Hamiltonian."""
    return -J @ m


def uniform_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    n = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    return np.linspace(t0, t1, n + 1)


def m_from_integrals(big_l: np.ndarray) -> np.ndarray:
    """m = L1 L4 - L2 L3 for stacked integrated coefficients (shape (4, ...))."""
    return big_l[0] * big_l[3] - big_l[1] * big_l[2]


def m_modulus_form(big_l: np.ndarray) -> np.ndarray:
    """m written as a difference of two squared moduli."""
    l1, l2, l3, l4 = big_l
    first = np.abs(l1 + 1j * l2 - 1j * l3 + l4) ** 2
    second = np.abs(l1 - 1j * l2 - 1j * l3 - l4) ** 2
    return 0.25 * first - 0.25 * second


def check_k_structure(k: np.ndarray, m: float, rtol: float = K_STRUCTURE_RTOL) -> float:
    """Return max|K^2 - m I| scaled by the size of K^2; raise if too large."""
    k2 = k @ k
    scale = max(np.max(np.abs(k2)), np.max(np.abs(k)) ** 2, 1e-300)
    err = float(np.max(np.abs(k2 - m * np.eye(4))) / scale)
    if err > rtol:
        raise StructureError(f"K^2 differs from m*I by {err:.3e} (relative); coefficient bug?")
    return err


def k_integral(
    params: SystemParams, drive: DriveProfile, t: float, tau: float, dt: float = DEFAULT_K_DT
) -> tuple[np.ndarray, float]:
    """K(t, tau) = int_tau^t M(t, s) ds by the trapezoid rule, and m with K^2 = m I."""
    if not 0 <= tau <= t:
        raise ValueError("need 0 <= tau <= t")
    if t == tau:
        return np.zeros((4, 4)), 0.0
    grid = uniform_grid(0.0, t, dt)
    # Integrate on the grid restricted to [tau, t]; tau itself is a node.
    inner = np.concatenate(([tau], grid[grid > tau]))
    d_values = displacement_on_grid(params, drive, grid)
    d_inner = np.concatenate(([eval_displacement(params, drive, tau)], d_values[grid > tau]))
    l = coefficients_from_displacement(params, t, inner, d_inner)
    big_l = np.trapezoid(l, inner, axis=1)
    k = matrix_from_coefficients(*big_l)
    m = float(m_from_integrals(big_l))
    check_k_structure(k, m)
    return k, m


def _cosh_sinhc(m):
    """cosh(sqrt m) and sinh(sqrt m)/sqrt m, continued analytically to m < 0."""
    m = np.asarray(m, dtype=float)
    c = np.empty_like(m)
    s = np.empty_like(m)
    small = np.abs(m) < SERIES_THRESHOLD
    pos = (m > 0) & ~small
    neg = (m < 0) & ~small
    r = np.sqrt(m[pos])
    c[pos] = np.cosh(r)
    s[pos] = np.sinh(r) / r
    r = np.sqrt(-m[neg])
    c[neg] = np.cos(r)
    s[neg] = np.sin(r) / r
    ms = m[small]
    c[small] = 1.0 + ms / 2.0 + ms**2 / 24.0
    s[small] = 1.0 + ms / 6.0 + ms**2 / 120.0
    return c, s


def exp_from_k(k: np.ndarray, m) -> np.ndarray:
    """exp(K) for matrices with K^2 = m I; accepts stacks of shape (..., 4, 4)."""
    c, s = _cosh_sinhc(m)
    return c[..., None, None] * np.eye(4) + s[..., None, None] * k


def closed_form_propagator(
    params: SystemParams, drive: DriveProfile, t: float, tau: float, dt: float = DEFAULT_K_DT
) -> Propagator4:
    """exp(K(t, tau)), the commuting-generator approximation of the time-ordered exponential."""
    k, m = k_integral(params, drive, t, tau, dt)
    return Propagator4(exp_from_k(k, m), t_from=tau, t_to=t)


ORACLE_STEPS_PER_UNIT = 200.0


def default_oracle_steps(params: SystemParams, t: float, tau: float, generator_scale: float = 0.0) -> int:
    """Steps for product integration: 200 per unit of the fastest rate.

    ``generator_scale`` is an estimate of the largest |M| on [tau, t]; the
    step error is second order in |M| ds.
    """
    rate = max(params.kappa, params.omega_m, generator_scale)
    return max(1, math.ceil(ORACLE_STEPS_PER_UNIT * (t - tau) * rate))


def _generator_scale(params: SystemParams, drive: DriveProfile, t: float, tau: float) -> float:
    probe = displacement_on_grid(params, drive, np.linspace(0.0, t, 201))
    return 2.0 * params.g * float(np.max(np.abs(probe)))


def product_integration_propagator(
    params: SystemParams,
    drive: DriveProfile,
    t: float,
    tau: float,
    steps: int | None = None,
    max_step_norm: float = 0.1,
) -> Propagator4:
    """Time-ordered exponential by midpoint product integration.

    Each step contributes expm(M(t, s_mid) ds); later steps multiply from the
    left.  Second order in ds.
    """
    if steps is None:
        steps = default_oracle_steps(params, t, tau, _generator_scale(params, drive, t, tau))
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not 0 <= tau <= t:
        raise ValueError("need 0 <= tau <= t")
    if t == tau:
        return Propagator4(np.eye(4), t_from=tau, t_to=t)
    ds = (t - tau) / steps
    mids = tau + (np.arange(steps) + 0.5) * ds
    d_values = displacement_on_grid(params, drive, np.concatenate(([0.0], mids)))[1:]
    gens = matrix_from_coefficients(*coefficients_from_displacement(params, t, mids, d_values))
    worst = float(np.max(np.linalg.norm(gens, ord=2, axis=(1, 2)))) * ds
    if worst > max_step_norm:
        raise StepTooCoarse(f"|M| ds = {worst:.3g} exceeds {max_step_norm}; increase steps")
    step_maps = expm(gens * ds)
    phi = np.eye(4)
    for step in step_maps:
        phi = step @ phi
    return Propagator4(phi, t_from=tau, t_to=t)


def symplectic_defect(phi) -> float:
    """Frobenius norm of Phi J Phi^T - J."""
    phi = np.asarray(phi)
    return float(np.linalg.norm(phi @ J @ phi.T - J))


@dataclass
class PropagatorFamily:
    """exp(K(t, tau_k)) for every node tau_k of a uniform grid on [0, t]."""

    t: float
    taus: np.ndarray
    displacement: np.ndarray
    k: np.ndarray
    m: np.ndarray
    phi: np.ndarray


def propagator_family(
    params: SystemParams,
    drive: DriveProfile,
    t: float,
    dt: float,
    refine: int = 5,
    identity: bool = False,
) -> PropagatorFamily:
    """Closed-form propagators from every grid node to t.

    K is accumulated backwards from t with the trapezoid rule on a grid
    ``refine`` times finer than the returned one.  With ``identity=True`` all
    propagators are replaced by the identity (diagnostic mode).
    """
    taus = uniform_grid(0.0, t, dt) if t > 0 else np.zeros(1)
    n = taus.size - 1
    if identity or t == 0:
        d_values = displacement_on_grid(params, drive, taus)
        k = np.zeros((n + 1, 4, 4))
        m = np.zeros(n + 1)
        phi = np.broadcast_to(np.eye(4), (n + 1, 4, 4)).copy()
        return PropagatorFamily(t, taus, d_values, k, m, phi)
    fine = np.linspace(0.0, t, n * refine + 1)
    d_fine = displacement_on_grid(params, drive, fine)
    l = coefficients_from_displacement(params, t, fine, d_fine)
    h = fine[1] - fine[0]
    panels = 0.5 * h * (l[:, 1:] + l[:, :-1])
    # tail[:, j] = integral from fine[j] to t
    tail = np.zeros_like(l)
    tail[:, :-1] = np.cumsum(panels[:, ::-1], axis=1)[:, ::-1]
    big_l = tail[:, ::refine]
    k = matrix_from_coefficients(*big_l)
    m = m_from_integrals(big_l)
    phi = exp_from_k(k, m)
    return PropagatorFamily(t, taus, d_fine[::refine], k, m, phi)
