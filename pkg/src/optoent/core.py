"""System parameters, drive profiles and the effective cavity displacement D(tau).

All rates and frequencies are expressed in units of the cavity decay rate, so
``kappa`` is 1 unless a caller deliberately rescales it.  Quadratures follow
x = (a + a^dag)/sqrt(2), p = -i(a - a^dag)/sqrt(2) (vacuum variance 1/2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

# Gauss-Legendre nodes on [0, 1] used for pulse panels.
_GL_ORDER = 10
_gl_x, _gl_w = np.polynomial.legendre.leggauss(_GL_ORDER)
GL_NODES = 0.5 * (_gl_x + 1.0)
GL_WEIGHTS = 0.5 * _gl_w


class ParameterError(ValueError):
    """Raised when a parameter set violates its physical constraints."""


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the optomechanical system.

    ``n_th`` defaults to ``n_m`` (reservoir in equilibrium with the initial
    mechanical state).  The optical reservoir is at zero temperature.
    """

    g: float
    omega_m: float
    gamma_m: float
    delta0: float
    kappa: float = 1.0
    n_m: float = 0.0
    n_th: float | None = None
    n_c: float = field(default=0.0, init=False)

    def __post_init__(self):
        if self.n_th is None:
            object.__setattr__(self, "n_th", float(self.n_m))
        if not self.kappa > 0:
            raise ParameterError(f"kappa must be > 0, got {self.kappa}")
        if not self.omega_m > 0:
            raise ParameterError(f"omega_m must be > 0, got {self.omega_m}")
        if not self.gamma_m > 0:
            raise ParameterError(f"gamma_m must be > 0, got {self.gamma_m}")
        if self.g < 0:
            raise ParameterError(f"g must be >= 0, got {self.g}")
        if self.n_m < 0 or self.n_th < 0:
            raise ParameterError("thermal occupations must be >= 0")
        if self.omega_m / self.gamma_m < 100:
            warnings.warn(
                f"omega_m/gamma_m = {self.omega_m / self.gamma_m:.3g} < 100; "
                "the white-noise mechanical reservoir is a poor approximation",
                stacklevel=3,
            )

    @classmethod
    def from_ratios(
        cls,
        g_over_kappa: float,
        omega_m_over_kappa: float,
        q_m: float,
        delta0_over_omega_m: float,
        n_m: float = 0.0,
        n_th: float | None = None,
        kappa: float = 1.0,
    ) -> "SystemParams":
        """Build parameters the way figure captions quote them.

        ``q_m`` is the mechanical quality factor omega_m/gamma_m and the
        detuning is given in units of omega_m.
        """
        omega_m = omega_m_over_kappa * kappa
        return cls(
            g=g_over_kappa * kappa,
            omega_m=omega_m,
            gamma_m=omega_m / q_m,
            delta0=delta0_over_omega_m * omega_m,
            kappa=kappa,
            n_m=n_m,
            n_th=n_th,
        )

    def replace(self, **changes) -> "SystemParams":
        values = dict(
            g=self.g,
            omega_m=self.omega_m,
            gamma_m=self.gamma_m,
            delta0=self.delta0,
            kappa=self.kappa,
            n_m=self.n_m,
            n_th=self.n_th,
        )
        values.update(changes)
        return SystemParams(**values)


@dataclass(frozen=True)
class CW:
    """Continuous-wave drive of constant amplitude ``amplitude``."""

    amplitude: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ParameterError("drive amplitude must be >= 0")


@dataclass(frozen=True)
class GaussianPulse:
    """Pulse E(t) = E exp(-width^2 t^2), peaked at t = 0."""

    amplitude: float
    width: float

    def __post_init__(self):
        if self.amplitude < 0:
            raise ParameterError("drive amplitude must be >= 0")
        if not self.width > 0:
            raise ParameterError("pulse width must be > 0")


DriveProfile = Union[CW, GaussianPulse]


@dataclass(frozen=True)
class DisplacementSample:
    tau: float
    value: complex


def drive_amplitude(drive: DriveProfile, t):
    """Drive envelope E(t); accepts scalars or arrays."""
    if isinstance(drive, CW):
        if np.ndim(t) == 0:
            return float(drive.amplitude)
        return np.full(np.shape(t), float(drive.amplitude))
    if isinstance(drive, GaussianPulse):
        t = np.asarray(t, dtype=float)
        out = drive.amplitude * np.exp(-(drive.width**2) * t**2)
        return float(out) if out.ndim == 0 else out
    raise TypeError(f"unknown drive profile {drive!r}")


def _panel_increment(params: SystemParams, drive: DriveProfile, a: float, b: float) -> complex:
    """int_a^b E(s) e^{i delta0 s} e^{-kappa (b - s)/2} ds by Gauss-Legendre."""
    h = b - a
    s = a + h * GL_NODES
    f = drive_amplitude(drive, s) * np.exp(1j * params.delta0 * s - 0.5 * params.kappa * (b - s))
    return complex(h * np.dot(GL_WEIGHTS, f))


def _pulse_panel_width(params: SystemParams, drive: GaussianPulse) -> float:
    return min(1.0 / params.kappa, 1.0 / drive.width) / 8.0


def eval_displacement(params: SystemParams, drive: DriveProfile, tau: float) -> complex:
    """Effective cavity displacement D(tau).

    The decayed-drive term and the commutator term of the displaced cavity
    operator combine into

        D(tau) = int_0^tau E(s) e^{i delta0 s} e^{-kappa (tau - s)/2} ds,

    which no longer depends on the final time t.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    kappa, delta0 = params.kappa, params.delta0
    if isinstance(drive, CW):
        z = 1j * delta0 + 0.5 * kappa
        return complex(drive.amplitude * (np.exp(1j * delta0 * tau) - np.exp(-0.5 * kappa * tau)) / z)
    if isinstance(drive, GaussianPulse):
        width = _pulse_panel_width(params, drive)
        n = max(1, math.ceil(tau / width))
        edges = np.linspace(0.0, tau, n + 1)
        value = 0j
        for a, b in zip(edges[:-1], edges[1:]):
            value = value * np.exp(-0.5 * kappa * (b - a)) + _panel_increment(params, drive, a, b)
        return complex(value)
    raise TypeError(f"unknown drive profile {drive!r}")


def displacement_on_grid(params: SystemParams, drive: DriveProfile, taus: np.ndarray) -> np.ndarray:
    """D(tau) at every point of an increasing grid starting at 0.

    Pulses are integrated panel by panel with the recursion
    D(b) = e^{-kappa (b-a)/2} D(a) + increment(a, b), so the cost is linear
    in the grid length.
    """
    taus = np.asarray(taus, dtype=float)
    if isinstance(drive, CW):
        z = 1j * params.delta0 + 0.5 * params.kappa
        return drive.amplitude * (np.exp(1j * params.delta0 * taus) - np.exp(-0.5 * params.kappa * taus)) / z
    if not isinstance(drive, GaussianPulse):
        raise TypeError(f"unknown drive profile {drive!r}")
    if taus.size == 0:
        return np.zeros(0, dtype=complex)
    if taus[0] != 0.0 or np.any(np.diff(taus) < 0):
        raise ValueError("grid must start at 0 and be non-decreasing")
    kappa = params.kappa
    a, b = taus[:-1], taus[1:]
    n_sub = max(1, math.ceil(float(np.max(b - a)) / _pulse_panel_width(params, drive)))
    # n_sub Gauss-Legendre sub-panels per grid step, weighted by the decay to b.
    frac = (np.arange(n_sub)[:, None] + GL_NODES[None, :]).ravel() / n_sub
    s = a[:, None] + (b - a)[:, None] * frac[None, :]
    f = drive_amplitude(drive, s) * np.exp(1j * params.delta0 * s - 0.5 * kappa * (b[:, None] - s))
    inc = (b - a) / n_sub * (f @ np.tile(GL_WEIGHTS, n_sub))
    decay = np.exp(-0.5 * kappa * (b - a))
    out = np.empty(taus.size, dtype=complex)
    out[0] = 0.0
    for k in range(inc.size):
        out[k + 1] = out[k] * decay[k] + inc[k]
    return out


def steady_displacement_modulus(params: SystemParams, amplitude: float) -> float:
    """|D| reached by a CW drive once the cavity transient has decayed."""
    return amplitude / math.sqrt(0.25 * params.kappa**2 + params.delta0**2)
