"""Entanglement dynamics of driven optomechanical systems.

The cavity and mechanical quadratures evolve under a linear time-dependent
generator built from the drive-induced cavity displacement; colored reservoir
noise enters through two-time kernels.  A fluctuation-expansion steady state
is provided for comparison.
"""

from .baseline import (
    baseline_cavity_fluctuation,
    baseline_log_negativity,
    baseline_steady_covariance,
    classical_steady_state,
    routh_hurwitz,
    stability_map,
)
from .core import CW, GaussianPulse, ParameterError, SystemParams, eval_displacement
from .entanglement import (
    cavity_fluctuation_number,
    entanglement_trace,
    evolve_covariance,
    log_negativity,
    trace_features,
)
from .noise import ConvergenceError, Grid, covariance_noise, monte_carlo_kernel_check
from .propagator import closed_form_propagator, product_integration_propagator, propagator_family
from .thermal import relax_occupation

__all__ = [
    "CW",
    "ConvergenceError",
    "GaussianPulse",
    "Grid",
    "ParameterError",
    "SystemParams",
    "baseline_cavity_fluctuation",
    "baseline_log_negativity",
    "baseline_steady_covariance",
    "cavity_fluctuation_number",
    "classical_steady_state",
    "closed_form_propagator",
    "covariance_noise",
    "entanglement_trace",
    "eval_displacement",
    "evolve_covariance",
    "log_negativity",
    "monte_carlo_kernel_check",
    "product_integration_propagator",
    "propagator_family",
    "relax_occupation",
    "routh_hurwitz",
    "stability_map",
    "trace_features",
]
