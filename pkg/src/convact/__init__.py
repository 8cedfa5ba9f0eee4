"""Convolved action functionals for initial value problems.

Actions built from temporal convolutions instead of ``L^2`` products have
stationary points that satisfy the *initial* data of a mechanical problem,
with the initial velocity entering as a natural condition. This package
evaluates those actions for an oscillator and a one-dimensional bar (elastic
or Kelvin-Voigt), solves for their stationary points on a nodal Galerkin
basis, and checks the results against independent reference solutions.
"""

from convact.action import (
    BarProblem,
    SdofProblem,
    action,
    action_bar,
    action_sdof,
    action_sdof_classical,
    natural_impulse_bar,
    natural_impulse_sdof,
    perturb,
    variation,
    variation_bar,
    variation_sdof,
)
from convact.convolution import (
    ConvKernelResult,
    conv_commutativity_residual,
    conv_ibp_residual,
    conv_ibp_second_residual,
    conv_mass_matrix,
    conv_stiffness_matrix,
    convolve,
    titchmarsh_probe,
)
from convact.errors import (
    AdmissibilityError,
    ConfigError,
    GridMismatchError,
    SingularSystemError,
    SystemTooLargeError,
)
from convact.fractional import (
    HalfOperatorScheme,
    HalfScheme,
    half_derivative,
    half_energy_identity,
    half_form_matrix,
    half_ibp_residual,
    half_integral,
)
from convact.signals import (
    Constant,
    Field,
    SineMode,
    Signal,
    Sinusoid,
    SpaceTimeGrid,
    TimeGrid,
    Zero,
    derivative,
    sample,
    sample_field,
    trapezoid,
)
from convact.solver import (
    StationaryReport,
    bar_energy,
    certify_stationarity,
    classical_system,
    convolved_system,
    natural_condition_sdof,
    neumann_residual_bar,
    reference_bar_modal,
    reference_bar_timestep,
    reference_sdof,
    solve_bar,
    solve_sdof,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "BarProblem",
    "ConfigError",
    "Constant",
    "ConvKernelResult",
    "Field",
    "GridMismatchError",
    "HalfOperatorScheme",
    "HalfScheme",
    "SdofProblem",
    "Signal",
    "SineMode",
    "SingularSystemError",
    "Sinusoid",
    "SpaceTimeGrid",
    "StationaryReport",
    "SystemTooLargeError",
    "TimeGrid",
    "Zero",
    "action",
    "action_bar",
    "action_sdof",
    "action_sdof_classical",
    "bar_energy",
    "certify_stationarity",
    "classical_system",
    "conv_commutativity_residual",
    "conv_ibp_residual",
    "conv_ibp_second_residual",
    "conv_mass_matrix",
    "conv_stiffness_matrix",
    "convolve",
    "convolved_system",
    "derivative",
    "half_derivative",
    "half_energy_identity",
    "half_form_matrix",
    "half_ibp_residual",
    "half_integral",
    "natural_condition_sdof",
    "natural_impulse_bar",
    "natural_impulse_sdof",
    "neumann_residual_bar",
    "perturb",
    "reference_bar_modal",
    "reference_bar_timestep",
    "reference_sdof",
    "sample",
    "sample_field",
    "solve_bar",
    "solve_sdof",
    "titchmarsh_probe",
    "trapezoid",
    "variation",
    "variation_bar",
    "variation_sdof",
]
