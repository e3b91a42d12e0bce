"""Closed-form radial Navier-Stokes solution families, their scale-factor ODEs and residual checks."""

from .diagnostics import (
    BlowupRateEstimate,
    MassKind,
    MassResult,
    RateVerdict,
    blowup_rate_estimate,
    center_density,
    compare_surface_coefficients,
    gaussian_moment_mass,
    surface_coefficient,
    total_mass,
)
from .errors import (
    AfterBlowupError,
    ConfigError,
    DomainError,
    IntegrationError,
    QuadratureError,
    SupportBoundaryError,
)
from .families import (
    SolutionFamily,
    Variant,
    family_from_dict,
    family_to_dict,
    fields,
    isothermal_damped,
    isothermal_ns,
    pressureless_theta,
    pressureless_theta1,
    separable_profile,
    solid_core_2d,
)
from .residual import Grid, ResidualReport, default_grid, residual_sweep
from .scaling_ode import (
    BlowupReport,
    BlowupStatus,
    Kind,
    ScalingODE,
    Trajectory,
    detect_blowup,
    integrate,
)

__version__ = "0.1.0"
