from .series import (PolynomialField, Trajectory, integrate_ivp, integrate_steps,
                     integrate_complex_path, refine_complex_event,
                     IntegrationError, StepUnderflow, EventNotFound)
from .quadrature import (Panel, PanelPath, panelize, gauss_legendre, kernel_moments,
                         quadrature_path, fit_power_tail, analytic_power_tail,
                         vandermonde_data, QuadratureError)
from .extrapolation import extrapolate_limit, fit_log_slope, ExtrapolationError
from .paths import ComplexPath

__all__ = [
    "PolynomialField", "Trajectory", "integrate_ivp", "integrate_steps",
    "integrate_complex_path", "refine_complex_event", "IntegrationError",
    "StepUnderflow", "EventNotFound", "Panel", "PanelPath", "panelize",
    "gauss_legendre", "kernel_moments", "quadrature_path", "fit_power_tail",
    "analytic_power_tail", "vandermonde_data", "QuadratureError",
    "extrapolate_limit", "fit_log_slope", "ExtrapolationError", "ComplexPath",
]
