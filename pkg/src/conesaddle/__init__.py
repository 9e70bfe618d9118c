"""Saddle-shaped solutions of the bistable half-Laplacian equation in R^{2m}.

The equation (-Delta)^{1/2} u = f(u) is solved through its harmonic
extension in one extra variable lambda > 0.  Saddle solutions depend only on
the block radii s = |x'| and t = |x''|, so every computation lives on a 3-D
(s, t, lambda) grid with weight s^{m-1} t^{m-1}.
"""

from .errors import (ConeSaddleError, ConvergenceError, DimensionError, DomainError,
                     PreconditionError, ValidationError)
from .model import GridSpec2, GridSpec3, LayerProfile, Nonlinearity, ScalarField, make_nonlinearity
from .layer import solve_layer, layer_value, pn_closed_form
from .saddle import SaddleState, discrete_energy, minimize_energy, odd_reflect
from .maximal import MaximalState, maximality_check, monotone_iterate
from .analysis import asymptotic_report, gradient_decay_check, monotonicity_report
from .stability import (dimension_criterion, hardy_rayleigh_min, instability_search,
                        quadratic_form)

__all__ = [
    "ConeSaddleError", "ConvergenceError", "DimensionError", "DomainError", "PreconditionError",
    "ValidationError", "GridSpec2", "GridSpec3", "LayerProfile", "Nonlinearity", "ScalarField",
    "make_nonlinearity", "solve_layer", "layer_value", "pn_closed_form", "SaddleState",
    "discrete_energy", "minimize_energy", "odd_reflect", "MaximalState", "maximality_check",
    "monotone_iterate", "asymptotic_report", "gradient_decay_check", "monotonicity_report",
    "dimension_criterion", "hardy_rayleigh_min", "instability_search", "quadratic_form",
]
