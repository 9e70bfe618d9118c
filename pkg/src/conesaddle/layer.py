"""One-dimensional layer solutions through their half-plane extension.

The layer u0 is increasing, odd and tends to +-1.  Its harmonic extension
v0(x, lambda) solves Laplace's equation in the half-plane with
-d_lambda v0 = f(v0) on lambda = 0.  We solve on x >= 0 with v0(0, .) = 0
and reflect oddly.  Far away, any such layer looks like the Poisson extension
of sign(x) seen from a shifted height, (2/pi) arctan(x/(lambda + c)); the top
gets this value and the face x = x_max its normal derivative.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConvergenceError, PreconditionError
from .extension import CylinderSolver, cylinder_apply, line_operator, solve_bottom_newton
from .model import GridSpec2, LayerProfile, Nonlinearity, ScalarField


def pn_closed_form(x, lam):
    """Explicit layer extension (2/pi) arctan(x / (lambda + 1/pi)) for f = sin(pi u)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise PreconditionError("lambda must be nonnegative")
    val = (2 / np.pi) * np.arctan(np.asarray(x, dtype=float) / (lam + 1 / np.pi))
    return float(val) if np.ndim(val) == 0 else val


def far_field(x, lam, offset: float = 0.0):
    """Poisson extension of sign(x) evaluated at height lam + offset."""
    return (2 / np.pi) * np.arctan(np.asarray(x, dtype=float) / (np.asarray(lam, dtype=float) + offset))


def far_field_slope(x, lam, offset: float = 0.0):
    """x-derivative of :func:`far_field`."""
    mu = np.asarray(lam, dtype=float) + offset
    return (2 / np.pi) * mu / (np.asarray(x, dtype=float) ** 2 + mu**2)


def fit_offset(x_max: float, u_end: float) -> float:
    """Offset c with far_field(x_max, 0, c) = u_end (the tail of the trace)."""
    u_end = min(max(u_end, 1e-12), 1 - 1e-15)
    return float(x_max / np.tan(np.pi * u_end / 2))


def layer_solver(grid: GridSpec2) -> CylinderSolver:
    n = grid.n_half
    A, mass = line_operator(n, grid.h_x)
    free = np.ones(n, bool)
    free[0] = False
    return CylinderSolver(A, mass, free, grid.h_lambda, grid.nl, top="dirichlet")


def solve_layer(nl: Nonlinearity, grid: GridSpec2, tol: float = 1e-10, max_iter: int = 60,
                lateral: str = "farfield", max_outer: int = 30) -> LayerProfile:
    """Discrete layer extension on ``grid``.

    The bottom trace is found by damped Newton on the nonlinear Neumann
    condition; the iteration stops once the residual falls below ``tol``.

    ``lateral`` selects the closure at x = x_max.  With ``"farfield"`` the top
    value and the lateral flux come from the shifted far field
    (2/pi) arctan(x/(lambda + c)), where c is refitted to the computed tail
    u0(x_max) until it settles.  ``"neumann"`` uses zero lateral flux and c = 0.
    """
    if lateral not in ("farfield", "neumann"):
        raise PreconditionError("lateral must be 'farfield' or 'neumann'")
    nl.require("odd", "G_double_well")
    solver = layer_solver(grid)
    xf = grid.h_x * np.arange(1, grid.n_half)
    zero = np.zeros((1, grid.nl))
    a = nl.sup_abs_f_prime() + 0.5
    u = far_field(xf, 1.0)
    c = 0.0
    hist = []
    for _ in range(max_outer if lateral == "farfield" else 1):
        top = far_field(xf, grid.lambda_max, c)
        flux = np.zeros((grid.n_half - 1, grid.nl))
        if lateral == "farfield":
            flux[-1] = far_field_slope(grid.x_max, grid.lam, c)
        base = solver.solve(a=a, lateral=zero, top_data=top, flux=flux)
        u, _ = solve_bottom_newton(solver, nl, base[1:, 0], u, a, tol, max_iter)
        c_new = fit_offset(grid.x_max, u[-1])
        hist.append(abs(c_new - c))
        if lateral == "neumann" or hist[-1] < tol * (1 + c):
            break
        c = c_new
    else:
        raise ConvergenceError("far-field offset did not settle", hist)
    half = solver.solve(a=a, bottom_rhs=nl.f(u) + a * u, lateral=zero, top_data=top, flux=flux)
    half[0, :] = 0.0
    full = np.concatenate([-half[:0:-1], half], axis=0)
    v0 = ScalarField(grid, full)
    return LayerProfile(grid, v0, full[:, 0].copy(), nl.kind)


def half_laplacian(trace, grid: GridSpec2, offset: float, top=None) -> np.ndarray:
    """Discrete (-Delta)^{1/2} of an odd trace, as the DtN map of the solver.

    ``trace`` holds values at x = 0, h, ..., x_max (with trace[0] = 0).  The
    trace is extended harmonically with the far-field closure of offset
    ``offset`` (lateral flux) and top data ``top`` (default: the far field),
    and the finite-volume flux through each bottom cell is returned, divided
    by the cell length.  Entry 0 is 0 by oddness.
    """
    trace = np.asarray(trace, dtype=float)
    n = grid.n_half
    if trace.shape != (n,):
        raise PreconditionError(f"trace must have {n} values")
    solver = layer_solver(grid)
    xf = grid.h_x * np.arange(1, n)
    top = far_field(xf, grid.lambda_max, offset) if top is None else np.asarray(top, dtype=float)
    flux = np.zeros((n - 1, grid.nl))
    flux[-1] = far_field_slope(grid.x_max, grid.lam, offset)
    v = solver.solve(bottom_dirichlet=trace[1:], lateral=np.zeros((1, grid.nl)), top_data=top, flux=flux)
    A, mass = line_operator(n, grid.h_x)
    out = cylinder_apply(A, mass, grid.h_lambda, v)[:, 0] / mass
    out[-1] -= flux[-1, 0] * solver.mlam[0] / mass[-1]
    out[0] = 0.0
    return out


def layer_value(profile: LayerProfile, z, lam):
    """Bilinear interpolation of v0, odd in z.

    Points with |z| > x_max take the value 1 (times sign z) on lambda = 0 and
    the edge value above it; lambda beyond the grid is clamped to the top.
    """
    g = profile.grid
    half = profile.half()
    xh = g.h_x * np.arange(g.n_half)
    interp = RegularGridInterpolator((xh, g.lam), half, method="linear")
    z = np.asarray(z, dtype=float)
    lam = np.asarray(lam, dtype=float)
    z, lam = np.broadcast_arrays(z, lam)
    az = np.minimum(np.abs(z), g.x_max)
    ll = np.clip(lam, 0.0, g.lambda_max)
    val = interp(np.stack([az.ravel(), ll.ravel()], axis=-1)).reshape(z.shape)
    val = np.where((np.abs(z) > g.x_max) & (lam == 0), 1.0, val)
    val = np.sign(z) * val
    return float(val) if val.ndim == 0 else val


def layer_half_values(profile: LayerProfile, k, level) -> np.ndarray:
    """Exact node lookup v0(k h_x, level h_lambda) for integer k (any sign)."""
    half = profile.half()
    k = np.asarray(k)
    return np.sign(k) * half[np.abs(k), level]
