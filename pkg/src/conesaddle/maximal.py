"""Maximal saddle solution on T_R = {0 < t < s < R} by monotone iteration.

The iteration starts from the barrier W = min{1, K v0(z, lambda)}, where v0 is
the discrete layer extension and z = (s - t)/sqrt2, and repeats

    -d_lambda v + a v = f(u_j) + a u_j   on lambda = 0,   u_{j+1} = v(., 0),

with v = W on the cone, on s = R and on the top lambda = Lambda.  Since
g(u) = f(u) + a u is increasing and W is a discrete supersolution, the
iterates decrease pointwise to the largest discrete solution below W.

The layer used for W must live on the diagonal grid: spacing h/sqrt2 in x
and the same lambda spacing, so that every 3-D node (i, j, l) sits over the
layer node (i - j, l).  :func:`barrier_layer` builds such a layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, PreconditionError
from .extension import cylinder_solver, region_masks
from .layer import layer_value, solve_layer
from .model import SQRT2, GridSpec2, GridSpec3, LayerProfile, Nonlinearity, ScalarField

_ALIGN_RTOL = 1e-9


# --------------------------------------------------------------------------
# barrier and K


@dataclass(frozen=True, eq=False)
class Barrier:
    """u_b(z) = min{1, K |u0(z)|} and its extension min{1, K |v0(z, lambda)|}."""

    layer: LayerProfile
    K: float

    def trace(self, s, t):
        z = (np.asarray(s, float) - np.asarray(t, float)) / SQRT2
        return np.minimum(1.0, self.K * np.abs(layer_value(self.layer, z, 0.0)))

    def __call__(self, s, t, lam=0.0):
        z = (np.asarray(s, float) - np.asarray(t, float)) / SQRT2
        return np.minimum(1.0, self.K * np.abs(layer_value(self.layer, z, lam)))

    def on_grid(self, grid: GridSpec3, odd: bool = False) -> np.ndarray:
        """Barrier values at all nodes; exact node lookup on an aligned layer.

        With ``odd`` the values carry the sign of s - t, otherwise they are
        |.|-valued.
        """
        i = np.arange(grid.ns)[:, None]
        j = np.arange(grid.nt)[None, :]
        k = i - j
        if is_aligned(self.layer, grid):
            half = self.layer.half()[:, : grid.nl]
            vals = half[np.abs(k)]
        else:
            S, T, L = grid.mesh()
            vals = np.abs(layer_value(self.layer, (S - T) / SQRT2, L))
        W = np.minimum(1.0, self.K * vals)
        if odd:
            W = np.sign(k)[..., None] * W
        return W


def barrier(layer: LayerProfile, K: float) -> Barrier:
    if not K >= 1:
        raise PreconditionError("K must be at least 1")
    return Barrier(layer, float(K))


def choose_K(layer: LayerProfile, C_grad: float) -> float:
    """max{C/u0'(0), 1/u0(1/C)}, floored at 1."""
    if not C_grad > 0:
        raise PreconditionError("C_grad must be positive")
    slope = layer.slope_at_zero()
    u_at = float(layer_value(layer, 1.0 / C_grad, 0.0))
    if u_at <= 0 or slope <= 0:
        raise PreconditionError("degenerate layer: u0(1/C) <= 0")
    return max(1.0, C_grad / slope, 1.0 / u_at)


def is_aligned(layer: LayerProfile, grid: GridSpec3) -> bool:
    lg = layer.grid
    return (abs(lg.h_x * SQRT2 - grid.h_s) <= _ALIGN_RTOL * grid.h_s
            and abs(lg.h_lambda - grid.h_lambda) <= _ALIGN_RTOL * grid.h_lambda
            and lg.n_half >= grid.ns + 1 and lg.nl >= grid.nl)


def barrier_layer(nl: Nonlinearity, grid: GridSpec3, x_min: float = 20.0, lam_min: float = 40.0,
                  tol: float = 1e-13) -> LayerProfile:
    """Layer on the diagonal grid matching ``grid`` (see module docstring)."""
    hx = grid.h_s / SQRT2
    n = max(grid.ns + 1, int(np.ceil(x_min / hx)))
    nlam = max(grid.nl - 1, int(np.ceil(lam_min / grid.h_lambda)))
    g2 = GridSpec2(n * hx, nlam * grid.h_lambda, hx, grid.h_lambda)
    return solve_layer(nl, g2, tol=tol)


# --------------------------------------------------------------------------
# monotone iteration


@dataclass(frozen=True, eq=False)
class MaximalState:
    v: ScalarField
    iterates_sup_diff: np.ndarray
    iterates_violation: np.ndarray
    iterates_min: np.ndarray
    iterates_max: np.ndarray
    a: float
    K: float
    barrier: Barrier
    barrier_values: np.ndarray = field(repr=False)
    nonlinearity: str = ""

    @property
    def m(self) -> int:
        return self.v.grid.m

    @property
    def iterations(self) -> int:
        return len(self.iterates_sup_diff)

    def record(self) -> list[tuple[int, float, float, float]]:
        """Rows (j, sup_diff, min, max) of the iteration."""
        return [(j + 1, float(d), float(lo), float(hi)) for j, (d, lo, hi) in
                enumerate(zip(self.iterates_sup_diff, self.iterates_min, self.iterates_max))]


def default_shift(nl: Nonlinearity) -> float:
    return nl.sup_abs_f_prime() + 0.5


def monotone_iterate(nl: Nonlinearity, m: int, R: float, L: float, grid: GridSpec3 | None = None,
                     layer: LayerProfile | None = None, a: float | None = None, tol: float = 1e-8,
                     K: float | None = None, h: float = 0.5, max_iter: int = 200000) -> MaximalState:
    """Decreasing iteration from the barrier to the maximal solution on T_R x [0, L]."""
    nl.require("odd", "G_double_well")
    if grid is None:
        grid = GridSpec3.cube(m, R, L, h)
    if grid.m != m or not grid.is_square or abs(grid.s_max - R) > 1e-9 * R \
            or abs(grid.lambda_max - L) > 1e-9 * L:
        raise PreconditionError("grid must be the square box of side R and height L with the given m")
    a = default_shift(nl) if a is None else float(a)
    u = np.linspace(-1, 1, 2001)
    if np.min(nl.f_prime(u) + a) <= 0:
        raise PreconditionError(f"shift a={a} too small: f(u) + a u is not increasing")
    if layer is None:
        layer = barrier_layer(nl, grid)
    if not is_aligned(layer, grid):
        raise PreconditionError("layer must be on the diagonal grid of the 3-D box (see barrier_layer)")
    K = choose_K(layer, 2.0) if K is None else float(K)
    bar = barrier(layer, K)

    W = bar.on_grid(grid)
    free2, inside = region_masks(grid, "T_R_wedge")
    W[~inside] = 0.0
    free = free2.ravel()
    Wf = W.reshape(-1, grid.nl)
    solver = cylinder_solver(grid, "T_R_wedge", "dirichlet")
    lateral = Wf[~free]
    top = Wf[free, -1]
    u_lat = solver.solve(a=a, lateral=lateral, top_data=top)[free, 0]

    u = Wf[free, 0].copy()
    diffs, viol, lo, hi = [], [], [], []
    Phi, M, r = solver.Phi, solver.mass, solver.robin_response(a)
    for _ in range(max_iter):
        un = u_lat + Phi @ (r * (Phi.T @ (M * (nl.f(u) + a * u))))
        d = un - u
        diffs.append(float(np.max(np.abs(d))))
        viol.append(float(max(0.0, d.max())))
        lo.append(float(un.min()))
        hi.append(float(un.max()))
        u = un
        if diffs[-1] < tol:
            break
    else:
        raise ConvergenceError(f"monotone iteration stalled at sup-diff {diffs[-1]:.3e}", diffs)

    out = solver.solve(a=a, bottom_rhs=nl.f(u) + a * u, lateral=lateral, top_data=top)
    out = out.reshape(grid.shape)
    out[~inside] = 0.0
    return MaximalState(ScalarField(grid, out), np.array(diffs), np.array(viol), np.array(lo),
                        np.array(hi), a, K, bar, W, nl.kind)


def barrier_domination(state: MaximalState) -> float:
    """max over wedge nodes of v - W (should be <= 0)."""
    return float(np.max(state.v.values - state.barrier_values))


def maximality_check(maximal: MaximalState, candidate) -> dict:
    """Minimum over the closed wedge of (maximal - candidate)."""
    v = candidate.v if hasattr(candidate, "v") else candidate
    g = maximal.v.grid
    if v.grid != g:
        raise PreconditionError("candidate lives on a different grid")
    _, inside = region_masks(g, "T_R_wedge")
    gap = np.where(inside[..., None], maximal.v.values - v.values, np.inf)
    idx = np.unravel_index(int(np.argmin(gap)), gap.shape)
    return {"min_gap": float(gap[idx]),
            "location": (float(g.s[idx[0]]), float(g.t[idx[1]]), float(g.lam[idx[2]]))}


def nested_limit(nl: Nonlinearity, m: int, R_list, L: float, h: float = 0.5, r_compare: float = 5.0,
                 tol: float = 1e-8):
    """Maximal states on growing boxes and the sup-difference on a common sub-box.

    Returns ``(state_at_largest_R, table)`` with rows (R_prev, R, r_compare,
    sup_diff) over the sub-box [0, r]^2 x [0, min(r, L)].
    """
    R_list = list(R_list)
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise PreconditionError("R_list must be increasing")
    states, table = [], []
    for R in R_list:
        states.append(monotone_iterate(nl, m, R, L, GridSpec3.cube(m, R, L, h), tol=tol))
    ns = int(round(r_compare / h)) + 1
    nlv = int(round(min(r_compare, L) / h)) + 1
    for (R0, s0), (R1, s1) in zip(zip(R_list, states), zip(R_list[1:], states[1:])):
        d = np.abs(s0.v.values[:ns, :ns, :nlv] - s1.v.values[:ns, :ns, :nlv]).max()
        table.append((R0, R1, r_compare, float(d)))
    return states[-1], table
