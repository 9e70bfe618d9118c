"""Saddle solutions by energy minimization in the wedge.

The minimizer lives on the sector {0 <= t < s, s^2 + t^2 < R^2} x [0, L) and
vanishes on the cone, on the sphere s^2 + t^2 = R^2 and on the lid lambda = L.
Since the energy of the extension is minimized by the discrete harmonic
extension of the bottom trace, everything reduces to the trace energy

    E(u) = 1/2 u^T D u + sum_i omega_i G(u_i),

where D is the (mass-weighted) discrete Dirichlet-to-Neumann matrix and
omega the bottom cell masses.  We minimize E over 0 <= u <= 1 by projected
nonlinear Gauss-Seidel (exact 1-D minimization per node) followed by a
projected Newton polish.  Every accepted step lowers E.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, PreconditionError
from .extension import cylinder_apply, lambda_mass, transverse_operator
from .extension import cylinder_solver
from .model import SQRT2, GridSpec3, Nonlinearity, ScalarField


@dataclass(frozen=True, eq=False)
class SaddleState:
    """A wedge field (t <= s) with its provenance."""

    v: ScalarField
    m: int
    nonlinearity: str
    energy_history: np.ndarray
    reflected: bool = False
    R: float = 0.0
    L: float = 0.0
    iterations: int = 0
    free: np.ndarray | None = field(default=None, repr=False)
    el_residual: float = 0.0

    def summary(self) -> dict:
        vals = self.v.values
        return {"m": self.m, "R": self.R, "L": self.L,
                "energy": float(self.energy_history[-1]) if len(self.energy_history) else float("nan"),
                "min": float(vals.min()), "max": float(vals.max()), "iterations": self.iterations}


# --------------------------------------------------------------------------
# regions and energy


def cylinder_region(grid: GridSpec3, S: float, lam_extent: float, wedge: bool = False) -> np.ndarray:
    """Node mask of {s^2 + t^2 <= S^2, lambda <= lam_extent} (and t <= s if ``wedge``)."""
    if S > grid.s_max * (1 + 1e-12) or S > grid.t_max * (1 + 1e-12) \
            or lam_extent > grid.lambda_max * (1 + 1e-12):
        raise DomainError(f"region S={S}, lambda={lam_extent} exceeds the grid")
    S3, T3, L3 = grid.mesh()
    mask = (S3**2 + T3**2 <= S**2 * (1 + 1e-12)) & (L3 <= lam_extent * (1 + 1e-12))
    if wedge:
        mask &= T3 <= S3
    return mask


def discrete_energy(v: ScalarField, m: int | None, region, nl: Nonlinearity) -> float:
    """Dirichlet plus potential energy of ``v`` on a node region.

    ``region`` is a boolean node mask (see :func:`cylinder_region`) or the
    string ``"box"``.  Edges count when both end nodes lie in the region;
    bottom nodes in the region contribute (cell mass) x G(v).  The weight
    s^{m-1} t^{m-1} enters through the finite-volume coefficients.
    """
    g = v.grid
    if m is not None and m != g.m:
        raise PreconditionError("m does not match the grid")
    if isinstance(region, str):
        if region != "box":
            raise DomainError(f"unknown region '{region}'")
        mask = np.ones(g.shape, bool)
    else:
        mask = np.asarray(region, bool)
        if mask.shape != g.shape:
            raise DomainError("region mask does not match the grid")
    _, mass, cs, ct = transverse_operator(g)
    mass = mass.reshape(g.ns, g.nt)
    mlam = lambda_mass(g.nl, g.h_lambda)
    x = v.values
    e = 0.0
    ds = np.diff(x, axis=0)
    ms = mask[1:] & mask[:-1]
    e += 0.5 * np.sum(np.where(ms, cs[:, :, None] * mlam[None, None, :] * ds**2, 0.0))
    dt = np.diff(x, axis=1)
    mt = mask[:, 1:] & mask[:, :-1]
    e += 0.5 * np.sum(np.where(mt, ct[:, :, None] * mlam[None, None, :] * dt**2, 0.0))
    dl = np.diff(x, axis=2)
    ml = mask[:, :, 1:] & mask[:, :, :-1]
    e += 0.5 * np.sum(np.where(ml, mass[:, :, None] / g.h_lambda * dl**2, 0.0))
    b = mask[:, :, 0]
    e += float(np.sum(mass[b] * nl.G(x[:, :, 0][b])))
    return float(e)


# --------------------------------------------------------------------------
# minimization


def sector_mask(grid: GridSpec3, R: float) -> np.ndarray:
    """Free transverse nodes of the minimization: 0 <= t < s, s^2 + t^2 < R^2."""
    i = np.arange(grid.ns)[:, None]
    j = np.arange(grid.nt)[None, :]
    s, t = i * grid.h_s, j * grid.h_t
    return (j < i) & (s**2 + t**2 < R**2 * (1 - 1e-12))


def _gs_sweep(u, Du, D, diagD, omega, nl, fmax):
    """One projected Gauss-Seidel sweep with exact nodal minimization."""
    for i in range(u.size):
        dii, w = diagD[i], omega[i]
        c = Du[i] - dii * u[i]
        # phi'(x) = dii x + c - w f(x); convex on [0, 1] when dii > w sup f'
        if dii > w * fmax:
            lo, hi = 0.0, 1.0
            if c - w * float(nl.f(0.0)) >= 0:
                x = 0.0
            elif dii + c - w * float(nl.f(1.0)) <= 0:
                x = 1.0
            else:
                x = min(max(u[i], 0.0), 1.0)
                for _ in range(60):
                    gx = dii * x + c - w * float(nl.f(x))
                    if gx > 0:
                        hi = x
                    else:
                        lo = x
                    hx = dii - w * float(nl.f_prime(x))
                    xn = x - gx / hx
                    if not (lo < xn < hi):
                        xn = 0.5 * (lo + hi)
                    if abs(xn - x) < 1e-15:
                        x = xn
                        break
                    x = xn
        else:
            xs = np.linspace(0.0, 1.0, 201)
            phi = 0.5 * dii * xs**2 + c * xs + w * nl.G(xs)
            x = float(xs[int(np.argmin(phi))])
        d = x - u[i]
        if d != 0.0:
            u[i] = x
            Du += D[:, i] * d


def _energy(u, D, omega, nl, const):
    return 0.5 * u @ (D @ u) + float(omega @ nl.G(u)) + const


def minimize_energy(nl: Nonlinearity, m: int, R: float, L: float, grid: GridSpec3 | None = None,
                    h: float = 0.5, tol: float = 1e-10, max_sweeps: int = 400, gs_tol: float = 1e-7,
                    max_newton: int = 100) -> SaddleState:
    """Minimize the discrete energy on the sector of radius R and height L.

    ``grid`` may be taller than L (levels above L are zero).  L is rounded to
    the nearest lambda level.  ``tol`` bounds the final projected gradient,
    normalized by cell mass (the discrete Euler-Lagrange residual).
    """
    nl.require("odd", "G_double_well")
    if grid is None:
        grid = GridSpec3.cube(m, R, max(2, round(L / h)) * h, h)
    if grid.m != m or not grid.is_square or grid.s_max < R * (1 - 1e-12):
        raise PreconditionError("grid must be a square box of the given m covering radius R")
    n_lvl = int(round(L / grid.h_lambda)) + 1
    if n_lvl < 3 or n_lvl > grid.nl:
        raise PreconditionError("height L must span at least 2 levels and fit in the grid")
    L_eff = (n_lvl - 1) * grid.h_lambda

    free2 = sector_mask(grid, R)
    solver = cylinder_solver(grid, "T_R_wedge", "dirichlet", free=free2, n_levels=n_lvl)
    D = solver.dtn_matrix(0.0)
    omega = solver.mass
    diagD = np.diag(D).copy()
    fmax = float(np.max(nl.f_prime(np.linspace(0, 1, 1001))))

    # bottom wedge nodes outside the free set hold v = 0
    _, mass_all, _, _ = transverse_operator(grid)
    i = np.arange(grid.ns)[:, None]
    j = np.arange(grid.nt)[None, :]
    wedge = (j <= i).ravel()
    const = float(np.sum(mass_all[wedge & ~free2.ravel()]) * nl.G(0.0))

    S, T = np.meshgrid(grid.s, grid.t, indexing="ij")
    u = np.minimum(1.0, (S - T) / SQRT2)[free2].astype(float)
    Du = D @ u
    hist = [_energy(u, D, omega, nl, const)]

    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        _gs_sweep(u, Du, D, diagD, omega, nl, fmax)
        Du = D @ u  # refresh to avoid drift
        hist.append(_energy(u, D, omega, nl, const))
        if hist[-2] - hist[-1] < gs_tol * max(1.0, abs(hist[-1])):
            break

    # projected Newton polish
    res = np.inf
    for _ in range(max_newton):
        grad = Du - omega * nl.f(u)
        at0 = (u <= 0.0) & (grad >= 0)
        at1 = (u >= 1.0) & (grad <= 0)
        act = at0 | at1
        pg = np.where(act, 0.0, grad) / omega
        res = float(np.max(np.abs(pg))) if pg.size else 0.0
        if res < tol:
            break
        F = ~act
        H = D[np.ix_(F, F)] - np.diag(omega[F] * nl.f_prime(u[F]))
        try:
            step = np.linalg.solve(H, -grad[F])
            if grad[F] @ step >= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = -grad[F] / (diagD[F] + omega[F] * (1 + abs(fmax)))
        e0 = hist[-1]
        tstep = 1.0
        accepted = False
        while tstep > 1e-12:
            un = u.copy()
            un[F] = np.clip(u[F] + tstep * step, 0.0, 1.0)
            en = _energy(un, D, omega, nl, const)
            if en <= e0 - 1e-4 * tstep * abs(grad[F] @ step) or (en <= e0 and tstep < 1e-6):
                accepted = True
                break
            tstep *= 0.5
        if not accepted:
            break
        u = un
        Du = D @ u
        hist.append(en)
    if res >= tol:
        grad = Du - omega * nl.f(u)
        act = ((u <= 0) & (grad >= 0)) | ((u >= 1) & (grad <= 0))
        res = float(np.max(np.abs(np.where(act, 0.0, grad) / omega)))
        if res >= tol:
            raise ConvergenceError(f"energy descent stalled, Euler-Lagrange residual {res:.3e}", hist)

    field_ = solver.solve(bottom_dirichlet=u)
    full = np.zeros(grid.shape)
    full[:, :, :n_lvl] = field_.reshape(grid.ns, grid.nt, n_lvl)
    return SaddleState(ScalarField(grid, full), m, nl.kind, np.array(hist), False, R, L_eff,
                       sweeps, free2, res)


# --------------------------------------------------------------------------
# reflection


def odd_reflect(state) -> ScalarField:
    """Full-box field v(s, t) = -v(t, s) built from the wedge part t <= s."""
    if isinstance(state, SaddleState):
        if state.reflected:
            raise PreconditionError("state is already reflected")
        v = state.v
    else:
        v = getattr(state, "v", state)
    g = v.grid
    if not g.is_square or abs(g.h_s - g.h_t) > 1e-12 * g.h_s:
        raise PreconditionError("odd reflection needs a square grid with h_s = h_t")
    w = wedge_part(v).values
    full = w - np.transpose(w, (1, 0, 2))
    return ScalarField(g, full)


def wedge_part(v: ScalarField) -> ScalarField:
    """Values on t < s, zero elsewhere (including the cone)."""
    g = v.grid
    i = np.arange(g.ns)[:, None]
    j = np.arange(g.nt)[None, :]
    return ScalarField(g, np.where((j < i)[..., None], v.values, 0.0))


def reflected_state(state: SaddleState) -> SaddleState:
    return SaddleState(odd_reflect(state), state.m, state.nonlinearity, state.energy_history, True,
                       state.R, state.L, state.iterations, state.free, state.el_residual)


# --------------------------------------------------------------------------
# comparison candidate of the energy bound


def comparison_candidate(v_ref: ScalarField, S: float, gamma: float = 0.75, beta: float = 0.6) -> ScalarField:
    """Blend of min{1, (s-t)/sqrt2} into ``v_ref`` near the origin.

    g = eta(r) min{1, (s-t)/sqrt2} + (1 - eta(r)) v_ref with eta = 1 on
    r <= S-1, 0 on r >= S, linear in between; then w = xi g + (1 - xi) v_ref
    with xi = 1 up to S^gamma - S^beta, 0 from S^gamma, logarithmic between.
    Values on t > s are left as in ``v_ref``.
    """
    if not (0.5 <= beta < gamma < 1):
        raise PreconditionError("need 1/2 <= beta < gamma < 1")
    g = v_ref.grid
    if not S + 2 < g.s_max:
        raise PreconditionError("need S + 2 < R")
    S3, T3, L3 = g.mesh()
    r = np.hypot(S3, T3)
    eta = np.clip(S - r, 0.0, 1.0)
    dist = np.minimum(1.0, (S3 - T3) / SQRT2)
    gfun = eta * dist + (1 - eta) * v_ref.values
    top, low = S**gamma, S**gamma - S**beta
    with np.errstate(divide="ignore"):
        xi = np.where(L3 <= low, 1.0,
                      np.where(L3 >= top, 0.0,
                               (np.log(top) - np.log(np.maximum(L3, 1e-300))) / (np.log(top) - np.log(low))))
    w = xi * gfun + (1 - xi) * v_ref.values
    w = np.where(T3 <= S3, w, v_ref.values)
    return ScalarField(g, w)


# --------------------------------------------------------------------------
# second variation restricted to cone-vanishing perturbations


def cone_stability_form(state: SaddleState, xi: ScalarField, nl: Nonlinearity, tol: float = 0.0) -> float:
    """Q_v(xi) on the wedge for a perturbation vanishing on the cone.

    ``xi`` must be zero on the cone and outside the minimization domain
    (the sector of radius R below height L).
    """
    g = state.v.grid
    if xi.grid != g:
        raise PreconditionError("xi must live on the state grid")
    x = xi.values
    i = np.arange(g.ns)[:, None]
    j = np.arange(g.nt)[None, :]
    cone = np.broadcast_to((i == j)[..., None], g.shape)
    if np.any(np.abs(x[cone]) > tol):
        raise PreconditionError("xi must vanish on the cone")
    from .stability import quadratic_form
    return quadratic_form(state.v, xi, nl, g.m)
