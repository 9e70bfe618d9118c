"""Weighted Laplace problems on truncated cylinders H x [0, Lambda].

Discretization
--------------
Finite volumes on the node grid.  The weight s^{m-1} t^{m-1} of the reduced
equation is integrated over dual cells: an edge between two nodes gets the
flux coefficient

    (weight at the edge midpoint in the normal direction)
    x (exact integral of the weight over the dual face) / h,

and a node gets the mass of its dual cell.  The result is a symmetric
M-matrix, so discrete maximum and comparison principles hold exactly, and
its quadratic form is the discrete Dirichlet energy used by the saddle module.
The symmetry planes s = 0 and t = 0 get the natural (Neumann) closure.

In lambda the cylinder operator factors as

    K = A_T (x) M_lam + M_T (x) (T_lam + a e_0 e_0^T),

with A_T, M_T the transverse stiffness and (diagonal) mass, T_lam the 1-D
stiffness and M_lam the lumped 1-D mass.  :class:`CylinderSolver`
diagonalizes the transverse pencil once (dense ``eigh``) and then solves one
tridiagonal system per transverse mode.  Solves are direct and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConvergenceError, PreconditionError, ValidationError
from .model import GridSpec2, GridSpec3, Nonlinearity, ScalarField

# --------------------------------------------------------------------------
# finite-volume building blocks


def axis_weights(n: int, h: float, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Dual-cell integrals and edge-midpoint values of r^p on nodes r_k = k h.

    Cells are clipped to [0, (n-1) h]; the first and last cells are halves.
    """
    r = h * np.arange(n)
    lo = np.clip(r - h / 2, 0.0, None)
    hi = np.minimum(r + h / 2, r[-1])
    cell = (hi ** (p + 1) - lo ** (p + 1)) / (p + 1)
    mid = ((r[:-1] + r[1:]) / 2) ** p
    return cell, mid


def lambda_mass(nl: int, h: float) -> np.ndarray:
    w = np.full(nl, h)
    w[0] = w[-1] = h / 2
    return w


def transverse_operator(grid: GridSpec3) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray, np.ndarray]:
    """Weighted 2-D stiffness and mass on the (s, t) cross-section.

    Returns ``(A, mass, coef_s, coef_t)``; node (i, j) has flat index i*nt + j,
    ``coef_s[i, j]`` couples (i, j)-(i+1, j) and ``coef_t[i, j]`` couples
    (i, j)-(i, j+1).
    """
    p = grid.m - 1
    ns, nt, h = grid.ns, grid.nt, grid.h_s
    cs, ms = axis_weights(ns, h, p)
    ct, mt = axis_weights(nt, grid.h_t, p)
    coef_s = np.outer(ms, ct) / h
    coef_t = np.outer(cs, mt) / grid.h_t
    mass = np.outer(cs, ct).ravel()
    A = _graph_laplacian((ns, nt), coef_s, coef_t)
    return A, mass, coef_s, coef_t


def _graph_laplacian(shape, coef_s, coef_t) -> sp.csr_matrix:
    ns, nt = shape
    idx = np.arange(ns * nt).reshape(ns, nt)
    rows = [idx[:-1, :].ravel(), idx[:, :-1].ravel()]
    cols = [idx[1:, :].ravel(), idx[:, 1:].ravel()]
    w = np.concatenate([coef_s.ravel(), coef_t.ravel()])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    n = ns * nt
    off = sp.coo_matrix((-w, (r, c)), shape=(n, n))
    off = off + off.T
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def line_operator(n: int, h: float) -> tuple[sp.csr_matrix, np.ndarray]:
    """Unweighted 1-D stiffness and lumped mass on nodes k h, k = 0..n-1."""
    w = np.full(n - 1, 1.0 / h)
    main = np.zeros(n)
    main[:-1] += w
    main[1:] += w
    A = sp.diags([main, -w, -w], [0, 1, -1]).tocsr()
    return A, lambda_mass(n, h)


def _thomas(diag: np.ndarray, off: float, rhs: np.ndarray) -> np.ndarray:
    """Solve many tridiagonal systems with constant off-diagonal ``off``.

    ``diag`` and ``rhs`` have shape (n_systems, n_levels).
    """
    n = diag.shape[1]
    cp = np.empty_like(diag)
    dp = np.empty(np.broadcast_shapes(diag.shape, rhs.shape))
    denom = diag[:, 0]
    cp[:, 0] = off / denom
    dp[:, 0] = rhs[:, 0] / denom
    for k in range(1, n):
        denom = diag[:, k] - off * cp[:, k - 1]
        cp[:, k] = off / denom
        dp[:, k] = (rhs[:, k] - off * dp[:, k - 1]) / denom
    x = np.empty_like(dp)
    x[:, -1] = dp[:, -1]
    for k in range(n - 2, -1, -1):
        x[:, k] = dp[:, k] - cp[:, k] * x[:, k + 1]
    return x


class CylinderSolver:
    """Direct solver for K v = b on a cylinder with a fixed transverse section.

    Parameters
    ----------
    A, mass
        Transverse stiffness (sparse, all nodes) and lumped mass.
    free
        Boolean mask of transverse nodes carrying unknowns; the others get
        Dirichlet data (lateral boundary).
    h_lambda, n_levels
        Lambda spacing and number of levels (level 0 is the bottom).
    top
        ``"neumann"`` or ``"dirichlet"`` at the last level.
    """

    def __init__(self, A, mass, free, h_lambda: float, n_levels: int, top: str = "neumann"):
        if top not in ("neumann", "dirichlet"):
            raise PreconditionError("top must be 'neumann' or 'dirichlet'")
        if n_levels < 3:
            raise PreconditionError("need at least 3 lambda levels")
        A = sp.csr_matrix(A)
        self.free = np.asarray(free, dtype=bool)
        self.fixed = ~self.free
        self.mass_all = np.asarray(mass, dtype=float)
        self.mass = self.mass_all[self.free]
        self.h = float(h_lambda)
        self.nl = int(n_levels)
        self.top = top
        self.n_all = A.shape[0]
        self.A_fd = A[self.free][:, self.fixed].tocsr()
        Aff = A[self.free][:, self.free].toarray()
        isq = 1.0 / np.sqrt(self.mass)
        B = Aff * isq[:, None] * isq[None, :]
        nu, U = sla.eigh(B, overwrite_a=True, check_finite=False)
        self.nu = np.clip(nu, 0.0, None)
        self.Phi = U * isq[:, None]  # M-orthonormal modes
        self.mlam = lambda_mass(self.nl, self.h)
        tdiag = np.full(self.nl, 2.0 / self.h)
        tdiag[0] = tdiag[-1] = 1.0 / self.h
        self.tdiag = tdiag
        self._resp: dict[float, np.ndarray] = {}

    @property
    def n_free(self) -> int:
        return int(self.free.sum())

    # -- modal helpers -----------------------------------------------------
    def to_modes(self, vec: np.ndarray) -> np.ndarray:
        """Coefficients of a free-node vector (or stack of columns)."""
        return self.Phi.T @ (self.mass[:, None] * vec if vec.ndim == 2 else self.mass * vec)

    def from_modes(self, coef: np.ndarray) -> np.ndarray:
        return self.Phi @ coef

    def _levels(self, bottom_dirichlet: bool) -> slice:
        lo = 1 if bottom_dirichlet else 0
        hi = self.nl - 1 if self.top == "dirichlet" else self.nl
        return slice(lo, hi)

    def _diag(self, a: float, lv: slice) -> np.ndarray:
        d = self.nu[:, None] * self.mlam[None, lv] + self.tdiag[None, lv]
        if lv.start == 0:
            d[:, 0] += a
        return d

    def robin_response(self, a: float) -> np.ndarray:
        """Per-mode bottom value for unit Robin forcing (the inverse DtN symbol)."""
        a = float(a)
        if a not in self._resp:
            lv = self._levels(False)
            d = self._diag(a, lv)
            e0 = np.zeros((1, d.shape[1]))
            e0[0, 0] = 1.0
            r = _thomas(d, -1.0 / self.h, e0)[:, 0]
            self._resp[a] = r
        return self._resp[a]

    def robin_trace(self, a: float, rhs: np.ndarray) -> np.ndarray:
        """Bottom trace for Robin forcing ``rhs`` with zero lateral and top data."""
        return self.Phi @ (self.robin_response(a) * (self.Phi.T @ (self.mass * rhs)))

    def dtn_matrix(self, a: float = 0.0) -> np.ndarray:
        """Dense mass-weighted Dirichlet-to-Neumann matrix on free bottom nodes.

        ``D u`` is the outward flux vector (already multiplied by cell masses)
        of the extension of ``u`` with zero lateral and top data, plus a*M u.
        """
        r = self.robin_response(a)
        if np.any(~np.isfinite(1.0 / r)):
            raise PreconditionError("DtN map is singular for this configuration")
        MP = self.mass[:, None] * self.Phi
        return (MP / r[None, :]) @ MP.T

    # -- general solve -----------------------------------------------------
    def solve(self, *, a: float = 0.0, bottom_rhs=None, bottom_dirichlet=None,
              lateral=None, top_data=None, flux=None) -> np.ndarray:
        """Return the field as an array (n_transverse_all, n_levels).

        ``lateral`` has shape (n_fixed, n_levels); ``top_data`` and the bottom
        arrays are given on free transverse nodes.  ``flux`` (n_free, n_levels)
        is an outward normal derivative times face measure on Neumann faces.
        """
        bd = bottom_dirichlet is not None
        lv = self._levels(bd)
        nf = self.n_free
        b = np.zeros((nf, self.nl))
        if bottom_rhs is not None and not bd:
            b[:, 0] += self.mass * np.asarray(bottom_rhs, dtype=float)
        if lateral is not None:
            lateral = np.asarray(lateral, dtype=float)
            b -= (self.A_fd @ lateral) * self.mlam[None, :]
        if flux is not None:
            b += np.asarray(flux, dtype=float) * self.mlam[None, :]
        if bd:
            b[:, 1] += self.mass * np.asarray(bottom_dirichlet, dtype=float) / self.h
        if self.top == "dirichlet" and top_data is not None:
            b[:, self.nl - 2] += self.mass * np.asarray(top_data, dtype=float) / self.h
        bm = self.Phi.T @ b[:, lv]
        cm = _thomas(self._diag(a if not bd else 0.0, lv), -1.0 / self.h, bm)
        out = np.zeros((self.n_all, self.nl))
        vf = np.zeros((nf, self.nl))
        vf[:, lv] = self.Phi @ cm
        if bd:
            vf[:, 0] = bottom_dirichlet
        if self.top == "dirichlet" and top_data is not None:
            vf[:, -1] = top_data
        out[self.free] = vf
        if lateral is not None:
            out[self.fixed] = lateral
        return out


def cylinder_apply(A: sp.spmatrix, mass: np.ndarray, h_lambda: float, v: np.ndarray,
                   a: float = 0.0) -> np.ndarray:
    """K v for an (n_transverse, n_levels) array, natural closure on every face."""
    nl = v.shape[1]
    mlam = lambda_mass(nl, h_lambda)
    out = (A @ v) * mlam[None, :]
    dv = np.diff(v, axis=1) / h_lambda
    flux = np.zeros_like(v)
    flux[:, :-1] -= dv
    flux[:, 1:] += dv
    out += mass[:, None] * flux
    out[:, 0] += a * mass * v[:, 0]
    return out


# --------------------------------------------------------------------------
# problem description and the public fill operation


@dataclass(frozen=True)
class Robin:
    """Bottom condition -d_lambda v + a v = rhs."""

    a: float
    rhs: object  # scalar, (ns, nt) array, or callable (s, t) -> value


@dataclass(frozen=True)
class NonlinearBottom:
    """Bottom condition -d_lambda v = f(v)."""

    nl: Nonlinearity


@dataclass(frozen=True)
class DirichletTop:
    data: object  # scalar, (ns, nt) array, or callable (s, t) -> value


NEUMANN_ZERO = "neumann_zero"


@dataclass(frozen=True)
class CylinderProblem:
    """A Laplace problem on H x [0, lambda_max] with H the full box or T_R.

    ``lateral_data`` is a scalar, an array of the grid shape, or a callable
    ``(s, t, lam) -> value`` evaluated on lateral nodes.  For ``full_box`` the
    lateral boundary is the outer faces s = s_max, t = t_max; for
    ``T_R_wedge`` it is the cone s = t and the face s = s_max.
    """

    grid: GridSpec3
    region: str = "full_box"
    lateral_data: object = 0.0
    bottom: Robin | NonlinearBottom = Robin(0.0, 0.0)
    top: object = NEUMANN_ZERO

    def __post_init__(self):
        if self.region not in ("full_box", "T_R_wedge"):
            raise PreconditionError(f"unknown region '{self.region}'")
        if self.region == "T_R_wedge" and not self.grid.is_square:
            raise PreconditionError("T_R_wedge needs s_max == t_max")
        if isinstance(self.bottom, Robin) and self.bottom.a < 0:
            raise PreconditionError("Robin coefficient a must be nonnegative")


def region_masks(grid: GridSpec3, region: str) -> tuple[np.ndarray, np.ndarray]:
    """(free, inside) transverse masks of shape (ns, nt)."""
    i = np.arange(grid.ns)[:, None]
    j = np.arange(grid.nt)[None, :]
    if region == "full_box":
        free = (i < grid.ns - 1) & (j < grid.nt - 1)
        inside = np.ones((grid.ns, grid.nt), bool)
    elif region == "T_R_wedge":
        free = (j < i) & (i < grid.ns - 1)
        inside = j <= i
    else:
        raise PreconditionError(f"unknown region '{region}'")
    return free, inside


_SOLVER_CACHE: dict = {}


def cylinder_solver(grid: GridSpec3, region: str, top: str, free=None, n_levels=None) -> CylinderSolver:
    """Cached solver for a grid/region/top combination."""
    nl = grid.nl if n_levels is None else int(n_levels)
    if free is None:
        free = region_masks(grid, region)[0]
        key = (grid, region, top, nl)
    else:
        free = np.asarray(free, bool)
        key = (grid, region, top, nl, free.tobytes())
    if key not in _SOLVER_CACHE:
        if len(_SOLVER_CACHE) > 6:
            _SOLVER_CACHE.clear()
        A, mass, _, _ = transverse_operator(grid)
        _SOLVER_CACHE[key] = CylinderSolver(A, mass, free.ravel(), grid.h_lambda, nl, top)
    return _SOLVER_CACHE[key]


def _evaluate(data, grid: GridSpec3, with_lambda: bool) -> np.ndarray:
    S, T, L = grid.mesh()
    shape = grid.shape if with_lambda else grid.shape[:2]
    if callable(data):
        val = data(S, T, L) if with_lambda else data(S[..., 0], T[..., 0])
        out = np.broadcast_to(np.asarray(val, dtype=float), shape)
    else:
        out = np.broadcast_to(np.asarray(data, dtype=float), shape)
    out = np.array(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValidationError("boundary data must be finite")
    return out


def solve_bottom_newton(solver: CylinderSolver, nl: Nonlinearity, u_lat: np.ndarray, u_init: np.ndarray,
                        a: float, tol: float, max_iter: int = 50) -> tuple[np.ndarray, list[float]]:
    """Newton iteration for the bottom trace of a nonlinear Neumann problem.

    Solves u = u_lat + P_a M (f(u) + a u), where P_a M is the Robin solution
    operator restricted to the bottom and ``u_lat`` the trace produced by the
    lateral and top data alone.
    """
    r = solver.robin_response(a)
    Phi, M = solver.Phi, solver.mass

    def resid(u):
        return u - u_lat - Phi @ (r * (Phi.T @ (M * (nl.f(u) + a * u))))

    PM = (Phi * r[None, :]) @ (Phi.T * M[None, :])
    u = np.array(u_init, dtype=float)
    F = resid(u)
    hist = [float(np.max(np.abs(F)))]
    for _ in range(max_iter):
        if hist[-1] < tol:
            return u, hist
        J = -PM * (nl.f_prime(u) + a)[None, :]
        J[np.diag_indices_from(J)] += 1.0
        du = np.linalg.solve(J, -F)
        step = 1.0
        while True:
            un = u + step * du
            Fn = resid(un)
            if np.max(np.abs(Fn)) < (1 - 1e-4 * step) * hist[-1] or step < 1e-6:
                break
            step *= 0.5
        u, F = un, Fn
        hist.append(float(np.max(np.abs(F))))
    if hist[-1] < tol:
        return u, hist
    raise ConvergenceError(f"bottom Newton stalled at residual {hist[-1]:.3e}", hist)


def harmonic_fill(problem: CylinderProblem, tol: float = 1e-10) -> ScalarField:
    """Solve the cylinder problem; returns the field on the whole grid.

    Nodes outside the region (t > s for ``T_R_wedge``) are set to 0.
    """
    g = problem.grid
    top = "neumann" if problem.top == NEUMANN_ZERO else "dirichlet"
    solver = cylinder_solver(g, problem.region, top)
    free2, inside = region_masks(g, problem.region)
    free = free2.ravel()
    lat_full = _evaluate(problem.lateral_data, g, True).reshape(-1, g.nl)
    lateral = lat_full[~free]
    lateral[~inside.ravel()[~free]] = 0.0
    top_data = None
    if top == "dirichlet":
        top_data = _evaluate(problem.top.data, g, False).ravel()[free]

    bottom = problem.bottom
    if isinstance(bottom, Robin):
        rhs = _evaluate(bottom.rhs, g, False).ravel()[free]
        out = solver.solve(a=bottom.a, bottom_rhs=rhs, lateral=lateral, top_data=top_data)
    else:
        nl = bottom.nl
        a = nl.sup_abs_f_prime() + 0.5
        base = solver.solve(a=a, lateral=lateral, top_data=top_data)
        u_lat = base[free, 0]
        u, _ = solve_bottom_newton(solver, nl, u_lat, u_lat.copy(), a, tol)
        rhs = nl.f(u) + a * u
        out = solver.solve(a=a, bottom_rhs=rhs, lateral=lateral, top_data=top_data)
    out = out.reshape(g.shape)
    out[~inside] = 0.0
    return ScalarField(g, out)


# --------------------------------------------------------------------------
# traces and residuals


def dirichlet_to_neumann(v: ScalarField) -> np.ndarray:
    """-d_lambda v at lambda = 0 by the second-order one-sided stencil."""
    vals = v.values
    if vals.shape[-1] < 3:
        raise PreconditionError("need at least 3 lambda levels")
    h = v.grid.h_lambda
    return (3 * vals[..., 0] - 4 * vals[..., 1] + vals[..., 2]) / (2 * h)


def _second_diff_even(vals: np.ndarray, axis: int, h: float):
    """Centered first and second differences along ``axis``, even ghost at index 0.

    The last index is left at zero (no ghost there).
    """
    v = np.moveaxis(vals, axis, 0)
    d1 = np.zeros_like(v)
    d2 = np.zeros_like(v)
    d1[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    d2[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    d2[0] = 2 * (v[1] - v[0]) / h**2
    return np.moveaxis(d1, 0, axis), np.moveaxis(d2, 0, axis)


def pde_residual(v: ScalarField, m: int | None = None, mask: np.ndarray | None = None) -> ScalarField:
    """Pointwise residual of -(v_ss + v_tt + v_ll) - (m-1)(v_s/s + v_t/t).

    Centered differences; at s = 0 (t = 0) the even ghost gives v_s = 0 and
    v_s/s is replaced by v_ss.  Positive values mean superharmonic.  Only
    interior nodes (not bottom, top, or outer faces) get a value; all others
    are 0.  ``mask`` further restricts the evaluated nodes.
    For a :class:`GridSpec2` field the residual is -(v_xx + v_ll).
    """
    g = v.grid
    vals = v.values
    res = np.zeros_like(vals)
    if isinstance(g, GridSpec2):
        sl = (slice(1, -1), slice(1, -1))
        vxx = (vals[2:, 1:-1] - 2 * vals[1:-1, 1:-1] + vals[:-2, 1:-1]) / g.h_x**2
        vll = (vals[1:-1, 2:] - 2 * vals[1:-1, 1:-1] + vals[1:-1, :-2]) / g.h_lambda**2
        res[sl] = -(vxx + vll)
    else:
        m = g.m if m is None else m
        ds, dss = _second_diff_even(vals, 0, g.h_s)
        dt, dtt = _second_diff_even(vals, 1, g.h_t)
        dll = np.zeros_like(vals)
        dll[:, :, 1:-1] = (vals[:, :, 2:] - 2 * vals[:, :, 1:-1] + vals[:, :, :-2]) / g.h_lambda**2
        s = g.s[:, None, None]
        t = g.t[None, :, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            qs = np.where(s > 0, ds / np.where(s > 0, s, 1.0), dss)
            qt = np.where(t > 0, dt / np.where(t > 0, t, 1.0), dtt)
        full = -(dss + dtt + dll) - (m - 1) * (qs + qt)
        interior = np.zeros(g.shape, bool)
        interior[:-1, :-1, 1:-1] = True
        res[interior] = full[interior]
    if mask is not None:
        res = np.where(mask, res, 0.0)
    return ScalarField(g, res)


def fv_residual(v: ScalarField, nl: Nonlinearity | None = None, a: float = 0.0,
                rhs: np.ndarray | None = None) -> np.ndarray:
    """Finite-volume residual K v - (bottom forcing), divided by node mass.

    This is the discrete equation solved by :func:`harmonic_fill`; at the
    bottom the forcing is f(v) (if ``nl`` is given) or ``rhs``.  Returned in
    the grid shape; boundary rows hold meaningless values and should be
    masked by the caller.
    """
    g = v.grid
    A, mass, _, _ = transverse_operator(g)
    vals = v.values.reshape(-1, g.nl)
    Kv = cylinder_apply(A, mass, g.h_lambda, vals, a)
    bottom = np.zeros(vals.shape[0])
    if nl is not None:
        bottom = bottom + nl.f(vals[:, 0])
    if rhs is not None:
        bottom = bottom + np.asarray(rhs).ravel()
    Kv[:, 0] -= mass * bottom
    vol = mass[:, None] * lambda_mass(g.nl, g.h_lambda)[None, :]
    return (Kv / vol).reshape(g.shape)
