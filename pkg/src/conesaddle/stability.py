"""Second variation, instability certificates and the weighted Hardy criterion.

The quadratic form of a solution v is

    Q_v(xi) = int s^{m-1} t^{m-1} |grad xi|^2 - int_{lambda=0} s^{m-1} t^{m-1} f'(v) xi^2,

discretized with the same finite-volume coefficients as the energy, so that
Q_v is exactly the Hessian of the discrete energy.  A single xi with Q < 0
certifies instability.  Test functions follow the classical choice
xi = phi(y/a) eta2(lambda) d_z v, with d_z v even in z so that xi does not
vanish on the cone.

In the radial variable rho = y/a the leading part of Q reduces to

    H(phi) = int rho^{2(m-1)} (phi'^2 - 2(m-1) phi^2 / rho^2) d rho,

whose sign is governed by the weighted Hardy constant (2m-3)^2/4: negative
directions exist iff 2(m-1) > (2m-3)^2/4, i.e. n^2 - 10 n + 17 < 0 for n = 2m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError, DomainError, PreconditionError
from .extension import cylinder_apply, lambda_mass, transverse_operator
from .model import SQRT2, GridSpec3, Nonlinearity, ScalarField

CERTIFICATE = "instability_certificate"
INCONCLUSIVE = "inconclusive"


# --------------------------------------------------------------------------
# quadratic form


def _check_outer_faces(xi: ScalarField, tol: float = 0.0) -> None:
    x = xi.values
    faces = [x[-1], x[:, -1], x[:, :, -1]]
    if any(np.any(np.abs(f) > tol) for f in faces):
        raise PreconditionError("xi must vanish on the outer faces s=s_max, t=t_max, lambda=lambda_max")


def quadratic_form(v: ScalarField, xi: ScalarField, nl: Nonlinearity, m: int | None = None) -> float:
    """Discrete Q_v(xi) on the (s, t, lambda) grid."""
    g = v.grid
    if xi.grid != g:
        raise PreconditionError("v and xi must share a grid")
    if m is not None and m != g.m:
        raise PreconditionError("m does not match the grid")
    _check_outer_faces(xi)
    A, mass, _, _ = transverse_operator(g)
    x = xi.values.reshape(-1, g.nl)
    Kx = cylinder_apply(A, mass, g.h_lambda, x)
    dirichlet = float(np.sum(x * Kx))
    fb = nl.f_prime(v.values[:, :, 0].ravel())
    return dirichlet - float(np.sum(mass * fb * x[:, 0] ** 2))


def xi_norm2(xi: ScalarField) -> float:
    """Weighted volume norm sum (cell volume) xi^2."""
    g = xi.grid
    _, mass, _, _ = transverse_operator(g)
    vol = mass.reshape(g.ns, g.nt)[:, :, None] * lambda_mass(g.nl, g.h_lambda)[None, None, :]
    return float(np.sum(vol * xi.values**2))


def _trap_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def quadratic_form_yz(v: ScalarField, xi: ScalarField, nl: Nonlinearity, m: int | None = None) -> float:
    """Q_v(xi) with weight (y^2 - z^2)^{m-1}, gradients in (y, z, lambda).

    Independent quadrature (centered gradients, trapezoid rule).  Since
    y^2 - z^2 = 2 s t and the rotation has unit Jacobian, the result equals
    2^{m-1} times the (s, t) form up to quadrature error.
    """
    g = v.grid
    m = g.m if m is None else m
    _check_outer_faces(xi)
    x = xi.values
    xs = np.gradient(x, g.h_s, axis=0)
    xt = np.gradient(x, g.h_t, axis=1)
    xs[0] = 0.0  # even across the symmetry planes
    xt[:, 0] = 0.0
    xl = np.gradient(x, g.h_lambda, axis=2)
    xy = (xs + xt) / SQRT2
    xz = (xs - xt) / SQRT2
    S, T = np.meshgrid(g.s, g.t, indexing="ij")
    y, z = (S + T) / SQRT2, (S - T) / SQRT2
    wgt = (y**2 - z**2) ** (m - 1)
    ws = _trap_weights(g.ns, g.h_s)
    wt = _trap_weights(g.nt, g.h_t)
    wl = _trap_weights(g.nl, g.h_lambda)
    cell = wgt * ws[:, None] * wt[None, :]
    grad2 = xy**2 + xz**2 + xl**2
    vol = np.sum(cell[:, :, None] * wl[None, None, :] * grad2)
    bot = np.sum(cell * nl.f_prime(v.values[:, :, 0]) * x[:, :, 0] ** 2)
    return float(vol - bot)


def comparison_monotonicity(v: ScalarField, w: ScalarField, nl: Nonlinearity, xi_samples,
                            tol: float = 1e-8) -> dict:
    """Check Q_v(xi) <= Q_w(xi) + tol for fields with |v| <= |w| <= 1."""
    nl.require("f_prime_decreasing")
    vb, wb = np.abs(v.values[:, :, 0]), np.abs(w.values[:, :, 0])
    if np.any(vb > wb + 1e-12) or np.any(wb > 1 + 1e-12):
        raise PreconditionError("need |v| <= |w| <= 1 on the bottom")
    rows = []
    for xi in xi_samples:
        qv = quadratic_form(v, xi, nl)
        qw = quadratic_form(w, xi, nl)
        rows.append((qv, qw))
    rows_arr = np.array(rows).reshape(-1, 2)
    excess = rows_arr[:, 0] - rows_arr[:, 1]
    return {"Q_v": rows_arr[:, 0].tolist(), "Q_w": rows_arr[:, 1].tolist(),
            "max_excess": float(excess.max()) if excess.size else 0.0,
            "holds": bool(np.all(excess <= tol))}


def random_perturbation(grid: GridSpec3, rng: np.random.Generator, support: np.ndarray | None = None,
                        n_bumps: int = 6, width: float | None = None) -> ScalarField:
    """Sum of Gaussian bumps with random centers and signs, cut to ``support``.

    Without ``support`` the field is cut to the nodes off the outer faces.
    """
    if support is None:
        support = np.zeros(grid.shape, bool)
        support[:-1, :-1, :-1] = True
    support = np.asarray(support, bool)
    if support.shape != grid.shape:
        raise PreconditionError("support mask does not match the grid")
    if not np.any(support):
        raise PreconditionError("empty support")
    width = max(grid.s_max, grid.lambda_max) / 6 if width is None else float(width)
    S, T, L = grid.mesh()
    pts = np.argwhere(support)
    out = np.zeros(grid.shape)
    for k in pts[rng.integers(0, len(pts), n_bumps)]:
        c = (grid.s[k[0]], grid.t[k[1]], grid.lam[k[2]])
        r2 = (S - c[0]) ** 2 + (T - c[1]) ** 2 + (L - c[2]) ** 2
        out += rng.normal() * np.exp(-r2 / width**2)
    return ScalarField(grid, np.where(support, out, 0.0))


# --------------------------------------------------------------------------
# test functions


def eta2(lam, N: float):
    """1 on [0, N], 0 beyond N + 1, linear in between."""
    return np.clip(N + 1.0 - np.asarray(lam, dtype=float), 0.0, 1.0)


def sin_bump(rho1: float, rho2: float) -> Callable:
    def phi(rho):
        rho = np.asarray(rho, dtype=float)
        out = np.sin(np.pi * (rho - rho1) / (rho2 - rho1))
        return np.where((rho > rho1) & (rho < rho2), out, 0.0)
    return phi


def log_sine(m: int, rho1: float, rho2: float) -> Callable:
    """Continuous minimizer of the Hardy quotient on [rho1, rho2]."""
    ell = np.log(rho2 / rho1)

    def phi(rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (rho / rho1) ** (-(2 * m - 3) / 2) * np.sin(np.pi * np.log(rho / rho1) / ell)
        return np.where((rho > rho1) & (rho < rho2), out, 0.0)
    return phi


def rayleigh_profile(m: int, rho1: float, rho2: float, n: int = 2000) -> Callable:
    """Discrete Hardy-quotient minimizer on [rho1, rho2], linearly interpolated."""
    rho, vec = _hardy_eigenvector(m, rho1, rho2, n)
    vec = vec / np.max(np.abs(vec))
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec

    def phi(r):
        r = np.asarray(r, dtype=float)
        return np.where((r > rho1) & (r < rho2), np.interp(r, rho, vec), 0.0)
    return phi


@dataclass(frozen=True)
class TestFunctionSpec:
    """xi_a = phi(y/a) eta2(lambda) d_z v with phi supported in [rho1, rho2]."""

    a: float
    N: float
    phi: Callable = field(compare=False)
    rho1: float
    rho2: float
    phi_id: str = "custom"

    def __post_init__(self):
        if not (0 < self.rho1 < self.rho2 < np.inf):
            raise PreconditionError("need 0 < rho1 < rho2 < inf")
        if not (self.a > 0 and self.N > 0):
            raise PreconditionError("a and N must be positive")


def dz_field(v: ScalarField) -> np.ndarray:
    """Centered d_z v = (v_s - v_t)/sqrt2 with even ghosts at s = 0 and t = 0."""
    g = v.grid
    x = v.values
    vs = np.zeros_like(x)
    vt = np.zeros_like(x)
    vs[1:-1] = (x[2:] - x[:-2]) / (2 * g.h_s)
    vs[-1] = (x[-1] - x[-2]) / g.h_s
    vt[:, 1:-1] = (x[:, 2:] - x[:, :-2]) / (2 * g.h_t)
    vt[:, -1] = (x[:, -1] - x[:, -2]) / g.h_t
    return (vs - vt) / SQRT2


def build_test_function(vbar: ScalarField, spec: TestFunctionSpec, m: int | None = None) -> ScalarField:
    """Nodewise phi(y/a) eta2(lambda) d_z vbar on the full (reflected) box."""
    g = vbar.grid
    if m is not None and m != g.m:
        raise PreconditionError("m does not match the grid")
    y_need = spec.a * spec.rho2
    lam_need = spec.N + 1
    if not (y_need < g.s_max / SQRT2 and lam_need < g.lambda_max):
        raise DomainError(
            f"test function support needs s_max > {y_need * SQRT2:.6g} and lambda_max > {lam_need:.6g}; "
            f"grid has s_max={g.s_max}, lambda_max={g.lambda_max}")
    S, T, L = g.mesh()
    y = (S + T) / SQRT2
    xi = spec.phi(y / spec.a) * eta2(L, spec.N) * dz_field(vbar)
    return ScalarField(g, xi)


@dataclass(frozen=True)
class StabilityReport:
    Q: float
    Q_scaled: float
    norm2: float
    params: dict
    verdict: str
    margin: float
    table: list = field(default_factory=list, compare=False)

    def as_dict(self) -> dict:
        return {"Q": self.Q, "Q_scaled": self.Q_scaled, "norm2": self.norm2, "params": self.params,
                "verdict": self.verdict, "margin": self.margin}


def instability_search(vbar: ScalarField, nl: Nonlinearity, m: int, a_list, N_list, phi_family,
                       margin: float = 1e-4) -> StabilityReport:
    """Evaluate Q on xi_a over (a, N, phi) and keep the most negative scaled value.

    ``phi_family`` is a list of ``(phi_id, phi, rho1, rho2)``.  The verdict is
    a certificate when the best xi has Q < -margin * ||xi||^2.
    """
    if m not in (2, 3, 4):
        raise PreconditionError("instability search covers m in {2, 3, 4}")
    if vbar.grid.m != m:
        raise PreconditionError("m does not match the grid")
    a_list, N_list, phi_family = list(a_list), list(N_list), list(phi_family)
    if not (a_list and N_list and phi_family):
        raise PreconditionError("parameter lists must be nonempty")
    table = []
    best = None
    for a in sorted(a_list):
        for N in sorted(N_list):
            for pid, phi, r1, r2 in sorted(phi_family, key=lambda p: p[0]):
                spec = TestFunctionSpec(a, N, phi, r1, r2, pid)
                xi = build_test_function(vbar, spec, m)
                q = quadratic_form(vbar, xi, nl, m)
                n2 = xi_norm2(xi)
                qs = q / (a ** (2 * m - 3) * N)
                row = {"a": a, "N": N, "phi_id": pid, "Q": q, "Q_scaled": qs, "norm2": n2,
                       "Q_rel": q / n2 if n2 > 0 else 0.0}
                table.append(row)
                if best is None or row["Q_rel"] < best["Q_rel"]:
                    best = row
    verdict = CERTIFICATE if best["Q"] < -margin * best["norm2"] else INCONCLUSIVE
    params = {k: best[k] for k in ("a", "N", "phi_id")}
    return StabilityReport(best["Q"], best["Q_scaled"], best["norm2"], params, verdict, margin, table)


# --------------------------------------------------------------------------
# Hardy quotient


def hardy_integral(m: int, rho, phi) -> float:
    """Trapezoid value of int rho^{2(m-1)} (phi'^2 - 2(m-1) phi^2/rho^2) d rho."""
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if rho.shape != phi.shape or rho.ndim != 1 or rho.size < 3:
        raise PreconditionError("rho and phi must be matching 1-D samples")
    if rho[0] <= 0 or np.any(np.diff(rho) <= 0):
        raise PreconditionError("phi must be sampled on an increasing grid in (0, inf)")
    dphi = np.gradient(phi, rho, edge_order=2)
    integrand = rho ** (2 * (m - 1)) * (dphi**2 - 2 * (m - 1) * phi**2 / rho**2)
    return float(np.trapezoid(integrand, rho))


def _hardy_pencil(m: int, rho_min: float, rho_max: float, n: int):
    """Stiffness (tridiagonal) and lumped mass of the quotient on log-spaced nodes.

    Interior unknowns only (phi vanishes at both ends).
    """
    rho = np.geomspace(rho_min, rho_max, n)
    d = np.diff(rho)
    rm = 0.5 * (rho[1:] + rho[:-1])
    k = rm ** (2 * m - 2) / d
    diag = k[:-1] + k[1:]
    off = -k[1:-1]
    mass = rho[1:-1] ** (2 * m - 4) * 0.5 * (d[:-1] + d[1:])
    return rho, diag, off, mass


def _hardy_eigenvector(m, rho1, rho2, n):
    rho, diag, off, mass = _hardy_pencil(m, rho1, rho2, n)
    s = 1 / np.sqrt(mass)
    w, vec = sla.eigh_tridiagonal(diag * s * s, off * s[:-1] * s[1:], select="i", select_range=(0, 0))
    full = np.zeros(n)
    full[1:-1] = vec[:, 0] * s
    return rho, full


def hardy_rayleigh_min(m: int, rho_min: float, rho_max: float, n: int = 4000,
                       tol: float = 1e-13, max_iter: int = 10000) -> float:
    """Smallest value of the discrete quotient int rho^{2(m-1)} phi'^2 / int rho^{2m-4} phi^2.

    Shifted inverse iteration on the tridiagonal pencil; the shift is 90% of
    the Hardy constant (2m-3)^2/4, which lies below the spectrum.
    """
    if not (0 < rho_min < rho_max):
        raise PreconditionError("need 0 < rho_min < rho_max")
    if n < 4:
        raise PreconditionError("need at least 4 nodes")
    _, diag, off, mass = _hardy_pencil(m, rho_min, rho_max, n)
    sigma = 0.9 * (2 * m - 3) ** 2 / 4
    nn = diag.size
    ab = np.zeros((3, nn))
    ab[0, 1:] = off
    ab[1] = diag - sigma * mass
    ab[2, :-1] = off
    x = np.ones(nn)
    lam_old = np.inf
    hist = []
    for _ in range(max_iter):
        y = sla.solve_banded((1, 1), ab, mass * x)
        x = y / np.sqrt(y @ (mass * y))
        Kx = diag * x
        Kx[:-1] += off * x[1:]
        Kx[1:] += off * x[:-1]
        lam = float(x @ Kx)
        hist.append(lam)
        if abs(lam - lam_old) < tol * max(1.0, abs(lam)):
            return lam
        lam_old = lam
    raise ConvergenceError("inverse iteration did not converge", hist)


def dimension_criterion(n: int) -> str:
    """'hardy_nonnegative' iff n^2 - 10 n + 17 >= 0 (n = 2m), else 'negative_direction_exists'."""
    if int(n) != n or n < 2 or n % 2:
        raise PreconditionError("n must be an even integer >= 2")
    m = n // 2
    ok = 2 * (m - 1) <= (2 * m - 3) ** 2 / 4
    assert ok == (n * n - 10 * n + 17 >= 0)
    return "hardy_nonnegative" if ok else "negative_direction_exists"


@dataclass(frozen=True)
class HardyReport:
    n: int
    m: int
    rayleigh_min: float
    potential: float
    criterion: str
    consistent: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def hardy_report(n: int, rho_min: float = 1e-3, rho_max: float = 1e3, nodes: int = 4000) -> HardyReport:
    """Rayleigh minimum against the potential coefficient 2(m-1), and the sign table."""
    crit = dimension_criterion(n)
    m = n // 2
    lam = hardy_rayleigh_min(m, rho_min, rho_max, nodes)
    pot = 2.0 * (m - 1)
    # on a finite interval the minimum exceeds the Hardy constant, so only the
    # nonnegative side can be confirmed directly; negativity needs a wide enough interval
    consistent = (lam >= pot) == (crit == "hardy_nonnegative")
    return HardyReport(n, m, lam, pot, crit, bool(consistent))
