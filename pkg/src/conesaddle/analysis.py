"""Diagnostics on computed saddle fields: monotonicity, asymptotics, gradient decay."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .layer import layer_value
from .model import SQRT2, GridSpec2, GridSpec3, LayerProfile, ScalarField


@dataclass(frozen=True)
class Extremum:
    value: float
    location: tuple

    def as_dict(self) -> dict:
        return {"value": self.value, "location": list(self.location)}


def _centered(x: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centered differences, second-order one-sided at the two ends."""
    return np.gradient(x, h, axis=axis, edge_order=2)


def _centered_even(x: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centered differences with an even ghost at index 0 (derivative 0 there)."""
    d = _centered(x, h, axis)
    idx = [slice(None)] * x.ndim
    idx[axis] = 0
    d[tuple(idx)] = 0.0
    return d


def _is_wedge_only(v: ScalarField) -> bool:
    g = v.grid
    i = np.arange(g.ns)[:, None]
    j = np.arange(g.nt)[None, :]
    upper = (j > i)
    return g.is_square and not np.any(v.values[upper]) and np.any(v.values[~upper])


def _full(v: ScalarField) -> ScalarField:
    """Odd reflection of a wedge-only field; other fields are returned as is."""
    if _is_wedge_only(v):
        w = v.values
        return ScalarField(v.grid, w - np.transpose(w, (1, 0, 2)))
    return v


def _extreme(vals: np.ndarray, mask: np.ndarray, grid: GridSpec3, kind: str) -> Extremum:
    if not np.any(mask):
        return Extremum(float("nan"), ())
    masked = np.where(mask, vals, np.inf if kind == "min" else -np.inf)
    idx = np.unravel_index(int(np.argmin(masked) if kind == "min" else np.argmax(masked)), vals.shape)
    return Extremum(float(vals[idx]), (float(grid.s[idx[0]]), float(grid.t[idx[1]]), float(grid.lam[idx[2]])))


@dataclass(frozen=True)
class MonotonicityReport:
    """Extreme values of signed derivatives over the interior of {s > t}.

    ``ds_min`` should be >= 0, ``dt_max`` <= 0, ``dz_min`` > 0, ``dy_min`` >= 0;
    ``ds_axis`` and ``dt_axis`` are max |d_s v| on s = 0 and max |d_t v| on t = 0
    from the one-sided second-order stencil, taken over the axis window (see
    :func:`monotonicity_report`).
    """

    ds_min: Extremum
    dt_max: Extremum
    dz_min: Extremum
    dy_min: Extremum
    ds_axis: float
    dt_axis: float
    scale: float

    def violations(self) -> dict:
        return {"d_s": max(0.0, -self.ds_min.value), "d_t": max(0.0, self.dt_max.value),
                "d_z": max(0.0, -self.dz_min.value), "d_y": max(0.0, -self.dy_min.value)}

    def passes(self, tol: float = 1e-8) -> bool:
        v = self.violations()
        t = tol * max(self.scale, 1e-300)
        return v["d_s"] <= t and v["d_t"] <= t and v["d_y"] <= t and self.dz_min.value > 0

    def as_dict(self) -> dict:
        return {"ds_min": self.ds_min.as_dict(), "dt_max": self.dt_max.as_dict(),
                "dz_min": self.dz_min.as_dict(), "dy_min": self.dy_min.as_dict(),
                "ds_axis": self.ds_axis, "dt_axis": self.dt_axis, "scale": self.scale}


def monotonicity_report(v: ScalarField, m: int | None = None, axis_r_min: float = 1.0,
                        axis_lam_fraction: float = 0.5) -> MonotonicityReport:
    """Signed-derivative extremes of ``v`` (wedge-only fields are reflected first).

    Sign checks use centered differences with even ghosts at s = 0 and t = 0
    over the interior of {t < s} (not on outer faces, not on the top level;
    d_z also away from the origin).

    The axis checks exclude |x| < ``axis_r_min``, where the axis meets the
    cone, and lambda above ``axis_lam_fraction`` times the height, where
    boundary data that is not even across the axis may be imposed.
    """
    g = v.grid
    w = _full(v)
    x = w.values
    vs = _centered_even(x, g.h_s, 0)
    vt = _centered_even(x, g.h_t, 1)
    vz = (vs - vt) / SQRT2
    vy = (vs + vt) / SQRT2
    i = np.arange(g.ns)[:, None, None]
    j = np.arange(g.nt)[None, :, None]
    k = np.arange(g.nl)[None, None, :]
    interior = (j < i) & (i < g.ns - 1) & (j < g.nt - 1) & (k < g.nl - 1)
    interior = np.broadcast_to(interior, g.shape)
    off_origin = interior & np.broadcast_to(~((i == 0) & (j == 0)), g.shape)

    kmax = int(np.floor(axis_lam_fraction * (g.nl - 1)))
    ds_axis = dt_axis = 0.0
    if g.ns > 2 and g.nt > 2:
        one_s = (-3 * x[0] + 4 * x[1] - x[2]) / (2 * g.h_s)      # (nt, nl)
        one_t = (-3 * x[:, 0] + 4 * x[:, 1] - x[:, 2]) / (2 * g.h_t)  # (ns, nl)
        win_t = g.t >= axis_r_min
        win_s = g.s >= axis_r_min
        win_t[-1] = False
        win_s[-1] = False
        if np.any(win_t):
            ds_axis = float(np.max(np.abs(one_s[win_t, : kmax + 1])))
        if np.any(win_s):
            dt_axis = float(np.max(np.abs(one_t[win_s, : kmax + 1])))
    return MonotonicityReport(
        _extreme(vs, interior, g, "min"), _extreme(vt, interior, g, "max"),
        _extreme(vz, off_origin, g, "min"), _extreme(vy, interior, g, "min"),
        ds_axis, dt_axis, float(np.max(np.abs(x))))


# --------------------------------------------------------------------------
# asymptotics


def asymptotic_report(v: ScalarField, layer: LayerProfile, radii, band: float | None = None) -> list[dict]:
    """Sup of |u - u0(z)| and |grad u - grad U| on bottom annuli R <= |x| <= R + band.

    U(s, t) = u0((s - t)/sqrt2) is sampled with :func:`layer_value` on the
    grid and differentiated with the same centered stencil as u.
    """
    g = v.grid
    band = 2 * g.h_s if band is None else float(band)
    w = _full(v)
    u = w.values[:, :, 0]
    S, T = np.meshgrid(g.s, g.t, indexing="ij")
    U = layer_value(layer, (S - T) / SQRT2, 0.0)
    du_s, du_t = _centered(u, g.h_s, 0), _centered(u, g.h_t, 1)
    dU_s, dU_t = _centered(U, g.h_s, 0), _centered(U, g.h_t, 1)
    gdev = np.hypot(du_s - dU_s, du_t - dU_t)
    r = np.hypot(S, T)
    inner = np.zeros_like(r, dtype=bool)
    inner[:-1, :-1] = True
    rows = []
    for R in radii:
        if R + band > min(g.s_max, g.t_max) * (1 + 1e-12):
            raise DomainError(f"annulus [{R}, {R + band}] exceeds the grid")
        ann = (r >= R - 1e-12) & (r <= R + band + 1e-12)
        if not np.any(ann):
            raise DomainError(f"no nodes in annulus at R={R}")
        rows.append({"R": float(R), "sup_u_dev": float(np.max(np.abs(u - U)[ann])),
                     "sup_grad_dev": float(np.max(gdev[ann & inner]))})
    return rows


# --------------------------------------------------------------------------
# gradient decay in lambda


@dataclass(frozen=True)
class GradientProfile:
    lam: np.ndarray
    sup_grad: np.ndarray
    C: float
    ratio: np.ndarray
    C_at_zero: float
    nonincreasing: bool
    non_decaying: bool

    def bound_from_zero_holds(self, rtol: float = 1e-12) -> bool:
        """sup|grad v|(lambda) <= C0/(1 + lambda) with C0 = sup|grad v|(0)."""
        return bool(np.all(self.sup_grad * (1 + self.lam) <= self.C_at_zero * (1 + rtol)))


def gradient_decay_check(v: ScalarField) -> GradientProfile:
    """Per-level sup of |grad v| and the fitted constant in sup <= C/(1 + lambda)."""
    g = v.grid
    x = v.values
    if isinstance(g, GridSpec2):
        comps = [_centered(x, g.h_x, 0), _centered(x, g.h_lambda, 1)]
    else:
        comps = [_centered(x, g.h_s, 0), _centered(x, g.h_t, 1), _centered(x, g.h_lambda, 2)]
    mag = np.sqrt(sum(c**2 for c in comps))
    lam = g.lam
    sup = mag.reshape(-1, g.nl).max(axis=0)
    prod = sup * (1 + lam)
    C = float(prod.max())
    ratio = prod / C if C > 0 else np.zeros_like(prod)
    nonincreasing = bool(np.all(np.diff(sup) <= 1e-12 * max(sup.max(), 1e-300)))
    non_decaying = bool(sup[-1] > 0.5 * sup[0]) if sup[0] > 0 else False
    return GradientProfile(lam, sup, C, ratio, float(sup[0]), nonincreasing, non_decaying)
