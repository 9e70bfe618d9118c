"""Core types: grids, fields, nonlinearities and cone geometry.

Points of R^{2m} enter the computations only through the two block radii

    s = |(x_1, ..., x_m)|,   t = |(x_{m+1}, ..., x_{2m})|,

and the rotated pair y = (s + t)/sqrt(2), z = (s - t)/sqrt(2).  The Simons
cone is {s = t} = {z = 0}.  Fields live on uniform boxes in (s, t, lambda)
with h_s = h_t, so the cone passes through grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, DomainError, PreconditionError, ValidationError

SQRT2 = np.sqrt(2.0)

# relative slack when checking that an extent is a multiple of a spacing
_GRID_RTOL = 1e-9


def _count_cells(extent: float, h: float, name: str) -> int:
    if not (extent > 0 and h > 0):
        raise DomainError(f"{name}: extent and spacing must be positive")
    q = extent / h
    n = int(round(q))
    if n < 1 or abs(q - n) > _GRID_RTOL * max(1.0, q):
        raise DomainError(f"{name}: extent {extent} is not a multiple of spacing {h}")
    return n


@dataclass(frozen=True)
class GridSpec3:
    """Uniform box [0, s_max] x [0, t_max] x [0, lambda_max] in (s, t, lambda)."""

    m: int
    s_max: float
    t_max: float
    lambda_max: float
    h_s: float
    h_t: float
    h_lambda: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise DomainError("m must be a positive integer")
        if abs(self.h_s - self.h_t) > _GRID_RTOL * self.h_s:
            raise DomainError("h_s must equal h_t so that the cone s=t passes through nodes")
        _count_cells(self.s_max, self.h_s, "s")
        _count_cells(self.t_max, self.h_t, "t")
        _count_cells(self.lambda_max, self.h_lambda, "lambda")

    @classmethod
    def cube(cls, m: int, R: float, lam: float, h: float, h_lambda: float | None = None) -> "GridSpec3":
        return cls(m, R, R, lam, h, h, h if h_lambda is None else h_lambda)

    @property
    def ns(self) -> int:
        return _count_cells(self.s_max, self.h_s, "s") + 1

    @property
    def nt(self) -> int:
        return _count_cells(self.t_max, self.h_t, "t") + 1

    @property
    def nl(self) -> int:
        return _count_cells(self.lambda_max, self.h_lambda, "lambda") + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.ns, self.nt, self.nl)

    @property
    def size(self) -> int:
        return self.ns * self.nt * self.nl

    @property
    def s(self) -> np.ndarray:
        return self.h_s * np.arange(self.ns)

    @property
    def t(self) -> np.ndarray:
        return self.h_t * np.arange(self.nt)

    @property
    def lam(self) -> np.ndarray:
        return self.h_lambda * np.arange(self.nl)

    @property
    def is_square(self) -> bool:
        return self.ns == self.nt

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.s, self.t, self.lam, indexing="ij")

    def refined(self) -> "GridSpec3":
        return GridSpec3(self.m, self.s_max, self.t_max, self.lambda_max,
                         self.h_s / 2, self.h_t / 2, self.h_lambda / 2)


@dataclass(frozen=True)
class GridSpec2:
    """Uniform box [-x_max, x_max] x [0, lambda_max] in (x, lambda)."""

    x_max: float
    lambda_max: float
    h_x: float
    h_lambda: float

    def __post_init__(self):
        _count_cells(self.x_max, self.h_x, "x")
        _count_cells(self.lambda_max, self.h_lambda, "lambda")

    @property
    def n_half(self) -> int:
        """Number of nodes with x >= 0."""
        return _count_cells(self.x_max, self.h_x, "x") + 1

    @property
    def nx(self) -> int:
        return 2 * self.n_half - 1

    @property
    def nl(self) -> int:
        return _count_cells(self.lambda_max, self.h_lambda, "lambda") + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nl)

    @property
    def size(self) -> int:
        return self.nx * self.nl

    @property
    def x(self) -> np.ndarray:
        k = np.arange(-(self.n_half - 1), self.n_half)
        return self.h_x * k

    @property
    def lam(self) -> np.ndarray:
        return self.h_lambda * np.arange(self.nl)

    def refined(self) -> "GridSpec2":
        return GridSpec2(self.x_max, self.lambda_max, self.h_x / 2, self.h_lambda / 2)


Grid = GridSpec2 | GridSpec3


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One finite real value per node of a grid, stored in the grid's shape."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.size != self.grid.size:
            raise DimensionError(f"field has {vals.size} values, grid has {self.grid.size} nodes")
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("field contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def bottom(self) -> np.ndarray:
        return self.values[..., 0]

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)


# --------------------------------------------------------------------------
# coordinates


def st_coordinates(point) -> tuple[float, float]:
    """Block radii (s, t) of a point of R^{2m}."""
    p = np.asarray(point, dtype=float).ravel()
    if p.size == 0 or p.size % 2:
        raise DimensionError(f"expected 2m components, got {p.size}")
    m = p.size // 2
    return float(np.linalg.norm(p[:m])), float(np.linalg.norm(p[m:]))


def _check_nonneg(*vals):
    for v in vals:
        if np.any(np.asarray(v) < 0):
            raise DomainError("s and t must be nonnegative")


def yz_coordinates(s, t):
    """Rotated coordinates y = (s+t)/sqrt2, z = (s-t)/sqrt2."""
    _check_nonneg(s, t)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    y, z = (s + t) / SQRT2, (s - t) / SQRT2
    if y.ndim == 0:
        return float(y), float(z)
    return y, z


def st_from_yz(y, z):
    """Inverse of :func:`yz_coordinates` on {|z| <= y}."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > y + 1e-14 * np.maximum(1.0, np.abs(y))):
        raise DomainError("need |z| <= y")
    s, t = (y + z) / SQRT2, (y - z) / SQRT2
    if s.ndim == 0:
        return float(s), float(t)
    return s, t


def cone_distance(s, t):
    """Euclidean distance |s - t|/sqrt2 from (s, t) to the cone."""
    _check_nonneg(s, t)
    d = np.abs(np.asarray(s, dtype=float) - np.asarray(t, dtype=float)) / SQRT2
    return float(d) if d.ndim == 0 else d


# --------------------------------------------------------------------------
# nonlinearities

_SAMPLE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """A bistable reaction term f with f' and potential G (G' = -f)."""

    kind: str
    f: Callable[[np.ndarray], np.ndarray]
    f_prime: Callable[[np.ndarray], np.ndarray]
    G: Callable[[np.ndarray], np.ndarray]
    odd: bool
    G_double_well: bool
    f_prime_decreasing: bool
    validation: dict = field(default_factory=dict)

    def sup_abs_f_prime(self, n: int = 2001) -> float:
        u = np.linspace(-1.0, 1.0, n)
        return float(np.max(np.abs(self.f_prime(u))))

    def require(self, *flags: str) -> None:
        missing = [fl for fl in flags if not getattr(self, fl)]
        if missing:
            raise PreconditionError(f"nonlinearity '{self.kind}' lacks required properties: {missing}")


def _ac_f(u):
    u = np.asarray(u, dtype=float)
    return u - u**3


def _ac_fp(u):
    return 1.0 - 3.0 * np.asarray(u, dtype=float) ** 2


def _ac_G(u):
    return 0.25 * (1.0 - np.asarray(u, dtype=float) ** 2) ** 2


def _pn_f(u):
    return np.sin(np.pi * np.asarray(u, dtype=float))


def _pn_fp(u):
    return np.pi * np.cos(np.pi * np.asarray(u, dtype=float))


def _pn_G(u):
    return (1.0 + np.cos(np.pi * np.asarray(u, dtype=float))) / np.pi


def _validate(f, fp, G, n_samples: int = 1000, tol: float = _SAMPLE_TOL):
    """Sampled surrogate checks of the structural hypotheses on f and G."""
    u = np.linspace(-1.0, 1.0, n_samples + 2)[1:-1]
    fu = np.asarray(f(u), dtype=float)
    record: dict = {}

    odd_err = float(np.max(np.abs(f(-u) + fu)))
    record["odd_max_error"] = odd_err

    g = np.asarray(G(u), dtype=float)
    ends = float(max(abs(G(-1.0)), abs(G(1.0))))
    record["G_endpoint_max"] = ends
    record["G_interior_min"] = float(g.min())
    double_well = ends <= tol and bool(np.all(g > 0))

    pos = u[u > 0]
    dfp = np.diff(fp(pos))
    record["f_prime_max_increment"] = float(dfp.max())
    fp_dec = bool(np.all(dfp < 0))

    ratio = f(pos) / pos
    record["f_over_u_max_increment"] = float(np.max(np.diff(ratio)))

    # G' = -f by central differences; step chosen to balance truncation and roundoff
    d = 1e-5
    dG = (G(u + d) - G(u - d)) / (2 * d)
    err = np.abs(dG + fu)
    worst = int(np.argmax(err))
    record["G_prime_max_error"] = float(err[worst])
    record["G_prime_worst_node"] = float(u[worst])

    # f' consistency with f, same stencil
    dfd = (f(u + d) - f(u - d)) / (2 * d)
    record["f_prime_max_error"] = float(np.max(np.abs(dfd - fp(u))))
    return odd_err <= tol, double_well, fp_dec, record


def make_nonlinearity(kind: str, params: dict | None = None, *, f=None, f_prime=None, G=None,
                      consistency_tol: float = 1e-6) -> Nonlinearity:
    """Build and validate a nonlinearity.

    ``kind`` is ``allen_cahn`` (f = u - u^3), ``peierls_nabarro`` (f = sin(pi u))
    or ``custom``, in which case ``f``, ``f_prime`` and ``G`` must be given
    (either as keywords or as entries of ``params``).
    """
    params = dict(params or {})
    if kind == "allen_cahn":
        f, f_prime, G = _ac_f, _ac_fp, _ac_G
    elif kind == "peierls_nabarro":
        f, f_prime, G = _pn_f, _pn_fp, _pn_G
    elif kind == "custom":
        f = f or params.get("f")
        f_prime = f_prime or params.get("f_prime")
        G = G or params.get("G")
        if f is None or f_prime is None or G is None:
            raise PreconditionError("custom nonlinearity needs f, f_prime and G")
    else:
        raise ValidationError(f"unknown nonlinearity kind '{kind}'")

    odd, dw, fpd, rec = _validate(f, f_prime, G)
    if rec["G_prime_max_error"] > consistency_tol:
        raise ValidationError(
            f"G' != -f: max error {rec['G_prime_max_error']:.3e} at u={rec['G_prime_worst_node']:.6f}")
    if rec["f_prime_max_error"] > consistency_tol:
        raise ValidationError(f"f_prime inconsistent with f: max error {rec['f_prime_max_error']:.3e}")
    return Nonlinearity(kind, f, f_prime, G, odd, dw, fpd, rec)


# --------------------------------------------------------------------------
# layer profile


@dataclass(frozen=True, eq=False)
class LayerProfile:
    """Increasing odd layer u0 on the line and its half-plane extension v0."""

    grid: GridSpec2
    v0: ScalarField
    u0: np.ndarray
    nonlinearity: str
    normalized: bool = True

    def __post_init__(self):
        u0 = np.array(self.u0, dtype=float)
        if u0.shape != (self.grid.nx,):
            raise DimensionError("u0 must have one value per x node")
        u0.setflags(write=False)
        object.__setattr__(self, "u0", u0)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def half(self) -> np.ndarray:
        """Extension values on x >= 0, shape (n_half, nl)."""
        return self.v0.values[self.grid.n_half - 1:, :]

    def slope_at_zero(self) -> float:
        """Centered difference for u0'(0)."""
        c = self.grid.n_half - 1
        return float((self.u0[c + 1] - self.u0[c - 1]) / (2 * self.grid.h_x))
