import numpy as np
import pytest
from hypothesis import given, strategies as st

from conesaddle.errors import DimensionError, DomainError, PreconditionError, ValidationError
from conesaddle.model import (GridSpec2, GridSpec3, ScalarField, cone_distance, make_nonlinearity,
                              st_coordinates, st_from_yz, yz_coordinates)


def test_grid_counts_and_axes():
    g = GridSpec3.cube(2, 4.0, 3.0, 0.5)
    assert g.shape == (9, 9, 7)
    assert g.size == 9 * 9 * 7
    assert g.s[-1] == 4.0 and g.lam[-1] == 3.0
    assert g.is_square
    r = g.refined()
    assert r.h_s == 0.25 and r.shape == (17, 17, 13)


@pytest.mark.parametrize("kw", [dict(s_max=4.1), dict(h_t=0.4), dict(m=0), dict(lambda_max=-1.0)])
def test_grid_rejects_bad_specs(kw):
    base = dict(m=1, s_max=4.0, t_max=4.0, lambda_max=2.0, h_s=0.5, h_t=0.5, h_lambda=0.5)
    base.update(kw)
    with pytest.raises(DomainError):
        GridSpec3(**base)


def test_grid2_is_symmetric():
    g = GridSpec2(2.0, 1.0, 0.5, 0.25)
    assert g.nx == 9 and g.n_half == 5
    np.testing.assert_array_equal(g.x, -g.x[::-1])
    assert g.shape == (9, 5)


def test_scalar_field_is_read_only_and_shaped():
    g = GridSpec3.cube(1, 1.0, 1.0, 0.5)
    f = ScalarField(g, np.arange(g.size, dtype=float))
    assert f.values.shape == g.shape
    with pytest.raises(ValueError):
        f.values[0, 0, 0] = 1.0
    assert f.bottom.shape == (3, 3)
    with pytest.raises(Exception):
        ScalarField(g, np.full(g.size, np.nan))


def test_st_coordinates():
    assert st_coordinates([3.0, 4.0, 0.0, 1.0]) == (5.0, 1.0)
    with pytest.raises(DimensionError):
        st_coordinates([1.0, 2.0, 3.0])


@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_yz_roundtrip(s, t):
    y, z = yz_coordinates(s, t)
    s2, t2 = st_from_yz(y, z)
    assert s2 == pytest.approx(s, abs=1e-9 * (1 + s + t))
    assert t2 == pytest.approx(t, abs=1e-9 * (1 + s + t))
    assert cone_distance(s, t) == pytest.approx(abs(z), abs=1e-12 * (1 + s + t))


def test_coordinates_reject_negative():
    with pytest.raises(DomainError):
        yz_coordinates(-1.0, 0.0)
    with pytest.raises(DomainError):
        st_from_yz(1.0, 2.0)


@pytest.mark.parametrize("kind", ["allen_cahn", "peierls_nabarro"])
def test_builtin_nonlinearities(kind):
    nl = make_nonlinearity(kind)
    assert nl.odd and nl.G_double_well and nl.f_prime_decreasing
    u = np.linspace(-1, 1, 101)
    np.testing.assert_allclose(nl.f(-u), -nl.f(u), atol=1e-14)
    assert nl.G(1.0) == pytest.approx(0.0, abs=1e-14)
    assert nl.G(0.0) > 0


def test_custom_nonlinearity_checks_potential():
    f = lambda u: np.asarray(u) - np.asarray(u) ** 3
    fp = lambda u: 1 - 3 * np.asarray(u) ** 2
    good = make_nonlinearity("custom", f=f, f_prime=fp, G=lambda u: (1 - np.asarray(u) ** 2) ** 2 / 4)
    assert good.odd
    with pytest.raises(ValidationError, match="G'"):
        make_nonlinearity("custom", f=f, f_prime=fp, G=lambda u: (1 - np.asarray(u) ** 2) ** 2 / 2)
    with pytest.raises(PreconditionError):
        make_nonlinearity("custom", f=f)
    with pytest.raises(ValidationError):
        make_nonlinearity("cubic")


def test_require_flags():
    f = lambda u: np.asarray(u, float) + 0.1
    nl = make_nonlinearity("custom", f=f, f_prime=lambda u: np.ones_like(np.asarray(u, float)),
                           G=lambda u: -0.5 * np.asarray(u, float) ** 2 - 0.1 * np.asarray(u, float))
    assert not nl.odd
    with pytest.raises(PreconditionError, match="odd"):
        nl.require("odd")
