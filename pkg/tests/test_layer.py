import numpy as np
import pytest

from conesaddle.errors import PreconditionError
from conesaddle.layer import (far_field, fit_offset, half_laplacian, layer_half_values, layer_value,
                              pn_closed_form, solve_layer)
from conesaddle.model import GridSpec2, make_nonlinearity

PN = make_nonlinearity("peierls_nabarro")
AC = make_nonlinearity("allen_cahn")


@pytest.fixture(scope="module")
def pn_coarse():
    return solve_layer(PN, GridSpec2(20.0, 40.0, 0.1, 0.1))


def test_closed_form_values():
    assert pn_closed_form(0.0, 0.0) == 0.0
    assert pn_closed_form(1 / np.pi, 0.0) == pytest.approx(0.5)
    with pytest.raises(PreconditionError):
        pn_closed_form(1.0, -0.1)


def test_pn_layer_close_to_closed_form(pn_coarse):
    g = pn_coarse.grid
    err = np.abs(pn_coarse.u0 - pn_closed_form(g.x, 0.0)).max()
    assert err < 5e-3
    ext = np.abs(pn_coarse.v0.values - pn_closed_form(g.x[:, None], g.lam[None, :])).max()
    assert ext < 5e-3


def test_layer_is_odd_and_increasing(pn_coarse):
    u = pn_coarse.u0
    np.testing.assert_allclose(u, -u[::-1], atol=0)
    assert np.all(np.diff(u) > 0)
    assert np.all(np.abs(u) < 1)


def test_allen_cahn_layer():
    prof = solve_layer(AC, GridSpec2(20.0, 40.0, 0.25, 0.25))
    assert np.all(np.diff(prof.u0) > 0)
    assert 0.98 < prof.u0[-1] < 1
    assert prof.slope_at_zero() > 0


def test_neumann_wall_leaves_an_error_floor():
    g = GridSpec2(20.0, 40.0, 0.05, 0.05)
    err = lambda p: np.abs(p.u0 - pn_closed_form(g.x, 0.0)).max()
    assert err(solve_layer(PN, g, lateral="neumann")) > 3 * err(solve_layer(PN, g))
    with pytest.raises(PreconditionError):
        solve_layer(PN, g, lateral="periodic")


def test_fit_offset_inverts_far_field():
    c = fit_offset(20.0, float(far_field(20.0, 0.0, 0.4)))
    assert c == pytest.approx(0.4, rel=1e-12)


def test_layer_value_lookup(pn_coarse):
    g = pn_coarse.grid
    half = pn_coarse.half()
    assert layer_value(pn_coarse, 0.3, 0.2) == pytest.approx(half[3, 2], abs=1e-12)
    assert layer_value(pn_coarse, -0.3, 0.2) == pytest.approx(-half[3, 2], abs=1e-12)
    assert layer_value(pn_coarse, 50.0, 0.0) == 1.0
    assert layer_value(pn_coarse, 1.0, 100.0) == pytest.approx(half[10, -1])
    np.testing.assert_array_equal(layer_half_values(pn_coarse, np.array([-2, 0, 2]), 1),
                                  [-half[2, 1], 0.0, half[2, 1]])


def test_half_laplacian_of_closed_form_converges():
    errs = []
    for h in (0.1, 0.05):
        g = GridSpec2(20.0, 40.0, h, h)
        x = h * np.arange(g.n_half)
        u = pn_closed_form(x, 0.0)
        errs.append(np.abs(half_laplacian(u, g, 1 / np.pi) - np.sin(np.pi * u)).max())
    assert errs[1] < errs[0] / 3
    with pytest.raises(PreconditionError):
        half_laplacian(np.zeros(3), GridSpec2(20.0, 40.0, 0.1, 0.1), 0.3)
