import numpy as np
import pytest

from conesaddle.analysis import asymptotic_report, gradient_decay_check, monotonicity_report
from conesaddle.errors import DomainError
from conesaddle.layer import layer_value, solve_layer
from conesaddle.model import GridSpec2, GridSpec3, ScalarField, make_nonlinearity


def even_saddle(h):
    g = GridSpec3.cube(2, 6.0, 4.0, h)
    S, T, L = g.mesh()
    return ScalarField(g, np.tanh((S**2 - T**2) / 4) * np.exp(-L / 10))


def test_signs_on_an_analytic_saddle():
    rep = monotonicity_report(even_saddle(0.25))
    assert rep.passes()
    assert rep.dz_min.value > 0
    assert rep.violations() == {"d_s": 0.0, "d_t": 0.0, "d_y": 0.0, "d_z": 0.0}


def test_sign_violation_is_located():
    g = GridSpec3.cube(1, 4.0, 4.0, 0.5)
    S, T, L = g.mesh()
    bump = np.exp(-((S - 2.5) ** 2 + (T - 1.0) ** 2 + L**2))
    rep = monotonicity_report(ScalarField(g, (S - T) / 4 - 0.5 * bump))
    assert not rep.passes()
    assert rep.ds_min.value < 0
    assert rep.ds_min.location[0] < 2.5


def test_axis_derivative_is_at_least_second_order():
    a = monotonicity_report(even_saddle(0.25)).dt_axis
    b = monotonicity_report(even_saddle(0.125)).dt_axis
    assert a / b >= 3.5


def test_wedge_fields_are_reflected():
    g = GridSpec3.cube(1, 4.0, 2.0, 0.5)
    S, T, L = g.mesh()
    full = np.tanh((S - T) / np.sqrt(2))
    wedge = np.where(T <= S, full, 0.0)
    a = monotonicity_report(ScalarField(g, full))
    b = monotonicity_report(ScalarField(g, wedge))
    assert a.as_dict() == b.as_dict()


def test_asymptotic_report_needs_room():
    hx = 0.5 / np.sqrt(2)
    lay = solve_layer(make_nonlinearity("allen_cahn"), GridSpec2(28 * hx, 10.0, hx, 0.5))
    g = GridSpec3.cube(1, 6.0, 2.0, 0.5)
    S, T, L = g.mesh()
    exact = ScalarField(g, layer_value(lay, (S - T) / np.sqrt(2), L))
    rows = asymptotic_report(exact, lay, [2.0, 4.0], band=1.0)
    assert all(r["sup_u_dev"] < 1e-12 and r["sup_grad_dev"] < 1e-12 for r in rows)
    with pytest.raises(DomainError):
        asymptotic_report(exact, lay, [5.5], band=1.0)


def test_gradient_decay_of_poisson_extension():
    g = GridSpec2(40.0, 20.0, 0.1, 0.1)
    X, L = np.meshgrid(g.x, g.lam, indexing="ij")
    prof = gradient_decay_check(ScalarField(g, (2 / np.pi) * np.arctan(X / (L + 1))))
    assert prof.nonincreasing and not prof.non_decaying
    np.testing.assert_allclose(prof.sup_grad * (1 + prof.lam), 2 / np.pi, rtol=5e-3)
