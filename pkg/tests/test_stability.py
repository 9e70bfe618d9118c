import numpy as np
import pytest
import scipy.linalg as sla

from conesaddle.errors import DomainError, PreconditionError
from conesaddle.maximal import monotone_iterate
from conesaddle.model import GridSpec3, ScalarField, make_nonlinearity
from conesaddle.saddle import discrete_energy, odd_reflect
from conesaddle.stability import (CERTIFICATE, INCONCLUSIVE, build_test_function,
                                  dimension_criterion, eta2, hardy_integral, hardy_rayleigh_min, hardy_report,
                                  instability_search, log_sine, quadratic_form, quadratic_form_yz,
                                  random_perturbation, sin_bump, xi_norm2)
from conesaddle.stability import TestFunctionSpec as Spec, _hardy_pencil

AC = make_nonlinearity("allen_cahn")


@pytest.fixture(scope="module")
def vbar2():
    st = monotone_iterate(AC, 2, 24.0, 20.0, GridSpec3.cube(2, 24.0, 20.0, 1.0))
    return odd_reflect(st.v)


def test_quadratic_form_is_the_energy_hessian(vbar2):
    rng = np.random.default_rng(1)
    xi = random_perturbation(vbar2.grid, rng)
    eps = 1e-3
    E = lambda f: discrete_energy(f, 2, "box", AC)
    plus = vbar2.with_values(vbar2.values + eps * xi.values)
    minus = vbar2.with_values(vbar2.values - eps * xi.values)
    second = (E(plus) - 2 * E(vbar2) + E(minus)) / eps**2
    assert second == pytest.approx(quadratic_form(vbar2, xi, AC), rel=1e-5)


def test_yz_form_agrees_up_to_quadrature():
    g = GridSpec3.cube(2, 12.0, 8.0, 0.25)
    S, T, L = g.mesh()
    v = ScalarField(g, np.tanh((S - T) / np.sqrt(2)))
    xi = ScalarField(g, np.sin(np.pi * S / 12) ** 2 * np.sin(np.pi * T / 12) ** 2 * np.cos(np.pi * L / 16) ** 2
                     * (S < 12) * (T < 12) * (L < 8))
    a = quadratic_form(v, xi, AC)
    b = quadratic_form_yz(v, xi, AC)
    assert b == pytest.approx(2 * a, rel=0.03)


def test_outer_faces_must_vanish(vbar2):
    xi = vbar2.with_values(np.ones(vbar2.grid.shape))
    with pytest.raises(PreconditionError):
        quadratic_form(vbar2, xi, AC)


def test_norm_is_weighted_volume():
    g = GridSpec3.cube(1, 2.0, 2.0, 1.0)
    assert xi_norm2(ScalarField(g, np.ones(g.size))) == pytest.approx(8.0)


def test_eta2_cutoff():
    np.testing.assert_allclose(eta2([0.0, 5.0, 5.5, 6.0, 9.0], 5.0), [1, 1, 0.5, 0, 0])


def test_instability_certificate_in_dimension_four(vbar2):
    fam = [("log", log_sine(2, 0.5, 40.0), 0.5, 40.0), ("sin", sin_bump(1.0, 9.0), 1.0, 9.0)]
    rep = instability_search(vbar2, AC, 2, [0.25], [10.0], fam)
    assert rep.verdict == CERTIFICATE
    assert rep.params["phi_id"] == "log"
    assert len(rep.table) == 2
    assert rep.Q_scaled == pytest.approx(rep.Q / (0.25 * 10.0))


def test_no_certificate_in_dimension_eight():
    st = monotone_iterate(AC, 4, 24.0, 20.0, GridSpec3.cube(4, 24.0, 20.0, 1.0))
    fam = [("log", log_sine(4, 0.5, 20.0), 0.5, 20.0)]
    rep = instability_search(odd_reflect(st.v), AC, 4, [0.25, 0.5], [10.0], fam)
    assert rep.verdict == INCONCLUSIVE


def test_test_function_support_checked(vbar2):
    spec = Spec(2.0, 10.0, log_sine(2, 1.0, 40.0), 1.0, 40.0)
    with pytest.raises(DomainError):
        build_test_function(vbar2, spec, 2)
    with pytest.raises(PreconditionError):
        Spec(1.0, 1.0, sin_bump(2, 1), 2.0, 1.0)


def test_hardy_minimum_matches_continuous_formula():
    for m in (2, 3, 4):
        ell = np.log(1e4)
        exact = (2 * m - 3) ** 2 / 4 + (np.pi / ell) ** 2
        assert hardy_rayleigh_min(m, 1.0, 1e4, 4000) == pytest.approx(exact, rel=2e-3)


def test_inverse_iteration_matches_tridiagonal_eigensolver():
    _, diag, off, mass = _hardy_pencil(3, 1e-2, 1e2, 800)
    s = 1 / np.sqrt(mass)
    ref = sla.eigh_tridiagonal(diag * s * s, off * s[:-1] * s[1:], eigvals_only=True,
                               select="i", select_range=(0, 0))[0]
    assert hardy_rayleigh_min(3, 1e-2, 1e2, 800) == pytest.approx(ref, rel=1e-10)


def test_hardy_integral_signs():
    rho = np.geomspace(0.5, 40.0, 20001)
    assert hardy_integral(2, rho, log_sine(2, 0.5, 40.0)(rho)) < 0
    rho = np.linspace(1.0, 9.0, 20001)
    assert hardy_integral(2, rho, sin_bump(1.0, 9.0)(rho)) > 0


def test_dimension_table():
    for n in range(2, 16, 2):
        want = "hardy_nonnegative" if n * n - 10 * n + 17 >= 0 else "negative_direction_exists"
        assert dimension_criterion(n) == want
    assert dimension_criterion(8) == "hardy_nonnegative"
    with pytest.raises(PreconditionError):
        dimension_criterion(7)


def test_hardy_report_is_consistent():
    for n in (4, 6, 8, 10):
        assert hardy_report(n).consistent
