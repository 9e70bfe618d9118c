import numpy as np
import pytest

from conesaddle.errors import DomainError, PreconditionError
from conesaddle.model import GridSpec3, make_nonlinearity
from conesaddle.saddle import (comparison_candidate, cone_stability_form, cylinder_region, discrete_energy,
                               minimize_energy, odd_reflect, reflected_state, sector_mask, wedge_part)

AC = make_nonlinearity("allen_cahn")


@pytest.fixture(scope="module")
def small():
    return minimize_energy(AC, 1, 8.0, 4.0, grid=GridSpec3.cube(1, 8.0, 6.0, 0.5))


def test_energy_history_decreases(small):
    assert np.all(np.diff(small.energy_history) <= 1e-12)
    assert small.el_residual < 1e-10


def test_minimizer_is_a_positive_saddle(small):
    b = small.v.values[:, :, 0]
    assert np.all(b[small.free] > 0) and np.all(b[small.free] < 1)
    i = np.arange(small.v.grid.ns)
    assert np.all(small.v.values[i, i] == 0)
    # nothing above the height L
    assert np.all(small.v.values[:, :, 9:] == 0)


def test_odd_reflection(small):
    full = odd_reflect(small).values
    np.testing.assert_array_equal(full, -np.transpose(full, (1, 0, 2)))
    np.testing.assert_array_equal(wedge_part(odd_reflect(small)).values, small.v.values)
    assert reflected_state(small).reflected


def test_history_matches_discrete_energy(small):
    g = small.v.grid
    i = np.arange(g.ns)[:, None, None]
    j = np.arange(g.nt)[None, :, None]
    wedge = np.broadcast_to(j <= i, g.shape)
    assert discrete_energy(small.v, 1, wedge, AC) == pytest.approx(small.energy_history[-1], rel=1e-10)


def test_zero_field_energy_is_potential_only():
    g = GridSpec3.cube(2, 4.0, 2.0, 0.5)
    zero = odd_reflect(minimize_energy(AC, 2, 4.0, 2.0, grid=g)).with_values(np.zeros(g.shape))
    reg = cylinder_region(g, 4.0, 2.0)
    from conesaddle.extension import transverse_operator
    _, mass, _, _ = transverse_operator(g)
    assert discrete_energy(zero, 2, reg, AC) == pytest.approx(0.25 * mass[reg[:, :, 0].ravel()].sum())


def test_minimizer_beats_its_comparison_candidate(small):
    full = odd_reflect(small)
    w = comparison_candidate(full, 4.0)
    reg = cylinder_region(full.grid, 6.0, 4.0)
    assert discrete_energy(full, 1, reg, AC) <= discrete_energy(w, 1, reg, AC) + 1e-12


def test_region_and_argument_errors(small):
    g = small.v.grid
    with pytest.raises(DomainError):
        cylinder_region(g, 9.0, 1.0)
    with pytest.raises(DomainError):
        discrete_energy(small.v, 1, "ball", AC)
    with pytest.raises(PreconditionError):
        discrete_energy(small.v, 2, "box", AC)
    with pytest.raises(PreconditionError):
        comparison_candidate(small.v, 7.0)
    with pytest.raises(PreconditionError):
        minimize_energy(AC, 1, 8.0, 4.0, grid=GridSpec3.cube(2, 8.0, 6.0, 0.5))


def test_sector_mask_excludes_cone():
    m = sector_mask(GridSpec3.cube(1, 4.0, 1.0, 1.0), 4.0)
    assert not np.any(np.diag(m))
    assert m[3, 0] and not m[4, 0]


def test_cone_stability_requires_cone_vanishing(small):
    g = small.v.grid
    xi = np.zeros(g.shape)
    xi[3, 3, 0] = 1.0
    with pytest.raises(PreconditionError):
        cone_stability_form(small, small.v.with_values(xi), AC)
    xi[3, 3, 0] = 0.0
    xi[4, 1, 0] = 1.0
    assert cone_stability_form(small, small.v.with_values(xi), AC) > 0
