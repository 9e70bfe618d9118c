import numpy as np
import pytest

from conesaddle.errors import PreconditionError
from conesaddle.extension import pde_residual
from conesaddle.maximal import (barrier, barrier_domination, barrier_layer, choose_K, is_aligned,
                                maximality_check, monotone_iterate, nested_limit)
from conesaddle.model import GridSpec3, ScalarField, make_nonlinearity
from conesaddle.saddle import minimize_energy

AC = make_nonlinearity("allen_cahn")


@pytest.fixture(scope="module")
def state():
    return monotone_iterate(AC, 2, 10.0, 10.0, GridSpec3.cube(2, 10.0, 10.0, 0.5))


def test_iterates_decrease_and_converge(state):
    assert state.iterates_violation.max() <= 1e-12
    assert state.iterates_sup_diff[-1] < 1e-8
    assert np.all(np.diff(state.iterates_max) <= 1e-12)
    rec = state.record()
    assert rec[0][0] == 1 and len(rec) == state.iterations


def test_limit_below_barrier_and_positive(state):
    assert barrier_domination(state) <= 1e-12
    g = state.v.grid
    i = np.arange(g.ns)[:, None]
    j = np.arange(g.nt)[None, :]
    b = state.v.values[:, :, 0]
    assert np.all(b[(j < i) & (i < g.ns - 1)] > 0)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_barrier_is_a_discrete_supersolution(m):
    # the layer extension at K = 1 is harmonic and sits exactly on the diagonal grid
    g = GridSpec3.cube(m, 6.0, 6.0, 0.5)
    lay = barrier_layer(AC, g, x_min=10.0, lam_min=12.0)
    assert is_aligned(lay, g)
    W = barrier(lay, choose_K(lay, 2.0)).on_grid(g, odd=True)
    res = pde_residual(ScalarField(g, W)).values
    i = np.arange(g.ns)[:, None, None]
    j = np.arange(g.nt)[None, :, None]
    wedge = np.broadcast_to(j < i, g.shape)
    assert res[wedge].min() > -1e-8


def test_choose_K_and_barrier_errors(state):
    lay = state.barrier.layer
    K = choose_K(lay, 2.0)
    assert K >= 2.0 / lay.slope_at_zero() and K >= 1
    with pytest.raises(PreconditionError):
        barrier(lay, 0.5)
    with pytest.raises(PreconditionError):
        choose_K(lay, -1.0)


def test_maximal_dominates_minimizer(state):
    g = state.v.grid
    sad = minimize_energy(AC, 2, 10.0, 10.0**0.75, grid=g)
    assert maximality_check(state, sad)["min_gap"] >= -1e-8


def test_shift_too_small_rejected():
    with pytest.raises(PreconditionError):
        monotone_iterate(AC, 1, 4.0, 4.0, a=1.0)


def test_grid_mismatch_rejected():
    with pytest.raises(PreconditionError):
        monotone_iterate(AC, 1, 4.0, 4.0, GridSpec3.cube(2, 4.0, 4.0, 0.5))


def test_nested_limit_differences_shrink():
    _, table = nested_limit(AC, 1, [8.0, 12.0, 16.0], 8.0, h=0.5, r_compare=4.0)
    assert table[1][3] < table[0][3]
