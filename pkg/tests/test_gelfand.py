import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from levyspde.gelfand import SpectralTriple, build_dirichlet_triple, pairing, path_norms, theta_norm

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
thetas = st.floats(0.0, 1.0)


def test_dirichlet_eigenvalues_1d():
    tr = build_dirichlet_triple(1, 2.0, 4)
    np.testing.assert_allclose(tr.eigvals, (np.pi * np.arange(1, 5) / 2.0) ** 2, rtol=1e-15)
    assert tr.order == 1


def test_dirichlet_modes_2d_smallest_first():
    tr = build_dirichlet_triple(2, 1.0, 4)
    assert [tuple(r) for r in tr.mode_index] == [(1, 1), (1, 2), (2, 1), (2, 2)]
    np.testing.assert_allclose(tr.eigvals, np.pi**2 * np.array([2, 5, 5, 8]))


def test_second_order_triple_squares_weights():
    tr = build_dirichlet_triple(1, 1.0, 3, order=2)
    np.testing.assert_allclose(tr.eigvals, tr.lap_eigvals**2)


@pytest.mark.parametrize("bad", [dict(d=3, lengths=1.0, K=4), dict(d=1, lengths=-1.0, K=4),
                                 dict(d=1, lengths=1.0, K=0)])
def test_build_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        build_dirichlet_triple(**bad)


def test_from_eigvals_sorts_and_rejects_nonpositive():
    tr = SpectralTriple.from_eigvals([4.0, 1.0, 2.0])
    np.testing.assert_array_equal(tr.eigvals, [1.0, 2.0, 4.0])
    with pytest.raises(ValueError):
        SpectralTriple.from_eigvals([0.0, 1.0])


def test_norm_of_basis_vector():
    tr = build_dirichlet_triple(1, 1.0, 5)
    for k in range(5):
        for th in (0.0, 0.25, 0.5, 1.0):
            assert theta_norm(tr, tr.basis(k), th) == pytest.approx(tr.eigvals[k] ** (th - 0.5), rel=1e-14)


def test_theta_outside_unit_interval_rejected():
    tr = build_dirichlet_triple(1, 1.0, 3)
    with pytest.raises(ValueError):
        theta_norm(tr, np.ones(3), 1.5)
    with pytest.raises(ValueError):
        theta_norm(tr, np.array([1.0, np.nan, 0.0]), 0.5)


TR = build_dirichlet_triple(1, 1.0, 8)


@settings(max_examples=200, deadline=None)
@given(arrays(float, 8, elements=finite), thetas)
def test_interpolation_inequality(x, th):
    lhs = theta_norm(TR, x, th)
    rhs = theta_norm(TR, x, 0.0) ** (1 - th) * theta_norm(TR, x, 1.0) ** th
    assert lhs <= rhs * (1 + 1e-12) + 1e-300


@settings(max_examples=200, deadline=None)
@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite), thetas)
def test_duality_bound(u, v, th):
    assert abs(pairing(TR, u, v)) <= theta_norm(TR, u, th) * theta_norm(TR, v, 1 - th) * (1 + 1e-12) + 1e-300


@settings(max_examples=100, deadline=None)
@given(arrays(float, 8, elements=finite), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_norms_monotone_in_theta(x, a, b):
    lo, hi = sorted((a, b))
    # eigenvalues of the unit interval exceed one, so weights grow with theta
    assert theta_norm(TR, x, lo) <= theta_norm(TR, x, hi) * (1 + 1e-12) + 1e-300


def _constant_path(x, T, n=8):
    grid = np.linspace(0.0, T, n + 1)
    states = np.tile(x, (n + 1, 1))
    return SimpleNamespace(grid=grid, states=states, pre_states=states)


def test_path_norms_of_constant_path():
    x = np.array([1.0, -2.0, 0.5, 0, 0, 0, 0, 0.25])
    T = 2.0
    pn = path_norms(TR, _constant_path(x, T), 0.0, T, betas=(1.0, 0.75))
    h = np.linalg.norm(x)
    v2 = theta_norm(TR, x, 1.0) ** 2
    assert pn.sup_h == pytest.approx(h, rel=1e-14)
    assert pn.v_energy == pytest.approx(T * v2, rel=1e-14)
    assert pn.m_norm == pytest.approx(h + math.sqrt(T * v2), rel=1e-14)
    # q = 2 / (2 beta - 1): ||x||_beta T^(1/q)
    assert pn.x_norms[1.0] == pytest.approx(theta_norm(TR, x, 1.0) * T**0.5, rel=1e-13)
    assert pn.x_norms[0.75] == pytest.approx(theta_norm(TR, x, 0.75) * T**0.25, rel=1e-13)


def test_path_norms_large_exponent_does_not_overflow():
    x = 100.0 * np.ones(8)
    pn = path_norms(TR, _constant_path(x, 1.0), 0.0, 1.0, betas=(0.5001,))
    assert math.isfinite(pn.x_norms[0.5001])
    assert pn.x_norms[0.5001] == pytest.approx(theta_norm(TR, x, 0.5001), rel=1e-10)


def test_path_norms_subwindow_and_jump():
    # a single jump at t = 0.5 from x to 2x, left limit kept in pre_states
    x = np.zeros(8)
    x[0] = 1.0
    grid = np.array([0.0, 0.5, 1.0])
    states = np.array([x, 2 * x, 2 * x])
    pre = np.array([x, x, 2 * x])
    pn = path_norms(TR, SimpleNamespace(grid=grid, states=states, pre_states=pre), 0.25, 1.0)
    assert pn.sup_h == pytest.approx(2.0)
    assert pn.v_energy == pytest.approx(TR.eigvals[0] * (0.25 * 1 + 0.5 * 4))


def test_path_norms_validation():
    p = _constant_path(np.ones(8), 1.0)
    with pytest.raises(ValueError):
        path_norms(TR, p, 0.5, 0.5)
    with pytest.raises(ValueError):
        path_norms(TR, p, 0.0, 2.0)
    with pytest.raises(ValueError):
        path_norms(TR, p, 0.0, 1.0, betas=(0.5,))
