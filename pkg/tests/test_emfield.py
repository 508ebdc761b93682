import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinflow.emfield import (EMConfig, flat_top_window, harmonic_trap, smooth_step,
                              stern_gerlach, uniform_field)
from spinflow.fieldkit import Grid

GRID = Grid.centered(48, 8.0)


def inner_mask(grid, frac=0.4):
    q = grid.coords
    return np.all(np.abs(q) < frac * 0.5 * np.asarray(grid.lengths).reshape(3, 1, 1, 1), axis=0)


@given(s=st.floats(-2.0, 3.0))
def test_smooth_step_range_and_limits(s):
    v = float(smooth_step(s))
    assert 0.0 <= v <= 1.0
    if s <= 0:
        assert v == 0.0
    if s >= 1:
        assert v == 1.0
    assert float(smooth_step(0.5)) == pytest.approx(0.5)


@given(s=st.floats(0.0, 1.0))
def test_smooth_step_symmetry(s):
    assert float(smooth_step(s) + smooth_step(1.0 - s)) == pytest.approx(1.0, abs=1e-14)


def test_window_is_flat_inside_and_zero_outside():
    W = flat_top_window(GRID, inner=0.5, outer=0.8)
    assert W.min() >= 0.0 and W.max() <= 1.0
    assert np.all(W[inner_mask(GRID, 0.5)] == 1.0)
    r = np.max(np.abs(GRID.coords) / 8.0, axis=0)
    assert np.all(W[r >= 0.8] == 0.0)


def packet_mean(grid, F, sigma=1.0):
    rho = np.exp(-np.sum(grid.coords**2, axis=0) / (2 * sigma**2))
    return np.sum(rho * F, axis=(-3, -2, -1)) / rho.sum()


@given(B0=st.floats(-2.0, 2.0))
def test_uniform_field_inside_window(B0):
    em = uniform_field(GRID, B0)
    # pointwise the spectral curl of the windowed potential carries an
    # oscillating truncation error; packet averages see the exact field
    np.testing.assert_allclose(packet_mean(GRID, em.B), [0.0, 0.0, B0], atol=1e-5 * max(1.0, abs(B0)))
    m = inner_mask(GRID)
    assert np.max(np.abs(em.B[2][m] - B0)) < 0.02 * max(abs(B0), 1e-300) + 1e-300
    assert em.consistency()["max_div_B"] < 1e-10
    if B0 != 0:
        assert em.has_vector_potential and em.has_magnetic_field and not em.is_static_scalar


def test_window_curl_error_shrinks_with_resolution():
    errs = []
    for n in (48, 96):
        g = Grid.centered(n, 8.0)
        errs.append(np.max(np.abs(uniform_field(g, 1.0).B[2][inner_mask(g)] - 1.0)))
    assert errs[1] < errs[0] / 10


@given(B0=st.floats(-1.0, 1.0), b=st.floats(-0.5, 0.5))
def test_stern_gerlach_field_shape(B0, b):
    em = stern_gerlach(GRID, B0, b)
    # first moments recover the gradient: <B3 q3> / <q3^2> = b
    mean = packet_mean(GRID, em.B)
    np.testing.assert_allclose(mean, [0.0, 0.0, B0], atol=1e-5)
    q = GRID.coords
    rho = np.exp(-np.sum(q**2, axis=0) / 2)
    slope3 = np.sum(rho * em.B[2] * q[2]) / np.sum(rho * q[2] ** 2)
    slope1 = np.sum(rho * em.B[0] * q[0]) / np.sum(rho * q[0] ** 2)
    assert slope3 == pytest.approx(b, abs=1e-5)
    assert slope1 == pytest.approx(-0.5 * b, abs=1e-5)
    c = em.consistency()
    assert c["curl_mismatch"] == 0.0
    assert c["max_div_B"] < 1e-10


def test_zeeman_and_none_configs():
    V = harmonic_trap(GRID, 0.5)
    em = EMConfig.zeeman(GRID, (0.0, 0.3, 1.0), V=V)
    assert not em.has_vector_potential and em.is_static_scalar
    assert em.consistency() == {"curl_mismatch": 0.0, "max_div_B": 0.0}
    np.testing.assert_allclose(em.B[1], 0.3)
    assert np.all(em.E == 0.0)
    em0 = EMConfig.none(GRID)
    assert not em0.has_magnetic_field
    em1 = em0.with_potential(Phi=GRID.coords[0])
    assert em1.Phi is not em0.Phi


def test_electric_field_from_periodic_potential():
    g = Grid.centered(16, np.pi)
    em = EMConfig.none(g).with_potential(Phi=np.sin(g.coords[0]))
    np.testing.assert_allclose(em.E[0], -np.cos(g.coords[0]), atol=1e-12)


def test_harmonic_trap_axes():
    V = harmonic_trap(GRID, 2.0, mass=0.5, axes=(2,))
    assert V.max() == pytest.approx(0.5 * 0.5 * 4.0 * 64.0)
    np.testing.assert_allclose(V, np.broadcast_to(V[:1, :1, :], V.shape))
    np.testing.assert_allclose(V[0, 0], 0.5 * 0.5 * 4.0 * GRID.axis(2) ** 2)


def test_shape_validation():
    z = np.zeros(GRID.dims)
    with pytest.raises(ValueError):
        EMConfig(GRID, z, z, np.zeros((2,) + GRID.dims), np.zeros((3,) + GRID.dims))
