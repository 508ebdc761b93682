import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinflow.emfield import EMConfig, uniform_field
from spinflow.fieldkit import Constants, Grid, integrate_volume
from spinflow.pauli import (PauliState, StabilityError, apply_hamiltonian, evolve, gauge_transform,
                            initial_state, observables, pauli_step, rk4_dt_limit, sigma_dot, width)
from spinflow.spinor import SIGMA

SMALL = Grid.centered(16, 4.0)
G32 = Grid.centered(32, 8.0)
WIDE = Grid.centered(48, 12.0)
component = st.floats(-1.5, 1.5)


def test_sigma_dot_matches_matrices(rng):
    B = rng.normal(size=(3, 4, 4, 4))
    psi = rng.normal(size=(2, 4, 4, 4)) + 1j * rng.normal(size=(2, 4, 4, 4))
    ref = np.einsum("i...,iab,b...->a...", B, SIGMA, psi)
    np.testing.assert_allclose(sigma_dot(B, psi), ref, atol=1e-14)


@given(bx=component, by=component, bz=component, v=st.floats(-1.0, 1.0))
@settings(max_examples=15)
def test_strang_preserves_norm(bx, by, bz, v):
    x = SMALL.coords[0]
    em = EMConfig.zeeman(SMALL, (bx, by, bz), V=v * np.cos(np.pi * x / 4))
    st_ = initial_state("gaussian", SMALL, sigma=1.5, k=(0.5, 0.0, -0.3), spin=(1.0, 0.4))
    out = evolve(st_, em, 0.05, 40, "strang")
    assert abs(out.norm() - 1.0) < 40 * 1e-14


def test_hamiltonian_is_hermitian(rng):
    em = uniform_field(SMALL, 0.8).with_potential(V=0.3 * SMALL.coords[1] ** 2)
    a = rng.normal(size=(2,) + SMALL.dims) + 1j * rng.normal(size=(2,) + SMALL.dims)
    b = rng.normal(size=(2,) + SMALL.dims) + 1j * rng.normal(size=(2,) + SMALL.dims)
    ip = lambda u, w: np.sum(np.conj(u) * w)
    lhs = ip(a, apply_hamiltonian(b, em))
    rhs = np.conj(ip(b, apply_hamiltonian(a, em)))
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_free_gaussian_spreading_law():
    k = Constants(hbar=1.0, mass=1.0)
    sigma, t = 1.5, 2.0
    st_ = initial_state("gaussian", WIDE, k, sigma=sigma)
    out = evolve(st_, EMConfig.none(WIDE), 0.1, 20, "strang", k)
    expect = np.sqrt(sigma**2 + (k.hbar * t / (2 * k.mass * sigma)) ** 2)
    for axis in range(3):
        assert width(out, axis) == pytest.approx(expect, rel=1e-8)


@given(n=st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.integers(-3, 3)),
       bz=component, hbar=st.floats(0.5, 2.0))
@settings(max_examples=15)
def test_plane_wave_phase(n, bz, hbar):
    k = Constants(hbar=hbar)
    g = Grid.centered(16, np.pi)
    kv = np.asarray(n, float)
    em = EMConfig.zeeman(g, (0.0, 0.0, bz))
    st_ = initial_state("plane_wave", g, k, k=kv, spin=(0.0, 0.0))
    t = 0.7
    out = evolve(st_, em, t / 10, 10, "strang", k)
    energy = hbar**2 * kv @ kv / (2 * k.mass) + k.mu_B * bz
    np.testing.assert_allclose(out.psi, st_.psi * np.exp(-1j * energy * t / hbar), atol=1e-12)


def test_rk4_matches_strang_without_vector_potential():
    em = EMConfig.zeeman(G32, (0.2, 0.0, 0.9))
    st_ = initial_state("gaussian", G32, sigma=1.5, k=(0.5, 0.2, 0.0), spin=(1.0, 0.3))
    a = evolve(st_, em, 0.01, 50, "strang")
    b = evolve(st_, em, 0.01, 50, "rk4")
    # the kinetic part of strang is exact, so the gap is the rk4 and splitting error
    assert np.max(np.abs(a.psi - b.psi)) < 1e-5


def test_gauge_covariance():
    # smooth periodic potentials, so the check isolates the discrete covariance
    x, y, _ = WIDE.coords
    L = 12.0
    A = np.stack([0.5 * np.sin(np.pi * y / L), 0.3 * np.cos(np.pi * x / L), 0 * x])
    em = EMConfig.from_potentials(WIDE, A)
    st_ = initial_state("gaussian", WIDE, sigma=1.5, k=(0.4, 0.0, 0.0), spin=(1.0, 0.3))
    Lam = 0.4 * np.sin(np.pi * x / L) * np.cos(np.pi * y / L)
    st2, em2 = gauge_transform(st_, em, Lam)
    dt = 0.5 * rk4_dt_limit(em2)
    a = evolve(st_, em, dt, 20, "rk4")
    b = evolve(st2, em2, dt, 20, "rk4")
    k = Constants()
    back = np.exp(-1j * k.charge * Lam / (k.hbar * k.c)) * b.psi
    assert np.max(np.abs(back - a.psi)) < 1e-8
    np.testing.assert_allclose(em2.B, em.B, atol=1e-12)
    oa, ob = observables(a, em), observables(b, em2)
    assert ob.energy == pytest.approx(oa.energy, rel=1e-8)
    np.testing.assert_allclose(ob.p_mean, oa.p_mean, atol=1e-8)


def test_orbital_energy_shift_sign():
    # first-order shift of a winding-n packet: -(e/2mc) B hbar n
    k = Constants(charge=-1.0)
    g = WIDE
    for n in (1, -1):
        st_ = initial_state("vortex", g, k, winding=n, sigma=1.5, spin=(np.pi / 2, 0.0))
        eps = 1e-3
        e_plus = observables(st_, uniform_field(g, eps), k).energy
        e_minus = observables(st_, uniform_field(g, -eps), k).energy
        slope = (e_plus - e_minus) / (2 * eps)
        assert slope == pytest.approx(-k.charge / (2 * k.mass * k.c) * k.hbar * n, rel=1e-6)


def test_rk4_energy_and_norm_drift_small():
    em = uniform_field(G32, 1.0)
    st_ = initial_state("gaussian", G32, sigma=1.5, k=(1.0, 0.0, 0.0), spin=(1.0, 0.0))
    e0 = observables(st_, em).energy
    out = evolve(st_, em, 0.005, 100, "rk4")
    assert abs(observables(out, em).energy - e0) < 1e-6 * abs(e0)
    assert abs(out.norm() - 1.0) < 1e-8


def test_stepper_errors():
    em = uniform_field(SMALL, 1.0)
    st_ = initial_state("gaussian", SMALL, sigma=1.5)
    with pytest.raises(ValueError):
        pauli_step(st_, em, 0.01, "strang")
    with pytest.raises(ValueError):
        pauli_step(st_, em, 0.01, "euler")
    with pytest.raises(StabilityError) as info:
        pauli_step(st_, em, 2 * rk4_dt_limit(em), "rk4")
    assert info.value.time == 0.0


@pytest.mark.parametrize("kind, params", [
    ("gaussian", {"sigma": 0.5}),
    ("gaussian", {"sigma": 1.5, "k": (7.0, 0.0, 0.0)}),
    ("plane_wave", {"k": (0.3, 0.0, 0.0)}),
    ("vortex", {"sigma": 0.1}),
    ("donut", {}),
])
def test_initial_state_validation(kind, params):
    with pytest.raises(ValueError):
        initial_state(kind, G32, **params)


@pytest.mark.parametrize("kind, params", [
    ("gaussian", {"sigma": (1.5, 2.0, np.inf), "k": (0.5, 0, 0), "spin": np.array([1.0, 1j])}),
    ("plane_wave", {"k": (np.pi / 8, 0.0, 0.0)}),
    ("vortex", {"winding": 2, "sigma": 1.5}),
    ("hopf_texture_weighted", {"sigma": 2.5, "taper": (0.6, 0.95)}),
])
def test_initial_states_are_normalized(kind, params):
    st_ = initial_state(kind, G32, **params)
    assert st_.norm() == pytest.approx(1.0, abs=1e-12)
    assert isinstance(st_, PauliState)


def test_gaussian_observables():
    k = Constants(hbar=0.7, mass=2.0)
    kv = np.array([0.5, -0.25, 0.0])
    st_ = initial_state("gaussian", WIDE, k, sigma=1.5, center=(1.0, 0.0, -0.5), k=kv, spin=(np.pi / 2, 0.0))
    ob = observables(st_, EMConfig.none(WIDE), k)
    np.testing.assert_allclose(ob.q_mean, [1.0, 0.0, -0.5], atol=1e-10)
    np.testing.assert_allclose(ob.p_mean, k.hbar * kv, atol=1e-10)
    # h = (sin th sin ph, sin th cos ph, cos th) = (0, 1, 0)
    np.testing.assert_allclose(ob.s_mean, [0.0, 0.5 * k.hbar, 0.0], atol=1e-12)
    # kinetic energy of a Gaussian: (p^2 + 3 hbar^2 / 4 sigma^2) / 2m
    expect = (k.hbar**2 * kv @ kv + 3 * k.hbar**2 / (4 * 1.5**2)) / (2 * k.mass)
    assert ob.energy == pytest.approx(expect, rel=1e-10)
    assert integrate_volume(st_.rho, WIDE) == pytest.approx(1.0)
