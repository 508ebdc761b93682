import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinflow.clebsch import (PotentialSet, circulation_quantum, connection_field, helicity,
                              hopf_invariant, hopf_texture, internal_potential, momentum_field,
                              tail_fraction, takabayasi_vector, vorticity_vector)
from spinflow.emfield import EMConfig, uniform_field
from spinflow.fieldkit import Constants, Grid, circle_loop, cross, curl, disk_cap
from spinflow.pauli import initial_state
from spinflow.spinor import hopf_map, spinor_from_angles

BOX = Grid.centered(32, np.pi)


def texture(grid, amp=0.5, hbar=1.0):
    # S scales with hbar so exp(2iS/hbar) keeps the same band limit
    x, y, z = grid.coords
    theta = 1.2 + amp * np.sin(x) * np.cos(y)
    phi = 0.7 * np.cos(y + z) + 0.4 * np.sin(x)
    S = 0.3 * hbar * np.sin(z + x)
    return S, theta, phi


def analytic_momentum(grid, amp, hbar):
    # hand derivatives of the texture above
    x, y, z = grid.coords
    theta = 1.2 + amp * np.sin(x) * np.cos(y)
    gS = 0.3 * hbar * np.cos(z + x) * np.stack([np.ones_like(x), np.zeros_like(x), np.ones_like(x)])
    gphi = np.stack([0.4 * np.cos(x), -0.7 * np.sin(y + z), -0.7 * np.sin(y + z)])
    gcos = -np.sin(theta) * amp * np.stack([np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y), 0 * x])
    return gS + 0.5 * hbar * np.cos(theta) * gphi, 0.5 * hbar * cross(gcos, gphi)


@given(amp=st.floats(0.0, 1.0), hbar=st.floats(0.1, 2.0))
@settings(max_examples=10)
def test_momentum_and_vorticity_against_hand_derivatives(amp, hbar):
    k = Constants(hbar=hbar)
    S, theta, phi = texture(BOX, amp, hbar)
    pot = PotentialSet.from_angles(BOX, S, theta, phi, k)
    M_ref, Om_ref = analytic_momentum(BOX, amp, hbar)
    np.testing.assert_allclose(momentum_field(pot), M_ref, atol=1e-10)
    np.testing.assert_allclose(vorticity_vector(pot), Om_ref, atol=1e-10)
    np.testing.assert_allclose(curl(momentum_field(pot), BOX), vorticity_vector(pot), atol=1e-10)


def test_spinor_and_angle_routes_agree():
    S, theta, phi = texture(BOX)
    x = BOX.coords[0]
    psi = np.sqrt(1 + 0.3 * np.cos(x)) * spinor_from_angles(2 * S, theta, phi)
    a = PotentialSet.from_angles(BOX, S, theta, phi)
    b = PotentialSet.from_spinor(psi, BOX)
    np.testing.assert_allclose(momentum_field(b), momentum_field(a), atol=1e-10)
    np.testing.assert_allclose(vorticity_vector(b), vorticity_vector(a), atol=1e-10)
    np.testing.assert_allclose(curl(momentum_field(b), BOX), vorticity_vector(b), atol=1e-10)


def test_vector_potential_enters_momentum():
    g = Grid.centered(32, 8.0)
    em = uniform_field(g, 0.7)
    pot = PotentialSet.from_angles(g, np.zeros(g.dims), np.full(g.dims, 0.4), np.zeros(g.dims))
    k = pot.constants
    np.testing.assert_allclose(momentum_field(pot, em), -(k.charge / k.c) * em.A, atol=1e-14)
    with pytest.raises(ValueError):
        momentum_field(pot, EMConfig.none(Grid.centered(16, 8.0)))


def test_curl_identity_converges_on_hopf_core():
    errs = []
    for n in (48, 96):
        g = Grid.centered(n, 8.0)
        pot = PotentialSet.from_spinor(hopf_texture(g, taper=(0.6, 0.95)), g)
        errs.append(np.max(np.abs(curl(momentum_field(pot), g) - vorticity_vector(pot))))
    assert errs[1] < 1e-3 * errs[0] + 1e-3
    assert errs[1] < 1e-3


def test_takabayasi_rejects_non_unit_field():
    with pytest.raises(ValueError):
        takabayasi_vector(np.ones((3,) + BOX.dims), BOX)


def test_hopf_invariant_and_mirror():
    g = Grid.centered(64, 8.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        plain = hopf_invariant(connection_field(hopf_texture(g), g), g)
        mirror = hopf_invariant(connection_field(hopf_texture(g, mirror=True), g), g)
    assert plain == pytest.approx(1.0, abs=1e-3)
    assert mirror == pytest.approx(-1.0, abs=1e-3)


def test_tapered_texture_is_unit_and_exact():
    g = Grid.centered(64, 8.0)
    z = hopf_texture(g, taper=(0.6, 0.95))
    h = hopf_map(z)
    assert np.max(np.abs(np.sum(h**2, axis=0) - 1)) < 1e-12
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        gamma = hopf_invariant(connection_field(z, g), g)
    assert gamma == pytest.approx(1.0, abs=1e-6)


def test_tail_warning_on_cramped_box():
    g = Grid.centered(32, 2.5)
    with pytest.warns(RuntimeWarning):
        hopf_invariant(connection_field(hopf_texture(g), g), g)


def test_tail_fraction_of_uniform_density():
    g = Grid.centered(32, 1.0)
    # outer shell beyond 3/4 of the half box: 1 - 0.75^3 of the volume
    assert tail_fraction(np.ones(g.dims), g) == pytest.approx(1 - (12 / 16) ** 3, abs=0.02)


def test_helicity_counts_linking_in_action_units():
    g = Grid.centered(48, 8.0)
    z = hopf_texture(g, taper=(0.6, 0.95))
    gamma = hopf_invariant(connection_field(z, g), g)
    units = []
    for hbar in (0.5, 1.0, 2.0):
        pot = PotentialSet.from_spinor(z, g, Constants(hbar=hbar))
        units.append(helicity(momentum_field(pot), vorticity_vector(pot), g) / (2 * np.pi * hbar) ** 2)
    # exact hbar^2 scaling; agreement with the Whitehead integral up to resolution
    assert units[0] == pytest.approx(units[1], rel=1e-12)
    assert units[2] == pytest.approx(units[1], rel=1e-12)
    assert units[1] == pytest.approx(gamma, abs=1e-3)
    assert units[1] == pytest.approx(1.0, abs=1e-3)


def test_internal_field_sign():
    k = Constants(hbar=0.8, charge=-1.3, c=2.0)
    S, theta, phi = texture(BOX, hbar=0.8)
    pot = PotentialSet.from_angles(BOX, S, theta, phi, k)
    A_I, B_I = internal_potential(pot)
    # independent route: spectral curl of the internal potential
    np.testing.assert_allclose(curl(A_I, BOX), B_I, atol=1e-10)
    np.testing.assert_allclose(B_I, -(k.c / k.charge) * vorticity_vector(pot), atol=1e-14)
    # M = grad S - (e/c) A_I
    gS = momentum_field(pot) - 0.5 * k.hbar * np.cos(theta) * pot.grad_phi()
    np.testing.assert_allclose(momentum_field(pot), gS - (k.charge / k.c) * A_I, atol=1e-12)
    with pytest.raises(ValueError):
        internal_potential(PotentialSet.from_angles(BOX, S, theta, phi, Constants(charge=0.0)))


@pytest.mark.parametrize("winding", [1, 2, -1])
def test_vortex_circulation_is_quantized(winding):
    g = Grid.centered(32, 6.0)
    st_ = initial_state("vortex", g, winding=winding, sigma=1.5, center=(0.13, -0.07, 0.0))
    pot = PotentialSet.from_spinor(st_.psi, g)
    _, B_int = internal_potential(pot)
    loop = circle_loop((0.13, -0.07, 0.0), 1.5, n=512)
    cap = disk_cap((0.13, -0.07, 0.0), 1.5, n=512, rings=96)
    res = circulation_quantum(momentum_field(pot), np.zeros_like(B_int), B_int, g, loop, cap)
    assert res.n_estimate == pytest.approx(winding, abs=1e-3)
    assert res.distance < 1e-3


def test_circulation_rejects_mismatched_cap():
    g = Grid.centered(16, 4.0)
    zero = np.zeros((3,) + g.dims)
    loop = circle_loop(radius=1.0, n=64)
    with pytest.raises(ValueError):
        circulation_quantum(zero, zero, zero, g, loop, disk_cap(radius=1.2, n=64, rings=8))
