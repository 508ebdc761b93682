import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinflow.fieldkit import (Constants, Grid, SnapshotError, circle_loop, cross, curl,
                               spectral_interpolator,
                               derivative, disk_cap, divergence, dot, gradient, integrate_line,
                               integrate_surface, integrate_volume, interpolate, laplacian,
                               partial, phase_gradient, snapshot_read, snapshot_write,
                               surface_boundary)

TWO_PI_BOX = Grid.centered(16, np.pi)
modes = st.integers(min_value=-5, max_value=5)
amps = st.floats(min_value=-2.0, max_value=2.0)


def trig_mode(grid, k):
    q = grid.coords
    arg = k[0] * q[0] + k[1] * q[1] + k[2] * q[2]
    return np.sin(arg), np.cos(arg)


def random_vector_field(grid, rng, kmax=3):
    out = np.zeros((3,) + grid.dims)
    q = grid.coords
    for comp in range(3):
        for _ in range(4):
            k = rng.integers(-kmax, kmax + 1, size=3)
            out[comp] += rng.normal() * np.cos(k[0] * q[0] + k[1] * q[1] + k[2] * q[2] + rng.uniform(0, 6))
    return out


def test_constants_reject_nonpositive_hbar():
    with pytest.raises(ValueError):
        Constants(hbar=0.0)
    k = Constants(hbar=1.0, mass=2.0, charge=-1.0, c=1.0)
    assert k.h == pytest.approx(2 * np.pi)
    # mu_B carries the sign of the charge
    assert k.mu_B == pytest.approx(0.25)


@pytest.mark.parametrize("dims", [(3, 8, 8), (8, 2, 8)])
def test_grid_rejects_tiny_dims(dims):
    with pytest.raises(ValueError):
        Grid(dims, (1.0, 1.0, 1.0))


def test_grid_geometry():
    g = Grid.centered((8, 10, 12), (1.0, 2.0, 3.0))
    assert g.shape == (8, 10, 12)
    assert g.size == 960
    assert g.lengths == pytest.approx((2.0, 4.0, 6.0))
    assert g.volume == pytest.approx(48.0)
    assert g.cell_volume * g.size == pytest.approx(g.volume)
    assert g.axis(0)[0] == pytest.approx(-1.0)
    assert g.k_max[0] == pytest.approx(np.pi / g.spacing[0])
    with pytest.raises(ValueError):
        g.check(np.zeros((8, 10, 11)))


@given(k=st.tuples(modes, modes, modes), a=amps)
def test_spectral_gradient_exact_on_trig_modes(k, a):
    s, c = trig_mode(TWO_PI_BOX, k)
    g = gradient(a * s, TWO_PI_BOX)
    for i in range(3):
        np.testing.assert_allclose(g[i], a * k[i] * c, atol=1e-11)


@given(k=st.tuples(modes, modes, modes))
def test_spectral_laplacian_eigenvalue(k):
    s, _ = trig_mode(TWO_PI_BOX, k)
    np.testing.assert_allclose(laplacian(s, TWO_PI_BOX), -np.dot(k, k) * s, atol=1e-10)


@given(seed=st.integers(0, 2**31 - 1), scheme=st.sampled_from(["spectral", "central2"]))
def test_div_curl_and_curl_grad_vanish(seed, scheme):
    rng = np.random.default_rng(seed)
    F = random_vector_field(TWO_PI_BOX, rng)
    assert np.max(np.abs(divergence(curl(F, TWO_PI_BOX, scheme), TWO_PI_BOX, scheme))) < 1e-10
    f = F[0]
    assert np.max(np.abs(curl(gradient(f, TWO_PI_BOX, scheme), TWO_PI_BOX, scheme))) < 1e-10


@given(seed=st.integers(0, 2**31 - 1))
def test_laplacian_matches_div_grad(seed):
    # band-limited below the Nyquist mode, so the two routes agree exactly
    f = random_vector_field(TWO_PI_BOX, np.random.default_rng(seed))[1]
    lhs = laplacian(f, TWO_PI_BOX)
    rhs = divergence(gradient(f, TWO_PI_BOX), TWO_PI_BOX)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_central_scheme_is_second_order():
    errs = []
    for n in (16, 32):
        g = Grid.centered(n, np.pi)
        s, c = trig_mode(g, (1, 2, 0))
        errs.append(np.max(np.abs(partial(s, g, 1, "central2") - 2 * c)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)


def test_derivative_dispatch_and_errors():
    s, _ = trig_mode(TWO_PI_BOX, (1, 0, 0))
    np.testing.assert_allclose(derivative(s, TWO_PI_BOX, "laplacian"), -s, atol=1e-11)
    with pytest.raises(ValueError):
        derivative(s, TWO_PI_BOX, "hessian")
    with pytest.raises(ValueError):
        partial(s, TWO_PI_BOX, 0, scheme="upwind")
    bad = s.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        derivative(bad, TWO_PI_BOX)


@given(k=st.tuples(modes, modes, modes), period=st.sampled_from([2 * np.pi, np.pi, 0.5]))
def test_phase_gradient_ignores_wrapping(k, period):
    g = Grid.centered(32, np.pi)
    q = g.coords
    # winding angle: k.q advances by a whole period across the box
    angle = period / (2 * np.pi) * (k[0] * q[0] + k[1] * q[1] + k[2] * q[2] + 0.3 * np.sin(q[0]))
    wrapped = np.mod(angle, period)
    d = phase_gradient(wrapped, g, period=period)
    expect = period / (2 * np.pi) * np.stack([k[0] + 0.3 * np.cos(q[0]),
                                              k[1] * np.ones_like(q[0]), k[2] * np.ones_like(q[0])])
    np.testing.assert_allclose(d, expect, atol=1e-9)


def test_integrate_volume_gaussian():
    g = Grid.centered(32, 8.0)
    r2 = np.sum(g.coords**2, axis=0)
    assert integrate_volume(np.exp(-r2), g) == pytest.approx(np.pi**1.5, rel=1e-12)


@given(vec=st.tuples(amps, amps, amps))
def test_dot_cross_identities(vec):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    b = np.asarray(vec)[:, None] * np.ones((3, 4))
    c = cross(a, b)
    assert np.max(np.abs(dot(a, c))) < 1e-12
    assert np.max(np.abs(dot(b, c))) < 1e-12
    np.testing.assert_allclose(c, np.cross(a.T, b.T).T)


def test_interpolate_exact_for_linear_in_cell():
    g = Grid.centered(8, 4.0)
    f = g.coords[0] + 2 * g.coords[1]
    pts = np.array([[0.3, -0.7, 0.1], [1.25, 1.5, -2.0]])
    np.testing.assert_allclose(interpolate(f, g, pts), pts[:, 0] + 2 * pts[:, 1], atol=1e-12)


@given(pt=st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)),
       k=st.tuples(modes, modes, modes))
def test_spectral_interpolator_exact_on_trig_modes(pt, k):
    s, c = trig_mode(TWO_PI_BOX, k)
    f = spectral_interpolator(np.stack([s, c]), TWO_PI_BOX)
    arg = np.dot(k, pt)
    np.testing.assert_allclose(f([pt])[:, 0], [np.sin(arg), np.cos(arg)], atol=1e-12)


@given(radius=st.floats(0.5, 2.5), nx=st.floats(-1, 1), ny=st.floats(-1, 1))
def test_closed_loop_integral_of_gradient_vanishes(radius, nx, ny):
    g = Grid.centered(32, np.pi)
    q = g.coords
    f = np.sin(q[0]) * np.cos(q[1]) + np.cos(q[2])
    loop = circle_loop((0.1, 0.2, 0.0), radius, (nx, ny, 1.0), n=400)
    assert abs(integrate_line(gradient(f, g), g, loop)) < 5e-3


def test_stokes_on_disk_cap():
    g = Grid.centered(48, 4.0)
    q = g.coords
    F = np.stack([-q[1], q[0], np.zeros_like(q[0])]) * np.exp(-0.05 * np.sum(q**2, axis=0))
    F = F * 1.0
    r = 1.3
    loop = circle_loop((0.0, 0.0, 0.0), r, (0, 0, 1), n=512)
    verts, tris = disk_cap((0.0, 0.0, 0.0), r, (0, 0, 1), n=512, rings=64)
    line = integrate_line(F, g, loop)
    flux = integrate_surface(curl(F, g), g, verts, tris)
    assert line == pytest.approx(flux, rel=2e-3)
    rim = surface_boundary(verts, tris)
    assert np.allclose(np.linalg.norm(rim[:, :2], axis=1), r)


def test_open_loop_rejected():
    g = Grid.centered(8, 1.0)
    loop = circle_loop(n=16)[:-1]
    with pytest.raises(ValueError):
        integrate_line(np.zeros((3,) + g.dims), g, loop)


def test_snapshot_round_trip(tmp_path, rng):
    g = Grid((4, 6, 8), (0.5, 0.25, 1.0), (-1.0, 0.0, 2.0))
    fields = {
        "rho": rng.normal(size=g.dims),
        "c": rng.normal(size=g.dims) + 1j * rng.normal(size=g.dims),
        "h": rng.normal(size=(3,) + g.dims),
        "psi": rng.normal(size=(2,) + g.dims) + 1j * rng.normal(size=(2,) + g.dims),
    }
    path = tmp_path / "a.sfs"
    snapshot_write(path, g, fields)
    g2, back = snapshot_read(path, g)
    assert g2 == g
    assert list(back) == list(fields)
    for name in fields:
        np.testing.assert_array_equal(back[name], fields[name])


def test_snapshot_errors(tmp_path):
    g = Grid.centered(4, 1.0)
    path = tmp_path / "x.sfs"
    path.write_bytes(b"NOTSNAP!" + b"\0" * 64)
    with pytest.raises(SnapshotError):
        snapshot_read(path)
    snapshot_write(path, g, {"rho": np.ones(g.dims)})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(SnapshotError):
        snapshot_read(path)
    snapshot_write(path, g, {"rho": np.ones(g.dims)})
    with pytest.raises(SnapshotError):
        snapshot_read(path, Grid.centered(8, 1.0))
    with pytest.raises(SnapshotError):
        snapshot_write(path, g, {"bad": np.ones((5,) + g.dims)})
