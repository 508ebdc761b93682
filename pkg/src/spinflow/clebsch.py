"""Momentum fields from Clebsch potentials and their topological invariants.

The momentum field is ``M = grad S - (e/c) A + (hbar/2) cos(theta) grad phi``.
Its curl, the vorticity ``Omega = (hbar/2) grad cos(theta) x grad phi``,
only depends on the unit spin direction, and for textures with S = 0 the
helicity ``int M.Omega`` equals ``(2 pi hbar)^2`` times the Hopf invariant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .emfield import EMConfig, flat_top_window
from .fieldkit import (Constants, Grid, cross, curl, dot, gradient, integrate_line,
                       integrate_surface, integrate_volume, phase_gradient, surface_boundary)
from .spinor import angles_from_spinor, bilinear


def _safe_div(num, den, floor):
    return num / np.maximum(den, floor)


def current_over_density(psi, grid: Grid, rho_floor=None, scheme="spectral", regularize=None):
    """``Im(psi^dagger grad psi) / rho``; zero on vacuum nodes.

    ``regularize=eps`` instead divides by ``rho + eps * max(rho)``, a smooth
    cutoff that keeps round-off in far tails from producing huge values.
    """
    dpsi = np.stack([gradient(psi[a], grid, scheme) for a in range(2)])  # (2, 3, ...)
    j = np.imag(np.sum(np.conj(psi)[:, None] * dpsi, axis=0))
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    if regularize is not None:
        return j / (rho + regularize * rho.max())
    floor = 1e-12 * rho.max() if rho_floor is None else rho_floor
    return np.where(rho > floor, j / np.maximum(rho, floor), 0.0)


def component_phase_gradients(psi, grid: Grid, rho_floor=None, scheme="spectral"):
    """``Im(psi_a^* grad psi_a) / |psi_a|^2`` for each component (2, 3, ...)."""
    dpsi = np.stack([gradient(psi[a], grid, scheme) for a in range(2)])
    dens = np.abs(psi) ** 2
    floor = 1e-12 * np.sum(dens, axis=0).max() if rho_floor is None else rho_floor
    out = np.imag(np.conj(psi)[:, None] * dpsi)
    return np.where(dens[:, None] > floor, out / np.maximum(dens[:, None], floor), 0.0)


@dataclass
class PotentialSet:
    """Clebsch potentials ``S, theta, phi`` on a grid.

    When built with :meth:`from_spinor` the spinor is kept and gradients
    use gauge-covariant spinor combinations; otherwise angle-valued fields
    are differentiated through their exponentials so stored branch cuts of
    S (modulo pi*hbar) and phi (modulo 2 pi) are harmless.
    """

    grid: Grid
    S: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    constants: Constants = Constants()
    psi: np.ndarray | None = None
    scheme: str = "spectral"

    def __post_init__(self):
        for f in (self.S, self.theta, self.phi):
            self.grid.check(f, rank=())

    @classmethod
    def from_spinor(cls, psi, grid, constants=Constants(), scheme="spectral"):
        ang = angles_from_spinor(psi, constants.hbar)
        return cls(grid, ang.S, ang.theta, ang.phi, constants, np.asarray(psi, complex), scheme)

    @classmethod
    def from_angles(cls, grid, S, theta, phi, constants=Constants(), scheme="spectral"):
        return cls(grid, np.asarray(S, float), np.asarray(theta, float), np.asarray(phi, float),
                   constants, None, scheme)

    @property
    def cos_theta(self):
        return np.cos(self.theta)

    def canonical_momentum(self):
        """``grad S + (hbar/2) cos(theta) grad phi`` (no vector potential)."""
        hb = self.constants.hbar
        if self.psi is not None:
            return hb * current_over_density(self.psi, self.grid, scheme=self.scheme)
        gS = phase_gradient(self.S, self.grid, period=np.pi * hb, scheme=self.scheme)
        return gS + 0.5 * hb * self.cos_theta * self.grad_phi()

    def grad_phi(self):
        if self.psi is not None:
            d = component_phase_gradients(self.psi, self.grid, scheme=self.scheme)
            return d[0] - d[1]
        return phase_gradient(self.phi, self.grid, scheme=self.scheme)

    def grad_cos_theta(self):
        if self.psi is not None:
            rho = np.sum(np.abs(self.psi) ** 2, axis=0)
            h3 = _safe_div(np.abs(self.psi[0]) ** 2 - np.abs(self.psi[1]) ** 2, rho, 1e-300)
            return gradient(h3, self.grid, self.scheme)
        return gradient(self.cos_theta, self.grid, self.scheme)


def momentum_field(pot: PotentialSet, em: EMConfig | None = None):
    """``M = grad S - (e/c) A + (hbar/2) cos(theta) grad phi``."""
    M = pot.canonical_momentum()
    if em is not None:
        if em.grid.dims != pot.grid.dims:
            raise ValueError("potentials and fields live on different grids")
        k = pot.constants
        M = M - (k.charge / k.c) * em.A
    return M


def vorticity_vector(pot: PotentialSet):
    """``Omega = (hbar/2) grad cos(theta) x grad phi``.

    With a spinor at hand this is evaluated as ``(hbar/2) T(h)`` from the
    unit spin field, which stays regular where phi is undefined.
    """
    if pot.psi is not None:
        rho = np.sum(np.abs(pot.psi) ** 2, axis=0)
        live = rho > 1e-12 * rho.max()
        h = bilinear(pot.psi) / np.where(live, rho, 1.0)
        h = np.where(live, h, np.array([0.0, 0.0, 1.0]).reshape(3, 1, 1, 1))
        return 0.5 * pot.constants.hbar * takabayasi_vector(h, pot.grid, pot.scheme, tol=1e-6)
    return 0.5 * pot.constants.hbar * cross(pot.grad_cos_theta(), pot.grad_phi())


def takabayasi_vector(h, grid: Grid, scheme="spectral", tol=1e-8):
    """``T_i = 1/2 eps_ijk h.(d_j h x d_k h)`` for a unit vector field."""
    h = grid.check(h, rank=(3,))
    if np.max(np.abs(dot(h, h) - 1.0)) > tol:
        raise ValueError("takabayasi_vector needs a unit vector field")
    dh = [np.stack([gradient(h[m], grid, scheme)[j] for m in range(3)]) for j in range(3)]
    return np.stack([
        dot(h, cross(dh[1], dh[2])),
        dot(h, cross(dh[2], dh[0])),
        dot(h, cross(dh[0], dh[1])),
    ])


def helicity(M, Omega, grid: Grid):
    return float(integrate_volume(dot(M, Omega), grid))


def connection_field(z, grid: Grid, scheme="spectral"):
    """``C = -2i z^dagger grad z = 2 Im(z^dagger grad z)`` (normalized per node)."""
    return 2.0 * current_over_density(z, grid, scheme=scheme)


def tail_fraction(density, grid: Grid, shell=0.75):
    """Share of ``int density`` coming from the outer shell of the box."""
    q = grid.coords
    s = np.zeros(grid.dims)
    for a in range(3):
        half = 0.5 * grid.lengths[a]
        mid = grid.origin[a] + half - 0.5 * grid.spacing[a]
        s = np.maximum(s, np.abs(q[a] - mid) / half)
    total = integrate_volume(density, grid)
    outer = integrate_volume(np.where(s > shell, density, 0.0), grid)
    return abs(outer) / max(abs(total), 1e-300)


def hopf_invariant(C, grid: Grid, scheme="spectral", tail_tol=0.01):
    """Whitehead integral ``(1/16 pi^2) int C . curl C``."""
    C = grid.check(C, rank=(3,))
    dens = dot(C, curl(C, grid, scheme))
    gamma = float(integrate_volume(dens, grid)) / (16.0 * np.pi**2)
    tail = tail_fraction(dens, grid)
    if tail > tail_tol and abs(gamma) > 1e-8:
        warnings.warn(f"boundary tail carries {tail:.2%} of the Hopf integral", RuntimeWarning)
    return gamma


def hopf_texture(grid: Grid, scale=1.0, center=(0.0, 0.0, 0.0), mirror=False, taper=None):
    """Unit spinor field of the standard Hopf texture.

    Inverse stereographic projection of q/scale onto the 3-sphere,
    ``(X, Y, Z, W)``, then ``z = (X + iY, Z + iW)``.  ``mirror`` reflects the
    first coordinate, which reverses the linking orientation.

    ``taper=(inner, outer)`` blends the field into its limit value (0, i)
    with a flat-top window (fractions of the half box), making it smooth
    across the periodic boundary without changing its topology.
    """
    c = np.asarray(center, float)
    q = (grid.coords - c.reshape(3, 1, 1, 1)) / scale
    x, y, zc = q
    if mirror:
        x = -x
    r2 = x * x + y * y + zc * zc
    d = 1.0 + r2
    z = np.stack([(2 * x + 2j * y) / d, (2 * zc + 1j * (r2 - 1.0)) / d])
    if taper is not None:
        W = flat_top_window(grid, inner=taper[0], outer=taper[1], center=tuple(c))
        z = W * z + (1.0 - W) * np.array([0.0, 1.0j]).reshape(2, 1, 1, 1)
        z = z / np.sqrt(np.sum(np.abs(z) ** 2, axis=0))
    return z


def internal_potential(pot: PotentialSet):
    """Internal gauge potential and its field.

    ``A_I = -(hbar c / 2e) cos(theta) grad phi`` so that
    ``M = grad S - (e/c)(A + A_I)``; away from poles
    ``B_I = curl A_I = -(c/e) Omega``.
    """
    k = pot.constants
    if k.charge == 0:
        raise ValueError("internal potential needs a nonzero charge")
    A_I = -(k.hbar * k.c / (2.0 * k.charge)) * pot.cos_theta * pot.grad_phi()
    B_I = -(k.c / k.charge) * vorticity_vector(pot)
    return A_I, B_I


@dataclass
class CirculationResult:
    circulation: float
    flux: float
    n_estimate: float
    distance: float


def circulation_quantum(M, B_ext, B_int, grid: Grid, loop, cap, constants=Constants(), tol=1e-6):
    """Quantized circulation ``(oint M.dq + (e/c) iint (B_ext + B_int).dS) / h``.

    ``cap`` is ``(vertices, triangles)`` spanning ``loop``.
    """
    verts, tris = cap
    rim = surface_boundary(verts, tris)
    if len(rim) == 0:
        raise ValueError("cap is a closed surface; it must span the loop")
    loop = np.asarray(loop, float)
    gap = np.min(np.linalg.norm(rim[:, None, :] - loop[None, :-1, :], axis=-1), axis=1)
    if np.max(gap) > tol:
        raise ValueError(f"cap boundary misses the loop by {np.max(gap):.3g}")
    circ = integrate_line(M, grid, loop)
    flux = integrate_surface(np.asarray(B_ext) + np.asarray(B_int), grid, verts, tris)
    n = (circ + constants.charge / constants.c * flux) / constants.h
    return CirculationResult(circ, flux, n, abs(n - round(n)))
