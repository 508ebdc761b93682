"""Two-component spinors: Hopf map, Euler-angle parametrization, SU(2) -> SO(3).

Angle convention: the unit vector attached to a spinor is
``h = (sin(theta) sin(phi), sin(theta) cos(phi), cos(theta))``, i.e. phi is
measured from the second axis.  Spinor arrays carry the component index
first, so a single spinor has shape ``(2,)`` and a field ``(2, n1, n2, n3)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA0 = np.eye(2, dtype=complex)
SIGMA = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

NORM_TOL = 1e-12


def bilinear(psi, chi=None):
    """The real 3-vector ``psi^dagger sigma^i chi`` (``chi`` defaults to ``psi``)."""
    psi = np.asarray(psi, complex)
    chi = psi if chi is None else np.asarray(chi, complex)
    p1, p2 = psi[0], psi[1]
    c1, c2 = chi[0], chi[1]
    x = np.conj(p1) * c2 + np.conj(p2) * c1
    y = -1j * np.conj(p1) * c2 + 1j * np.conj(p2) * c1
    z = np.conj(p1) * c1 - np.conj(p2) * c2
    out = np.stack([x, y, z])
    return out.real if chi is psi else out


def spin_density_vector(psi):
    """``rho * h`` for an unnormalized spinor (regular everywhere)."""
    return bilinear(psi)


def hopf_map(z):
    """Unit vector ``h^i = z^dagger sigma^i z`` of a normalized spinor (or field)."""
    z = np.asarray(z, complex)
    norm2 = np.abs(z[0]) ** 2 + np.abs(z[1]) ** 2
    if np.max(np.abs(norm2 - 1.0)) > NORM_TOL:
        raise ValueError("hopf_map needs a normalized spinor")
    return bilinear(z)


def spinor_from_angles(chi, theta, phi):
    """``exp(i chi/2) * (cos(theta/2) e^{i phi/2}, i sin(theta/2) e^{-i phi/2})``."""
    chi, theta, phi = np.broadcast_arrays(*(np.asarray(a, float) for a in (chi, theta, phi)))
    g = np.exp(0.5j * chi)
    return np.stack([
        g * np.cos(0.5 * theta) * np.exp(0.5j * phi),
        g * 1j * np.sin(0.5 * theta) * np.exp(-0.5j * phi),
    ])


def unit_vector(theta, phi):
    return np.stack([np.sin(theta) * np.sin(phi), np.sin(theta) * np.cos(phi), np.cos(theta)])


def angles_from_vector(h):
    """Polar angles of a unit vector in the same convention (phi = 0 on the axis)."""
    h = np.asarray(h, float)
    theta = np.arccos(np.clip(h[2], -1.0, 1.0))
    phi = np.arctan2(h[0], h[1])
    return theta, phi


@dataclass
class SpinorAngles:
    rho: np.ndarray
    S: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    vacuum: np.ndarray   # rho below floor
    pole: np.ndarray     # theta at 0 or pi, phi set to 0 by convention


def _wrap(x, period):
    """Reduce to (-period/2, period/2]."""
    return x - period * np.ceil(x / period - 0.5)


def angles_from_spinor(psi, hbar=1.0, rho_floor=None, pole_tol=1e-12):
    """Invert ``psi_a = sqrt(rho) e^{iS/hbar} u_a(theta, phi)``.

    ``phi`` is reduced to (-pi, pi]; ``S`` absorbs the matching multiple of
    pi*hbar so that ``spinor_from_angles(2S/hbar, theta, phi) * sqrt(rho)``
    reproduces ``psi`` itself, and is then reduced modulo 2*pi*hbar.  At the
    poles phi is 0 and the phase of the surviving component fixes ``S``.
    Vacuum nodes (rho below ``rho_floor``, default 1e-12 * max rho) are
    flagged and receive rho as computed and zero angles.
    """
    psi = np.asarray(psi, complex)
    a1, a2 = np.abs(psi[0]), np.abs(psi[1])
    rho = a1**2 + a2**2
    if rho_floor is None:
        rho_floor = 1e-12 * np.max(rho)
    vacuum = rho <= rho_floor
    theta = 2.0 * np.arctan2(a2, a1)
    arg1 = np.angle(psi[0])
    arg2 = np.angle(psi[1])
    amp = np.sqrt(np.where(vacuum, 1.0, rho))
    north = a2 <= pole_tol * amp
    south = a1 <= pole_tol * amp
    pole = (north | south) & ~vacuum
    # at the north pole phi := 0 means arg2 = arg1 + pi/2; at the south arg1 = arg2 - pi/2
    arg2 = np.where(north, arg1 + 0.5 * np.pi, arg2)
    arg1 = np.where(south & ~north, arg2 - 0.5 * np.pi, arg1)
    phi_raw = arg1 - arg2 + 0.5 * np.pi
    S_raw = 0.5 * hbar * (arg1 + arg2 - 0.5 * np.pi)
    phi = _wrap(phi_raw, 2 * np.pi)
    # each 2 pi removed from phi flips the sign of u; compensate in S
    S_raw = S_raw + 0.5 * hbar * (phi_raw - phi)
    S = _wrap(S_raw, 2 * np.pi * hbar)
    theta = np.where(vacuum, 0.0, theta)
    phi = np.where(vacuum | pole, 0.0, phi)
    S = np.where(vacuum, 0.0, S)
    return SpinorAngles(rho, S, theta, phi, vacuum, pole)


def tangent_vector(chi, theta, phi):
    """Unit vector orthogonal to ``h``, rotating with the phase angle ``chi``."""
    chi, theta, phi = np.broadcast_arrays(*(np.asarray(a, float) for a in (chi, theta, phi)))
    cx, sx = np.cos(chi), np.sin(chi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    return np.stack([
        cx * cp - sx * ct * sp,
        -cx * sp - sx * ct * cp,
        sx * st,
    ])


def symplectic_bracket_vector(z):
    """Complex 3-vector ``{z, sigma^i z} = z1 (sigma^i z)_2 - z2 (sigma^i z)_1``."""
    z = np.asarray(z, complex)
    sz = np.einsum("iab,b...->ia...", SIGMA, z)
    return z[0] * sz[:, 1] - z[1] * sz[:, 0]


@dataclass(frozen=True)
class SU2Matrix:
    """``[[alpha, beta], [-conj(beta), conj(alpha)]]`` with unit determinant."""

    alpha: complex
    beta: complex

    def __post_init__(self):
        det = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(det - 1.0) > NORM_TOL:
            raise ValueError(f"not unitary: |alpha|^2 + |beta|^2 = {det}")

    @property
    def matrix(self):
        a, b = self.alpha, self.beta
        return np.array([[a, b], [-np.conj(b), np.conj(a)]], dtype=complex)

    @classmethod
    def from_matrix(cls, U, tol=NORM_TOL):
        U = np.asarray(U, complex)
        if np.max(np.abs(U.conj().T @ U - SIGMA0)) > tol or abs(np.linalg.det(U) - 1) > tol:
            raise ValueError("matrix is not in SU(2)")
        return cls(complex(U[0, 0]), complex(U[0, 1]))

    @classmethod
    def random(cls, rng):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        return cls(complex(q[0], q[1]), complex(q[2], q[3]))

    @classmethod
    def axis_angle(cls, axis, angle):
        """``exp(-i angle/2 n.sigma)``."""
        n = np.asarray(axis, float)
        n = n / np.linalg.norm(n)
        U = np.cos(angle / 2) * SIGMA0 - 1j * np.sin(angle / 2) * np.einsum("i,iab->ab", n, SIGMA)
        return cls.from_matrix(U, tol=1e-10)

    def __matmul__(self, other):
        return SU2Matrix.from_matrix(self.matrix @ other.matrix, tol=1e-10)

    def __neg__(self):
        return SU2Matrix(-self.alpha, -self.beta)


def spinor_rotation(U):
    """Rotation ``R`` with ``U (q.sigma) U^-1 = (R q).sigma``."""
    if not isinstance(U, SU2Matrix):
        U = SU2Matrix.from_matrix(U)
    M = U.matrix
    conj = np.einsum("ab,kbc,dc->kad", M, SIGMA, M.conj())  # U sigma_k U^dagger
    # (R q)_i = 1/2 tr(sigma_i U (q.sigma) U^dagger)
    R = 0.5 * np.einsum("iab,kba->ik", SIGMA, conj).real
    return R


def pauli_identity_check():
    """Verify the anticommutator and product rules of the Pauli matrices entrywise."""
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[j, i, k] = -1.0
    anti = 0.0
    prod = 0.0
    for i in range(3):
        for k in range(3):
            a = SIGMA[i] @ SIGMA[k] + SIGMA[k] @ SIGMA[i]
            anti = max(anti, np.max(np.abs(a - 2.0 * (i == k) * SIGMA0)))
            # sigma_i sigma_k = delta_ik + i eps_lik sigma_l
            rhs = (i == k) * SIGMA0 + 1j * np.einsum("l,lab->ab", eps[:, i, k], SIGMA)
            prod = max(prod, np.max(np.abs(SIGMA[i] @ SIGMA[k] - rhs)))
    square_sum = np.max(np.abs(sum(s @ s for s in SIGMA) - 3 * SIGMA0))
    return {
        "anticommutator": bool(anti == 0.0),
        "product_rule": bool(prod == 0.0),
        "square_sum": bool(square_sum == 0.0),
        "max_error": max(anti, prod, square_sum),
    }
