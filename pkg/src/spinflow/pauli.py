"""Pseudo-spectral Pauli solver: Hamiltonian, steppers, observables, initial data.

``i hbar d_t psi = H psi`` with
``H = e Phi + V - (hbar^2/2m) (grad - i e A / hbar c)^2 + mu_B sigma.B``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .clebsch import hopf_texture
from .emfield import EMConfig
from .fieldkit import Constants, Grid, fft_workers, gradient, integrate_volume, laplacian, partial
from .spinor import bilinear, spinor_from_angles

C_STAB = 0.5
RK4_IMAG_AXIS = 2.0 * np.sqrt(2.0)  # RK4 stability limit on the imaginary axis


class StabilityError(RuntimeError):
    def __init__(self, msg, time=0.0):
        super().__init__(msg)
        self.time = time


@dataclass
class PauliState:
    grid: Grid
    psi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.psi = np.asarray(self.grid.check(self.psi, rank=(2,)), complex)

    @property
    def rho(self):
        return np.sum(np.abs(self.psi) ** 2, axis=0)

    def norm(self):
        return float(integrate_volume(self.rho, self.grid))


@dataclass
class Observables:
    norm: float
    q_mean: np.ndarray
    p_mean: np.ndarray
    s_mean: np.ndarray
    energy: float


def sigma_dot(B, psi):
    """``(sigma . B) psi`` node by node."""
    return np.stack([
        B[2] * psi[0] + (B[0] - 1j * B[1]) * psi[1],
        (B[0] + 1j * B[1]) * psi[0] - B[2] * psi[1],
    ])


def covariant_laplacian(psi, em: EMConfig, constants: Constants):
    """``(grad - i alpha A)^2 psi`` with alpha = e / (hbar c), per component."""
    grid = em.grid
    if not em.has_vector_potential:
        return np.stack([laplacian(psi[a], grid) for a in range(2)])
    alpha = constants.charge / (constants.hbar * constants.c)
    out = np.zeros_like(psi)
    for a in range(2):
        for k in range(3):
            Dk = partial(psi[a], grid, k) - 1j * alpha * em.A[k] * psi[a]
            out[a] += partial(Dk, grid, k) - 1j * alpha * em.A[k] * Dk
    return out


def apply_hamiltonian(psi, em: EMConfig, constants: Constants = Constants()):
    psi = em.grid.check(psi, rank=(2,))
    k = constants
    kin = -(k.hbar**2 / (2 * k.mass)) * covariant_laplacian(psi, em, k)
    scalar = k.charge * em.Phi + em.V
    return kin + scalar * psi + k.mu_B * sigma_dot(em.B, psi)


def spectral_energy_bound(em: EMConfig, constants: Constants):
    """Upper bound on |eigenvalue| of the discrete Hamiltonian."""
    k = constants
    grid = em.grid
    alpha = abs(k.charge / (k.hbar * k.c))
    kin = sum((kmax + alpha * np.max(np.abs(em.A[i]))) ** 2 for i, kmax in enumerate(grid.k_max))
    Bmag = np.sqrt(np.sum(em.B**2, axis=0))
    return (k.hbar**2 / (2 * k.mass)) * kin + np.max(np.abs(k.charge * em.Phi + em.V)) + abs(k.mu_B) * np.max(Bmag)


def rk4_dt_limit(em: EMConfig, constants: Constants = Constants(), c_stab=C_STAB):
    return c_stab * RK4_IMAG_AXIS * constants.hbar / spectral_energy_bound(em, constants)


def _potential_propagator(em: EMConfig, constants: Constants, tau):
    """Node-wise ``exp(-i tau [(e Phi + V) + mu_B sigma.B] / hbar)`` as (2, 2, ...)."""
    k = constants
    w0 = (k.charge * em.Phi + em.V) * tau / k.hbar
    b = k.mu_B * em.B * tau / k.hbar
    bn = np.sqrt(np.sum(b**2, axis=0))
    safe = np.where(bn > 0, bn, 1.0)
    n = b / safe
    c, s = np.cos(bn), np.sin(bn)
    ph = np.exp(-1j * w0)
    U = np.empty((2, 2) + em.grid.dims, complex)
    U[0, 0] = ph * (c - 1j * s * n[2])
    U[0, 1] = ph * (-1j * s * (n[0] - 1j * n[1]))
    U[1, 0] = ph * (-1j * s * (n[0] + 1j * n[1]))
    U[1, 1] = ph * (c + 1j * s * n[2])
    return U


def _apply_node_matrix(U, psi):
    return np.stack([U[0, 0] * psi[0] + U[0, 1] * psi[1], U[1, 0] * psi[0] + U[1, 1] * psi[1]])


def strang_step(psi, em: EMConfig, constants: Constants, dt, cache=None):
    if em.has_vector_potential:
        raise ValueError("Strang splitting is only available without a vector potential")
    k = constants
    grid = em.grid
    if cache is None or cache.get("dt") != dt:
        cache = {} if cache is None else cache
        cache["dt"] = dt
        cache["half"] = _potential_propagator(em, k, 0.5 * dt)
        cache["kin"] = np.exp(-1j * k.hbar * grid.k_squared * dt / (2 * k.mass))
    w = fft_workers()
    psi = _apply_node_matrix(cache["half"], psi)
    psi = sfft.ifftn(sfft.fftn(psi, axes=(1, 2, 3), workers=w) * cache["kin"], axes=(1, 2, 3), workers=w)
    return _apply_node_matrix(cache["half"], psi)


def rk4_step(psi, em: EMConfig, constants: Constants, dt):
    f = lambda p: (-1j / constants.hbar) * apply_hamiltonian(p, em, constants)
    k1 = f(psi)
    k2 = f(psi + 0.5 * dt * k1)
    k3 = f(psi + 0.5 * dt * k2)
    k4 = f(psi + dt * k3)
    return psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def pauli_step(state: PauliState, em: EMConfig, dt, method="rk4", constants: Constants = Constants(),
               cache=None):
    """Advance ``state`` by ``dt`` with ``rk4`` or ``strang``."""
    if method == "strang":
        psi = strang_step(state.psi, em, constants, dt, cache)
    elif method == "rk4":
        if cache is not None and cache.get("em") is em:
            limit = cache["limit"]
        else:
            limit = rk4_dt_limit(em, constants)
            if cache is not None:
                cache.update(em=em, limit=limit)
        if dt > limit:
            raise StabilityError(f"dt={dt:.3g} exceeds RK4 stability bound {limit:.3g}", state.t)
        psi = rk4_step(state.psi, em, constants, dt)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PauliState(state.grid, psi, state.t + dt)


def evolve(state: PauliState, em: EMConfig, dt, steps, method="rk4", constants=Constants(),
           every=1, callback=None):
    """Run ``steps`` steps; ``callback(state)`` is called every ``every`` steps and at t=0."""
    cache = {}
    if callback is not None:
        callback(state)
    for n in range(1, steps + 1):
        state = pauli_step(state, em, dt, method, constants, cache)
        if callback is not None and n % every == 0:
            callback(state)
    return state


def gauge_transform(state: PauliState, em: EMConfig, Lam, constants: Constants = Constants()):
    """``psi -> exp(i e Lam / hbar c) psi``, ``A -> A + grad Lam``."""
    k = constants
    psi = np.exp(1j * k.charge * Lam / (k.hbar * k.c)) * state.psi
    A = em.A + gradient(np.asarray(Lam, float), em.grid)
    em2 = EMConfig(em.grid, em.Phi, em.V, A, em.B, em.label, dict(em.window))
    return PauliState(state.grid, psi, state.t), em2


def kinetic_current(psi, em: EMConfig, constants: Constants):
    """``Re(psi^dagger (-i hbar grad - e A / c) psi) / m``, i.e. rho v."""
    k = constants
    dpsi = np.stack([gradient(psi[a], em.grid) for a in range(2)])
    p = k.hbar * np.imag(np.sum(np.conj(psi)[:, None] * dpsi, axis=0))
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    return (p - (k.charge / k.c) * em.A * rho) / k.mass


def observables(state: PauliState, em: EMConfig, constants: Constants = Constants()):
    grid = state.grid
    rho = state.rho
    k = constants
    q = integrate_volume(rho * grid.coords, grid)
    p = k.mass * integrate_volume(kinetic_current(state.psi, em, k), grid)
    s = 0.5 * k.hbar * integrate_volume(bilinear(state.psi), grid)
    Hpsi = apply_hamiltonian(state.psi, em, k)
    energy = float(np.real(integrate_volume(np.sum(np.conj(state.psi) * Hpsi, axis=0), grid)))
    return Observables(float(integrate_volume(rho, grid)), q, p, s, energy)


# --------------------------------------------------------------------------
# initial data


def _spin_spinor(spin):
    spin = np.asarray(spin)
    if spin.shape == (2,) and np.iscomplexobj(spin):
        return spin / np.linalg.norm(spin)
    theta, phi = float(spin[0]), float(spin[1])
    return spinor_from_angles(0.0, theta, phi)


def _normalize(psi, grid):
    n = integrate_volume(np.sum(np.abs(psi) ** 2, axis=0), grid)
    return psi / np.sqrt(n)


def _check_sigma(sigma, grid):
    sig = np.broadcast_to(np.asarray(sigma, float), 3)
    for i, s in enumerate(sig):
        if np.isfinite(s) and s < 3 * grid.spacing[i] * (1 - 1e-9):
            raise ValueError(f"sigma={s:.3g} on axis {i + 1} is below 3 grid spacings")
    return sig


def _check_k(k, grid):
    k = np.broadcast_to(np.asarray(k, float), 3)
    for i, ki in enumerate(k):
        if abs(ki) > 0.5 * grid.k_max[i]:
            raise ValueError(f"wavenumber {ki:.3g} on axis {i + 1} above half the Nyquist limit")
    return k


def gaussian_envelope(grid, center, sigma):
    """``exp(-sum (q_i - c_i)^2 / 4 sigma_i^2)``; infinite sigma means uniform along that axis."""
    q = grid.coords
    out = np.ones(grid.dims)
    for i in range(3):
        if np.isfinite(sigma[i]):
            out = out * np.exp(-((q[i] - center[i]) ** 2) / (4 * sigma[i] ** 2))
    return out


def initial_state(kind, grid: Grid, constants: Constants = Constants(), **params):
    """Standard initial data, normalized to one.

    kinds and parameters:

    * ``gaussian``: center, sigma (scalar or per axis, ``inf`` = uniform),
      k (wave vector), spin ((theta, phi) or a complex 2-vector)
    * ``plane_wave``: k (must fit the box), spin
    * ``vortex``: winding, sigma, axis (0..2), sigma_axis, center, spin
    * ``hopf_texture_weighted``: scale, sigma, center, taper
    """
    center = np.asarray(params.get("center", (0.0, 0.0, 0.0)), float)
    spin = params.get("spin", (0.0, 0.0))
    q = grid.coords
    if kind == "gaussian":
        sig = _check_sigma(params.get("sigma", 1.0), grid)
        k = _check_k(params.get("k", (0.0, 0.0, 0.0)), grid)
        env = gaussian_envelope(grid, center, sig)
        phase = np.exp(1j * np.einsum("i,i...->...", k, q - center.reshape(3, 1, 1, 1)))
        psi = _spin_spinor(spin).reshape(2, 1, 1, 1) * (env * phase)
    elif kind == "plane_wave":
        k = _check_k(params.get("k", (0.0, 0.0, 0.0)), grid)
        m = k * np.asarray(grid.lengths) / (2 * np.pi)
        if np.max(np.abs(m - np.round(m))) > 1e-9:
            raise ValueError("plane-wave k is not a multiple of 2 pi / L on every axis")
        phase = np.exp(1j * np.einsum("i,i...->...", k, q))
        psi = _spin_spinor(spin).reshape(2, 1, 1, 1) * phase
    elif kind == "vortex":
        n = int(params.get("winding", 1))
        axis = int(params.get("axis", 2))
        sig = float(params.get("sigma", 1.0))
        sig_axis = float(params.get("sigma_axis", np.inf))
        sigmas = np.full(3, sig)
        sigmas[axis] = sig_axis
        _check_sigma(sigmas, grid)
        a, b = [i for i in range(3) if i != axis]
        w = ((q[a] - center[a]) + 1j * (q[b] - center[b])) / sig
        wn = w**n if n >= 0 else np.conj(w) ** (-n)
        spin = params.get("spin", (0.5 * np.pi, 0.0))
        psi = _spin_spinor(spin).reshape(2, 1, 1, 1) * (wn * gaussian_envelope(grid, center, sigmas))
    elif kind == "hopf_texture_weighted":
        scale = float(params.get("scale", 1.0))
        sig = float(params.get("sigma", 2.5 * scale))
        _check_sigma(sig, grid)
        z = hopf_texture(grid, scale, center, taper=params.get("taper"))
        psi = z * gaussian_envelope(grid, center, np.full(3, sig))
    else:
        raise ValueError(f"unknown initial state kind {kind!r}")
    return PauliState(grid, _normalize(psi, grid), float(params.get("t", 0.0)))


def width(state: PauliState, axis=0):
    """RMS width of the density along one axis."""
    rho = state.rho / state.norm()
    x = state.grid.coords[axis]
    m = integrate_volume(rho * x, state.grid)
    return float(np.sqrt(integrate_volume(rho * (x - m) ** 2, state.grid)))
