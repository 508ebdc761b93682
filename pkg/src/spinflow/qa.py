"""Quasi-classical (QA) dynamics of the potentials (rho, S, theta, phi).

The QA equations are the hydrodynamic spin-1/2 equations without quantum
corrections:

* continuity        ``d_t rho + div(rho v) = 0``
* action            ``d_t S + (hbar/2) cos(theta) d_t phi + e Phi + (m/2) v^2 + mu.B + V = 0``
* spin transport    ``D_t h = -(e/mc) B x h``  (``D_t = d_t + v.grad``)

with ``m v = grad S - (e/c) A + (hbar/2) cos(theta) grad phi`` and
``mu = -(e/mc)(hbar/2) h``.  Three discretizations are provided:

``potentials``
    RK4 on (rho, S, h) fields with angle-valued data differentiated through
    exponentials.  Needs phi to be free of isolated poles.
``transport``
    RK4 on the equivalent first-order spinor equation
    ``i hbar (D_t + div(v)/2) psi = [e Phi + V - m v^2/2 - (e/c) v.A + mu_B sigma.B] psi``,
    regular wherever rho > 0, so it handles textures with poles.
``semilinear``
    ``i hbar d_t psi = H psi - R(psi)`` with the nonlinear term ``R`` built
    from ``f_k = grad sqrt(rho)/sqrt(rho) + grad u/u - (i/2) cos(theta) grad phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clebsch import PotentialSet, current_over_density, momentum_field, vorticity_vector
from .emfield import EMConfig
from .fieldkit import (Constants, Grid, cross, curl, divergence, dot, gradient, integrate_volume,
                       interpolate, phase_gradient, spectral_interpolator)
from .pauli import apply_hamiltonian, sigma_dot
from .spinor import angles_from_spinor, angles_from_vector, bilinear, spinor_from_angles, unit_vector

CAUSTIC_GRADIENT = 50.0   # halt when max |grad v| exceeds this over dx
NEGATIVE_RHO = -1e-10
CFL_LIMIT = 0.5
POLE_EPS = 1e-6
VELOCITY_REG = 1e-10     # transport form: v = j / (rho + VELOCITY_REG * max rho)


class NumericalHalt(RuntimeError):
    """Solver stopped on purpose; ``time`` is the time of the offending state."""

    def __init__(self, msg, time):
        super().__init__(f"{msg} at t={time:.6g}")
        self.time = time


class CausticHalt(NumericalHalt):
    pass


class CFLError(NumericalHalt):
    pass


def _wrap(x, period):
    return x - period * np.ceil(x / period - 0.5)


@dataclass
class QAState:
    grid: Grid
    rho: np.ndarray
    S: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for f in (self.rho, self.S, self.theta, self.phi):
            self.grid.check(f, rank=())

    @classmethod
    def from_spinor(cls, psi, grid, constants=Constants(), t=0.0):
        a = angles_from_spinor(psi, constants.hbar)
        return cls(grid, a.rho, a.S, a.theta, a.phi, t)

    def spinor(self, constants=Constants()):
        amp = np.sqrt(np.maximum(self.rho, 0.0))
        return amp * spinor_from_angles(2.0 * self.S / constants.hbar, self.theta, self.phi)

    def h(self):
        return unit_vector(self.theta, self.phi)

    def potentials(self, constants=Constants()):
        return PotentialSet.from_angles(self.grid, self.S, self.theta, self.phi, constants)

    def mass(self):
        return float(integrate_volume(self.rho, self.grid))


def _vacuum(rho):
    return rho <= 1e-12 * np.max(rho)


def velocity_field(state: QAState, em: EMConfig | None = None, constants=Constants()):
    """``v = M / m`` from the potentials of ``state``."""
    return momentum_field(state.potentials(constants), em) / constants.mass


def _check_flow(v, rho, grid, dt, t):
    live = ~_vacuum(rho)
    if np.min(rho) < NEGATIVE_RHO:
        raise CausticHalt(f"density went negative ({np.min(rho):.3g})", t)
    if not np.all(np.isfinite(v)):
        raise CausticHalt("non-finite velocity", t)
    dx = grid.min_spacing
    vmax = np.max(np.linalg.norm(v, axis=0)[live]) if np.any(live) else 0.0
    if dt * vmax / dx >= CFL_LIMIT:
        raise CFLError(f"CFL number {dt * vmax / dx:.3g} >= {CFL_LIMIT}", t)
    gv = np.stack([gradient(v[i], grid) for i in range(3)])
    gmax = np.max(np.abs(gv[:, :, live])) if np.any(live) else 0.0
    if gmax > CAUSTIC_GRADIENT / dx:
        raise CausticHalt(f"velocity gradient {gmax:.3g} exceeds {CAUSTIC_GRADIENT}/dx", t)


def _rk4(y, f, dt):
    k1 = f(y)
    k2 = f([a + 0.5 * dt * b for a, b in zip(y, k1)])
    k3 = f([a + 0.5 * dt * b for a, b in zip(y, k2)])
    k4 = f([a + dt * b for a, b in zip(y, k3)])
    return [a + dt / 6.0 * (b + 2 * c + 2 * d + e) for a, b, c, d, e in zip(y, k1, k2, k3, k4)]


# --------------------------------------------------------------------------
# potentials form


def potentials_rhs(rho, S, h, em: EMConfig, constants: Constants):
    """Time derivatives of (rho, S, h) from the QA equations."""
    grid = em.grid
    k = constants
    theta, phi = angles_from_vector(h)
    pot = PotentialSet.from_angles(grid, S, theta, phi, k)
    v = momentum_field(pot, em) / k.mass
    drho = -divergence(rho * v, grid)
    gh = np.stack([gradient(h[i], grid) for i in range(3)])  # (component, direction, ...)
    dh = -np.einsum("j...,ij...->i...", v, gh) - (k.charge / (k.mass * k.c)) * cross(em.B, h)
    den = h[0] ** 2 + h[1] ** 2
    regular = den > POLE_EPS**2
    dphi = np.where(regular, (h[1] * dh[0] - h[0] * dh[1]) / np.where(regular, den, 1.0), 0.0)
    mu_B_dot = k.mu_B * dot(h, em.B)
    dS = -0.5 * k.hbar * np.cos(theta) * dphi - k.charge * em.Phi - 0.5 * k.mass * dot(v, v) - mu_B_dot - em.V
    return drho, dS, dh, v


def _has_isolated_poles(state: QAState):
    live = ~_vacuum(state.rho)
    near = np.sin(state.theta) < 1e-3
    return bool(np.any(near & live) and not np.all(near[live]))


def qa_step(state: QAState, em: EMConfig, dt, constants=Constants(), form="auto"):
    """One RK4 step of the QA equations.

    ``form`` is ``potentials``, ``transport`` or ``auto`` (potentials unless
    phi has isolated poles).  Raises :class:`CFLError` or
    :class:`CausticHalt` instead of producing a caustic-contaminated state.
    """
    if form == "auto":
        form = "transport" if _has_isolated_poles(state) else "potentials"
    k = constants
    if form == "potentials":
        v0 = velocity_field(state, em, k)
        _check_flow(v0, state.rho, state.grid, dt, state.t)

        def f(y):
            drho, dS, dh, _ = potentials_rhs(y[0], y[1], y[2], em, k)
            return [drho, dS, dh]

        rho, S, h = _rk4([state.rho, state.S, state.h()], f, dt)
        theta, phi_new = angles_from_vector(h)
        # keep phi continuous in time, then reduce it together with S
        phi_raw = state.phi + _wrap(phi_new - state.phi, 2 * np.pi)
        pole = np.sin(theta) < 1e-12
        phi_raw = np.where(pole, 0.0, phi_raw)
        phi = _wrap(phi_raw, 2 * np.pi)
        S = S + 0.5 * k.hbar * (phi_raw - phi)
        out = QAState(state.grid, rho, S, theta, phi, state.t + dt)
    elif form == "transport":
        psi = transport_step(state.spinor(k), em, dt, k, state.t)
        out = QAState.from_spinor(psi, state.grid, k, state.t + dt)
    else:
        raise ValueError(f"unknown QA form {form!r}")
    if np.min(out.rho) < NEGATIVE_RHO:
        raise CausticHalt(f"density went negative ({np.min(out.rho):.3g})", out.t)
    return out


# --------------------------------------------------------------------------
# transport (regular spinor) form


def spinor_velocity(psi, em: EMConfig, constants: Constants):
    k = constants
    vel = k.hbar * current_over_density(psi, em.grid, regularize=VELOCITY_REG)
    if em.has_vector_potential:
        vel = vel - (k.charge / k.c) * em.A
    return vel / k.mass


def transport_rhs(psi, em: EMConfig, constants: Constants):
    k = constants
    grid = em.grid
    v = spinor_velocity(psi, em, k)
    dpsi = np.stack([gradient(psi[a], grid) for a in range(2)])
    adv = np.einsum("j...,aj...->a...", v, dpsi)
    divv = divergence(v, grid)
    scalar = k.charge * em.Phi + em.V - 0.5 * k.mass * dot(v, v) - (k.charge / k.c) * dot(v, em.A)
    rhs = -adv - 0.5 * divv * psi - (1j / k.hbar) * (scalar * psi + k.mu_B * sigma_dot(em.B, psi))
    return rhs, v


def transport_step(psi, em: EMConfig, dt, constants=Constants(), t=0.0):
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    _, v = transport_rhs(psi, em, constants)
    _check_flow(v, rho, em.grid, dt, t)
    (out,) = _rk4([psi], lambda y: [transport_rhs(y[0], em, constants)[0]], dt)
    return out


# --------------------------------------------------------------------------
# semilinear form


def clebsch_f(psi, grid: Grid, constants=Constants()):
    """The complex vectors ``f_k(b)`` for both components, shape (2, 3, ...).

    Zero on masked nodes (vacuum or ``sin(theta) < 1e-6``).
    """
    st = QAState.from_spinor(psi, grid, constants)
    rho = st.rho
    mask = _vacuum(rho) | (np.sin(st.theta) < POLE_EPS)
    amp = np.sqrt(rho)
    g_amp = gradient(amp, grid) / np.where(mask, 1.0, amp)
    g_th = gradient(st.theta, grid)
    g_ph = phase_gradient(st.phi, grid)
    half = 0.5 * st.theta
    tan_h = np.tan(np.where(mask, 0.5, half))
    cot_h = 1.0 / tan_h
    common = g_amp - 0.5j * np.cos(st.theta) * g_ph
    f1 = common - 0.5 * tan_h * g_th + 0.5j * g_ph
    f2 = common + 0.5 * cot_h * g_th - 0.5j * g_ph
    f = np.stack([f1, f2])
    return np.where(mask, 0.0, f), mask


def semilinear_rhs(psi, em: EMConfig, constants=Constants()):
    """``-(hbar^2/2m) [f_k(b) f_k(b) + d_k f_k(b)] psi_b``; zero on masked nodes."""
    grid = em.grid
    f, mask = clebsch_f(psi, grid, constants)
    div_f = np.stack([divergence(f[b], grid) for b in range(2)])
    ff = np.sum(f * f, axis=1)
    out = -(constants.hbar**2 / (2 * constants.mass)) * (ff + div_f) * psi
    return np.where(mask, 0.0, out)


def semilinear_step(psi, em: EMConfig, dt, constants=Constants()):
    """RK4 for ``i hbar d_t psi = H psi - R(psi)``."""
    k = constants

    def f(y):
        p = y[0]
        return [(-1j / k.hbar) * (apply_hamiltonian(p, em, k) - semilinear_rhs(p, em, k))]

    (out,) = _rk4([np.asarray(psi, complex)], f, dt)
    return out


# --------------------------------------------------------------------------
# trajectories and vorticity transport


@dataclass
class Trajectory:
    times: np.ndarray
    positions: np.ndarray   # (N, 3), unwrapped
    theta: np.ndarray
    phi: np.ndarray
    spin: np.ndarray        # (N, 3)


def integrate_trajectory(states, q0, em: EMConfig | None = None, constants=Constants(), interp="linear"):
    """RK4 path ``dq/dt = v(q, t)`` through a uniformly spaced state series.

    Velocities are interpolated in space (``linear``: trilinear, ``spectral``:
    trigonometric, much slower) and linearly in time; the spin direction is
    sampled along the path the same way.
    """
    if interp == "linear":
        sampler = lambda f: (lambda pts: interpolate(f, grid, pts))
    elif interp == "spectral":
        sampler = lambda f: spectral_interpolator(f, grid)
    else:
        raise ValueError(f"unknown interpolation {interp!r}")
    if len(states) < 2:
        raise ValueError("need at least two states")
    grid = states[0].grid
    times = np.array([s.t for s in states])
    dt = times[1] - times[0]
    vel = [sampler(velocity_field(s, em, constants)) for s in states]
    hs = [sampler(s.h()) for s in states]

    def v_at(q, t):
        x = (t - times[0]) / dt
        n = min(int(np.floor(x)), len(states) - 2)
        w = x - n
        va = vel[n](q[None])[:, 0]
        vb = vel[n + 1](q[None])[:, 0]
        return (1 - w) * va + w * vb

    q = np.asarray(q0, float)
    path = [q.copy()]
    for n in range(len(states) - 1):
        t = times[n]
        k1 = v_at(q, t)
        k2 = v_at(q + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = v_at(q + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = v_at(q + dt * k3, t + dt)
        q = q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        path.append(q.copy())
    path = np.array(path)
    h = np.array([hs[n](path[n][None])[:, 0] for n in range(len(states))])
    h /= np.linalg.norm(h, axis=1, keepdims=True)
    theta, phi = angles_from_vector(h.T)
    return Trajectory(times, path, theta, phi, 0.5 * constants.hbar * h)


@dataclass
class VorticityTransportReport:
    times: np.ndarray
    residual: np.ndarray
    relative: np.ndarray
    max_vorticity: np.ndarray = field(default_factory=lambda: np.zeros(0))


def vorticity_transport_check(states, em: EMConfig | None = None, constants=Constants(), order=4):
    """Residual of ``d_t Omega + curl(Omega x v)`` along a uniform series.

    States may be :class:`QAState` or ``(grid, psi, t)`` tuples; the spinor
    route uses the covariant gradients and handles textures with poles.
    Time derivatives use a 5-point (order 4) or 3-point (order 2) stencil.
    """
    omegas, vels, times = [], [], []
    for s in states:
        if isinstance(s, QAState):
            pot = s.potentials(constants)
            grid, t = s.grid, s.t
        else:
            grid, psi, t = s
            pot = PotentialSet.from_spinor(psi, grid, constants)
        omegas.append(vorticity_vector(pot))
        vels.append(momentum_field(pot, em) / constants.mass)
        times.append(t)
    times = np.array(times)
    dt = times[1] - times[0]
    half = 2 if order == 4 else 1
    if len(states) < 2 * half + 1:
        raise ValueError("not enough states for the requested stencil")
    out_t, res, rel, om_max = [], [], [], []
    for n in range(half, len(states) - half):
        if order == 4:
            dOm = (-omegas[n + 2] + 8 * omegas[n + 1] - 8 * omegas[n - 1] + omegas[n - 2]) / (12 * dt)
        else:
            dOm = (omegas[n + 1] - omegas[n - 1]) / (2 * dt)
        R = dOm + curl(cross(omegas[n], vels[n]), grid)
        r = np.sqrt(integrate_volume(dot(R, R), grid))
        scale = np.sqrt(integrate_volume(dot(dOm, dOm), grid))
        out_t.append(times[n])
        res.append(r)
        rel.append(r / scale if scale > 0 else r)
        om_max.append(np.max(np.abs(omegas[n])))
    return VorticityTransportReport(np.array(out_t), np.array(res), np.array(rel), np.array(om_max))


# --------------------------------------------------------------------------
# canonical-equation residual


def rund_residual(state0: QAState, state1: QAState, em: EMConfig | None = None, constants=Constants(),
                  scheme="spectral", return_field=False):
    """Norm of ``D_t M_k + dH/dq_k - d_kQ D_tP + d_kP D_tQ`` at the midpoint time.

    ``M = grad S + P grad Q`` with ``P = (hbar/2) cos(theta)``, ``Q = phi`` and
    ``H(q, p) = (p - eA/c)^2/2m + e Phi + V``.  Requires B = 0 (the Rund
    system here has vanishing gauge function).  The norm is rho-weighted RMS.
    """
    grid = state0.grid
    k = constants
    if em is None:
        em = EMConfig.none(grid)
    if em.has_magnetic_field:
        raise ValueError("rund_residual needs a field-free magnetic configuration")
    dt = state1.t - state0.t
    if dt <= 0:
        raise ValueError("states must be ordered in time")

    def parts(s):
        gS = phase_gradient(s.S, grid, period=np.pi * k.hbar, scheme=scheme)
        gQ = phase_gradient(s.phi, grid, scheme=scheme)
        P = 0.5 * k.hbar * np.cos(s.theta)
        return gS + P * gQ, P, s.phi, gQ

    M0, P0, Q0, gQ0 = parts(state0)
    M1, P1, Q1, gQ1 = parts(state1)
    M = 0.5 * (M0 + M1)
    P = 0.5 * (P0 + P1)
    gQ = 0.5 * (gQ0 + gQ1)
    gP = gradient(P, grid, scheme)
    v = (M - (k.charge / k.c) * em.A) / k.mass
    gM = np.stack([gradient(M[i], grid, scheme) for i in range(3)])
    DtM = (M1 - M0) / dt + np.einsum("j...,ij...->i...", v, gM)
    DtP = (P1 - P0) / dt + dot(v, gP)
    DtQ = _wrap(Q1 - Q0, 2 * np.pi) / dt + dot(v, gQ)
    gA = np.stack([gradient(em.A[i], grid, scheme) for i in range(3)])  # (i, k)
    dH = (-(k.charge / k.c) * np.einsum("i...,ik...->k...", v, gA)
          + k.charge * gradient(em.Phi, grid, scheme) + gradient(em.V, grid, scheme))
    R = DtM + dH - gQ * DtP + gP * DtQ
    rho = 0.5 * (state0.rho + state1.rho)
    norm = float(np.sqrt(integrate_volume(rho * dot(R, R), grid) / integrate_volume(rho, grid)))
    return (norm, R) if return_field else norm


# --------------------------------------------------------------------------
# classical limit


@dataclass
class ClassicalState:
    """hbar -> 0 state.  ``S_period`` > 0 marks S as known only modulo that period
    (as when it was read off a spinor); its gradient then goes through the phase."""

    grid: Grid
    rho: np.ndarray
    S: np.ndarray
    h: np.ndarray
    t: float = 0.0
    S_period: float = 0.0

    def __post_init__(self):
        self.grid.check(self.rho, rank=())
        self.grid.check(self.S, rank=())
        self.grid.check(self.h, rank=(3,))


def classical_rhs(rho, S, h, em: EMConfig, constants: Constants, S_period=0.0):
    grid = em.grid
    k = constants
    gS = phase_gradient(S, grid, period=S_period) if S_period > 0 else gradient(S, grid)
    v = (gS - (k.charge / k.c) * em.A) / k.mass
    drho = -divergence(rho * v, grid)
    dS = -k.charge * em.Phi - 0.5 * k.mass * dot(v, v) - em.V
    gh = np.stack([gradient(h[i], grid) for i in range(3)])
    dh = -np.einsum("j...,ij...->i...", v, gh) - (k.charge / (k.mass * k.c)) * cross(em.B, h)
    return drho, dS, dh, v


def classical_limit_step(state: ClassicalState, em: EMConfig, dt, constants=Constants()):
    """RK4 step of the hbar -> 0 equations (HJ, continuity, precessing transport of h)."""
    k = constants
    per = state.S_period
    _, _, _, v0 = classical_rhs(state.rho, state.S, state.h, em, k, per)
    _check_flow(v0, state.rho, state.grid, dt, state.t)

    def f(y):
        return list(classical_rhs(y[0], y[1], y[2], em, k, per)[:3])

    rho, S, h = _rk4([state.rho, state.S, state.h], f, dt)
    if np.min(rho) < NEGATIVE_RHO:
        raise CausticHalt(f"density went negative ({np.min(rho):.3g})", state.t + dt)
    return ClassicalState(state.grid, rho, S, h, state.t + dt, per)
