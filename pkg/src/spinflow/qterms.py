"""Quantum corrections to the hydrodynamic equations.

Two routes to the same terms are implemented side by side:

* ``compute_LA``: the corrections ``L_S, L_phi, L_theta, L_rho`` that turn the
  QA equations for ``(S, phi, theta, rho)`` into the Pauli equation, written
  out in angles and their first and second derivatives.
* ``compute_G_L0``: the Fisher-type terms ``G`` (spin equation) and ``L0``
  (action equation), built from flux divergences
  ``(1/rho) d_k(rho ...)``.

``correspondence_check`` compares the two pointwise.  ``hydrodynamic_residual``
takes a series of Pauli snapshots and evaluates the corrected equations.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .clebsch import current_over_density
from .emfield import EMConfig
from .fieldkit import Constants, Grid, cross, divergence, dot, gradient, integrate_volume, laplacian, phase_gradient
from .qa import QAState
from .spinor import angles_from_spinor, bilinear

POLE_EPS = 1e-6
MASK_WARN = 0.2


@dataclass
class QuantumTerms:
    """Correction fields on a grid.  ``mask`` marks nodes left out (poles, vacuum)."""

    L_S: np.ndarray | None = None
    L_phi: np.ndarray | None = None
    L_theta: np.ndarray | None = None
    L_rho: np.ndarray | None = None
    G: np.ndarray | None = None
    L0: np.ndarray | None = None
    L0_prime: np.ndarray | None = None
    dL0: np.ndarray | None = None
    mask: np.ndarray | None = None


@dataclass
class _Jet:
    """Pointwise values and first/second derivatives of (rho, theta, phi)."""

    rho: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    grad_rho: np.ndarray
    lap_rho: np.ndarray
    grad_theta: np.ndarray
    lap_theta: np.ndarray
    grad_phi: np.ndarray
    lap_phi: np.ndarray
    mask: np.ndarray
    qpot: np.ndarray | None = None   # lap sqrt(rho) / sqrt(rho)


def _mask(rho, theta, rho_floor=None):
    floor = 1e-12 * np.max(rho) if rho_floor is None else rho_floor
    mask = (np.abs(np.sin(theta)) <= POLE_EPS) | (rho <= floor)
    if np.all(mask):
        raise ValueError("every node is masked (poles or vacuum)")
    return mask


def _jet_from_angles(state: QAState, scheme="spectral", rho_floor=None):
    g = state.grid
    dph = phase_gradient(state.phi, g, scheme=scheme)
    mask = _mask(state.rho, state.theta, rho_floor)
    amp = np.sqrt(np.maximum(state.rho, 0.0))
    qpot = np.where(mask, 0.0, laplacian(amp, g, scheme) / np.where(mask, 1.0, amp))
    return _Jet(state.rho, state.theta, state.phi,
                gradient(state.rho, g, scheme), laplacian(state.rho, g, scheme),
                gradient(state.theta, g, scheme), laplacian(state.theta, g, scheme),
                dph, divergence(dph, g, scheme), mask, qpot)


def _spinor_derivatives(psi, grid, scheme):
    dpsi = np.stack([gradient(psi[a], grid, scheme) for a in range(2)])  # (2, 3, ...)
    lpsi = np.stack([laplacian(psi[a], grid, scheme) for a in range(2)])
    return dpsi, lpsi


def _jet_from_spinor(psi, grid: Grid, hbar=1.0, scheme="spectral", rho_floor=None, derivs=None):
    """Angle derivatives from spectral derivatives of psi, combined node by node.

    With ``l_a = log psi_a``: ``grad phi = Im(grad l_1 - grad l_2)``,
    ``grad theta = sin(theta) Re(grad l_2 - grad l_1)`` and the Laplacians
    follow from ``lap l_a = lap psi_a / psi_a - (grad psi_a / psi_a)^2``.
    Nothing divided by a small amplitude is differentiated again, so
    low-density tails do not leak into the rest of the grid.
    """
    dpsi, lpsi = _spinor_derivatives(psi, grid, scheme) if derivs is None else derivs
    ang = angles_from_spinor(psi, hbar, rho_floor=rho_floor)
    mask = _mask(ang.rho, ang.theta, rho_floor) | ang.vacuum
    live = ~mask
    safe = np.where(live[None], psi, 1.0)
    gl = dpsi / safe[:, None]
    ll = lpsi / safe - np.sum(gl**2, axis=1)
    rho = ang.rho
    grad_rho = 2.0 * np.real(np.sum(np.conj(psi)[:, None] * dpsi, axis=0))
    lap_rho = 2.0 * np.real(np.sum(np.conj(psi) * lpsi, axis=0)) + 2.0 * np.sum(np.abs(dpsi) ** 2, axis=(0, 1))
    st, ct = np.sin(ang.theta), np.cos(ang.theta)
    st_safe = np.where(live, st, 1.0)
    grad_phi = np.imag(gl[0] - gl[1])
    lap_phi = np.imag(ll[0] - ll[1])
    grad_theta = st * np.real(gl[1] - gl[0])
    lap_theta = st * np.real(ll[1] - ll[0]) + ct * dot(grad_theta, grad_theta) / st_safe
    z = lambda f: np.where(live, f, 0.0)
    return _Jet(rho, ang.theta, ang.phi, z(grad_rho), z(lap_rho), z(grad_theta), z(lap_theta),
                z(grad_phi), z(lap_phi), mask)


def _terms_from_jet(jet: _Jet, constants: Constants):
    hb, m = constants.hbar, constants.mass
    live = ~jet.mask
    rho = np.where(live, jet.rho, 1.0)
    st, ct = np.sin(jet.theta), np.cos(jet.theta)
    st_safe = np.where(live, st, 1.0)
    dlog = 0.5 * jet.grad_rho / rho  # grad sqrt(rho) / sqrt(rho)
    qpot = jet.qpot
    if qpot is None:
        qpot = 0.5 * jet.lap_rho / rho - 0.25 * dot(jet.grad_rho, jet.grad_rho) / rho**2
    dth, dph = jet.grad_theta, jet.grad_phi
    gph2, gth2 = dot(dph, dph), dot(dth, dth)
    L_S = hb**2 / (8 * m) * (4 * qpot - st**2 * gph2 - gth2)
    L_phi = hb / (2 * m) * (ct * gph2 - jet.lap_theta / st_safe - dot(jet.grad_rho, dth) / (rho * st_safe))
    L_theta = hb / (2 * m) * (2 * st * dot(dlog, dph) + 2 * ct * dot(dph, dth) + st * jet.lap_phi)
    clean = lambda f: np.where(live, f, 0.0)
    return QuantumTerms(L_S=clean(L_S), L_phi=clean(L_phi), L_theta=clean(L_theta),
                        L_rho=np.zeros(jet.rho.shape), mask=jet.mask)


def compute_LA(state: QAState, constants=Constants(), scheme="spectral", rho_floor=None, psi=None):
    """Angle form of the corrections; ``L_rho`` is identically zero.

    Derivatives come from the angle fields of ``state``, or, when ``psi`` is
    given, from the spinor (see ``_jet_from_spinor``).
    """
    if psi is not None:
        jet = _jet_from_spinor(psi, state.grid, constants.hbar, scheme, rho_floor)
    else:
        jet = _jet_from_angles(state, scheme, rho_floor)
    return _terms_from_jet(jet, constants)


def compute_G_L0(state: QAState, constants=Constants(), scheme="spectral", rho_floor=None):
    """Flux form of the spin term ``G`` and the split ``L0 = L0' + dL0``.

    ``G_k = (hbar/2m)(1/rho) d_j(rho F_kj)`` with the fluxes
    ``F_1 = sin(2 theta) sin(phi) grad phi / 2 - cos(phi) grad theta``,
    ``F_2 = sin(2 theta) cos(phi) grad phi / 2 + sin(phi) grad theta`` and
    ``F_3 = -sin(theta)^2 grad phi``.  ``L0'`` is the spin-gradient energy
    ``-(hbar^2/8m)|grad h|^2`` computed from the unit vector itself and
    ``dL0 = (hbar^2/4m)(lap rho / rho - |grad rho|^2 / (2 rho^2))``, which
    equals ``(hbar^2/2m) lap sqrt(rho) / sqrt(rho)``.
    """
    g = state.grid
    hb, m = constants.hbar, constants.mass
    mask = _mask(state.rho, state.theta, rho_floor)
    live = ~mask
    rho = np.where(live, state.rho, 1.0)
    dth = gradient(state.theta, g, scheme)
    dph = phase_gradient(state.phi, g, scheme=scheme)
    th, ph = state.theta, state.phi
    fluxes = [
        0.5 * np.sin(2 * th) * np.sin(ph) * dph - np.cos(ph) * dth,
        0.5 * np.sin(2 * th) * np.cos(ph) * dph + np.sin(ph) * dth,
        -np.sin(th) ** 2 * dph,
    ]
    G = np.stack([hb / (2 * m) * divergence(state.rho * F, g, scheme) / rho for F in fluxes])
    G = np.where(live, G, 0.0)

    h = state.h()
    dh = np.stack([gradient(h[i], g, scheme) for i in range(3)])  # (3 comps, 3 axes, ...)
    L0p = -hb**2 / (8 * m) * np.sum(dh**2, axis=(0, 1))
    grho = gradient(state.rho, g, scheme)
    dL0 = hb**2 / (4 * m) * (laplacian(state.rho, g, scheme) / rho - 0.5 * dot(grho, grho) / rho**2)
    clean = lambda f: np.where(live, f, 0.0)
    L0p, dL0 = clean(L0p), clean(dL0)
    return QuantumTerms(G=G, L0=L0p + dL0, L0_prime=L0p, dL0=dL0, mask=mask)


def _spin_density_derivatives(psi, dpsi, lpsi):
    """``w = rho h``, its gradient (3 comps, 3 axes) and Laplacian, node by node."""
    w = bilinear(psi)
    dw = np.stack([2.0 * np.real(bilinear(psi, dpsi[:, k])) for k in range(3)], axis=1)
    lw = 2.0 * np.real(bilinear(psi, lpsi)) + 2.0 * sum(np.real(bilinear(dpsi[:, k], dpsi[:, k])) for k in range(3))
    return w, dw, lw


def spin_term(psi, grid: Grid, constants=Constants(), scheme="spectral", rho_floor=None, derivs=None):
    """Regular form ``G = (hbar/2m)(1/rho) d_k(rho h x d_k h)``, valid at the poles too.

    With ``w = rho h`` this is ``(hbar/2m) h x (lap w - (grad rho . grad) w / rho) / rho``,
    evaluated from spectral derivatives of psi.
    """
    dpsi, lpsi = _spinor_derivatives(psi, grid, scheme) if derivs is None else derivs
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    floor = 1e-12 * rho.max() if rho_floor is None else rho_floor
    live = rho > floor
    rs = np.where(live, rho, 1.0)
    w, dw, lw = _spin_density_derivatives(psi, dpsi, lpsi)
    grho = 2.0 * np.real(np.sum(np.conj(psi)[:, None] * dpsi, axis=0))
    inner = lw - np.einsum("k...,ik...->i...", grho, dw) / rs
    G = constants.hbar / (2 * constants.mass) * cross(w / rs, inner) / rs
    return np.where(live, G, 0.0)


@dataclass
class CorrespondenceReport:
    action: float        # max |L_S - L0|
    theta: float         # max |L_theta + G_3 / sin(theta)|
    phi: float           # max |L_phi - (cos(phi) G_1 - sin(phi) G_2) / sin(theta)|
    mean_G: tuple        # int rho G_k
    G_dot_h: float       # max |G . h|
    split: float         # max |L0 - L0' - dL0|
    masked: float        # masked node fraction

    def worst(self):
        return max(self.action, self.theta, self.phi)


def correspondence_check(state: QAState, constants=Constants(), scheme="spectral", rho_floor=None):
    la = compute_LA(state, constants, scheme, rho_floor)
    gl = compute_G_L0(state, constants, scheme, rho_floor)
    live = ~la.mask
    st = np.where(live, np.sin(state.theta), 1.0)
    G = gl.G
    d_action = np.abs(la.L_S - gl.L0)[live]
    d_theta = np.abs(la.L_theta + G[2] / st)[live]
    d_phi = np.abs(la.L_phi - (np.cos(state.phi) * G[0] - np.sin(state.phi) * G[1]) / st)[live]
    h = state.h()
    means = tuple(float(integrate_volume(state.rho * G[i], state.grid)) for i in range(3))
    return CorrespondenceReport(
        action=float(d_action.max()), theta=float(d_theta.max()), phi=float(d_phi.max()),
        mean_G=means, G_dot_h=float(np.max(np.abs(dot(G, h))[live])),
        split=float(np.max(np.abs(gl.L0 - gl.L0_prime - gl.dL0))),
        masked=float(np.mean(la.mask)),
    )


def fisher_identity(state: QAState, constants=Constants(), scheme="spectral"):
    """``(int rho dL0, -(hbar^2/8m) int |grad rho|^2 / rho)``; the two agree."""
    gl = compute_G_L0(state, constants, scheme)
    g = state.grid
    live = ~gl.mask
    rho = np.where(live, state.rho, 1.0)
    grho = gradient(state.rho, g, scheme)
    lhs = integrate_volume(np.where(live, state.rho * gl.dL0, 0.0), g)
    rhs = -constants.hbar**2 / (8 * constants.mass) * integrate_volume(np.where(live, dot(grho, grho) / rho, 0.0), g)
    return float(lhs), float(rhs)


# ---------------------------------------------------------------- residuals

_STENCILS = {
    3: np.array([-0.5, 0.0, 0.5]),
    5: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
}


@dataclass
class ResidualReport:
    """rho-weighted RMS residuals at the middle snapshot."""

    time: float
    continuity: float
    action: float
    spin: float
    theta: float
    phi: float
    masked: float
    include_quantum: bool = True
    fields: dict = field(default_factory=dict, repr=False)

    def row(self):
        d = asdict(self)
        d.pop("fields")
        return d

    def worst(self):
        return max(self.continuity, self.action, self.spin, self.theta, self.phi)


def _weighted_rms(f, rho, live, grid):
    w = np.where(live, rho, 0.0)
    if f.ndim == len(grid.dims) + 1:
        f = np.sqrt(np.sum(f**2, axis=0))
    f = np.where(live, f, 0.0)
    return float(np.sqrt(integrate_volume(w * f**2, grid) / integrate_volume(w, grid)))


def hydrodynamic_residual(snapshots, dt, em: EMConfig | None = None, constants=Constants(),
                          include_quantum=True, t=0.0, scheme="spectral", rho_floor=None,
                          keep_fields=False):
    """Residuals of the hydrodynamic equations along a Pauli solution.

    ``snapshots`` holds 3 or 5 consecutive spinor fields spaced by ``dt``;
    time derivatives use the centered stencil of matching order and all
    fields are evaluated at the middle one (time ``t``).  The equations
    checked are

    * continuity ``d_t rho + div(rho v) = 0``
    * action ``d_t S + (hbar/2) cos(theta) d_t phi + m v^2/2 + e Phi + V + mu_B h.B = L_S``
    * spin ``D_t h + (e/mc) B x h = G`` (regular at the poles)
    * ``D_t theta`` and ``D_t phi`` with ``L_theta`` and ``L_phi`` where sin(theta) > 1e-6.

    With ``include_quantum=False`` every correction is dropped, which turns
    the same check into the QA equations.
    """
    snaps = [np.asarray(p, complex) for p in snapshots]
    if len(snaps) not in _STENCILS:
        raise ValueError("need 3 or 5 snapshots")
    grid = em.grid if em is not None else None
    if grid is None:
        raise ValueError("an EMConfig is required (use EMConfig.none(grid) for free motion)")
    hb, m, e, c = constants.hbar, constants.mass, constants.charge, constants.c
    mid = len(snaps) // 2
    psi = snaps[mid]
    w = _STENCILS[len(snaps)]
    dpsi_t = sum(wi * p for wi, p in zip(w, snaps)) / dt

    derivs = _spinor_derivatives(psi, grid, scheme)
    dpsi, lpsi = derivs
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    floor = 1e-12 * rho.max() if rho_floor is None else rho_floor
    ang = angles_from_spinor(psi, hb, rho_floor=floor)
    live = ~ang.vacuum
    rs = np.where(live, rho, 1.0)

    # velocity from the current; the divergence acts on the smooth current itself
    jq = hb * np.imag(np.sum(np.conj(psi)[:, None] * dpsi, axis=0))
    flux = (jq - (e / c) * em.A * rho) / m
    v = np.where(live, flux / rs, 0.0)
    drho_t = 2.0 * np.real(np.sum(np.conj(psi) * dpsi_t, axis=0))
    r_cont = drho_t + divergence(flux, grid, scheme)

    # hbar Im(psi^dagger d_t psi) / rho = d_t S + (hbar/2) cos(theta) d_t phi
    w, dw, _ = _spin_density_derivatives(psi, dpsi, lpsi)
    h = w / rs
    h_t = (2.0 * np.real(bilinear(psi, dpsi_t)) - h * drho_t) / rs
    M0 = hb * np.imag(np.sum(np.conj(psi) * dpsi_t, axis=0)) / rs
    r_act = M0 + 0.5 * m * dot(v, v) + e * em.Phi + em.V + constants.mu_B * dot(h, em.B)

    grho = 2.0 * np.real(np.sum(np.conj(psi)[:, None] * dpsi, axis=0))
    dh = dw / rs - h[:, None] * grho[None] / rs  # (3 comps, 3 axes, ...)
    Dh = h_t + np.einsum("k...,ik...->i...", v, dh)
    prec = (2.0 * constants.mu_B / hb) * cross(em.B, h)  # = -(e/mc) B x h
    r_spin = Dh - prec

    st = np.sin(ang.theta)
    poles = np.abs(st) <= POLE_EPS
    ok = live & ~poles
    st_safe = np.where(ok, st, 1.0)
    Dth = -Dh[2] / st_safe
    Dph = (h[1] * Dh[0] - h[0] * Dh[1]) / st_safe**2
    r_th = Dth - (-prec[2] / st_safe)
    r_ph = Dph - (h[1] * prec[0] - h[0] * prec[1]) / st_safe**2

    if include_quantum:
        la = _terms_from_jet(_jet_from_spinor(psi, grid, hb, scheme, floor, derivs), constants)
        r_act = r_act - la.L_S
        r_th = r_th - la.L_theta
        r_ph = r_ph - la.L_phi
        r_spin = r_spin - spin_term(psi, grid, constants, scheme, floor, derivs)
        r_cont = r_cont - la.L_rho

    # share of the probability on masked nodes; vacuum tails carry none of it
    masked = float(integrate_volume(np.where(ok, 0.0, rho), grid) / integrate_volume(rho, grid))
    if masked > MASK_WARN:
        warnings.warn(f"{masked:.0%} of the density sits on masked nodes", RuntimeWarning)
    rep = ResidualReport(
        time=t,
        continuity=_weighted_rms(r_cont, rho, live, grid),
        action=_weighted_rms(r_act, rho, live, grid),
        spin=_weighted_rms(r_spin, rho, live, grid),
        theta=_weighted_rms(r_th, rho, ok, grid) if np.any(ok) else 0.0,
        phi=_weighted_rms(r_ph, rho, ok, grid) if np.any(ok) else 0.0,
        masked=masked,
        include_quantum=include_quantum,
    )
    if keep_fields:
        rep.fields = {"continuity": r_cont, "action": r_act, "spin": r_spin, "theta": r_th, "phi": r_ph}
    return rep


def write_residual_csv(path, reports):
    """One row per report, keyed by time."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to write")
    cols = list(reports[0].row().keys())
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=cols)
        wr.writeheader()
        for r in reports:
            wr.writerow(r.row())
