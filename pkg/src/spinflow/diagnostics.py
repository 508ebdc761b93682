"""Mean values, force and torque balances, conservation monitors and the hbar scan."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .clebsch import PotentialSet, helicity, momentum_field, vorticity_vector
from .emfield import EMConfig
from .fieldkit import Constants, Grid, cross, dot, gradient, integrate_volume, phase_gradient
from .pauli import PauliState, StabilityError, apply_hamiltonian, kinetic_current, pauli_step
from .qa import (ClassicalState, NumericalHalt, QAState, classical_limit_step, qa_step,
                 velocity_field)
from .spinor import angles_from_vector, bilinear, spinor_from_angles, unit_vector

CSV_VERSION = 1


@dataclass
class DiagnosticsRecord:
    """Means at one cadence tick.

    ``forces`` holds the Lorentz, Stern-Gerlach and trap parts of the mean
    force; ``torque`` is the mean spin torque.  ``residuals`` carries any
    named scalar checks computed alongside.
    """

    time: float
    norm: float
    energy: float
    q_mean: np.ndarray
    p_mean: np.ndarray
    s_mean: np.ndarray
    helicity: float = float("nan")
    forces: dict = field(default_factory=dict)
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))
    residuals: dict = field(default_factory=dict)
    width: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))

    def total_force(self):
        return sum(self.forces.values(), np.zeros(3))


def force_means(psi, em: EMConfig, constants=Constants()):
    """Mean Lorentz, Stern-Gerlach and trap forces of a spinor field."""
    g = em.grid
    k = constants
    rho = np.sum(np.abs(psi) ** 2, axis=0)
    j = kinetic_current(psi, em, k)
    lorentz = integrate_volume(k.charge * rho * em.E + (k.charge / k.c) * cross(j, em.B), g)
    w = bilinear(psi)
    dB = [gradient(em.B[i], g) for i in range(3)]  # dB[i][k] = d_k B_i
    sg = -k.mu_B * np.array([integrate_volume(sum(w[i] * dB[i][kk] for i in range(3)), g) for kk in range(3)])
    trap = -integrate_volume(rho * gradient(em.V, g), g)
    return {"lorentz": lorentz, "stern_gerlach": sg, "trap": trap}


def torque_mean(psi, em: EMConfig, constants=Constants()):
    """``(2 mu_B / hbar) int B x (rho s)`` with ``rho s = (hbar/2) psi^dagger sigma psi``."""
    k = constants
    rho_s = 0.5 * k.hbar * bilinear(psi)
    return (2.0 * k.mu_B / k.hbar) * integrate_volume(cross(em.B, rho_s), em.grid)


def rms_width(rho, grid: Grid):
    """RMS extent of a density along each axis."""
    mass = integrate_volume(rho, grid)
    q = integrate_volume(rho * grid.coords, grid) / mass
    d2 = (grid.coords - q.reshape(3, 1, 1, 1)) ** 2
    return np.sqrt(integrate_volume(rho * d2, grid) / mass)


def record_pauli(state: PauliState, em: EMConfig, constants=Constants(), with_helicity=False):
    g = state.grid
    k = constants
    psi = state.psi
    rho = state.rho
    q = integrate_volume(rho * g.coords, g)
    p = k.mass * integrate_volume(kinetic_current(psi, em, k), g)
    s = 0.5 * k.hbar * integrate_volume(bilinear(psi), g)
    energy = float(np.real(integrate_volume(np.sum(np.conj(psi) * apply_hamiltonian(psi, em, k), axis=0), g)))
    H = float("nan")
    if with_helicity:
        pot = PotentialSet.from_spinor(psi, g, k)
        H = helicity(momentum_field(pot), vorticity_vector(pot), g)
    return DiagnosticsRecord(state.t, float(integrate_volume(rho, g)), energy, q, p, s, H,
                             force_means(psi, em, k), torque_mean(psi, em, k), width=rms_width(rho, g))


def record_qa(state: QAState, em: EMConfig, constants=Constants(), with_helicity=True):
    """Means of a QA state.  The energy is ``int rho (m v^2/2 + e Phi + V + mu_B h.B)``."""
    g = state.grid
    k = constants
    rho = state.rho
    v = velocity_field(state, em, k)
    h = state.h()
    q = integrate_volume(rho * g.coords, g)
    p = k.mass * integrate_volume(rho * v, g)
    s = 0.5 * k.hbar * integrate_volume(rho * h, g)
    dens = rho * (0.5 * k.mass * dot(v, v) + k.charge * em.Phi + em.V + k.mu_B * dot(h, em.B))
    psi = state.spinor(k)
    H = float("nan")
    if with_helicity:
        pot = PotentialSet.from_spinor(psi, g, k)
        H = helicity(momentum_field(pot), vorticity_vector(pot), g)
    return DiagnosticsRecord(state.t, state.mass(), float(integrate_volume(dens, g)), q, p, s, H,
                             force_means(psi, em, k), torque_mean(psi, em, k), width=rms_width(rho, g))


def record_classical(state: ClassicalState, em: EMConfig, constants=Constants()):
    """Means of an hbar -> 0 state; forces and torque use the spin density rho h."""
    g = state.grid
    k = constants
    rho, h = state.rho, state.h
    gS = phase_gradient(state.S, g, period=state.S_period) if state.S_period > 0 else gradient(state.S, g)
    v = (gS - (k.charge / k.c) * em.A) / k.mass
    q = integrate_volume(rho * g.coords, g)
    p = k.mass * integrate_volume(rho * v, g)
    spin = rho * h
    dens = rho * (0.5 * k.mass * dot(v, v) + k.charge * em.Phi + em.V) + k.mu_B * dot(spin, em.B)
    lorentz = integrate_volume(k.charge * rho * em.E + (k.charge / k.c) * cross(rho * v, em.B), g)
    dB = [gradient(em.B[i], g) for i in range(3)]
    sg = -k.mu_B * np.array([integrate_volume(sum(spin[i] * dB[i][kk] for i in range(3)), g) for kk in range(3)])
    trap = -integrate_volume(rho * gradient(em.V, g), g)
    # s_mean holds int rho h here: there is no hbar/2 factor at hbar = 0
    torque = -(k.charge / (k.mass * k.c)) * integrate_volume(cross(em.B, spin), g)
    return DiagnosticsRecord(state.t, float(integrate_volume(rho, g)), float(integrate_volume(dens, g)), q, p,
                             integrate_volume(spin, g), float("nan"),
                             {"lorentz": lorentz, "stern_gerlach": sg, "trap": trap}, torque,
                             width=rms_width(rho, g))


# ---------------------------------------------------------------- Ehrenfest

_DIFF = {2: (np.array([-0.5, 0.0, 0.5]), 1), 4: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, 2)}


def _time_derivative(values, times, order):
    w, half = _DIFF[order]
    dt = np.diff(times)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * max(abs(dt[0]), 1e-300):
        raise ValueError("records must be at a uniform cadence")
    vals = np.asarray(values)
    out = [sum(w[j] * vals[i - half + j] for j in range(len(w))) / dt[0] for i in range(half, len(vals) - half)]
    return np.array(out), slice(half, len(vals) - half)


@dataclass
class BalanceCheck:
    name: str
    max_abs: float          # max |lhs - rhs| over ticks and components
    scale: float            # max |rhs| over ticks and components
    relative: float         # max_abs / scale (max_abs when the scale vanishes)

    def passed(self, tol, atol=1e-10):
        return self.max_abs <= max(tol * self.scale, atol)


@dataclass
class EhrenfestReport:
    position: BalanceCheck
    momentum: BalanceCheck
    spin: BalanceCheck
    completeness: float     # momentum mismatch relative to the largest force part

    def rows(self):
        return [vars(c) for c in (self.position, self.momentum, self.spin)]


def _balance(name, lhs, rhs):
    diff = np.max(np.abs(lhs - rhs)) if lhs.size else 0.0
    scale = np.max(np.abs(rhs)) if rhs.size else 0.0
    rel = diff / scale if scale > 1e-300 else diff
    return BalanceCheck(name, float(diff), float(scale), float(rel))


def ehrenfest_check(records, constants=Constants(), order=2):
    """Compare centered time derivatives of the means with the instantaneous means.

    ``d_t q = p / m``, ``d_t p = F_lorentz + F_stern_gerlach + F_trap`` and
    ``d_t s = T``, all evaluated at the interior records.
    """
    records = list(records)
    need = 3 if order == 2 else 5
    if len(records) < need:
        raise ValueError(f"need at least {need} records for order {order}")
    t = np.array([r.time for r in records])
    dq, sl = _time_derivative([r.q_mean for r in records], t, order)
    dp, _ = _time_derivative([r.p_mean for r in records], t, order)
    ds, _ = _time_derivative([r.s_mean for r in records], t, order)
    inner = records[sl]
    p = np.array([r.p_mean for r in inner]) / constants.mass
    F = np.array([r.total_force() for r in inner])
    T = np.array([r.torque for r in inner])
    parts = max((np.max(np.abs([r.forces[n] for r in inner])) for n in inner[0].forces), default=0.0)
    mom = _balance("momentum", dp, F)
    comp = mom.max_abs / parts if parts > 1e-300 else mom.max_abs
    return EhrenfestReport(_balance("position", dq, p), mom, _balance("spin", ds, T), float(comp))


# ---------------------------------------------------------------- conservation

@dataclass
class ConservationReport:
    norm_drift: float           # max |N - N0| / N0
    norm_drift_per_step: float
    energy_drift: float         # max |E - E0| / max(|E0|, 1)
    helicity_drift: float       # max |H - H0| / |H0| (nan without helicity)


def conservation_monitor(records, steps_per_record=1):
    records = list(records)
    N = np.array([r.norm for r in records])
    E = np.array([r.energy for r in records])
    H = np.array([r.helicity for r in records])
    nd = float(np.max(np.abs(N - N[0])) / N[0])
    steps = max(1, (len(records) - 1) * steps_per_record)
    ed = float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1.0))
    if np.all(np.isfinite(H)) and abs(H[0]) > 0:
        hd = float(np.max(np.abs(H - H[0])) / abs(H[0]))
    else:
        hd = float("nan")
    return ConservationReport(nd, nd / steps, ed, hd)


def write_records_csv(path, records, extra_header=None):
    """Diagnostics table with a versioned comment header."""
    cols = ["time", "norm", "energy", "q1", "q2", "q3", "p1", "p2", "p3", "s1", "s2", "s3", "helicity",
            "F1", "F2", "F3", "T1", "T2", "T3", "w1", "w2", "w3"]
    resid = sorted({k for r in records for k in r.residuals})
    with open(path, "w", newline="") as fh:
        fh.write(f"# spinflow diagnostics v{CSV_VERSION}\n")
        for line in extra_header or ():
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(cols + resid)
        for r in records:
            row = [r.time, r.norm, r.energy, *r.q_mean, *r.p_mean, *r.s_mean, r.helicity,
                   *r.total_force(), *r.torque, *r.width]
            row += [r.residuals.get(k, float("nan")) for k in resid]
            wr.writerow([repr(float(x)) for x in row])


# ---------------------------------------------------------------- hbar scan

@dataclass
class ScanScenario:
    """hbar-independent initial data ``(rho, S, h)`` and a static environment."""

    name: str
    grid: Grid
    rho: np.ndarray
    S: np.ndarray
    h: np.ndarray
    em: EMConfig
    t_final: float
    dt_classical: float
    dt_quantum: float


def free_packet_scenario(n=32, half_width=8.0, sigma=1.2, t_final=1.0):
    """Gaussian at rest with a gently focusing-free smooth action and uniform spin."""
    g = Grid.centered(n, half_width)
    x, y, z = g.coords
    r2 = x**2 + y**2 + z**2
    rho = np.exp(-r2 / (2 * sigma**2))
    rho = rho / integrate_volume(rho, g)
    L = 2 * half_width
    S = 0.25 * np.sin(2 * np.pi * x / L)    # smooth periodic drift, no caustic before t=1
    h = unit_vector(np.full(g.dims, 0.5 * np.pi), np.zeros(g.dims))
    return ScanScenario("free_packet", g, rho, S, h, EMConfig.none(g), t_final, 0.02, 0.01)


def precession_scenario(n=32, half_width=8.0, sigma=1.2, B=1.0, t_final=1.0):
    """The free packet in a uniform field acting on the spin only."""
    sc = free_packet_scenario(n, half_width, sigma, t_final)
    sc.name = "precession"
    sc.em = EMConfig.zeeman(sc.grid, (0.0, 0.0, B))
    return sc


def spinor_for_hbar(sc: ScanScenario, hbar):
    theta, phi = angles_from_vector(sc.h)
    return np.sqrt(sc.rho) * spinor_from_angles(2.0 * sc.S / hbar, theta, phi)


def _distances(rho, h, ref_rho, ref_h, grid):
    d_rho = float(np.sqrt(integrate_volume((rho - ref_rho) ** 2, grid)))
    dh = np.sum((h - ref_h) ** 2, axis=0)
    d_h = float(np.sqrt(integrate_volume(ref_rho * dh, grid) / integrate_volume(ref_rho, grid)))
    return d_rho, d_h


@dataclass
class ScanEntry:
    hbar: float
    solver: str
    d_rho: float
    d_h: float
    censored: bool = False
    note: str = ""

    @property
    def error(self):
        return self.d_rho + self.d_h


@dataclass
class ScanReport:
    scenario: str
    entries: list
    spin_rotation: float          # angle swept by the mean spin in the classical run
    expected_rotation: float      # |e B t / m c|

    def errors(self, solver="pauli"):
        return [(e.hbar, e.error) for e in self.entries if e.solver == solver and not e.censored and e.hbar > 0]

    def monotone(self, solver="pauli"):
        errs = [err for _, err in sorted(self.errors(solver), reverse=True)]
        return len(errs) >= 2 and all(b < a for a, b in zip(errs, errs[1:]))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# spinflow hbar scan v{CSV_VERSION} scenario={self.scenario}\n")
            wr = csv.writer(fh)
            wr.writerow(["hbar", "solver", "d_rho", "d_h", "censored", "note"])
            for e in self.entries:
                wr.writerow([e.hbar, e.solver, e.d_rho, e.d_h, int(e.censored), e.note])


def _run_classical(sc: ScanScenario, constants):
    st = ClassicalState(sc.grid, sc.rho.copy(), sc.S.copy(), sc.h.copy())
    n = int(round(sc.t_final / sc.dt_classical))
    for _ in range(n):
        st = classical_limit_step(st, sc.em, sc.dt_classical, constants)
    return st


def _unit(w, rho):
    return w / np.where(rho > 0, rho, 1.0)


def hbar_scan(sc: ScanScenario, hbars=(1.0, 0.5, 0.25, 0.125), constants=Constants(), solvers=("pauli",)):
    """Distance of (rho, h) to the hbar -> 0 solution at ``sc.t_final``.

    ``solvers`` may include ``pauli`` (full quantum dynamics) and ``qa``
    (hydrodynamic equations without quantum corrections).  An entry with
    hbar = 0 reruns the classical solver as a self-check.  Runs that halt
    before the comparison time are reported as censored.
    """
    ref = _run_classical(sc, constants)
    entries = []
    for hb in hbars:
        k = Constants(hbar=hb, mass=constants.mass, charge=constants.charge, c=constants.c) if hb > 0 else None
        if hb == 0:
            again = _run_classical(sc, constants)
            entries.append(ScanEntry(0.0, "classical", *_distances(again.rho, again.h, ref.rho, ref.h, sc.grid)))
            continue
        for solver in solvers:
            try:
                if solver == "pauli":
                    st = PauliState(sc.grid, spinor_for_hbar(sc, hb))
                    method = "rk4" if sc.em.has_vector_potential else "strang"
                    n = int(round(sc.t_final / sc.dt_quantum))
                    cache = {}
                    for _ in range(n):
                        st = pauli_step(st, sc.em, sc.dt_quantum, method, k, cache)
                    rho = st.rho
                    h = _unit(bilinear(st.psi), rho)
                elif solver == "qa":
                    theta, phi = angles_from_vector(sc.h)
                    st = QAState(sc.grid, sc.rho.copy(), sc.S.copy(), theta, phi)
                    n = int(round(sc.t_final / sc.dt_classical))
                    for _ in range(n):
                        st = qa_step(st, sc.em, sc.dt_classical, k)
                    rho, h = st.rho, st.h()
                else:
                    raise ValueError(f"unknown solver {solver!r}")
                entries.append(ScanEntry(hb, solver, *_distances(rho, h, ref.rho, ref.h, sc.grid)))
            except (NumericalHalt, StabilityError) as err:
                entries.append(ScanEntry(hb, solver, float("nan"), float("nan"), True, str(err)))
    s0 = integrate_volume(sc.rho * sc.h, sc.grid)
    s1 = integrate_volume(ref.rho * ref.h, sc.grid)
    ang = float(np.arctan2(s0[0] * s1[1] - s0[1] * s1[0], np.dot(s0[:2], s1[:2])))
    Bz = float(np.mean(sc.em.B[2]))
    expected = abs(constants.charge * Bz * sc.t_final / (constants.mass * constants.c))
    return ScanReport(sc.name, entries, abs(ang), expected)
