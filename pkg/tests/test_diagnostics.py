import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinflow.diagnostics import (CSV_VERSION, DiagnosticsRecord, conservation_monitor,
                                  ehrenfest_check, force_means, free_packet_scenario, hbar_scan,
                                  precession_scenario, record_classical, record_pauli, record_qa,
                                  rms_width, torque_mean, write_records_csv)
from spinflow.emfield import EMConfig, harmonic_trap
from spinflow.fieldkit import Constants, Grid
from spinflow.pauli import evolve, initial_state
from spinflow.qa import ClassicalState, QAState
from spinflow.spinor import unit_vector

G = Grid.centered(32, 8.0)
WIDE = Grid.centered(48, 12.0)


def record(t, norm=1.0, energy=1.0, helicity=float("nan")):
    z = np.zeros(3)
    return DiagnosticsRecord(t, norm, energy, z, z, z, helicity)


@given(sx=st.floats(1.0, 1.5), sy=st.floats(1.0, 1.5), cx=st.floats(-1.0, 1.0))
@settings(max_examples=10)
def test_rms_width_of_gaussian(sx, sy, cx):
    x, y, z = WIDE.coords
    rho = np.exp(-((x - cx) ** 2) / (2 * sx**2) - y**2 / (2 * sy**2) - z**2 / 2)
    np.testing.assert_allclose(rms_width(3.0 * rho, WIDE), [sx, sy, 1.0], rtol=1e-9)


def test_torque_is_charge_signed_precession():
    k = Constants(charge=-1.0, mass=2.0, c=3.0)
    st_ = initial_state("gaussian", G, k, sigma=1.5, spin=(1.0, 0.4))
    em = EMConfig.zeeman(G, (0.2, -0.5, 1.0))
    rec = record_pauli(st_, em, k)
    expect = -(k.charge / (k.mass * k.c)) * np.cross([0.2, -0.5, 1.0], rec.s_mean)
    np.testing.assert_allclose(torque_mean(st_.psi, em, k), expect, atol=1e-14)


def test_trap_force_pulls_to_center():
    k = Constants()
    omega = 0.5
    em = EMConfig.none(WIDE).with_potential(V=harmonic_trap(WIDE, omega, k.mass))
    st_ = initial_state("gaussian", WIDE, k, sigma=1.5, center=(1.0, -0.5, 0.0))
    f = force_means(st_.psi, em, k)
    np.testing.assert_allclose(f["trap"], -k.mass * omega**2 * np.array([1.0, -0.5, 0.0]), atol=1e-10)
    np.testing.assert_allclose(f["lorentz"], 0.0, atol=1e-14)
    np.testing.assert_allclose(f["stern_gerlach"], 0.0, atol=1e-14)


def test_free_packet_ehrenfest():
    k = Constants()
    st_ = initial_state("gaussian", WIDE, k, sigma=1.5, k=(0.5, -0.25, 0.0), spin=(1.0, 0.0))
    em = EMConfig.none(WIDE)
    recs = []
    evolve(st_, em, 0.02, 20, "strang", k, every=2, callback=lambda s: recs.append(record_pauli(s, em, k)))
    rep = ehrenfest_check(recs, k, order=4)
    assert rep.position.max_abs < 1e-10
    assert rep.momentum.max_abs < 1e-10
    assert rep.spin.max_abs < 1e-12
    np.testing.assert_allclose(recs[-1].p_mean, [0.5, -0.25, 0.0], atol=1e-10)
    # widths grow monotonically for a free packet at rest on average
    w = [r.width[0] for r in recs]
    assert all(b > a for a, b in zip(w, w[1:]))


def test_ehrenfest_input_errors():
    with pytest.raises(ValueError):
        ehrenfest_check([record(0.0), record(0.1)], order=2)
    with pytest.raises(ValueError):
        ehrenfest_check([record(t) for t in (0.0, 0.1, 0.3)], order=2)


def test_conservation_monitor_on_synthetic_records():
    recs = [record(0.1 * i, norm=1 + 1e-9 * i, energy=2.0 - 1e-6 * i, helicity=4.0 + 0.01 * i)
            for i in range(11)]
    rep = conservation_monitor(recs, steps_per_record=10)
    assert rep.norm_drift == pytest.approx(1e-8)
    assert rep.norm_drift_per_step == pytest.approx(1e-10)
    assert rep.energy_drift == pytest.approx(5e-6)
    assert rep.helicity_drift == pytest.approx(0.025)
    assert np.isnan(conservation_monitor([record(0.0), record(0.1)]).helicity_drift)


def test_csv_is_versioned_and_round_trips(tmp_path):
    k = Constants()
    st_ = initial_state("gaussian", G, k, sigma=1.5, spin=(1.0, 0.0))
    rec = record_pauli(st_, EMConfig.zeeman(G, (0, 0, 1)), k)
    rec.residuals = {"action": 1e-9}
    path = tmp_path / "d.csv"
    write_records_csv(path, [rec, rec], extra_header=["scenario test"])
    lines = path.read_text().splitlines()
    assert lines[0] == f"# spinflow diagnostics v{CSV_VERSION}"
    assert lines[1] == "# scenario test"
    rows = list(csv.DictReader(lines[2:]))
    assert len(rows) == 2
    assert float(rows[0]["energy"]) == rec.energy
    assert float(rows[0]["w1"]) == rec.width[0]
    assert float(rows[0]["action"]) == 1e-9
    assert rows[0]["helicity"] == "nan"


def test_qa_and_classical_records_match_pauli_means():
    k = Constants()
    x = G.coords[0]
    wave = 2 * np.pi / G.lengths[0]
    st_ = initial_state("gaussian", G, k, sigma=1.5, spin=(1.0, 0.3))
    rho = st_.rho
    em = EMConfig.zeeman(G, (0.0, 0.3, 1.0))
    S = k.hbar * wave * x  # periodic modulo pi hbar
    theta, phi = np.full(G.dims, 1.0), np.full(G.dims, 0.3)
    qa = record_qa(QAState(G, rho, S, theta, phi), em, k, with_helicity=False)
    cl = record_classical(ClassicalState(G, rho, S, unit_vector(theta, phi), 0.0, np.pi * k.hbar), em, k)
    np.testing.assert_allclose(qa.p_mean, [k.hbar * wave, 0, 0], atol=1e-12)
    np.testing.assert_allclose(cl.p_mean, qa.p_mean, atol=1e-12)
    np.testing.assert_allclose(cl.s_mean * 0.5 * k.hbar, qa.s_mean, atol=1e-12)
    np.testing.assert_allclose(cl.torque * 0.5 * k.hbar, qa.torque, atol=1e-12)
    np.testing.assert_allclose(qa.width, rms_width(rho, G))


def test_small_hbar_scan():
    sc = free_packet_scenario(t_final=0.5)
    rep = hbar_scan(sc, hbars=(1.0, 0.5, 0.25, 0.0))
    assert rep.monotone()
    errs = dict(rep.errors())
    assert errs[0.25] < errs[1.0] / 4
    zero = [e for e in rep.entries if e.hbar == 0.0][0]
    assert zero.error == 0.0 and zero.solver == "classical"


def test_precession_survives_the_classical_limit(tmp_path):
    sc = precession_scenario(t_final=0.5)
    rep = hbar_scan(sc, hbars=())
    assert rep.spin_rotation == pytest.approx(rep.expected_rotation, rel=1e-3)
    path = tmp_path / "scan.csv"
    rep.write_csv(path)
    assert path.read_text().startswith(f"# spinflow hbar scan v{CSV_VERSION}")
