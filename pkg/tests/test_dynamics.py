import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import planar_state, with_c
from retarded_bohm.dynamics import (
    ROUNDED_SI_UNITS,
    GuidanceMode,
    cm_drift_rhs,
    cm_velocity,
    estimate_cm_speed,
    first_order_velocities,
    integrate,
    nbt_analytic_positions,
    nbt_velocities,
    seed_history,
    self_heating_temperature,
)
from retarded_bohm.errors import DomainError
from retarded_bohm.quantum_state import ParticleSpec, SystemState, WavefunctionModel, log_phase_gradient


def fixed_point_first_order(model, positions, c, iterations=400, damping=0.5):
    """Oracle: v_i = (hbar/m_i)[g_i + J_ij (-(r/c) v_j)], J from finite differences, damped iteration."""
    p = np.asarray(positions, float)
    r = np.linalg.norm(p[0] - p[1])
    hbar = model.units.hbar
    h = 1e-6
    J = []
    for i, j in ((0, 1), (1, 0)):
        cols = []
        for k in range(3):
            up, dn = p.copy(), p.copy()
            up[j, k] += h
            dn[j, k] -= h
            cols.append((log_phase_gradient(model, up, i) - log_phase_gradient(model, dn, i)) / (2 * h))
        J.append(np.array(cols).T)
    g = [log_phase_gradient(model, p, i) for i in range(2)]
    v = np.zeros((2, 3))
    for _ in range(iterations):
        new = np.array([hbar / model.masses[i] * (g[i] + J[i] @ (-(r / c) * v[1 - i])) for i in range(2)])
        v = damping * new + (1 - damping) * v
    return v


angles = st.floats(-math.pi, math.pi)


@given(st.floats(1.0, 12.0), angles, st.floats(5.0, 200.0), st.floats(0.2, 5.0))
def test_first_order_velocities_match_fixed_point_oracle(r, ang, c, ratio):
    model = with_c(WavefunctionModel(particles=(ParticleSpec(ratio, 1, 0), ParticleSpec(1.0, -1, 1))), c)
    assume(r / c < 0.5)
    x = r * np.array([math.cos(ang), math.sin(ang), 0.0])
    p = np.array([x / (1 + ratio), -x * ratio / (1 + ratio)])
    v = first_order_velocities(p, c, model)
    oracle = fixed_point_first_order(model, p, c)
    assert np.allclose(v, oracle, rtol=1e-6, atol=1e-8 * np.abs(oracle).max())


@given(st.floats(1.2, 20.0), angles, st.floats(0.5, 50.0))
def test_equal_mass_radial_rate_closed_form(r, ang, c):
    model = with_c(WavefunctionModel(), c)
    alpha = model.alpha(0)
    assume(abs(r / alpha - 1) > 1e-3)
    x = r * np.array([math.cos(ang), math.sin(ang), 0.0])
    v = first_order_velocities(np.array([x / 2, -x / 2]), c, model)
    rel = v[0] - v[1]
    rdot = rel @ x / r
    assert rdot == pytest.approx(-2 * c / (1 - r**2 / alpha**2), rel=1e-10)
    # angular rate equals r'/alpha for equal masses
    phidot = (x[0] * rel[1] - x[1] * rel[0]) / r**2
    assert phidot == pytest.approx(rdot / alpha, rel=1e-9)
    assert np.allclose(cm_velocity(v, model.masses), 0, atol=1e-14 * np.abs(v).max())


@given(st.floats(1.0, 12.0), angles, st.floats(5.0, 200.0), st.floats(0.1, 3000.0))
def test_cm_drift_closed_form_equals_direct_sum(r, ang, c, ratio):
    model = with_c(WavefunctionModel(particles=(ParticleSpec(ratio, 1, 0), ParticleSpec(1.0, -1, 1))), c)
    x = r * np.array([math.cos(ang), math.sin(ang), 0.0])
    p = np.array([x / (1 + ratio), -x * ratio / (1 + ratio)])
    v = first_order_velocities(p, c, model)
    direct = cm_velocity(v, model.masses)[:2]
    closed = np.array(cm_drift_rhs(SystemState(0.0, p, v), c, model))
    # relative agreement, with a roundoff floor for the (near-)equal-mass case where both vanish
    assert np.linalg.norm(direct - closed) <= 1e-10 * np.linalg.norm(direct) + 1e-14 * np.abs(v).max()


def test_cm_drift_vanishes_for_equal_masses_and_not_otherwise():
    c = 20.0
    eq = with_c(WavefunctionModel(), c)
    v = first_order_velocities(planar_state(eq, 4.0).positions, c, eq)
    assert np.linalg.norm(cm_velocity(v, eq.masses)) < 1e-16
    uneq = with_c(WavefunctionModel(particles=(ParticleSpec(10.0, 1, 0), ParticleSpec(1.0, -1, 1))), c)
    v = first_order_velocities(planar_state(uneq, 4.0).positions, c, uneq)
    assert np.linalg.norm(cm_velocity(v, uneq.masses)) > 1e-6


def test_nbt_integration_matches_rigid_rotation(generic_model):
    init = SystemState(0.0, [[1.0, 0.5, 0.8], [-1.5, -0.6, -0.4]], np.zeros((2, 3)))
    traj = integrate(generic_model, init, "nbt", 30.0, rtol=1e-11, atol=1e-13)
    for t, p in zip(traj.times, traj.positions()):
        assert np.allclose(p, nbt_analytic_positions(generic_model, init, t), atol=1e-8)
    # the instantaneous velocities move the centre of mass at hbar K / M
    v = nbt_velocities(generic_model, init)
    assert np.allclose(cm_velocity(v, generic_model.masses), np.array(generic_model.K) / generic_model.total_mass)


def test_exact_retarded_equal_mass_cm_stays_put():
    model = with_c(WavefunctionModel(), 20.0)
    traj = integrate(model, planar_state(model, 4.0), GuidanceMode.RBT_EXACT, 10.0)
    cm = traj.cm_positions()
    assert np.abs(cm - cm[0]).max() < 1e-12
    assert traj.diagnostics["retarded_solves"] > 0


def test_exact_retarded_reduces_to_first_order_at_leading_order():
    model = with_c(WavefunctionModel(particles=(ParticleSpec(3.0, 1, 0), ParticleSpec(1.0, -1, 1))), 40.0)
    init = planar_state(model, 4.0)
    exact = integrate(model, init, GuidanceMode.RBT_EXACT, 5.0)
    first = integrate(model, init, GuidanceMode.RBT_FIRST_ORDER, 5.0)
    nbt = nbt_analytic_positions(model, init, 5.0)
    gap = np.abs(exact.state_at(5.0).positions - first.state_at(5.0).positions).max()
    shift = np.abs(exact.state_at(5.0).positions - nbt).max()
    assert gap < 0.05 * shift


def test_seed_history_covers_lag_window():
    model = with_c(WavefunctionModel(), 10.0)
    init = planar_state(model, 4.0)
    hist = seed_history(model, init, 1.6)
    assert hist[0].t_first == pytest.approx(-1.6)
    assert hist[0].t_last == 0.0
    p, _ = hist[0].interpolate(-1.0)
    assert np.allclose(p, nbt_analytic_positions(model, init, -1.0)[0], atol=1e-8)


def test_retarded_modes_need_finite_c(orbit_model):
    with pytest.raises(DomainError):
        integrate(orbit_model, planar_state(orbit_model, 4.0), "rbt_exact", 1.0)


def test_first_order_requires_plane_and_zero_K(generic_model):
    m = with_c(generic_model, 10.0)
    with pytest.raises(DomainError):
        first_order_velocities(planar_state(m, 4.0).positions, 10.0, m)
    eq = with_c(WavefunctionModel(), 10.0)
    with pytest.raises(DomainError):
        first_order_velocities([[1, 0, 0.5], [-1, 0, 0]], 10.0, eq)


def test_trajectory_csv_layout_and_determinism(tmp_path):
    model = with_c(WavefunctionModel(), 20.0)
    for name in ("a.csv", "b.csv"):
        integrate(model, planar_state(model, 4.0), "rbt_first_order", 3.0).to_csv(tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    with open(tmp_path / "a.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["t", "x1", "y1", "z1", "vx1", "vy1", "vz1", "x2", "y2", "z2", "vx2", "vy2", "vz2",
                      "X_cm", "Y_cm", "Z_cm"]


def test_order_of_magnitude_estimates():
    v = estimate_cm_speed(1e-30, 1e-10, ROUNDED_SI_UNITS)
    assert v == pytest.approx(1e4)
    assert self_heating_temperature(v, 1e-30) == pytest.approx(1e-30 * 1e8 / (3 * 1.380649e-23))
    with pytest.raises(DomainError):
        self_heating_temperature(-1.0, 1e-30)
