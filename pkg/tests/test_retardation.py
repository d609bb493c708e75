import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from retarded_bohm.errors import DomainError, ExtrapolationError, InsufficientHistoryError, OrderingError
from retarded_bohm.quantum_state import ParticleSpec, SystemState
from retarded_bohm.retardation import (
    TrajectoryHistory,
    append_sample,
    first_order_retardation,
    interpolate,
    solve_retarded_time,
)

PARTICLE = ParticleSpec(1.0, 1.0, 0)


def uniform_history(r0, v, t0, t1, c=math.inf, n=200):
    h = TrajectoryHistory(PARTICLE, c)
    for t in np.linspace(t0, t1, n):
        h.append(t, r0 + v * t, v)
    return h


def uniform_delay(x, r0, v, t, c):
    d = x - r0 - v * t
    dv, d2, v2 = d @ v, d @ d, v @ v
    return (dv + math.sqrt(dv**2 + (c**2 - v2) * d2)) / (c**2 - v2)


def test_append_rejects_non_increasing_times():
    h = TrajectoryHistory(PARTICLE)
    h.append(0.0, [0, 0, 0], [0, 0, 0])
    with pytest.raises(OrderingError):
        h.append(0.0, [1, 0, 0], [0, 0, 0])
    with pytest.raises(OrderingError):
        h.append(-1.0, [1, 0, 0], [0, 0, 0])


def test_append_rejects_superluminal_samples():
    h = TrajectoryHistory(PARTICLE, c=2.0)
    with pytest.raises(DomainError):
        h.append(0.0, [0, 0, 0], [2.0, 0, 0])


def test_history_grows_past_capacity():
    h = TrajectoryHistory(PARTICLE, capacity=4)
    for k in range(50):
        append_sample(h, float(k), [k, 0, 0], [1, 0, 0])
    assert len(h) == 50
    assert np.allclose(h.positions[:, 0], np.arange(50))


def test_interpolation_exact_at_samples_and_for_cubics():
    h = TrajectoryHistory(PARTICLE)
    ts = np.array([0.0, 0.3, 1.1, 2.0])
    for t in ts:
        h.append(t, [t**3 - t, 2 * t**2, 1.0], [3 * t**2 - 1, 4 * t, 0.0])
    for t in ts:
        p, _ = interpolate(h, t)
        assert np.array_equal(p, h.positions[list(ts).index(t)])
    for t in np.linspace(0, 2, 17):
        p, v = interpolate(h, t)
        assert np.allclose(p, [t**3 - t, 2 * t**2, 1.0], atol=1e-13)
        assert np.allclose(v, [3 * t**2 - 1, 4 * t, 0.0], atol=1e-12)


def test_interpolation_outside_span_raises():
    h = uniform_history(np.zeros(3), np.array([0.1, 0, 0]), 0.0, 1.0)
    with pytest.raises(ExtrapolationError):
        h.interpolate(1.5)
    with pytest.raises(ExtrapolationError):
        h.interpolate(-0.1)


def test_csv_round_trip_is_lossless(tmp_path):
    h = TrajectoryHistory(PARTICLE)
    rng = np.random.default_rng(3)
    for t in np.cumsum(rng.uniform(0.01, 0.1, 30)):
        h.append(t, rng.normal(size=3), rng.normal(size=3) * 0.1)
    h.to_csv(tmp_path / "a.csv")
    back = TrajectoryHistory.from_csv(tmp_path / "a.csv", PARTICLE)
    assert np.array_equal(back.times, h.times)
    assert np.array_equal(back.positions, h.positions)
    assert np.array_equal(back.velocities, h.velocities)
    back.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "t,x,y,z,vx,vy,vz"


vec = st.lists(st.floats(-1, 1), min_size=3, max_size=3).map(np.array)


@given(vec, vec, st.floats(2.0, 50.0), st.floats(0.0, 0.8))
def test_retarded_time_matches_uniform_motion_closed_form(x_dir, r0, c, speed_frac):
    v = np.array([0.6, -0.3, 0.2])
    v = v / np.linalg.norm(v) * speed_frac * c * 0.9
    x = 3.0 + 5 * x_dir
    lag = 40.0 / (c - np.linalg.norm(v))
    h = uniform_history(r0, v, -lag, 1.0, c, n=400)
    res = solve_retarded_time(h, x, 1.0, c)
    expected = 1.0 - uniform_delay(x, r0, v, 1.0, c)
    assert res.t_ij == pytest.approx(expected, abs=1e-9 * max(1.0, 1.0 - expected))
    # the defining light-cone condition holds at the solution
    assert 1.0 - res.t_ij == pytest.approx(np.linalg.norm(x - res.retarded_position) / c, rel=1e-9)


def test_instantaneous_limit_returns_current_time():
    h = uniform_history(np.zeros(3), np.array([0.2, 0, 0]), 0.0, 2.0)
    res = solve_retarded_time(h, np.array([3.0, 0, 0]), 1.5, math.inf)
    assert res.t_ij == 1.5
    assert np.allclose(res.retarded_position, [0.3, 0, 0])


def test_missing_history_raises():
    h = uniform_history(np.zeros(3), np.array([0.1, 0, 0]), 0.9, 1.0, c=10.0)
    with pytest.raises(InsufficientHistoryError):
        solve_retarded_time(h, np.array([5.0, 0, 0]), 1.0, 10.0)


def test_first_order_retardation_error_is_second_order():
    # uniform circular motion of particle 2 about the origin, particle 1 fixed
    w, R = 0.3, 1.0
    x1 = np.array([4.0, 1.0, 0.0])
    gaps = []
    for c in [20.0, 40.0, 80.0]:
        h = TrajectoryHistory(ParticleSpec(1.0, -1.0, 1), c)
        for t in np.linspace(-2.0, 0.0, 2001):
            h.append(t, [R * math.cos(w * t), R * math.sin(w * t), 0], [-R * w * math.sin(w * t), R * w * math.cos(w * t), 0])
        exact = solve_retarded_time(h, x1, 0.0, c)
        state = SystemState(0.0, [x1, [R, 0, 0]], [[0, 0, 0], [0, R * w, 0]])
        a, _ = first_order_retardation(state, c)
        gaps.append(abs(-exact.t_ij * c - a))
    # the expansion drops O(v^2 r / c^2) from the light-travel distance
    assert gaps[0] / gaps[1] == pytest.approx(4.0, rel=0.15)
    assert gaps[1] / gaps[2] == pytest.approx(4.0, rel=0.15)


def test_first_order_retardation_static_limit():
    state = SystemState(0.0, [[1, 0, 0], [-1, 0, 0]], [[0, 0.1, 0], [0, -0.1, 0]])
    assert first_order_retardation(state, math.inf) == (2.0, 2.0)
