import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from retarded_bohm.errors import DomainError, SingularityError
from retarded_bohm.reduced_model import (
    POLE_GUARD,
    ReducedState,
    analytic_phi,
    analytic_r,
    expansion_time,
    first_integral,
    integrate_reduced,
    integrate_reduced_ensemble,
    radial_rate,
    reduced_rhs,
)


@given(st.floats(1.01, 50.0), st.floats(-10.0, 10.0), st.floats(0.1, 10.0))
def test_printed_angular_rate_equals_radial_rate_over_alpha(r_over_alpha, phi, c):
    alpha = 0.7
    r = r_over_alpha * alpha
    denom = r * math.cos(phi) - alpha * math.sin(phi)
    assume(abs(denom) > 1e-3 * r)
    rdot, phidot = reduced_rhs(ReducedState(r, phi, alpha, c))
    assert rdot == pytest.approx(-2 * c / (1 - r**2 / alpha**2))
    assert phidot == pytest.approx(rdot / alpha, rel=1e-8)


def test_removable_pole_raises_by_default_and_limits_on_request():
    alpha, r = 1.0, 3.0
    phi = math.atan2(r, alpha)  # r cos(phi) = alpha sin(phi)
    with pytest.raises(SingularityError):
        reduced_rhs(ReducedState(r, phi, alpha, 1.0))
    rdot, phidot = reduced_rhs(ReducedState(r, phi, alpha, 1.0), on_pole="limit")
    assert phidot == rdot / alpha
    # just outside the guard the printed formula is used and agrees with the limit
    _, near = reduced_rhs(ReducedState(r, phi + 10 * POLE_GUARD, alpha, 1.0))
    assert near == pytest.approx(rdot / alpha, rel=1e-6)


def test_state_requires_r_above_alpha():
    with pytest.raises(DomainError):
        ReducedState(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        ReducedState(2.0, 0.0, 1.0, 0.0)


@given(st.floats(1.05, 40.0), st.floats(0.0, 1e4), st.floats(0.1, 10.0))
def test_closed_form_conserves_first_integral(r0, t, c):
    r = analytic_r(t, r0, 1.0, c)
    assert r >= r0
    I0, I = first_integral(r0, 0.0, 1.0, c), first_integral(r, t, 1.0, c)
    assert I == pytest.approx(I0, rel=1e-12, abs=1e-12 * r**3)


@given(st.floats(1.05, 20.0), st.floats(1e-3, 5.0))
def test_expansion_time_inverts_closed_form(r0, growth):
    r1 = r0 * (1 + growth)
    t = expansion_time(r0, r1, 1.0, 2.0)
    assert analytic_r(t, r0, 1.0, 2.0) == pytest.approx(r1, rel=1e-12)


def test_closed_form_vectorised_and_monotone():
    t = np.linspace(0, 100, 50)
    r = analytic_r(t, 5.0, 1.0, 1.0)
    assert r[0] == 5.0
    assert np.all(np.diff(r) > 0)
    r0 = np.array([2.0, 5.0, 9.0])
    assert np.allclose(analytic_r(10.0, r0, 1.0, 1.0), [analytic_r(10.0, x, 1.0, 1.0) for x in r0], rtol=1e-15)


def test_closed_form_rejects_bad_domain():
    with pytest.raises(DomainError):
        analytic_r(1.0, 0.5, 1.0, 1.0)
    with pytest.raises(DomainError):
        analytic_r(-1.0, 5.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        expansion_time(5.0, 4.0, 1.0, 1.0)


def test_radial_rate_far_field_is_inverse_square():
    r = np.array([100.0, 200.0])
    assert np.allclose(radial_rate(r, 1.0, 3.0), 2 * 3.0 / r**2, rtol=1e-3)


@pytest.mark.parametrize("r0,alpha,c", [(5.0, 1.0, 1.0), (1.5, 1.0, 3.0), (40.0, 0.1, 10.0)])
def test_integration_matches_closed_form_and_spiral(r0, alpha, c):
    run = integrate_reduced(ReducedState(r0, 0.3, alpha, c), expansion_time(r0, 2 * r0, alpha, c))
    assert np.max(np.abs(run.r - analytic_r(run.t, r0, alpha, c)) / run.r) < 1e-10
    assert np.max(np.abs(run.conserved_residual)) < 1e-10
    assert np.allclose(run.phi, analytic_phi(run.r, r0, alpha, 0.3), rtol=0, atol=1e-8 * r0 / alpha)
    assert run.r[-1] == pytest.approx(2 * r0, rel=1e-10)


def test_ensemble_integration_matches_closed_form():
    rng = np.random.default_rng(0)
    r0 = rng.uniform(1.5, 30.0, 500)
    r, phi = integrate_reduced_ensemble(r0, np.zeros(500), 1.0, 2.0, 7.0)
    assert np.allclose(r, analytic_r(7.0, r0, 1.0, 2.0), rtol=1e-9)
    assert np.allclose(phi, (r - r0) / 1.0, rtol=1e-7, atol=1e-9)


def test_run_csv_columns(tmp_path):
    run = integrate_reduced(ReducedState(5.0, 0.0, 1.0, 1.0), 10.0)
    run.to_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "r", "phi", "conserved_residual"]
    assert len(rows) == run.t.size + 1
