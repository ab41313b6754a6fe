import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from delaytherm import analytic, spectral
from delaytherm.errors import (
    DegenerateCovarianceError,
    DomainError,
    InstabilityError,
    InvalidMomentsError,
    UndefinedCorrelationError,
)
from delaytherm.model import ReducedParams

TAU_P = 2.04 * math.pi


@settings(max_examples=300)
@given(st.floats(1e-3, 10.0), st.floats(1.0, 1000.0))
def test_rate_identities(sv2, q0):
    s_pump = analytic.entropy_pumping(sv2, q0)
    w_ext = analytic.work_extraction(sv2, q0)
    s_i = analytic.entropy_production(sv2, q0)
    assert s_i == pytest.approx(s_pump - w_ext, abs=1e-12 * max(1.0, abs(s_pump)))
    assert w_ext == pytest.approx(sv2 * s_pump, abs=1e-12 * max(1.0, abs(w_ext)))
    assert s_i >= 0


def test_equilibrium_rates_vanish():
    assert analytic.entropy_pumping(1.0, 55) == 0.0
    assert analytic.work_extraction(1.0, 55) == 0.0
    assert analytic.entropy_production(1.0, 55) == 0.0


@pytest.mark.parametrize("tau", [math.pi / 2, TAU_P, 3.0, 20.0, 60 * math.pi])
def test_closed_form_matches_quadrature(tau):
    r = ReducedParams(0.36, 55.0, tau)
    closed = analytic.sigma_v2_closed(r)
    quad = spectral.variance_quadrature(r, rtol=1e-11)["sigma_v2"]
    assert closed == pytest.approx(quad, rel=1e-8)


def test_closed_form_raw_normalization_factor():
    d = analytic.closed_form_diagnostic(ReducedParams(0.36, 55.0, TAU_P))
    assert d["raw_over_quadrature"] == pytest.approx(55.0 / 2, rel=1e-8)
    assert d["rel_delta"] < 1e-8
    assert abs(d["raw_imag"]) < 1e-10 * abs(d["raw"])


def test_closed_form_refuses_unstable():
    with pytest.raises(InstabilityError):
        analytic.sigma_v2_closed(ReducedParams(6.0, 55.0, TAU_P))


def test_operating_point_values():
    r = ReducedParams(0.36, 55.0, TAU_P)
    m = analytic.steady_state_moments(r)
    rates = analytic.thermo_rates(r, m)
    assert m.sigma_q2 == pytest.approx(0.9717213276500746, rel=1e-9)
    assert m.sigma_v2 == pytest.approx(0.965757435694747, rel=1e-9)
    assert m.corr_delayed == pytest.approx(-0.0982, abs=1e-4)
    assert rates.s_pump == pytest.approx(6.4467e-4, rel=1e-4)
    assert rates.w_ext == pytest.approx(6.2259e-4, rel=1e-4)
    assert rates.s_vfb == pytest.approx(0.36 / 55, rel=1e-14)
    assert rates.eta_pump == pytest.approx(m.sigma_v2, rel=1e-12)
    assert rates.bound_nm >= rates.s_pump


def test_steady_state_moments_sources_agree():
    r = ReducedParams(0.5, 10.0, 1.0)
    a = analytic.steady_state_moments(r, "closed")
    b = analytic.steady_state_moments(r, "quadrature")
    assert a.sigma_v2 == pytest.approx(b.sigma_v2, rel=1e-8)
    with pytest.raises(ValueError):
        analytic.steady_state_moments(r, "magic")


def test_moment_validation():
    with pytest.raises(InvalidMomentsError):
        analytic.SteadyStateMoments(-1.0, 1.0, 0.0)
    with pytest.raises(InvalidMomentsError):
        analytic.SteadyStateMoments(1.0, 1.0, 1.5)


def test_correlation_zero_gain_undefined():
    m = analytic.SteadyStateMoments(1.0, 1.0, 0.0)
    with pytest.raises(UndefinedCorrelationError):
        analytic.correlation_closed(ReducedParams(0.0, 10.0, 1.0), m)


def test_joint_density_normalized_and_marginals():
    m = analytic.SteadyStateMoments(0.9, 1.2, 0.4)
    f = analytic.joint_density(m)
    total, _ = integrate.dblquad(lambda v, q: f(q, v), -12, 12, -12, 12)
    assert total == pytest.approx(1.0, abs=1e-7)
    cov, _ = integrate.dblquad(lambda v, q: q * v * f(q, v), -12, 12, -12, 12)
    assert cov == pytest.approx(0.4 * math.sqrt(0.9 * 1.2), abs=1e-7)
    with pytest.raises(DegenerateCovarianceError):
        analytic.joint_density(analytic.SteadyStateMoments(1.0, 1.0, 1.0))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.95), st.floats(3.0, 100.0), st.floats(0.1, 60.0))
def test_nonmarkov_bound_holds(frac, q0, tau):
    r = ReducedParams(frac * spectral.delay_independent_gain(q0), q0, tau)
    m = analytic.steady_state_moments(r)
    out = analytic.nonmarkov_bound(r, m)
    assert out["holds"]
    assert out["bound_nm"] == pytest.approx(out["s_pump_y"] + out["i_flow"], rel=1e-9, abs=1e-15)


def test_long_delay_limits():
    a = analytic.asymptotic_long_delay(ReducedParams(0.36, 55.0, 1.0))
    assert a["sigma_q2_inf"] == pytest.approx(1.0718899735892191, rel=1e-12)
    assert a["sigma_v2_inf"] == pytest.approx(1.071867011865498, rel=1e-12)
    assert a["t_eff_ratio_inf"] == pytest.approx(1.0648214, rel=1e-7)
    assert a["w_ext_inf"] == pytest.approx(-0.0011781818, rel=1e-7)
    assert a["corr_inf"] == pytest.approx(0.185832, rel=1e-6)
    assert a["w_ext_inf_exact"] == pytest.approx(-0.0013066729, rel=1e-6)
    assert a["corr_inf_exact"] == pytest.approx(0.1862437, rel=1e-6)


def test_long_delay_limit_approached_by_quadrature():
    # variances oscillate in tau with amplitude shrinking as the delay grows
    a = analytic.asymptotic_long_delay(ReducedParams(0.36, 55.0, 1.0))
    taus = np.linspace(400 * math.pi, 402 * math.pi, 17)[:-1]
    vals = [spectral.variance_quadrature(ReducedParams(0.36, 55.0, t))["sigma_v2"] for t in taus]
    assert np.mean(vals) == pytest.approx(a["sigma_v2_inf"], rel=5e-3)


def test_asymptotics_outside_domain():
    with pytest.raises(DomainError):
        analytic.asymptotic_long_delay(ReducedParams(1.2, 55.0, 1.0))


def test_evaluate_nan_when_unstable_and_known_quantities():
    r = ReducedParams(6.0, 55.0, TAU_P)
    assert math.isnan(analytic.evaluate(r, "s_pump"))
    with pytest.raises(ValueError):
        analytic.evaluate(r, "entropy")
    ok = ReducedParams(0.36, 55.0, TAU_P)
    assert analytic.evaluate(ok, "s_highq") == pytest.approx(0.36 / 55 * math.sin(TAU_P))


def test_drift_envelope_contains_central_curve():
    r = ReducedParams(0.36, 55.0, TAU_P)
    taus = np.linspace(math.pi, 6 * math.pi, 9)
    env = analytic.drift_envelope(r, 0.06, 0.025, "s_pump", taus)
    assert np.all(env["lower"] <= env["central"]) and np.all(env["central"] <= env["upper"])
    assert np.any(env["upper"] > env["lower"])
    flat = analytic.drift_envelope(r, 0.0, 0.0, "s_pump", taus)
    np.testing.assert_array_equal(flat["lower"], flat["upper"])
    with pytest.raises(ValueError):
        analytic.drift_envelope(r, -0.1, 0.0, "s_pump", taus)


def test_cooling_boundary_value_and_meaning():
    b = analytic.cooling_boundary(0.36, 10.0)
    assert b == pytest.approx(39.88496, abs=1e-4)
    # the last cooling point sits one period below the boundary
    last = b - 2 * math.pi
    below = spectral.variance_quadrature(ReducedParams(0.36, 10.0, last - 1e-3))["sigma_q2"]
    above = spectral.variance_quadrature(ReducedParams(0.36, 10.0, last + 1e-3))["sigma_q2"]
    assert below < 1.0 < above


def test_cooling_boundary_grows_with_quality_factor():
    vals = [analytic.cooling_boundary(0.36, q) for q in (5.0, 10.0, 16.875)]
    assert vals == sorted(vals)
    assert vals[0] == pytest.approx(21.398, abs=2e-3)
    assert analytic.cooling_boundary(0.0, 10.0) is None
    with pytest.raises(DomainError):
        analytic.cooling_boundary(1.2, 10.0)
