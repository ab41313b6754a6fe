import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaytherm import spectral
from delaytherm.errors import InstabilityError
from delaytherm.model import ReducedParams
from oracles import brute_variance, critical_gain

# (g, q0, tau) -> (sigma_q2, sigma_v2), frozen from the QUADPACK oracle in oracles.py
REFERENCE = {
    (0.36, 55.0, math.pi / 2): (0.7391016579396747, 0.7390421185492828),
    (0.36, 55.0, 2.04 * math.pi): (0.9717213276500746, 0.965757435694747),
    (0.5, 10.0, 1.0): (0.7384288447987889, 0.7172921953767711),
    (0.2, 5.0, 3.0): (0.9587973636348187, 0.9860788633811283),
    (0.36, 55.0, 20.0): (0.7986785859675474, 0.7968415527776133),
    (0.9, 200.0, 50.0): (1.4347767534109896, 1.4292466247703173),
}


@pytest.mark.parametrize("key", list(REFERENCE))
def test_variance_matches_frozen_reference(key):
    r = ReducedParams(*key)
    out = spectral.variance_quadrature(r, rtol=1e-10)
    sq, sv = REFERENCE[key]
    assert out["sigma_q2"] == pytest.approx(sq, rel=1e-9)
    assert out["sigma_v2"] == pytest.approx(sv, rel=1e-9)
    assert out["err_q2"] <= 1e-10 * out["sigma_q2"]


def test_oracle_reproduces_one_frozen_value():
    # keeps the frozen table honest without paying for every point
    sq = brute_variance(0.5, 10.0, 1.0, 0)
    assert sq == pytest.approx(REFERENCE[(0.5, 10.0, 1.0)][0], rel=1e-9)


def test_zero_gain_is_exactly_thermal():
    out = spectral.variance_quadrature(ReducedParams(0.0, 55.0, 3.0))
    assert out["sigma_q2"] == 1.0 and out["sigma_v2"] == 1.0


def test_zero_delay_matches_shifted_oscillator():
    g, q0 = 0.36, 55.0
    out = spectral.variance_quadrature(ReducedParams(g, q0, 0.0), rtol=1e-10)
    assert out["sigma_q2"] == pytest.approx(1 / (1 - g / q0), rel=1e-9)
    assert out["sigma_v2"] == pytest.approx(1.0, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(2.0, 80.0), st.floats(0.05, 30.0), st.floats(0.05, 0.9))
def test_variances_positive_and_finite(q0, tau, frac):
    r = ReducedParams(frac * spectral.delay_independent_gain(q0), q0, tau)
    out = spectral.variance_quadrature(r, rtol=1e-8)
    assert 0 < out["sigma_q2"] < np.inf
    assert 0 < out["sigma_v2"] < np.inf


def test_response_at_zero_gain():
    r = ReducedParams(0.0, 10.0, 1.0)
    w = np.array([0.0, 1.0, 2.0])
    chi = spectral.response(r, w)
    np.testing.assert_allclose(chi, 1 / (1 - w**2 + 1j * w / 10.0), rtol=1e-15)
    assert isinstance(spectral.response(r, 0.5), complex)


def test_position_spectrum_grid_integral():
    r = ReducedParams(0.36, 55.0, 2.04 * math.pi)
    w = np.linspace(-40, 40, 800_001)
    grid = spectral.position_spectrum(r, w)
    assert grid.metadata["convention"] == "two-sided"
    assert grid.integral() == pytest.approx(REFERENCE[(0.36, 55.0, 2.04 * math.pi)][0], rel=2e-3)


def test_spectrum_grid_validation():
    with pytest.raises(ValueError):
        spectral.SpectrumGrid([0.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        spectral.SpectrumGrid([1.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        spectral.SpectrumGrid([0.0, 1.0], [1.0, -1.0])


def test_band_variance_full_range_recovers_total():
    r = ReducedParams(0.5, 10.0, 1.0)
    total = spectral.band_variance(r, 0.0, 30.0) + spectral.band_variance(r, 30.0, 3000.0)
    assert total == pytest.approx(REFERENCE[(0.5, 10.0, 1.0)][0], rel=1e-6)


# ---------------------------------------------------------------------------
# stability


def test_delay_independent_gain_values():
    assert spectral.delay_independent_gain(55.0) == pytest.approx(math.sqrt(1 - 1 / (4 * 55.0**2)))
    assert spectral.delay_independent_gain(0.5) == 0.5
    # the minimum of q0 |1 - w^2 + i w/q0| over w
    w = np.linspace(0, 2, 2_000_001)
    for q0 in (0.8, 3.0, 55.0):
        brute = (q0 * np.abs(1 - w**2 + 1j * w / q0)).min()
        assert spectral.delay_independent_gain(q0) == pytest.approx(brute, rel=1e-9)


@pytest.mark.parametrize("q0,tau,gc", [(10.0, 1.5 * math.pi, 1.0), (55.0, 2.04 * math.pi, 5.2477),
                                       (55.0, 0.0, 55.0)])
def test_critical_gain_oracle(q0, tau, gc):
    assert critical_gain(q0, tau) == pytest.approx(gc, rel=1e-3)


@pytest.mark.parametrize("q0,tau", [(10.0, 1.5 * math.pi), (55.0, 2.04 * math.pi), (5.0, 3.0),
                                    (30.0, 0.7), (2.0, 10.0)])
def test_stability_brackets_critical_gain(q0, tau):
    gc = critical_gain(q0, tau)
    assert spectral.delay_stability(ReducedParams(0.95 * gc, q0, tau))
    assert not spectral.delay_stability(ReducedParams(1.05 * gc, q0, tau))


def test_winding_counts_pairs():
    count, _ = spectral.winding_number(ReducedParams(0.36, 55.0, 2.04 * math.pi))
    assert count == 0
    # well past the first crossing a complex pair has entered
    count, _ = spectral.winding_number(ReducedParams(6.0, 55.0, 2.04 * math.pi))
    assert count >= 2 and count % 2 == 0


def test_quadrature_refuses_unstable_point():
    with pytest.raises(InstabilityError):
        spectral.variance_quadrature(ReducedParams(6.0, 55.0, 2.04 * math.pi))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.6, 100.0), st.floats(0.0, 50.0), st.floats(0.0, 0.999))
def test_below_delay_independent_gain_always_stable(q0, tau, frac):
    r = ReducedParams(frac * spectral.delay_independent_gain(q0), q0, tau)
    assert spectral.delay_stability(r)
    if r.g > 0 and r.tau > 0:
        assert spectral.winding_number(r)[0] == 0
