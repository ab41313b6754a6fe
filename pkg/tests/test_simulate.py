import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaytherm import simulate
from delaytherm.errors import DivergenceError, EnsembleError, InvalidParameterError
from delaytherm.model import ReducedParams
from oracles import reference_integrate

TAU_P = 2.04 * math.pi


def _noise_for(cfg):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    start = rng.standard_normal(2)
    return start, rng.standard_normal(cfg.n_off), rng.standard_normal(cfg.n_on), rng.standard_normal(cfg.n_steps)


@pytest.mark.parametrize("g,q0,tau", [(0.36, 5.0, 1.3), (0.5, 3.0, 0.0), (0.2, 2.0, 4.0)])
def test_matches_step_by_step_reference(g, q0, tau):
    cfg = simulate.SimConfig(ReducedParams(g, q0, tau), dt=0.05, n_steps=3000, warmup_off=max(tau, 5.0),
                             warmup_on=5.0, seed=11)
    start, off, on, rec = _noise_for(cfg)
    ref_q, ref_v = reference_integrate(g, q0, cfg.n_delay, cfg.dt, start[0], start[1], off, on, rec)
    tr = simulate.integrate(cfg)
    np.testing.assert_allclose(tr.q, ref_q, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(tr.v, ref_v, rtol=1e-12, atol=1e-12)
    assert tr.stats["sigma_q2"] == pytest.approx(np.var(ref_q), rel=1e-9)
    assert tr.stats["sigma_v2"] == pytest.approx(np.var(ref_v), rel=1e-9)


def test_chunking_does_not_change_stream(monkeypatch):
    cfg = simulate.SimConfig(ReducedParams(0.36, 5.0, 2.0), dt=0.05, n_steps=5000, seed=3)
    a = simulate.integrate(cfg)
    monkeypatch.setattr(simulate, "NOISE_CHUNK", 777)
    b = simulate.integrate(cfg)
    np.testing.assert_array_equal(a.q, b.q)
    np.testing.assert_array_equal(a.v, b.v)


def test_same_seed_identical_different_seed_differs():
    cfg = simulate.SimConfig(ReducedParams(0.36, 10.0, TAU_P), n_steps=2000, seed=5)
    a, b = simulate.integrate(cfg), simulate.integrate(cfg)
    np.testing.assert_array_equal(a.q, b.q)
    c = simulate.integrate(cfg.replace(seed=6))
    assert not np.array_equal(a.q, c.q)
    assert a.meta["generator"].startswith("numpy.random.PCG64")


def test_record_stride_subsamples():
    cfg = simulate.SimConfig(ReducedParams(0.36, 10.0, 1.0), n_steps=1001, seed=1)
    full = simulate.integrate(cfg)
    sub = simulate.integrate(cfg.replace(record_stride=10))
    np.testing.assert_array_equal(sub.q, full.q[::10])
    np.testing.assert_allclose(np.diff(sub.t), 10 * cfg.dt)
    assert sub.stats == full.stats


@settings(max_examples=100)
@given(st.floats(0.0, 100.0), st.sampled_from([0.01, simulate.DEFAULT_DT, 0.1]))
def test_delay_realized_within_half_step(tau, dt):
    cfg = simulate.SimConfig(ReducedParams(0.1, 10.0, tau), dt=dt, n_steps=1)
    assert abs(cfg.tau_realized - tau) <= dt / 2 + 1e-12
    assert cfg.n_off >= cfg.n_delay


def test_config_validation():
    r = ReducedParams(0.36, 10.0, 5.0)
    for kw in (dict(dt=0.0), dict(n_steps=0), dict(record_stride=0), dict(seed=-1),
               dict(warmup_off=1.0), dict(warmup_on=-1.0)):
        with pytest.raises(InvalidParameterError):
            simulate.SimConfig(r, **kw)


def test_derive_seed_deterministic_and_distinct():
    seeds = [simulate.derive_seed(7, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [simulate.derive_seed(7, i) for i in range(100)]
    assert simulate.derive_seed(8, 0) != seeds[0]


def test_zero_gain_equilibrium_variances():
    cfg = simulate.SimConfig(ReducedParams(0.0, 10.0, 1.0), dt=2 * math.pi / 400, n_steps=2_000_000, seed=2)
    est = simulate.ensemble(cfg, 8)
    assert est.mean_sigma_q2 == pytest.approx(1.0, abs=4 * est.se_sigma_q2 + 0.005)
    assert est.mean_sigma_v2 == pytest.approx(1.0, abs=4 * est.se_sigma_v2 + 0.005)
    # free oscillator: <q(t - tau) v(t)> = -exp(-tau/2Q) sin(w1 tau)/w1
    w1 = math.sqrt(1 - 1 / 400)
    assert est.mean_corr == pytest.approx(-math.exp(-0.05) * math.sin(w1) / w1, abs=4 * est.se_corr + 0.005)


def test_ensemble_independent_of_workers():
    cfg = simulate.SimConfig(ReducedParams(0.36, 10.0, TAU_P), n_steps=20_000, seed=9)
    a = simulate.ensemble(cfg, 4, workers=1)
    b = simulate.ensemble(cfg, 4, workers=3)
    assert a == b
    with pytest.raises(InvalidParameterError):
        simulate.ensemble(cfg, 1)


def test_standard_error_shrinks_with_duration():
    r = ReducedParams(0.36, 10.0, TAU_P)
    short = simulate.ensemble(simulate.SimConfig(r, n_steps=25_000, seed=4), 16)
    long = simulate.ensemble(simulate.SimConfig(r, n_steps=400_000, seed=4), 16)
    ratio = short.se_sigma_v2 / long.se_sigma_v2
    assert 2.0 < ratio < 8.0  # sqrt(16) = 4 expected


def test_divergence_reported_with_step():
    cfg = simulate.SimConfig(ReducedParams(8.0, 10.0, TAU_P), n_steps=200_000, seed=1, warmup_on=0.0)
    with pytest.raises(DivergenceError) as info:
        simulate.integrate(cfg)
    assert info.value.step > 0
    with pytest.raises(EnsembleError):
        simulate.ensemble(cfg, 2)


def test_convergence_probe_flags_coarse_step():
    r = ReducedParams(0.36, 10.0, TAU_P)
    coarse = simulate.convergence_probe(simulate.SimConfig(r, dt=1.0, n_steps=20_000, seed=1), n_traj=4)
    assert not coarse["converged"]
    fine = simulate.convergence_probe(simulate.SimConfig(r, dt=2 * math.pi / 400, n_steps=100_000, seed=1),
                                      n_traj=4)
    assert fine["converged"]
    assert fine["dt"] == pytest.approx([2 * math.pi / 400, math.pi / 400, math.pi / 800])
