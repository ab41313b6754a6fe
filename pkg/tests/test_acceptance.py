"""End-to-end acceptance checks.

Each test records a pass/fail line through ``acceptance_record``; the terminal
summary prints one line per criterion.  Asserts use the stated tolerances as-is.
"""

import math
import time

import numpy as np
import pytest

from delaytherm import analytic, analyze, cli, simulate, spectral, sweep
from delaytherm.errors import DivergenceError
from delaytherm.model import ReducedParams
from delaytherm.records import SweepRow
from oracles import critical_gain, sample_kurtosis

pytestmark = pytest.mark.acceptance

G, Q0 = 0.36, 55.0
TAU_GRID = np.linspace(0.5 * math.pi, 60 * math.pi, 25)
# second-order step; at 2 pi/200 the O(dt^2) bias of c(tau) exceeds 3 SE at a few points
FINE_DT = 2 * math.pi / 400


@pytest.fixture(scope="session")
def delay_sweep():
    """Criterion 3 ensemble: 25 delays, 16 trajectories of 2000 Q0 each, with theory rows."""
    sim = sweep.SimSettings(dt=FINE_DT, n_traj=16, duration_q=2000.0)
    t0 = time.perf_counter()
    rows = sweep.sweep_delay(G, Q0, TAU_GRID, sources=("closed", "quadrature", "simulation"),
                             seed=2024, sim=sim)
    return rows, time.perf_counter() - t0


def _by_source(rows, source):
    return [r for r in rows if r.source == source]


# ---------------------------------------------------------------------------


def test_criterion_1_second_law_identities(acceptance_record):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, negative = 0.0, 0
    for _ in range(500):
        r = ReducedParams(rng.uniform(0, 0.9), rng.uniform(2, 200), rng.uniform(0, 100 * math.pi))
        assert spectral.delay_stability(r)
        sv2 = analytic.sigma_v2_closed(r, check_stability=False)
        s_pump = analytic.entropy_pumping(sv2, r.q0)
        w_ext = analytic.work_extraction(sv2, r.q0)
        s_i = analytic.entropy_production(sv2, r.q0)
        scale = max(abs(s_pump), abs(w_ext), abs(s_i), 1e-300)
        worst = max(worst, abs(s_pump - w_ext - s_i) / scale)
        negative += s_i < 0
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and negative == 0 and elapsed < 10
    acceptance_record(1, "identity", ok, f"max rel {worst:.2e}, s_i<0: {negative}, {elapsed:.1f}s")
    assert worst <= 1e-12
    assert negative == 0
    assert elapsed < 10


def test_criterion_2_oracle_equivalence(acceptance_record):
    t0 = time.perf_counter()
    worst, worst_at, n = 0.0, None, 0
    ratios = []
    for g in np.linspace(0.05, 0.9, 5):
        for q0 in (2.0, 10.0, 55.0, 200.0):
            for tau in np.linspace(0.1, 60 * math.pi, 10):
                r = ReducedParams(float(g), q0, float(tau))
                closed = analytic.sigma_v2_closed(r)
                quad = spectral.variance_quadrature(r, rtol=1e-10)["sigma_v2"]
                rel = abs(closed - quad) / quad
                ratios.append(closed / quad)
                n += 1
                if rel > worst:
                    worst, worst_at = rel, r
    elapsed = time.perf_counter() - t0
    # a systematic offset would show up as a common closed/quadrature ratio away from 1
    bias = float(np.mean(ratios) - 1)
    ok = worst <= 1e-6 and elapsed < 30 and n == 200
    acceptance_record(2, "closed vs quadrature", ok,
                      f"{n} points, max rel {worst:.2e} at {worst_at}, mean ratio-1 {bias:+.1e}, "
                      f"{elapsed:.1f}s")
    assert n == 200
    assert worst <= 1e-6
    assert elapsed < 30


def test_criterion_3_simulation_vs_theory(delay_sweep, acceptance_record):
    rows, elapsed = delay_sweep
    report = sweep.compare(rows, dt=FINE_DT, z_max=3.0, coverage=0.95)
    for v in report.verdicts:
        acceptance_record(3, v.name, v.passed, v.detail)
    acceptance_record(3, "runtime", elapsed < 300, f"{elapsed:.0f}s")
    assert report.passed, report.table()
    assert elapsed < 300


def test_criterion_4_s_vfb(acceptance_record):
    r = ReducedParams(G, Q0, 1e4)
    s_vfb = analytic.thermo_rates(r, analytic.steady_state_moments(r)).s_vfb
    ok = abs(s_vfb - 6.545e-3) <= 0.5e-6
    acceptance_record(4, "s_vfb", ok, f"{s_vfb:.6e} vs 6.545e-3")
    assert s_vfb == pytest.approx(6.545e-3, abs=0.5e-6)


def test_criterion_4_t_eff_inf(acceptance_record):
    r = ReducedParams(G, Q0, 1e4)
    asym = analytic.asymptotic_long_delay(r)["t_eff_ratio_inf"]
    quad = spectral.variance_quadrature(r, rtol=1e-10)
    ok_asym = abs(asym / 1.065 - 1) <= 0.005
    ok_q = abs(quad["sigma_q2"] / 1.065 - 1) <= 0.005
    ok_v = abs(quad["sigma_v2"] / 1.065 - 1) <= 0.005
    acceptance_record(4, "T_eff_inf", ok_asym and ok_q and ok_v,
                      f"expansion {asym:.5f}, quadrature q {quad['sigma_q2']:.5f} "
                      f"v {quad['sigma_v2']:.5f} vs 1.065 +- 0.5%")
    assert asym == pytest.approx(1.065, rel=0.005)
    assert quad["sigma_q2"] == pytest.approx(1.065, rel=0.005)
    assert quad["sigma_v2"] == pytest.approx(1.065, rel=0.005)


def test_criterion_4_w_ext_inf(acceptance_record):
    r = ReducedParams(G, Q0, 1e4)
    w_ext = analytic.thermo_rates(r, analytic.steady_state_moments(r)).w_ext
    ok = abs(w_ext / -1.178e-3 - 1) <= 0.02
    acceptance_record(4, "w_ext_inf", ok, f"{w_ext:.5e} vs -1.178e-3 +- 2%")
    assert w_ext == pytest.approx(-1.178e-3, rel=0.02)


def test_criterion_4_corr_inf(acceptance_record):
    r = ReducedParams(G, Q0, 1e4)
    c = analytic.steady_state_moments(r).corr_delayed
    ok = abs(c / 0.1858 - 1) <= 0.02
    acceptance_record(4, "c_inf", ok, f"{c:.5f} vs 0.1858 +- 2%")
    assert c == pytest.approx(0.1858, rel=0.02)


def test_criterion_5_highq_agreement_at_short_delay(acceptance_record):
    taus = np.linspace(0, 4 * math.pi, 801)
    dev = max(abs(analytic.evaluate(ReducedParams(G, Q0, t), "s_pump")
                  - analytic.evaluate(ReducedParams(G, Q0, t), "s_highq")) for t in taus)
    ratio = dev / (G / Q0)
    acceptance_record(5, "short-delay agreement", ratio <= 0.05, f"max dev {ratio:.4f} g/Q0 (tol 0.05)")
    assert ratio <= 0.05


def test_criterion_5_oscillation_decrease(acceptance_record):
    taus = np.linspace(39 * math.pi, 41 * math.pi, 401)
    s = np.array([analytic.evaluate(ReducedParams(G, Q0, t), "s_pump") for t in taus])
    amplitude = 0.5 * (s.max() - s.min())
    ratio = amplitude / (G / Q0)
    acceptance_record(5, "oscillation decrease", ratio < 0.9, f"amplitude ratio {ratio:.3f} (< 0.9)")
    assert ratio < 0.9


def test_criterion_6_nonmarkov_bound(delay_sweep, acceptance_record):
    rows, _ = delay_sweep
    checked, violations = 0, []
    for row in _by_source(rows, "quadrature"):
        if row.status != "ok":
            continue
        checked += 1
        r = sweep.row_params(row)
        m = analytic.steady_state_moments(r)
        out = analytic.nonmarkov_bound(r, m)
        if not out["holds"]:
            violations.append(row.tau_realized)
    ok = checked == len(TAU_GRID) and not violations
    acceptance_record(6, "s_pump <= bound", ok, f"{checked} points, violations {violations}")
    assert checked == len(TAU_GRID)
    assert not violations


def test_criterion_7_damping_rate(acceptance_record):
    stride = 4
    cfg = simulate.SimConfig(ReducedParams(0.0, Q0, 0.0), n_steps=int(20000 * Q0 / simulate.DEFAULT_DT),
                             seed=77, record_stride=stride)
    tr = simulate.integrate(cfg)
    fit = analyze.energy_autocorr_gamma(tr.q, tr.v, stride * cfg.dt)
    rel = abs(fit.value * Q0 - 1)
    acceptance_record(7, "Gamma", rel <= 0.05, f"Gamma*Q0 = {fit.value * Q0:.4f} +- {fit.stderr * Q0:.4f}")
    assert rel <= 0.05


def test_criterion_7_gain_fit(delay_sweep, acceptance_record):
    rows, _ = delay_sweep
    sims = [r for r in _by_source(rows, "simulation") if r.status == "ok"]
    fit = analyze.fit_gain([r.tau_realized for r in sims], [r.sigma_v2 for r in sims], Q0,
                           sigma=[r.se_sigma_v2 for r in sims])
    z = (fit.value - G) / fit.stderr
    acceptance_record(7, "fit_gain", abs(z) <= 3, f"g = {fit.value:.4f} +- {fit.stderr:.4f} (z {z:+.2f})")
    assert abs(z) <= 3


def test_criterion_7_equilibrium_kurtosis(acceptance_record):
    cfg = simulate.SimConfig(ReducedParams(0.0, Q0, 0.0), n_steps=int(2000 * Q0 / simulate.DEFAULT_DT),
                             seed=78)
    kq, kv = [], []
    for i in range(16):
        tr = simulate.integrate(cfg.replace(seed=simulate.derive_seed(cfg.seed, i)))
        kq.append(analyze.moments(tr.q)["kurtosis"])
        kv.append(analyze.moments(tr.v)["kurtosis"])
        assert kq[-1] == pytest.approx(sample_kurtosis(tr.q), rel=1e-9)
    results = []
    for name, k in (("q", kq), ("v", kv)):
        mean, se = np.mean(k), np.std(k, ddof=1) / math.sqrt(len(k))
        results.append((name, mean, se, abs(mean - 3) <= 3 * se))
    detail = ", ".join(f"{n}: {m:.4f} +- {s:.4f}" for n, m, s, _ in results)
    ok = all(r[3] for r in results)
    acceptance_record(7, "kurtosis", ok, detail)
    assert ok


def _time_domain_bounded(r, seed):
    dt = min(2 * math.pi / 200, r.tau / 50)
    duration = 40 * r.q0 + 4 * r.tau
    n = int(duration / dt)
    cfg = simulate.SimConfig(r, dt=dt, n_steps=n, seed=seed, record_stride=max(1, n // 2000))
    try:
        tr = simulate.integrate(cfg)
    except DivergenceError:
        return False, math.inf
    quarter = tr.q.size // 4
    growth = np.var(tr.q[-quarter:]) / np.var(tr.q[:quarter])
    return growth < 10, growth


def test_criterion_8_stability_oracle(acceptance_record):
    rng = np.random.default_rng(1)
    mismatches = []
    for i in range(50):
        q0, tau = float(rng.uniform(2, 60)), float(rng.uniform(0.3, 30))
        gc = critical_gain(q0, tau)
        r = ReducedParams(gc * (0.7 if i % 2 == 0 else 1.5), q0, tau)
        stable = spectral.winding_number(r)[0] == 0
        bounded, growth = _time_domain_bounded(r, seed=i)
        if stable != bounded:
            mismatches.append((round(q0, 3), round(tau, 3), round(r.g, 4), stable, growth))
    acceptance_record(8, "winding vs time domain", not mismatches, f"{50 - len(mismatches)}/50 agree")
    assert not mismatches


FIGURE_ARGS = {
    "fig3": ["--n-tau", "20", "--sim-points", "2", "--n-traj", "2", "--duration-q", "20"],
    "fig4": ["--n-tau", "20", "--sim-points", "2", "--n-traj", "2", "--duration-q", "20"],
    "fig5": ["--n-tau", "24", "--n-q", "4", "--boundary-qs", "5", "10"],
    "suppQ": ["--n-q", "6", "--sim-points", "1", "--n-traj", "2", "--duration-q", "20"],
    "suppBound": ["--n-tau", "20"],
}


def test_criterion_9_figure_determinism(tmp_path, acceptance_record):
    differing = []
    for fig, extra in FIGURE_ARGS.items():
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run / fig
            assert cli.main(["figure", fig, *extra, "--seed", "11", "--out", str(out)]) == 0
            outputs.append((out / f"{fig}.csv").read_bytes())
        if outputs[0] != outputs[1]:
            differing.append(fig)
    acceptance_record(9, "byte-identical reruns", not differing,
                      f"{len(FIGURE_ARGS) - len(differing)}/{len(FIGURE_ARGS)} figures identical")
    assert not differing
