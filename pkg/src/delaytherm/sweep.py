"""Parameter sweeps producing :class:`~delaytherm.records.SweepRow` tables, and
the comparison of rows from different sources."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import analytic, simulate, spectral
from .errors import (
    EnsembleError,
    IndeterminateStabilityError,
    JoinError,
    SingularBoundError,
)
from .model import ReducedParams
from .records import SweepRow

THEORY_SOURCES = ("closed", "quadrature")


@dataclass(frozen=True)
class SimSettings:
    """Ensemble settings shared by every simulated point of a sweep."""

    dt: float = simulate.DEFAULT_DT
    n_traj: int = 16
    duration_q: float = 2000.0  # recorded duration in units of Q0
    workers: int = 1

    def config(self, r: ReducedParams, seed: int) -> simulate.SimConfig:
        n_steps = int(math.ceil(self.duration_q * r.q0 / self.dt))
        return simulate.SimConfig(r, dt=self.dt, n_steps=n_steps, seed=seed)

    def realize(self, tau: float) -> float:
        return round(tau / self.dt) * self.dt


def linear_grid(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("grid needs at least one point")
    if n == 1:
        return np.array([float(lo)])
    if not hi > lo:
        raise ValueError(f"grid bounds must increase, got [{lo}, {hi}]")
    return np.linspace(lo, hi, n)


def _base_row(r: ReducedParams, tau_requested: float, source: str) -> SweepRow:
    hq = analytic.highq_effective(r)
    return SweepRow(g=r.g, q0=r.q0, tau_requested=tau_requested, tau_realized=r.tau,
                    source=source, s_vfb=hq.s_vfb, s_highq=hq.s_highq)


def _fill_rates(row: SweepRow, r: ReducedParams, m: analytic.SteadyStateMoments) -> SweepRow:
    row.sigma_q2, row.sigma_v2, row.corr = m.sigma_q2, m.sigma_v2, m.corr_delayed
    try:
        rates = analytic.thermo_rates(r, m)
        row.bound_nm = rates.bound_nm
    except SingularBoundError:
        rates = None
    sv2 = m.sigma_v2
    row.s_pump = analytic.entropy_pumping(sv2, r.q0)
    row.w_ext = analytic.work_extraction(sv2, r.q0)
    row.s_i = analytic.entropy_production(sv2, r.q0)
    row.eta_pump = rates.eta_pump if rates is not None else None
    return row


def theory_row(r: ReducedParams, source: str = "closed",
               tau_requested: Optional[float] = None) -> SweepRow:
    """Steady state at ``r`` (``r.tau`` is the realized delay); unstable points are flagged."""
    if source not in THEORY_SOURCES:
        raise ValueError(f"theory source must be one of {THEORY_SOURCES}")
    row = _base_row(r, r.tau if tau_requested is None else tau_requested, source)
    try:
        stable = spectral.delay_stability(r)
    except IndeterminateStabilityError:
        row.status = "indeterminate"
        return row
    if not stable:
        row.status = "unstable"
        return row
    return _fill_rates(row, r, analytic.steady_state_moments(r, source=source))


def simulation_row(r: ReducedParams, settings: SimSettings, seed: int,
                   tau_requested: Optional[float] = None) -> SweepRow:
    """Ensemble estimate at ``r``; ``r.tau`` should already lie on the ``dt`` grid."""
    cfg = settings.config(r, seed)
    row = _base_row(r.replace(tau=cfg.tau_realized),
                    r.tau if tau_requested is None else tau_requested, "simulation")
    row.seed = int(seed)
    try:
        est = simulate.ensemble(cfg, settings.n_traj, workers=settings.workers)
    except EnsembleError:
        row.status = "diverged"
        return row
    sv2 = est.mean_sigma_v2
    m = analytic.SteadyStateMoments(est.mean_sigma_q2, sv2, float(np.clip(est.mean_corr, -1, 1)))
    _fill_rates(row, row_params(row), m)
    row.se_sigma_q2, row.se_sigma_v2, row.se_corr = est.se_sigma_q2, est.se_sigma_v2, est.se_corr
    # first-order propagation through the rate formulas
    row.se_s_pump = est.se_sigma_v2 / (r.q0 * sv2 * sv2)
    row.se_w_ext = est.se_sigma_v2 / r.q0
    return row


def row_params(row: SweepRow) -> ReducedParams:
    return ReducedParams(g=row.g, q0=row.q0, tau=row.tau_realized)


def run_points(points: Sequence[tuple[ReducedParams, float]], sources: Sequence[str],
               seed: int = 0, sim: Optional[SimSettings] = None, workers: int = 1,
               progress: Optional[Callable[[int, int], None]] = None) -> list[SweepRow]:
    """Evaluate ``(params, tau_requested)`` points with every source.

    Rows are ordered by point index, then by the order of ``sources``.  Simulated
    point ``i`` uses seed ``derive_seed(seed, i)``, so results do not depend on
    ``workers``.  When a simulation source is present, every source is evaluated
    at the delay realized on the simulation grid.
    """
    for s in sources:
        if s not in THEORY_SOURCES + ("simulation",):
            raise ValueError(f"unknown source {s!r}")
    if "simulation" in sources and sim is None:
        sim = SimSettings()
    jobs = []
    for i, (r, tau_req) in enumerate(points):
        if "simulation" in sources:
            r = r.replace(tau=sim.realize(r.tau))
        for s in sources:
            jobs.append((i, r, tau_req, s))

    def one(job):
        i, r, tau_req, s = job
        if s == "simulation":
            return simulation_row(r, sim, simulate.derive_seed(seed, i), tau_requested=tau_req)
        return theory_row(r, s, tau_requested=tau_req)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, jobs))
    else:
        rows = []
        for k, job in enumerate(jobs):
            rows.append(one(job))
            if progress:
                progress(k + 1, len(jobs))
    return rows


def sweep_delay(g: float, q0: float, taus: Sequence[float], sources=("closed",), **kw) -> list[SweepRow]:
    return run_points([(ReducedParams(g, q0, float(t)), float(t)) for t in taus], sources, **kw)


def sweep_q(q0s: Sequence[float], tau: float, g: Optional[float] = None,
            g_per_q: Optional[float] = None, sources=("closed",), **kw) -> list[SweepRow]:
    """Sweep the quality factor at fixed delay, with fixed ``g`` or ``g = g_per_q * Q0``."""
    if (g is None) == (g_per_q is None):
        raise ValueError("give exactly one of g and g_per_q")
    pts = [(ReducedParams(g if g is not None else g_per_q * q, float(q), tau), tau) for q in q0s]
    return run_points(pts, sources, **kw)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str
    failing: list = field(default_factory=list)


@dataclass
class ComparisonReport:
    rows: list
    verdicts: list

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def table(self) -> str:
        lines = [f"{'verdict':<24} {'result':<6} detail"]
        for v in self.verdicts:
            lines.append(f"{v.name:<24} {'PASS' if v.passed else 'FAIL':<6} {v.detail}")
            for item in v.failing[:20]:
                lines.append(f"{'':<31}{item}")
        return "\n".join(lines)


COMPARE_COLUMNS = ("index", "g", "q0", "tau_realized", "source", "reference", "quantity",
                   "value", "ref_value", "delta", "rel_delta", "se", "z")


def _join(rows, ref_rows, tol):
    pairs, orphans = [], []
    for k, row in enumerate(rows):
        match = [ref for ref in ref_rows
                 if ref.g == row.g and ref.q0 == row.q0
                 and abs(ref.tau_realized - row.tau_realized) <= tol]
        if not match:
            orphans.append(f"{row.source} row {k} (g={row.g}, q0={row.q0}, tau={row.tau_realized})")
        else:
            pairs.append((k, row, min(match, key=lambda m: abs(m.tau_realized - row.tau_realized))))
    return pairs, orphans


def compare(rows: Sequence[SweepRow], dt: float = simulate.DEFAULT_DT, rel_tol: float = 1e-6,
            z_max: float = 3.0, coverage: float = 0.95) -> ComparisonReport:
    """Join rows from two or more sources on ``(g, q0, tau_realized +- dt/2)`` and judge them.

    Verdicts: ``oracle_equivalence`` (closed vs quadrature ``sigma_v2`` within
    ``rel_tol``) and, per simulated quantity, ``coverage_<q>`` (fraction of rows with
    ``|z| <= z_max`` at least ``coverage``).  Rows that are not ok in every source
    are skipped.
    """
    by_source = {}
    for row in rows:
        by_source.setdefault(row.source, []).append(row)
    if len(by_source) < 2:
        raise JoinError(f"need rows from at least two sources, got {sorted(by_source)}")
    tol = dt / 2
    out, verdicts, orphans = [], [], []

    if "closed" in by_source and "quadrature" in by_source:
        pairs, orph = _join(by_source["closed"], by_source["quadrature"], tol)
        orphans += orph
        worst, failing = 0.0, []
        for k, row, ref in pairs:
            if row.status != "ok" or ref.status != "ok":
                continue
            rel = abs(row.sigma_v2 - ref.sigma_v2) / abs(ref.sigma_v2)
            worst = max(worst, rel)
            out.append({"index": k, "g": row.g, "q0": row.q0, "tau_realized": row.tau_realized,
                        "source": "closed", "reference": "quadrature", "quantity": "sigma_v2",
                        "value": row.sigma_v2, "ref_value": ref.sigma_v2,
                        "delta": row.sigma_v2 - ref.sigma_v2, "rel_delta": rel})
            if rel > rel_tol:
                failing.append(f"closed row {k} tau={row.tau_realized}: rel delta {rel:.3e}")
        verdicts.append(Verdict("oracle_equivalence", not failing,
                                f"max rel delta {worst:.3e} (tol {rel_tol:g})", failing))

    if "simulation" in by_source:
        ref_name = "closed" if "closed" in by_source else "quadrature"
        if ref_name not in by_source:
            raise JoinError("simulation rows need a theory source to compare against")
        pairs, orph = _join(by_source["simulation"], by_source[ref_name], tol)
        orphans += orph
        for quantity in ("sigma_v2", "sigma_q2", "corr"):
            n_ok, n, failing = 0, 0, []
            for k, row, ref in pairs:
                if row.status != "ok" or ref.status != "ok":
                    continue
                val, refv = getattr(row, quantity), getattr(ref, quantity)
                se = getattr(row, "se_" + quantity)
                z = (val - refv) / se if se else math.inf * np.sign(val - refv)
                n += 1
                inside = abs(z) <= z_max
                n_ok += inside
                if not inside:
                    failing.append(f"simulation row {k} tau={row.tau_realized}: {quantity} z={z:+.2f}")
                out.append({"index": k, "g": row.g, "q0": row.q0, "tau_realized": row.tau_realized,
                            "source": "simulation", "reference": ref_name, "quantity": quantity,
                            "value": val, "ref_value": refv, "delta": val - refv,
                            "rel_delta": abs(val - refv) / abs(refv) if refv else None,
                            "se": se, "z": z})
            frac = n_ok / n if n else 0.0
            verdicts.append(Verdict(f"coverage_{quantity}", n > 0 and frac >= coverage,
                                    f"{n_ok}/{n} within {z_max:g} SE (need {coverage:.0%})", failing))
    if orphans:
        raise JoinError("rows without a partner: " + "; ".join(orphans), orphans=orphans)
    return ComparisonReport(rows=out, verdicts=verdicts)
