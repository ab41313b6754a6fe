"""Closed-form steady-state moments and thermodynamic rates.

All rates are dimensionless: entropy rates in units of ``k_B Omega0``, work rates in
units of ``k_B T0 Omega0``.  Variances are in units of the thermal scales, so the
equilibrium values are ``sigma_q2 = sigma_v2 = 1``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import spectral
from .errors import (
    DegenerateCovarianceError,
    DomainError,
    InstabilityError,
    InvalidMomentsError,
    NumericalInconsistencyError,
    SingularBoundError,
    UndefinedCorrelationError,
)
from .model import ReducedParams, validity_domain

#: Relative imaginary residue tolerated in the complex closed form.
IMAG_RESIDUE_TOL = 1e-10


@dataclass(frozen=True)
class SteadyStateMoments:
    """Variances of position and velocity and the delayed correlation ``c(tau)``."""

    sigma_q2: float
    sigma_v2: float
    corr_delayed: float

    def __post_init__(self):
        if not (self.sigma_q2 > 0 and self.sigma_v2 > 0):
            raise InvalidMomentsError(
                f"variances must be positive: sigma_q2={self.sigma_q2}, sigma_v2={self.sigma_v2}")
        if not abs(self.corr_delayed) <= 1.0:
            raise InvalidMomentsError(f"|corr_delayed| must not exceed 1, got {self.corr_delayed}")


@dataclass(frozen=True)
class ThermoRates:
    """Entropy/work rates of the feedback-controlled oscillator.

    Efficiencies are ``None`` outside the region where their denominator entropy
    rate is positive.
    """

    s_pump: float
    w_ext: float
    s_i: float
    s_vfb: float
    s_highq: float
    bound_nm: float
    eta_pump: Optional[float]
    eta_vfb: Optional[float]
    eta_highq: Optional[float]


@dataclass(frozen=True)
class HighQEffective:
    gamma_ratio: float
    omega2_ratio: float
    s_highq: float
    s_vfb: float


# ---------------------------------------------------------------------------
# velocity variance


def _closed_form_raw(r: ReducedParams) -> complex:
    """Velocity-variance expression in terms of the eigenfrequencies ``omega_{1,2}``.

    In this raw form it equals ``Q0/2`` times the variance in thermal units.
    """
    g, q0, tau = r.g, r.q0, r.tau
    root = cmath.sqrt(g * g - 1.0 + 1.0 / (4.0 * q0 * q0))
    base = 1.0 - 1.0 / (2.0 * q0 * q0)
    w1 = cmath.sqrt(base + root / q0)
    w2 = cmath.sqrt(base - root / q0)

    def xy(w):
        h = -(w / q0) / (1.0 - w * w - g / q0)
        c, s = cmath.cos(w * tau / 2.0), cmath.sin(w * tau / 2.0)
        return c + h * s, h * c - s

    x1, y1 = xy(w1)
    x2, y2 = xy(w2)
    return 0.5 / (w2 * w2 - w1 * w1) * (y1 * w1 / x1 - y2 * w2 / x2)


def sigma_v2_closed(r: ReducedParams, check_stability: bool = True) -> float:
    """Velocity variance from the closed eigenfrequency formula, in thermal units.

    Evaluated in complex arithmetic (the eigenfrequencies are complex whenever
    ``g^2 < 1 - 1/(4 Q0^2)``) and rescaled by ``2/Q0`` to thermal units.
    """
    if check_stability and not spectral.delay_stability(r):
        raise InstabilityError(f"no stationary state at {r}")
    if r.g == 0.0:
        return 1.0
    try:
        raw = _closed_form_raw(r)
    except ZeroDivisionError as exc:
        raise NumericalInconsistencyError(f"closed form singular at {r}") from exc
    value = raw * 2.0 / r.q0
    residue = abs(value.imag) / max(abs(value.real), 1e-300)
    if not math.isfinite(value.real) or residue > IMAG_RESIDUE_TOL:
        raise NumericalInconsistencyError(
            f"imaginary residue {residue:.3e} in closed form at {r}", value=value, residue=residue)
    if value.real <= 0:
        raise NumericalInconsistencyError(f"non-positive closed-form variance at {r}",
                                          value=value, residue=residue)
    return float(value.real)


def closed_form_diagnostic(r: ReducedParams) -> dict:
    """Compare the raw closed form against the quadrature oracle.

    Reports the raw value, the rescaled value, the quadrature value and
    their ratios; the ``raw/quadrature`` ratio is ``Q0/2`` when the only
    difference is the normalization.
    """
    raw = _closed_form_raw(r)
    quad = spectral.variance_quadrature(r)["sigma_v2"]
    scaled = raw.real * 2.0 / r.q0
    return {
        "raw": raw.real,
        "raw_imag": raw.imag,
        "normalized": scaled,
        "quadrature": quad,
        "raw_over_quadrature": raw.real / quad,
        "expected_factor": r.q0 / 2.0,
        "rel_delta": abs(scaled - quad) / quad,
    }


def steady_state_moments(r: ReducedParams, source: str = "quadrature") -> SteadyStateMoments:
    """Moments at ``r``; ``sigma_q2`` always comes from the spectral quadrature.

    ``source`` selects the velocity variance route: ``"quadrature"`` or ``"closed"``.
    """
    quad = spectral.variance_quadrature(r)
    if source == "quadrature":
        sv2 = quad["sigma_v2"]
    elif source == "closed":
        sv2 = sigma_v2_closed(r, check_stability=False)
    else:
        raise ValueError(f"unknown source {source!r}")
    sq2 = quad["sigma_q2"]
    corr = 0.0 if r.g == 0 else _corr(r.g, sq2, sv2)
    return SteadyStateMoments(sigma_q2=sq2, sigma_v2=sv2, corr_delayed=corr)


# ---------------------------------------------------------------------------
# rates


def entropy_pumping(sigma_v2, q0):
    return (1.0 - sigma_v2) / (q0 * sigma_v2)


def work_extraction(sigma_v2, q0):
    return (1.0 - sigma_v2) / q0


def entropy_production(sigma_v2, q0):
    return (1.0 - sigma_v2) ** 2 / (q0 * sigma_v2)


def highq_effective(r: ReducedParams) -> HighQEffective:
    """Effective Markovian damping/frequency ratios of the high-Q mapping."""
    return HighQEffective(
        gamma_ratio=1.0 + r.g * math.sin(r.tau),
        omega2_ratio=1.0 - (r.g / r.q0) * math.cos(r.tau),
        s_highq=(r.g / r.q0) * math.sin(r.tau),
        s_vfb=r.g / r.q0,
    )


def thermo_rates(r: ReducedParams, m: SteadyStateMoments) -> ThermoRates:
    sv2 = m.sigma_v2
    if not sv2 > 0:
        raise InvalidMomentsError(f"sigma_v2 must be positive, got {sv2}")
    q0 = r.q0
    s_pump = entropy_pumping(sv2, q0)
    w_ext = work_extraction(sv2, q0)
    s_i = entropy_production(sv2, q0)
    hq = highq_effective(r)
    if r.g == 0.0:
        bound = 0.0
    else:
        bound = nonmarkov_bound(r, m)["bound_nm"]

    def eff(den):
        return w_ext / den if den > 0 and w_ext > 0 else None

    return ThermoRates(
        s_pump=s_pump, w_ext=w_ext, s_i=s_i, s_vfb=hq.s_vfb, s_highq=hq.s_highq,
        bound_nm=bound, eta_pump=eff(s_pump), eta_vfb=eff(hq.s_vfb), eta_highq=eff(hq.s_highq),
    )


# ---------------------------------------------------------------------------
# correlations


def _corr(g, sigma_q2, sigma_v2):
    return (sigma_v2 - 1.0) / (g * math.sqrt(sigma_q2 * sigma_v2))


def correlation_closed(r: ReducedParams, m: SteadyStateMoments) -> float:
    """Correlation of ``q(t - tau)`` and ``v(t)`` from the stationary energy balance."""
    if r.g == 0.0:
        raise UndefinedCorrelationError("correlation is 0/0 at zero gain")
    return _corr(r.g, m.sigma_q2, m.sigma_v2)


def joint_density(m: SteadyStateMoments) -> Callable:
    """Bivariate Gaussian density of ``(q(t - tau), v(t))``."""
    c = m.corr_delayed
    if abs(c) >= 1.0:
        raise DegenerateCovarianceError(f"|c| = {abs(c)} gives a singular covariance")
    sq, sv = math.sqrt(m.sigma_q2), math.sqrt(m.sigma_v2)
    norm = 1.0 / (2.0 * math.pi * sq * sv * math.sqrt(1.0 - c * c))

    def density(q_delayed, v):
        a = np.asarray(q_delayed, dtype=float) / sq
        b = np.asarray(v, dtype=float) / sv
        quad = (a * a - 2.0 * c * a * b + b * b) / (1.0 - c * c)
        return norm * np.exp(-0.5 * quad)

    return density


def nonmarkov_bound(r: ReducedParams, m: SteadyStateMoments) -> dict:
    """Coarse-graining pumping contribution plus information flow between ``q(t-tau)`` and ``v``."""
    g, q0 = r.g, r.q0
    sv2, sx2 = m.sigma_v2, m.sigma_q2
    x = 1.0 - sv2
    den = g * g * sx2 * sv2 - x * x
    if den == 0.0 or not math.isfinite(den):
        raise SingularBoundError(f"vanishing denominator at {r}")
    s_pump_y = q0 * (sv2 - 1.0) * (sv2 - sx2) / den
    i_flow = x * (q0 * q0 * (sv2 - sx2) + g * g * sx2 + x) / (q0 * den)
    bound = x * (g * g * sx2 + x) / (q0 * den)
    s_pump = entropy_pumping(sv2, q0)
    return {
        "s_pump_y": s_pump_y,
        "i_flow": i_flow,
        "bound_nm": bound,
        "holds": bool(s_pump <= bound + 1e-15 * max(abs(bound), abs(s_pump))),
    }


# ---------------------------------------------------------------------------
# long-delay asymptotics


def im_omega1(g: float, q0: float) -> float:
    inner = 1.0 / (2.0 * q0 * q0) - 1.0 + math.sqrt(1.0 - g * g / (q0 * q0))
    return math.sqrt(2.0) / 2.0 * math.sqrt(inner)


def asymptotic_long_delay(r: ReducedParams) -> dict:
    """Infinite-delay variances plus the leading-order temperature, work and correlation.

    ``sigma_q2_inf`` and ``sigma_v2_inf`` are exact limits; ``t_eff_ratio_inf``,
    ``w_ext_inf`` and ``corr_inf`` are the low-gain expansions
    ``1 + (1 + 1/Q0^2) g^2/2``, ``-g^2/(2 Q0)`` and ``g/2 + g^3/8``.
    """
    if not validity_domain(r)["underdamped_asymptotics"]:
        raise DomainError(f"long-delay asymptotics not valid at g={r.g}, q0={r.q0}")
    g, q0 = r.g, r.q0
    im1 = im_omega1(g, q0)
    sv2 = 1.0 / (2.0 * q0 * im1)
    sq2 = sv2 / math.sqrt(1.0 - g * g / (q0 * q0))
    return {
        "sigma_q2_inf": sq2,
        "sigma_v2_inf": sv2,
        "t_eff_ratio_inf": 1.0 + 0.5 * (1.0 + 1.0 / q0**2) * g * g,
        "w_ext_inf": -g * g / (2.0 * q0),
        "corr_inf": g / 2.0 + g**3 / 8.0,
        "w_ext_inf_exact": work_extraction(sv2, q0),
        "corr_inf_exact": _corr(g, sq2, sv2) if g > 0 else 0.0,
    }


# ---------------------------------------------------------------------------
# derived curves


QUANTITIES = ("sigma_q2", "sigma_v2", "t_eff_q", "t_eff_v", "corr", "s_pump", "w_ext", "s_i",
              "s_vfb", "s_highq", "bound_nm")


def evaluate(r: ReducedParams, quantity: str, source: str = "closed") -> float:
    """Single scalar of the steady state at ``r``; NaN if ``r`` is unstable."""
    if quantity not in QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")
    if quantity == "s_vfb":
        return r.g / r.q0
    if quantity == "s_highq":
        return (r.g / r.q0) * math.sin(r.tau)
    try:
        if quantity in ("sigma_v2", "t_eff_v", "s_pump", "w_ext", "s_i") and source == "closed":
            sv2 = sigma_v2_closed(r)
            return {"sigma_v2": sv2, "t_eff_v": sv2, "s_pump": entropy_pumping(sv2, r.q0),
                    "w_ext": work_extraction(sv2, r.q0),
                    "s_i": entropy_production(sv2, r.q0)}[quantity]
        if quantity in ("sigma_q2", "t_eff_q"):
            return spectral.variance_quadrature(r, which=("q2",))["sigma_q2"]
        m = steady_state_moments(r, source="closed" if source == "closed" else "quadrature")
    except InstabilityError:
        return float("nan")
    rates = thermo_rates(r, m)
    return {
        "sigma_v2": m.sigma_v2, "t_eff_v": m.sigma_v2, "corr": m.corr_delayed,
        "s_pump": rates.s_pump, "w_ext": rates.w_ext, "s_i": rates.s_i, "bound_nm": rates.bound_nm,
    }[quantity]


def drift_envelope(r: ReducedParams, rel_g: float, rel_tau: float, quantity: str,
                   taus, source: str = "closed") -> dict:
    """Pointwise band over ``taus`` from evaluations at ``g(1 +- 2 rel_g)`` and ``tau(1 +- 2 rel_tau)``.

    The central curve is included among the evaluations so the band always contains it.
    """
    if rel_g < 0 or rel_tau < 0:
        raise ValueError("relative uncertainties must be non-negative")
    taus = np.asarray(taus, dtype=float)
    central = np.array([evaluate(r.replace(tau=t), quantity, source) for t in taus])
    lower, upper = central.copy(), central.copy()
    if rel_g > 0 or rel_tau > 0:
        for sg in (-1.0, 1.0):
            for st in (-1.0, 1.0):
                g = max(r.g * (1.0 + 2.0 * sg * rel_g), 0.0)
                curve = np.array([
                    evaluate(r.replace(g=g, tau=t * (1.0 + 2.0 * st * rel_tau)), quantity, source)
                    for t in taus])
                lower = np.fmin(lower, curve)
                upper = np.fmax(upper, curve)
    return {"tau": taus, "central": central, "lower": lower, "upper": upper}


def cooling_boundary(g: float, q0: float, step: float = 2 * math.pi / 100, tol: float = 1e-6,
                     clear_windows: int = 3, tau_max: float = 1e5,
                     scan_rtol: float = 1e-7) -> Optional[float]:
    """Largest delay whose preceding ``2 pi`` phase window still contains a cooling point.

    A point cools when ``sigma_q2 < 1``.  The scan advances in ``step`` until
    ``clear_windows`` full periods pass without cooling, then bisects the last
    cooling crossing to ``tol``.  Returns ``None`` when no delay cools at all.
    """
    r0 = ReducedParams(g=g, q0=q0, tau=0.0)
    if not validity_domain(r0)["underdamped_asymptotics"]:
        raise DomainError(f"cooling boundary requires the validity domain, got g={g}, q0={q0}")
    if g == 0.0:
        return None

    def sq2(tau, rtol=scan_rtol):
        # position spectrum difference decays as w^-6; a short cutoff usually suffices
        r = r0.replace(tau=tau)
        w_max = spectral.default_omega_max(r, 0, rtol, floor=6.0)
        return spectral.variance_quadrature(r, rtol=rtol, check_stability=False,
                                            omega_max=w_max, which=("q2",))["sigma_q2"]

    last_below = None
    tau = 0.0
    horizon = clear_windows * 2 * math.pi
    while tau <= tau_max:
        if sq2(tau) < 1.0:
            last_below = tau
        if tau >= (last_below if last_below is not None else 0.0) + horizon:
            break
        tau += step
    else:
        raise DomainError(f"cooling persists up to tau_max={tau_max}")
    if last_below is None:
        return None
    lo, hi = last_below, last_below + step
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sq2(mid, rtol=1e-9) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) + 2 * math.pi
