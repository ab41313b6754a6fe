"""Frequency-domain oracle for the delayed oscillator.

With the transform ``q(t) = int dw/2pi q(w) e^{iwt}`` the stationary response is

    chi(w) = 1 / (1 - w^2 + i w/Q0 - (g/Q0) e^{-i w tau})

and the two-sided noise spectrum is ``2/Q0``, so that

    sigma_q^2 = int dw/2pi (2/Q0) |chi|^2,   sigma_v^2 = int dw/2pi (2/Q0) w^2 |chi|^2.

Both integrals are evaluated as ``1 + int (...)(|chi|^2 - |chi_0|^2)`` where ``chi_0`` is
the feedback-free response whose integrals equal one exactly; the difference decays
fast enough that a short analytic tail finishes the job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import AccuracyError, IndeterminateStabilityError, InstabilityError
from .model import ReducedParams

# Gauss-Kronrod 7/15 nodes on [-1, 1] (positive half, including 0).
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
KRONROD_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
# Gauss nodes are the odd-indexed Kronrod nodes.
_GAUSS_IDX = np.array([1, 3, 5, 7, 9, 11, 13])
GAUSS_WEIGHTS = np.concatenate([_WG[:-1], _WG[::-1]])


@dataclass(frozen=True)
class ResponseEvaluation:
    omega: np.ndarray
    chi: np.ndarray


@dataclass(frozen=True)
class SpectrumGrid:
    """Spectral density samples normalized so that ``sigma^2 = int S dw/2pi``.

    ``frequencies`` are dimensionless angular frequencies (units of Omega0).
    """

    frequencies: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if f.shape != v.shape:
            raise ValueError("frequencies and values must have the same shape")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("spectral density values must be non-negative")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "values", v)

    def integral(self) -> float:
        """Trapezoidal ``int S dw/2pi`` over the grid, doubled if one-sided."""
        total = integrate.trapezoid(self.values, self.frequencies) / (2 * np.pi)
        if self.metadata.get("convention") == "one-sided-folded":
            return float(total)
        if self.metadata.get("convention") == "two-sided" and self.frequencies[0] >= 0:
            return float(2 * total)
        return float(total)


def characteristic(r: ReducedParams, s):
    """``D(s) = s^2 + s/Q0 + 1 - (g/Q0) e^{-s tau}``; ``chi(w) = 1/D(iw)``."""
    s = np.asarray(s, dtype=complex)
    return s * s + s / r.q0 + 1.0 - (r.g / r.q0) * np.exp(-s * r.tau)


def response(r: ReducedParams, omega):
    """Complex susceptibility ``chi(omega)``."""
    w = np.asarray(omega, dtype=float)
    d = 1.0 - w * w + 1j * w / r.q0 - (r.g / r.q0) * np.exp(-1j * w * r.tau)
    out = 1.0 / d
    return out if out.ndim else complex(out)


def position_spectrum(r: ReducedParams, omega) -> SpectrumGrid:
    """Two-sided position spectral density ``(2/Q0)|chi|^2`` on the given grid."""
    w = np.asarray(omega, dtype=float)
    values = (2.0 / r.q0) * np.abs(response(r, w)) ** 2
    return SpectrumGrid(w, values, {"convention": "two-sided", "quantity": "q",
                                    "g": r.g, "q0": r.q0, "tau": r.tau})


def _difference_integrand(r: ReducedParams, w: np.ndarray, k: int) -> np.ndarray:
    """One-sided integrand of ``sigma^2 - 1``: ``(2/(pi Q0)) w^{2k} (|chi|^2 - |chi_0|^2)``."""
    g, q0, tau = r.g, r.q0, r.tau
    c, s = np.cos(w * tau), np.sin(w * tau)
    w2 = w * w
    d0r = 1.0 - w2
    d0i = w / q0
    a0 = d0r * d0r + d0i * d0i
    dr = d0r - (g / q0) * c
    di = d0i + (g / q0) * s
    a = dr * dr + di * di
    # |D|^2 - |D0|^2 written out to avoid cancellation
    delta = 2 * (g / q0) * ((w2 - 1.0) * c + d0i * s) + (g / q0) ** 2
    weight = w2 if k == 1 else 1.0
    return (2.0 / (np.pi * q0)) * weight * (-delta) / (a * a0)


def _gk_panels(fun, a, b):
    """Kronrod estimate and |K - G| error on each panel [a_i, b_i]."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = mid[:, None] + half[:, None] * KRONROD_NODES[None, :]
    fx = fun(x)
    kron = half * (fx @ KRONROD_WEIGHTS)
    gauss = half * (fx[:, _GAUSS_IDX] @ GAUSS_WEIGHTS)
    return kron, np.abs(kron - gauss)


def _tail(r: ReducedParams, w_max: float, k: int) -> tuple[float, float]:
    """Analytic tail of the difference integrand beyond ``w_max`` and a bound on the rest.

    For large w the integrand behaves as
    ``(2/(pi Q0)) [-2(g/Q0) cos(w tau) w^{2k-6} - 2(g/Q0^2) sin(w tau) w^{2k-7}]``.
    """
    g, q0, tau = r.g, r.q0, r.tau
    if g == 0.0:
        return 0.0, 0.0
    pref = 2.0 / (np.pi * q0)
    n = 6 - 2 * k
    if tau == 0.0:
        lead = -2 * (g / q0) * w_max ** (1 - n) / (n - 1)
        second = 0.0
    else:
        lead = -2 * (g / q0) * integrate.quad(lambda w: w ** (-n), w_max, np.inf,
                                              weight="cos", wvar=tau)[0]
        second = -2 * (g / q0**2) * integrate.quad(lambda w: w ** (-n - 1), w_max, np.inf,
                                                   weight="sin", wvar=tau)[0]
    # next order: (g/Q0)(4 + 2/Q0^2 + g/Q0) w^{-n-2} plus the non-oscillatory g^2/Q0^2 term
    rest = pref * ((g / q0) * (6.0 + 2.0 / q0**2 + 2 * g / q0) / ((n + 1) * w_max ** (n + 1))
                   + (g / q0) ** 2 / ((n + 1) * w_max ** (n + 1)))
    if tau == 0.0:
        rest += pref * 2 * (g / q0**2) / (n * w_max**n)
    return pref * (lead + second), rest


def default_omega_max(r: ReducedParams, k: int, rtol: float, floor: float | None = None) -> float:
    """Upper frequency cutoff: ``floor`` (default ``20 + 10/Q0``), enlarged until the
    tail bound meets ``rtol``."""
    w = 20.0 + 10.0 / r.q0 if floor is None else floor
    if r.g == 0:
        return w
    coeff = (2.0 / (np.pi * r.q0)) * (r.g / r.q0) * (8.0 + r.g / r.q0)
    n = 7 - 2 * k
    needed = (coeff / (0.05 * rtol)) ** (1.0 / n)
    return float(max(w, needed))


def _initial_breaks(r: ReducedParams, w_max: float) -> np.ndarray:
    q0, tau = r.q0, r.tau
    h_far = 0.25 if tau == 0 else min(0.25, 2 * np.pi / tau)
    h_res = min(1.0 / (4.0 * q0), h_far)
    width = 20.0 / q0 + r.g / q0 + 0.1
    lo, hi = max(0.0, 1.0 - width), min(w_max, 1.0 + width)
    parts = []
    if lo > 0:
        parts.append(np.linspace(0.0, lo, int(np.ceil(lo / h_far)) + 1))
    parts.append(np.linspace(lo, hi, int(np.ceil((hi - lo) / h_res)) + 1))
    parts.append(np.linspace(hi, w_max, int(np.ceil((w_max - hi) / h_far)) + 1))
    return np.unique(np.concatenate(parts))


def _adaptive(fun, breaks: np.ndarray, atol_fn, max_rounds: int = 40):
    a, b = breaks[:-1], breaks[1:]
    done_val, done_err = 0.0, 0.0
    n_eval = 0
    for _ in range(max_rounds):
        val, err = _gk_panels(fun, a, b)
        n_eval += 15 * a.size
        total = done_val + val.sum()
        atol = atol_fn(total)
        total_err = done_err + err.sum()
        if total_err <= atol:
            return total, total_err, n_eval
        # accept panels already well below their share; split the rest
        share = atol / max(a.size, 1)
        keep = err <= 0.25 * share
        done_val += val[keep].sum()
        done_err += err[keep].sum()
        a, b = a[~keep], b[~keep]
        m = 0.5 * (a + b)
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
    raise AccuracyError("variance quadrature did not converge",
                        {"estimate": total, "error": total_err, "atol": atol, "panels": a.size})


def variance_quadrature(r: ReducedParams, rtol: float = 1e-8, check_stability: bool = True,
                        omega_max: float | None = None, which=("q2", "v2")) -> dict:
    """Steady-state variances by adaptive Gauss-Kronrod quadrature of the spectrum.

    Returns a dict with ``sigma_q2``, ``sigma_v2``, their error estimates and the
    frequency cutoffs actually used (``meta``).  ``which`` restricts the work to
    ``"q2"`` and/or ``"v2"``.
    """
    if check_stability and not delay_stability(r):
        raise InstabilityError(f"no stationary state at {r}")
    if r.g == 0.0:
        return {"sigma_q2": 1.0, "sigma_v2": 1.0, "err_q2": 0.0, "err_v2": 0.0,
                "meta": {"omega_max_q": 0.0, "omega_max_v": 0.0, "evaluations": 0}}
    out = {}
    meta = {"evaluations": 0, "method": "GK15 panels on [0, omega_max] + analytic tail",
            "rtol": rtol}
    for k, name in ((0, "q2"), (1, "v2")):
        if name not in which:
            continue
        w_max = omega_max if omega_max is not None else default_omega_max(r, k, rtol)
        tail, tail_err = _tail(r, w_max, k)
        breaks = _initial_breaks(r, w_max)

        def atol_fn(partial, tail=tail, tail_err=tail_err):
            return max(rtol * abs(1.0 + partial + tail) - tail_err, 0.25 * rtol * abs(1.0 + partial + tail))

        body, body_err, n_eval = _adaptive(lambda x: _difference_integrand(r, x, k), breaks, atol_fn)
        value = 1.0 + body + tail
        err = body_err + tail_err
        if value <= 0 or err > rtol * abs(value):
            raise AccuracyError("variance quadrature error estimate above tolerance",
                                {"value": value, "error": err, "rtol": rtol, "k": k})
        out[f"sigma_{name}"] = float(value)
        out[f"err_{name}"] = float(err)
        meta[f"omega_max_{name[0]}"] = w_max
        meta["evaluations"] += n_eval
    out["meta"] = meta
    return out


def band_variance(r: ReducedParams, lo: float, hi: float, k: int = 0) -> float:
    """``int over lo <= |w| <= hi`` of ``(2/Q0) w^{2k} |chi|^2 dw/2pi``."""
    if not 0 <= lo < hi:
        raise ValueError("need 0 <= lo < hi")
    n = max(64, int(np.ceil((hi - lo) * 8 * max(r.q0, 1.0, r.tau))))
    breaks = np.linspace(lo, hi, n + 1)

    def f(w):
        return (2.0 / (np.pi * r.q0)) * w ** (2 * k) * np.abs(response(r, w)) ** 2

    val, _, _ = _adaptive(f, breaks, lambda t: 1e-10 * max(abs(t), 1e-300))
    return float(val)


# ---------------------------------------------------------------------------
# stability


def _rhp_radius(r: ReducedParams) -> float:
    """Radius beyond which D(s) cannot vanish for Re(s) >= 0."""
    inv_q = 1.0 / r.q0
    r0 = 0.5 * (inv_q + math.sqrt(inv_q**2 + 4.0 * (1.0 + r.g / r.q0)))
    return 1.5 * r0 + 1.0


def _contour(r: ReducedParams, radius: float, t: np.ndarray) -> np.ndarray:
    """Closed contour around the right half-disk, parameter t in [0, 2].

    t in [0, 1]: down the imaginary axis from +i R to -i R.
    t in [1, 2]: counter-clockwise arc from -i R through R back to +i R.
    """
    s = np.empty(t.shape, dtype=complex)
    axis = t <= 1.0
    s[axis] = 1j * radius * (1.0 - 2.0 * t[axis])
    phi = -0.5 * np.pi + np.pi * (t[~axis] - 1.0)
    s[~axis] = radius * np.exp(1j * phi)
    return s


def winding_number(r: ReducedParams, radius: float | None = None, max_points: int = 4_000_000):
    """Count zeros of D(s) in the closed right half-plane by the argument principle.

    Returns ``(count, min_abs_D)``.
    """
    radius = _rhp_radius(r) if radius is None else radius
    # initial resolution: follow e^{-s tau} oscillation and resonance width
    h = min(0.02, 1.0 / (8.0 * r.q0), np.pi / (8.0 * max(r.tau, 1.0)))
    n0 = int(np.ceil(4.0 * radius / h)) + 1
    t = np.linspace(0.0, 2.0, n0)
    d = characteristic(r, _contour(r, radius, t))
    scale = 1.0 + radius**2
    for _ in range(60):
        mag = np.abs(d)
        if mag.min() < 1e-13 * scale:
            raise IndeterminateStabilityError(
                f"characteristic function vanishes on the contour at {r}")
        step = np.abs(np.diff(d))
        bad = step > 0.3 * np.minimum(mag[:-1], mag[1:])
        if not bad.any():
            break
        idx = np.nonzero(bad)[0]
        t_new = 0.5 * (t[idx] + t[idx + 1])
        if t.size + t_new.size > max_points or np.min(t[idx + 1] - t[idx]) < 1e-15:
            raise IndeterminateStabilityError(f"contour refinement exhausted at {r}")
        d_new = characteristic(r, _contour(r, radius, t_new))
        order = np.argsort(np.concatenate([t, t_new]), kind="stable")
        t = np.concatenate([t, t_new])[order]
        d = np.concatenate([d, d_new])[order]
    else:
        raise IndeterminateStabilityError(f"contour refinement did not settle at {r}")
    # close the loop
    ratio = np.append(d[1:], d[0]) / d
    total = np.angle(ratio).sum() / (2 * np.pi)
    count = int(round(total))
    if abs(total - count) > 0.05:
        raise IndeterminateStabilityError(f"non-integer winding {total:.4f} at {r}")
    return count, float(np.abs(d).min())


def delay_independent_gain(q0: float) -> float:
    """Gain below which the system is stable for every delay.

    Equals ``q0 * min_w |1 - w^2 + i w / q0|``: the delayed term can then never
    cancel the undelayed part on the imaginary axis.
    """
    if q0 * q0 > 0.5:
        return math.sqrt(1.0 - 1.0 / (4.0 * q0 * q0))
    return q0


def delay_stability(r: ReducedParams) -> bool:
    """True iff D(s) has no zeros with Re(s) >= 0."""
    if abs(r.g) < delay_independent_gain(r.q0):
        return True
    try:
        count, _ = winding_number(r)
    except IndeterminateStabilityError:
        # retry on a larger contour before giving up
        count, _ = winding_number(r, radius=2.0 * _rhp_radius(r) + 1.0)
    return count == 0
