"""Estimators applied to position/velocity traces.

These mirror the processing of a measured trace: band filtering around the
mechanical resonance, finite-difference velocities, moments and kurtosis,
spectral estimation, damping-rate extraction from the energy autocorrelation,
delayed correlations, and fitting the feedback gain to a temperature curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, signal

from . import analytic, spectral
from .errors import (
    DegenerateBandError,
    FitWindowError,
    InsufficientDataError,
    InstabilityError,
    NonIdentifiableError,
    UndefinedCorrelationError,
    ZeroVarianceError,
)
from .model import ReducedParams


@dataclass(frozen=True)
class FitResult:
    value: float
    stderr: float
    residual_norm: float
    n_points: int
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")


def moments(series) -> dict:
    """Population variance and kurtosis (divisor N)."""
    x = np.asarray(series, dtype=float)
    if x.size < 4:
        raise InsufficientDataError(f"need at least 4 samples, got {x.size}")
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 == 0.0:
        raise ZeroVarianceError("constant series has no kurtosis")
    m4 = np.mean(d**4)
    return {"variance": float(m2), "kurtosis": float(m4 / (m2 * m2))}


def finite_diff_velocity(q_series, dt: float) -> np.ndarray:
    """Central differences ``(q[n+1] - q[n-1]) / (2 dt)``; the two endpoints are dropped."""
    q = np.asarray(q_series, dtype=float)
    if q.size < 3:
        raise InsufficientDataError("need at least 3 samples")
    return (q[2:] - q[:-2]) / (2.0 * dt)


def central_difference_gain(omega: float, dt: float) -> float:
    """Amplitude response ``sin(w dt)/(w dt)`` of the central-difference stencil."""
    x = omega * dt
    return 1.0 if x == 0 else math.sin(x) / x


def bandpass(series, dt: float, center: float, bandwidth: float) -> np.ndarray:
    """Zero-phase brick-wall filter keeping ``|w| in [center - bw/2, center + bw/2]``.

    ``center`` and ``bandwidth`` are angular frequencies in the same time units as ``dt``.
    """
    x = np.asarray(series, dtype=float)
    nyquist = math.pi / dt
    if not (center > 0 and bandwidth > 0 and center - bandwidth / 2 < nyquist):
        raise DegenerateBandError(f"band center={center}, bandwidth={bandwidth} "
                                  f"not inside (0, {nyquist})")
    spec = np.fft.rfft(x)
    w = 2 * np.pi * np.fft.rfftfreq(x.size, dt)
    mask = (w >= center - bandwidth / 2) & (w <= center + bandwidth / 2)
    if not mask.any():
        raise DegenerateBandError("no frequency bins fall inside the band")
    return np.fft.irfft(spec * mask, n=x.size)


def welch_psd(series, dt: float, segment_length: int, overlap: float = 0.5) -> spectral.SpectrumGrid:
    """Hann-windowed averaged periodogram on a two-sided angular-frequency grid.

    Normalized so that ``sum(S) dw / 2pi`` equals the mean-removed variance.
    """
    x = np.asarray(series, dtype=float)
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    segment_length = int(segment_length)
    if segment_length > x.size or segment_length < 2:
        raise InsufficientDataError("segment_length must not exceed the series length")
    noverlap = int(overlap * segment_length)
    n_seg = 1 + (x.size - segment_length) // (segment_length - noverlap)
    if n_seg < 2:
        raise InsufficientDataError(f"only {n_seg} segment(s); need at least 2")
    f, p = signal.welch(x, fs=1.0 / dt, window="hann", nperseg=segment_length,
                        noverlap=noverlap, return_onesided=False, detrend="constant",
                        scaling="density")
    order = np.argsort(f)
    # density per unit frequency equals density per (angular frequency / 2 pi)
    return spectral.SpectrumGrid(
        2 * np.pi * f[order], p[order],
        {"convention": "two-sided", "estimator": "welch", "window": "hann",
         "segment_length": segment_length, "overlap": overlap, "n_segments": n_seg, "dt": dt})


def grid_integral(grid: spectral.SpectrumGrid) -> float:
    """Riemann sum ``sum(S) dw / 2pi`` on a uniform grid."""
    dw = np.diff(grid.frequencies).mean()
    return float(grid.values.sum() * dw / (2 * np.pi))


def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation of the mean-removed series for lags ``0..max_lag``."""
    d = np.asarray(x, dtype=float) - np.mean(x)
    n = d.size
    size = 1 << int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(d, size)
    acf = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    acf /= np.arange(n, n - max_lag - 1, -1)
    return acf / acf[0]


def _fit_decay(acf, dt, min_window, max_lag):
    below = np.nonzero(acf < math.exp(-1.0))[0]
    if below.size == 0:
        raise FitWindowError("energy autocorrelation never drops below 1/e in the lag window")
    cross = int(below[0])
    if cross < min_window:
        raise FitWindowError(f"1/e crossing after {cross} lags; no resolvable decay")
    gamma0 = 1.0 / (cross * dt)
    n_fit = int(math.ceil(3.0 / (gamma0 * dt)))
    if n_fit > max_lag:
        raise FitWindowError("fit window exceeds the available lags")
    t = dt * np.arange(n_fit + 1)
    y = acf[: n_fit + 1]
    popt, pcov = optimize.curve_fit(lambda tt, gam: np.exp(-gam * tt), t, y, p0=[gamma0])
    return float(popt[0]), float(math.sqrt(max(pcov[0, 0], 0.0))), y - np.exp(-popt[0] * t), gamma0


def energy_autocorr_gamma(q_series, v_series, dt: float, max_lag: Optional[int] = None,
                          min_window: int = 10, n_blocks: int = 8) -> FitResult:
    """Damping rate from an exponential fit to the energy autocorrelation.

    ``E = q^2 + v^2``; the normalized autocorrelation of ``E - <E>`` is fitted with
    ``exp(-Gamma t)`` by nonlinear least squares over ``[0, 3/Gamma_initial]``,
    where ``Gamma_initial`` comes from the first ``1/e`` crossing.

    Residuals of an autocorrelation fit are strongly correlated, so the nominal
    least-squares error is far too small.  When the trace holds at least
    ``n_blocks`` blocks of 20 decay times each, ``stderr`` is instead the spread of
    per-block estimates divided by ``sqrt(n_blocks)``; ``info["stderr_method"]``
    records which was used.
    """
    q = np.asarray(q_series, dtype=float)
    v = np.asarray(v_series, dtype=float)
    if q.shape != v.shape:
        raise ValueError("q and v must have equal length")
    energy = q * q + v * v
    max_lag = max_lag if max_lag is not None else energy.size // 4
    gamma, nominal, resid, gamma0 = _fit_decay(autocorrelation(energy, max_lag), dt,
                                               min_window, max_lag)
    block = energy.size // n_blocks
    stderr, method = nominal, "least_squares"
    if n_blocks >= 2 and block * dt * gamma >= 20:
        lag_b = min(max_lag, block // 4)
        per = []
        for b in range(n_blocks):
            chunk = energy[b * block:(b + 1) * block]
            per.append(_fit_decay(autocorrelation(chunk, lag_b), dt, min_window, lag_b)[0])
        stderr, method = float(np.std(per, ddof=1) / math.sqrt(n_blocks)), "blocks"
    return FitResult(value=gamma, stderr=stderr, residual_norm=float(np.linalg.norm(resid)),
                     n_points=int(resid.size),
                     info={"gamma_initial": gamma0, "window": float(dt * (resid.size - 1)),
                           "stderr_method": method, "nominal_stderr": nominal})


def delayed_correlation(q_series, v_series, n_delay: int) -> float:
    """Pearson correlation of the pairs ``(q[n - n_delay], v[n])``."""
    q = np.asarray(q_series, dtype=float)
    v = np.asarray(v_series, dtype=float)
    if q.size <= n_delay + 2:
        raise InsufficientDataError("series shorter than the delay")
    y = q[: q.size - n_delay] if n_delay else q
    w = v[n_delay:]
    dy, dw = y - y.mean(), w - w.mean()
    vy, vw = np.dot(dy, dy), np.dot(dw, dw)
    if vy == 0 or vw == 0:
        raise UndefinedCorrelationError("zero variance in one of the columns")
    return float(np.clip(np.dot(dy, dw) / math.sqrt(vy * vw), -1.0, 1.0))


def _model_curve(taus, g, q0, model, check_stability):
    out = np.empty(len(taus))
    for i, tau in enumerate(taus):
        r = ReducedParams(g=g, q0=q0, tau=float(tau))
        try:
            if model == "sigma_v2":
                out[i] = analytic.sigma_v2_closed(r, check_stability=check_stability)
            else:
                out[i] = spectral.variance_quadrature(r, check_stability=check_stability,
                                                      which=("q2",))["sigma_q2"]
        except InstabilityError:
            out[i] = np.nan
    return out


def fit_gain(taus: Sequence[float], teff: Sequence[float], q0: float, model: str = "sigma_v2",
             sigma: Optional[Sequence[float]] = None, g_min: float = 1e-6,
             g_max: Optional[float] = None, xtol: float = 1e-7) -> FitResult:
    """Least-squares gain from a ``T_eff/T0`` versus delay curve.

    ``model`` is ``"sigma_v2"`` (kinetic temperature, the default) or ``"sigma_q2"``
    (configurational temperature).  With ``sigma`` the residuals are weighted and
    the standard error follows from the data uncertainties.
    """
    if model not in ("sigma_v2", "sigma_q2"):
        raise ValueError("model must be 'sigma_v2' or 'sigma_q2'")
    taus = np.asarray(taus, dtype=float)
    data = np.asarray(teff, dtype=float)
    if taus.size < 5 or taus.shape != data.shape:
        raise InsufficientDataError("need at least 5 (tau, T_eff) points")
    weights = np.ones_like(data) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    stable_max = spectral.delay_independent_gain(q0)
    if g_max is None:
        g_max = 0.99 * stable_max
    # below the delay-independent gain every delay is stable; skip the contour count
    check = g_max >= stable_max

    def cost(g):
        res = (_model_curve(taus, g, q0, model, check) - data) * weights
        return float(np.sum(res * res)) if np.all(np.isfinite(res)) else 1e300

    opt = optimize.minimize_scalar(cost, bounds=(g_min, g_max), method="bounded",
                                   options={"xatol": xtol})
    g_hat = float(opt.x)
    span = g_max - g_min
    if g_hat - g_min < 1e-4 * span or g_max - g_hat < 1e-4 * span:
        raise NonIdentifiableError(f"gain estimate {g_hat} sits on the bracket [{g_min}, {g_max}]")
    h = 1e-5 * max(g_hat, 1e-3)
    jac = (_model_curve(taus, g_hat + h, q0, model, check)
           - _model_curve(taus, g_hat - h, q0, model, check)) / (2 * h)
    resid = _model_curve(taus, g_hat, q0, model, check) - data
    if sigma is None:
        s2 = float(np.sum(resid**2)) / max(taus.size - 1, 1)
        stderr = math.sqrt(s2 / float(np.sum(jac**2)))
    else:
        stderr = 1.0 / math.sqrt(float(np.sum((jac * weights) ** 2)))
    return FitResult(value=g_hat, stderr=stderr, residual_norm=float(np.linalg.norm(resid * weights)),
                     n_points=int(taus.size),
                     info={"model": model, "bracket": (g_min, g_max), "weighted": sigma is not None})
