"""Physical and reduced parameter sets, unit reduction and thermal scales.

The dynamics of the delayed oscillator

    x'' + Gamma0 x' + Omega0^2 x - g Gamma0 Omega0 x(t - t_fb) = sqrt(2 Gamma0 kB T0 / m) xi

are fully determined by the dimensionless triple ``(g, q0, tau)`` once time is
measured in units of ``1/Omega0`` and position in units of the thermal rms
amplitude ``x_th``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidParameterError

#: Physical constants (2019 SI exact values).
CONSTANTS = {
    "k_B": 1.380649e-23,  # J/K
}
K_B = CONSTANTS["k_B"]

#: Experimental anchors used as defaults (not hard physics).
EXPERIMENT = {
    "omega0_over_2pi": 404e3,  # Hz
    "gamma0_over_2pi": 7.37e3,  # Hz
    "temp0": 293.0,  # K
    "t_fb_min": 2.6e-6,  # s
    "t_fb_step": 100e-9,  # s, FPGA delay resolution
    "diameter": 969e-9,  # m
    "gain": 0.36,
    "tau_stated": 2.04 * math.pi,
}


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional parameters of the trapped particle and feedback loop (SI units).

    ``omega0``, ``gamma0`` and ``gamma_fb`` are angular rates in rad/s.
    """

    mass: float
    omega0: float
    gamma0: float
    temp0: float
    t_fb: float
    gamma_fb: float

    def __post_init__(self):
        for name in ("mass", "omega0", "gamma0", "temp0", "t_fb", "gamma_fb"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be strictly positive, got {value!r}")
        if not self.omega0 > self.gamma0 / 2:
            raise InvalidParameterError(
                f"underdamped regime required: omega0={self.omega0} <= gamma0/2={self.gamma0 / 2}"
            )


@dataclass(frozen=True)
class ReducedParams:
    """Dimensionless gain ``g``, quality factor ``q0`` and delay ``tau``."""

    g: float
    q0: float
    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g >= 0):
            raise InvalidParameterError(f"g must be >= 0, got {self.g!r}")
        if not (math.isfinite(self.q0) and self.q0 > 0):
            raise InvalidParameterError(f"q0 must be > 0, got {self.q0!r}")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise InvalidParameterError(f"tau must be >= 0, got {self.tau!r}")

    def replace(self, **changes) -> "ReducedParams":
        fields = {"g": self.g, "q0": self.q0, "tau": self.tau}
        fields.update(changes)
        return ReducedParams(**fields)


@dataclass(frozen=True)
class ThermalScale:
    x_th: float  # m
    v_th: float  # m/s


def reduce(p: PhysicalParams) -> ReducedParams:
    """Map physical parameters onto the dimensionless triple."""
    return ReducedParams(g=p.gamma_fb / p.gamma0, q0=p.omega0 / p.gamma0, tau=p.t_fb * p.omega0)


def realize(r: ReducedParams, omega0: float = 2 * math.pi * EXPERIMENT["omega0_over_2pi"],
            mass: float = 1e-15, temp0: float = EXPERIMENT["temp0"]) -> PhysicalParams:
    """Construct a physical parameter set whose reduction is ``r``.

    A zero gain or zero delay cannot be represented (physical fields are strictly
    positive), so those raise :class:`InvalidParameterError`.
    """
    gamma0 = omega0 / r.q0
    return PhysicalParams(mass=mass, omega0=omega0, gamma0=gamma0, temp0=temp0,
                          t_fb=r.tau / omega0, gamma_fb=r.g * gamma0)


def thermal_scale(p: PhysicalParams) -> ThermalScale:
    x_th = math.sqrt(K_B * p.temp0 / (p.mass * p.omega0**2))
    return ThermalScale(x_th=x_th, v_th=x_th * p.omega0)


def sphere_mass(diameter: float, density: float) -> float:
    """Mass of a homogeneous sphere; density is the caller's choice (kg/m^3)."""
    if diameter <= 0 or density <= 0:
        raise InvalidParameterError("diameter and density must be positive")
    return density * math.pi * diameter**3 / 6.0


def validity_domain(r: ReducedParams) -> dict:
    """Flags for the parameter region where the long-delay asymptotics hold.

    Requires ``q0 > 1/2`` and ``g < sqrt(1 - 1/(4 q0^2))``.
    """
    ok = r.q0 > 0.5 and r.g < math.sqrt(1.0 - 1.0 / (4.0 * r.q0**2))
    return {"underdamped_asymptotics": bool(ok)}


def experimental_params(mass: float, gain: float = EXPERIMENT["gain"],
                        t_fb: float = EXPERIMENT["t_fb_min"]) -> PhysicalParams:
    """Physical parameters of the default trapped-particle setup for a given mass."""
    omega0 = 2 * math.pi * EXPERIMENT["omega0_over_2pi"]
    gamma0 = 2 * math.pi * EXPERIMENT["gamma0_over_2pi"]
    return PhysicalParams(mass=mass, omega0=omega0, gamma0=gamma0, temp0=EXPERIMENT["temp0"],
                          t_fb=t_fb, gamma_fb=gain * gamma0)


def delay_report(t_fb: float, omega0: float, tau_stated: float | None = None) -> dict:
    """Computed delay next to an externally stated value, both in units of pi.

    The default setup lists ``tau = 2.04 pi`` for ``t_fb = 2.6 us`` while
    ``t_fb * Omega0`` evaluates to about ``2.10 pi``; both are kept, neither is
    corrected.
    """
    tau = t_fb * omega0
    out = {"tau_computed": tau, "tau_computed_over_pi": tau / math.pi}
    if tau_stated is not None:
        out["tau_stated"] = tau_stated
        out["tau_stated_over_pi"] = tau_stated / math.pi
    return out
