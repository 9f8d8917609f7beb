"""Armature translational dynamics: mass, return spring, penalty stops.

Coordinate: x is the working air gap width in meters, so closing means x
decreasing. The stops live at x_min (residual air gap, the seated
position) and x_max (fully open). The return spring acts toward +x
(opening); magnetic attraction acts toward -x.
"""

from __future__ import annotations

from dataclasses import dataclass

# Penetration depth at which the contact damper reaches its full
# coefficient. The damper ramps in like the stiffness term so the force
# stays continuous at first touch.
DAMPER_RAMP_DEPTH = 1e-7  # [m]


@dataclass(frozen=True)
class MechanicalConfig:
    """Lumped armature parameters.

    Defaults follow the measured functional model: 19.9 g moving mass
    (half the return spring included), 785.4 N/m spring rate with
    27.01 mm unstressed length in stroke coordinates, stops at 1 um
    residual gap and 0.527 mm stroke, and the heuristic stop law
    c = 1e17 N/m^2, d = 1e5 N s/m, exponent 2.
    """

    mass: float = 0.0199
    spring_rate: float = 785.4
    spring_unstressed: float = 0.02701
    x_min: float = 1e-6
    x_max: float = 0.527e-3
    contact_c: float = 1e17
    contact_d: float = 1e5
    contact_n: float = 2.0

    def __post_init__(self):
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")
        if not self.spring_rate > 0.0:
            raise ValueError("spring rate must be positive")
        if not self.x_min < self.x_max:
            raise ValueError("x_min must lie below x_max")
        if self.contact_c < 0.0 or self.contact_d < 0.0:
            raise ValueError("contact coefficients must be non-negative")
        if self.contact_n < 1.0:
            raise ValueError("contact exponent must be at least 1")

    @property
    def stroke(self) -> float:
        return self.x_max - self.x_min


def spring_force(x: float, cfg: MechanicalConfig) -> float:
    """Return-spring force, positive toward opening (+x).

    F = -k*(x - x_unstressed); with the unstressed length far beyond the
    stroke this is a nearly constant preload of about 21 N.
    """
    return -cfg.spring_rate * (x - cfg.spring_unstressed)


def contact_force(x: float, v: float, cfg: MechanicalConfig) -> float:
    """Penalty force of the stops, zero inside [x_min, x_max].

    Beyond a stop with penetration depth delta the stop pushes back with
    c*delta^n plus a damping term that acts only while approaching and
    ramps in with (delta/ramp)^n up to the full coefficient d. The ramp
    keeps the force continuous in both x and v at delta = 0 while still
    absorbing impacts dead-beat at real penetration depths.
    """
    if x < cfg.x_min:
        delta = cfg.x_min - x
        direction = 1.0       # pushes toward +x
        approach = max(0.0, -v)
    elif x > cfg.x_max:
        delta = x - cfg.x_max
        direction = -1.0      # pushes toward -x
        approach = max(0.0, v)
    else:
        return 0.0
    stiffness = cfg.contact_c * delta ** cfg.contact_n
    ramp = min((delta / DAMPER_RAMP_DEPTH) ** cfg.contact_n, 1.0)
    damping = cfg.contact_d * ramp * approach
    return direction * (stiffness + damping)


def contact_force_partials(x: float, v: float, cfg: MechanicalConfig):
    """(dF/dx, dF/dv) of contact_force, piecewise-analytic."""
    if cfg.x_min <= x <= cfg.x_max:
        return 0.0, 0.0
    if x < cfg.x_min:
        delta = cfg.x_min - x
        direction = 1.0
        ddelta_dx = -1.0
        approach = max(0.0, -v)
        dapproach_dv = -1.0 if v < 0.0 else 0.0
    else:
        delta = x - cfg.x_max
        direction = -1.0
        ddelta_dx = 1.0
        approach = max(0.0, v)
        dapproach_dv = 1.0 if v > 0.0 else 0.0
    n = cfg.contact_n
    dstiff_ddelta = cfg.contact_c * n * delta ** (n - 1.0)
    ramp_raw = (delta / DAMPER_RAMP_DEPTH) ** n
    if ramp_raw < 1.0:
        dramp_ddelta = n * ramp_raw / delta if delta > 0.0 else 0.0
        ramp = ramp_raw
    else:
        dramp_ddelta = 0.0
        ramp = 1.0
    df_dx = direction * (dstiff_ddelta + cfg.contact_d * dramp_ddelta * approach) * ddelta_dx
    df_dv = direction * cfg.contact_d * ramp * dapproach_dv
    return df_dx, df_dv


def acceleration(x: float, v: float, magnetic_force: float, cfg: MechanicalConfig) -> float:
    """Armature acceleration from the signed force sum.

    `magnetic_force` is signed in the gap coordinate: attraction closes
    the gap, so callers pass it negative.
    """
    return (magnetic_force + spring_force(x, cfg) + contact_force(x, v, cfg)) / cfg.mass
