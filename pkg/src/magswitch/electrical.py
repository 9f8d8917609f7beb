"""Drive chain: setpoint waveform, limited amplifier, coil coupling.

The four-quadrant amplifier is idealized as a current source equal to
the setpoint, shunted at its output by a voltage-dependent resistor that
is blocking below the limiting voltage and conducting above it. The coil
sees v = R*i + N*dPhi/dt, with Phi the working flux of the magnetic
network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AmplifierParams:
    """Voltage limiter of the current-controlled amplifier.

    `conductance` applies outside the limiting voltage `v0`; `d_v` is the
    transition width and `b` the spread between conducting and blocking
    behavior. For the defaults the conductance changes by a factor of
    about exp(b) = 4.85e8 over a 2*b*d_v = 0.2 V window.
    """

    conductance: float = 10e3
    v0: float = 40.0
    d_v: float = 0.01
    b: float = 20.0

    def __post_init__(self):
        if not (self.conductance > 0.0 and self.v0 > 0.0 and self.d_v > 0.0 and self.b > 0.0):
            raise ValueError("amplifier parameters must be positive")
        if not self.b * self.d_v < self.v0:
            raise ValueError("transition window b*d_v must stay below v0")


@dataclass(frozen=True)
class CoilParams:
    turns: int = 131
    resistance: float = 0.75

    def __post_init__(self):
        if not (isinstance(self.turns, int) and self.turns > 0):
            raise ValueError("turns must be a positive integer")
        if self.resistance < 0.0:
            raise ValueError("resistance must be non-negative")


@dataclass(frozen=True)
class DriveWaveform:
    """Breakpoint table of the drive setpoint.

    `interpolation` is 'hold' for a square wave (value holds from each
    breakpoint until the next) or 'linear'.
    """

    times: np.ndarray = field(default_factory=lambda: np.array([0.0, 2e-3]))
    values: np.ndarray = field(default_factory=lambda: np.array([8.0, 0.0]))
    interpolation: str = "hold"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("times and values must be matching non-empty 1-d arrays")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("breakpoint times must be strictly increasing")
        if self.interpolation not in ("hold", "linear"):
            raise ValueError("interpolation must be 'hold' or 'linear'")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


def drive_setpoint(waveform: DriveWaveform, t: float) -> float:
    """Setpoint at time t; clamps to the first value before the table."""
    times, values = waveform.times, waveform.values
    if t <= times[0]:
        return float(values[0])
    if waveform.interpolation == "linear":
        return float(np.interp(t, times, values))
    k = int(np.searchsorted(times, t, side="right") - 1)
    return float(values[k])


def limiter_current(v: float, p: AmplifierParams) -> float:
    """Normalized limiter current I/G at voltage v.

    Five-branch sigmoid law: blocking in the middle region, conducting
    outside |v0|, with exponential transitions of width d_v. Continuous
    everywhere (boundary values match exactly), though not differentiable
    in the strict sense at the region boundaries.
    """
    v0, dv, b = p.v0, p.d_v, p.b
    edge = b * dv
    if v <= -v0 - edge:
        return v / (1.0 + math.exp(-b))
    if v < -v0 + edge:
        return v / (1.0 + math.exp((v0 + v) / dv))
    if v <= v0 - edge:
        return v / (1.0 + math.exp(b))
    if v < v0 + edge:
        return v / (1.0 + math.exp((v0 - v) / dv))
    return v / (1.0 + math.exp(-b))


def limiter_current_derivative(v: float, p: AmplifierParams) -> float:
    """d(I/G)/dV, piecewise-analytic (sided at region boundaries)."""
    v0, dv, b = p.v0, p.d_v, p.b
    edge = b * dv
    if v <= -v0 - edge:
        return 1.0 / (1.0 + math.exp(-b))
    if v < -v0 + edge:
        e = math.exp((v0 + v) / dv)
        s = 1.0 / (1.0 + e)
        return s - v * s * s * e / dv
    if v <= v0 - edge:
        return 1.0 / (1.0 + math.exp(b))
    if v < v0 + edge:
        e = math.exp((v0 - v) / dv)
        s = 1.0 / (1.0 + e)
        return s + v * s * s * e / dv
    return 1.0 / (1.0 + math.exp(-b))


def coil_equations(i: float, dflux_dt: float, p: CoilParams):
    """Terminal voltage and magnetomotive force of the coil.

    Returns (v_coil, mmf) with v = R*i + N*dPhi/dt and mmf = N*i.
    """
    return p.resistance * i + p.turns * dflux_dt, p.turns * i
