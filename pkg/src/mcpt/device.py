"""Stochastic STT-MTJ switching model.

Thermally activated switching: the mean switching time under a write
current I is ``tau0 * exp(delta * (1 - I/ic0)**2)`` and a pulse of width
``t`` switches the free layer with probability ``1 - exp(-t/tau)``.
Process, voltage and temperature (PVT) shifts enter through
:func:`effective_params` and :class:`OperatingPoint`.

All functions accept numpy arrays for currents/voltages so the samplers
can evaluate many write events at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

# relative 1-sigma spread of t_FL, t_TB and TMR
PROCESS_SIGMA = 0.03
PROCESS_TRUNCATION = (0.85, 1.15)
# resistance sensitivity to relative barrier thickness, r_p ~ exp(kappa * (f_ttb - 1))
BARRIER_SENSITIVITY = 10.0

CALIBRATION_EPS = 1e-6
CALIBRATION_TOL = 1e-9
CALIBRATION_MAX_ITER = 200


class DomainError(ValueError):
    """Argument outside the physical domain of the model."""


class CalibrationRangeError(ValueError):
    """Target switching probability cannot be realised by the device."""


class Direction(str, Enum):
    P_TO_AP = "P->AP"
    AP_TO_P = "AP->P"


@dataclass(frozen=True)
class DeviceParams:
    tau0: float = 0.1e-9  # attempt time [s]
    delta0: float = 20.0  # thermal stability factor at t_ref
    ic0: float = 100e-6  # critical current at 0 K [A]
    r_p: float = 1e3  # parallel resistance [ohm]
    tmr: float = 2.0  # (r_ap - r_p) / r_p
    t_fl: float = 1.3e-9
    t_tb: float = 0.85e-9
    cd: float = 32e-9
    t_ref: float = 300.0

    def __post_init__(self):
        for name in ("tau0", "delta0", "ic0", "r_p", "t_fl", "t_tb", "cd", "t_ref"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not self.tmr >= 0:
            raise DomainError(f"tmr must be non-negative, got {self.tmr!r}")

    @property
    def r_ap(self) -> float:
        return self.r_p * (1.0 + self.tmr)

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown device parameter(s): {', '.join(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def from_json(cls, path) -> "DeviceParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ProcessSample:
    """Multiplicative process factors for free-layer thickness, barrier thickness and TMR."""

    f_tfl: float = 1.0
    f_ttb: float = 1.0
    f_tmr: float = 1.0

    def __post_init__(self):
        for name in ("f_tfl", "f_ttb", "f_tmr"):
            if not getattr(self, name) > 0:
                raise DomainError(f"process factor {name} must be positive")


@dataclass(frozen=True)
class OperatingPoint:
    temperature: float = 300.0
    voltage_scale: float = 1.0
    process_sample: ProcessSample | None = None

    def __post_init__(self):
        if not self.temperature > 0:
            raise DomainError("temperature must be positive")
        if not self.voltage_scale > 0:
            raise DomainError("voltage_scale must be positive")

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "voltage_scale": self.voltage_scale,
            "process_sample": asdict(self.process_sample) if self.process_sample else None,
        }


NOMINAL = OperatingPoint()


def effective_params(
    params: DeviceParams, op: OperatingPoint = NOMINAL, kappa: float = BARRIER_SENSITIVITY
) -> DeviceParams:
    """Device constants as seen under ``op``.

    First-order maps: the barrier height scales as 1/T and with free-layer
    thickness, so do ``delta`` and ``ic0``; the parallel resistance grows
    exponentially with barrier thickness; TMR scales directly.
    """
    ps = op.process_sample or ProcessSample()
    if op.temperature == params.t_ref and ps == ProcessSample():
        return params
    return replace(
        params,
        delta0=params.delta0 * (params.t_ref / op.temperature) * ps.f_tfl,
        ic0=params.ic0 * ps.f_tfl,
        r_p=params.r_p * math.exp(kappa * (ps.f_ttb - 1.0)),
        tmr=params.tmr * ps.f_tmr,
    )


def mean_switch_time(i_write, params: DeviceParams, op: OperatingPoint = NOMINAL):
    """Mean thermally activated switching time [s] at write current ``i_write`` [A].

    Above the critical current the barrier term is clamped at zero, so
    ``tau`` saturates at ``tau0`` instead of rising again.
    """
    i = np.asarray(i_write, dtype=float)
    if np.any(~(i > 0)):
        raise DomainError("write current must be positive")
    eff = effective_params(params, op)
    barrier = np.maximum(1.0 - i / eff.ic0, 0.0)
    tau = eff.tau0 * np.exp(eff.delta0 * barrier**2)
    return tau if tau.ndim else float(tau)


def switch_probability(i_write, t_pulse: float, params: DeviceParams, op: OperatingPoint = NOMINAL):
    if t_pulse < 0:
        raise DomainError("pulse width must be non-negative")
    tau = mean_switch_time(i_write, params, op)
    p = -np.expm1(-t_pulse / np.asarray(tau))
    return p if p.ndim else float(p)


def state_resistance(direction: Direction, params: DeviceParams, op: OperatingPoint = NOMINAL) -> float:
    """Resistance of the state the cell is in *before* the switch."""
    eff = effective_params(params, op)
    return eff.r_p if Direction(direction) is Direction.P_TO_AP else eff.r_ap


def voltage_to_current(v_write, direction: Direction, params: DeviceParams, op: OperatingPoint = NOMINAL):
    v = np.asarray(v_write, dtype=float)
    if np.any(~(v > 0)):
        raise DomainError("write voltage must be positive")
    i = v * op.voltage_scale / state_resistance(direction, params, op)
    return i if i.ndim else float(i)


def switch_probability_from_voltage(
    v_write, direction: Direction, t_pulse: float, params: DeviceParams, op: OperatingPoint = NOMINAL
):
    return switch_probability(voltage_to_current(v_write, direction, params, op), t_pulse, params, op)


def sample_process_variation(params: DeviceParams, rng_seed=None) -> ProcessSample:
    """Draw one set of truncated-normal process factors (mean 1, sigma 3 %).

    ``rng_seed`` may be an int, a SeedSequence or an existing Generator.
    """
    rng = np.random.default_rng(rng_seed)
    lo, hi = PROCESS_TRUNCATION
    factors = []
    for _ in range(3):
        while True:
            f = rng.normal(1.0, PROCESS_SIGMA)
            if lo <= f <= hi:
                break
        factors.append(float(f))
    return ProcessSample(*factors)


def attainable_range(t_pulse: float, params: DeviceParams) -> tuple[float, float]:
    """Open/closed bounds of switching probability reachable with 0 < I <= ic0."""
    p_lo = -math.expm1(-t_pulse / (params.tau0 * math.exp(params.delta0)))
    p_hi = -math.expm1(-t_pulse / params.tau0)
    return p_lo, p_hi


def calibrate_current(target_p: float, t_pulse: float, params: DeviceParams) -> float:
    """Write current giving switching probability ``target_p`` at nominal conditions.

    Closed-form inversion provides the first guess; bisection on the
    monotone map over (0, ic0] polishes it when rounding leaves it outside
    the tolerance.
    """
    if not CALIBRATION_EPS < target_p < 1.0 - CALIBRATION_EPS:
        raise CalibrationRangeError(
            f"target probability {target_p!r} outside ({CALIBRATION_EPS}, {1 - CALIBRATION_EPS})"
        )
    if not t_pulse > 0:
        raise DomainError("pulse width must be positive")
    p_lo, p_hi = attainable_range(t_pulse, params)
    if not p_lo < target_p <= p_hi:
        raise CalibrationRangeError(
            f"probability {target_p} unattainable at t_pulse={t_pulse:g} s "
            f"(device range ({p_lo:.3g}, {p_hi:.6g}])"
        )

    def prob(i):
        return switch_probability(i, t_pulse, params)

    tau_target = -t_pulse / math.log1p(-target_p)
    guess = params.ic0 * (1.0 - math.sqrt(max(math.log(tau_target / params.tau0), 0.0) / params.delta0))
    if guess > 0 and abs(prob(guess) - target_p) <= CALIBRATION_TOL:
        return guess

    lo, hi = 0.0, params.ic0
    mid = guess if 0 < guess < params.ic0 else 0.5 * params.ic0
    for _ in range(CALIBRATION_MAX_ITER):
        p = prob(mid)
        if abs(p - target_p) <= CALIBRATION_TOL:
            return mid
        if p < target_p:
            lo = mid
        else:
            hi = mid
        mid = 0.5 * (lo + hi)
    raise CalibrationRangeError(f"calibration for p={target_p} did not converge")
