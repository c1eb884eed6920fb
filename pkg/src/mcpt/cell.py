"""One Bernoulli RNG cell: read the MTJ, feed back the complement, write stochastically.

The cell is a two-state Markov chain over the MTJ state. In the
bidirectional scheme both switching directions are stochastic, so the
stationary probability of the AP state is ``p01 / (p01 + p10)`` and any
common scaling of the two rates cancels. The unidirectional baseline
resets deterministically and then sets with probability ``p01``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .device import (
    NOMINAL,
    DeviceParams,
    Direction,
    OperatingPoint,
    calibrate_current,
    switch_probability_from_voltage,
)

WARMUP_CYCLES = 8
DEFAULT_T_PULSE = 5e-9


class CellState(IntEnum):
    P = 0  # low resistance, logic 0
    AP = 1  # high resistance, logic 1


class DegenerateChainError(ValueError):
    pass


@dataclass(frozen=True)
class VoltagePair:
    v_set: float  # drives P -> AP
    v_reset: float  # drives AP -> P
    t_pulse: float = DEFAULT_T_PULSE

    def __post_init__(self):
        if not (self.v_set > 0 and self.v_reset > 0 and self.t_pulse > 0):
            raise ValueError(f"invalid voltage pair {self}")


def program_bernoulli(p: float, t_pulse: float, params: DeviceParams) -> VoltagePair:
    """Voltages that make the cell emit 1 with probability ``p`` regardless of its prior state.

    The set pulse switches P->AP with probability p and the reset pulse
    switches AP->P with probability 1-p, so P(1 | 0) = P(1 | 1) = p.
    """
    i_set = calibrate_current(p, t_pulse, params)
    i_reset = calibrate_current(1.0 - p, t_pulse, params)
    return VoltagePair(v_set=i_set * params.r_p, v_reset=i_reset * params.r_ap, t_pulse=t_pulse)


def switching_probabilities(
    pair: VoltagePair, params: DeviceParams, op: OperatingPoint = NOMINAL
) -> tuple[float, float]:
    """(p01, p10) realised by ``pair`` under ``op``."""
    p01 = switch_probability_from_voltage(pair.v_set, Direction.P_TO_AP, pair.t_pulse, params, op)
    p10 = switch_probability_from_voltage(pair.v_reset, Direction.AP_TO_P, pair.t_pulse, params, op)
    return p01, p10


def two_state_stationary(p01, p10):
    p01 = np.asarray(p01, dtype=float)
    p10 = np.asarray(p10, dtype=float)
    total = p01 + p10
    if np.any(total <= 0):
        raise DegenerateChainError("p01 + p10 must be positive")
    pi = p01 / total
    return pi if pi.ndim else float(pi)


def stationary_probability(pair: VoltagePair, params: DeviceParams, op: OperatingPoint = NOMINAL) -> float:
    return two_state_stationary(*switching_probabilities(pair, params, op))


def step_bidirectional(state: int, pair: VoltagePair, params: DeviceParams, op: OperatingPoint, rng) -> CellState:
    state = CellState(state)
    p01, p10 = switching_probabilities(pair, params, op)
    flip = p01 if state is CellState.P else p10
    if rng.random() < flip:
        return CellState(1 - state)
    return state


def step_unidirectional(state: int, pair: VoltagePair, params: DeviceParams, op: OperatingPoint, rng) -> CellState:
    CellState(state)
    p01, _ = switching_probabilities(pair, params, op)
    return CellState.AP if rng.random() < p01 else CellState.P


class BernoulliCell:
    """A single cell with persistent state, driven one write cycle at a time."""

    def __init__(self, pair: VoltagePair, params: DeviceParams, op: OperatingPoint = NOMINAL,
                 bidirectional: bool = True, state: int = CellState.P):
        self.pair = pair
        self.params = params
        self.bidirectional = bidirectional
        self.state = CellState(state)
        self.set_operating_point(op)

    def set_operating_point(self, op: OperatingPoint):
        self.op = op
        self.p01, self.p10 = switching_probabilities(self.pair, self.params, op)

    def step(self, rng) -> CellState:
        u = rng.random()
        if not self.bidirectional:
            self.state = CellState(u < self.p01)
        elif self.state is CellState.P:
            self.state = CellState(u < self.p01)
        else:
            self.state = CellState(not u < self.p10)
        return self.state

    def run(self, n: int, rng, warmup: int = WARMUP_CYCLES) -> np.ndarray:
        for _ in range(warmup):
            self.step(rng)
        return np.fromiter((self.step(rng) for _ in range(n)), dtype=np.uint8, count=n)


def dump_trace(bits, path) -> None:
    """Write a cell trace as one bit per line."""
    Path(path).write_text("".join(f"{int(b)}\n" for b in bits))


def load_trace(path) -> np.ndarray:
    return np.array([int(s) for s in Path(path).read_text().split()], dtype=np.uint8)
