"""Four-level Bayesian network sampler built from chained Bernoulli cells.

Node A emits the most significant bit. Node B's write pair is selected by
A's fresh output, C's by (A, B) and D's by (A, B, C), which is the
VDD-decoder lookup. The 15 conditional probabilities are stored flat in
breadth-first order: index ``(1 << level) - 1 + prefix`` where ``prefix``
is the integer formed by the already emitted higher bits.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cell import (
    DEFAULT_T_PULSE,
    WARMUP_CYCLES,
    VoltagePair,
    program_bernoulli,
    two_state_stationary,
)
from .device import NOMINAL, DeviceParams, Direction, OperatingPoint, switch_probability_from_voltage

N_LEVELS = 4
N_VALUES = 16
N_ENTRIES = 15
NODES = "ABCD"
CLAMP_EPS = 1e-4
PMF_TOL = 1e-9


def entry_index(level: int, prefix: int) -> int:
    return (1 << level) - 1 + prefix


@dataclass(frozen=True)
class CondProbTable:
    level_a: float
    level_b: tuple[float, float]
    level_c: tuple[float, float, float, float]
    level_d: tuple[float, ...]

    def __post_init__(self):
        if len(self.level_b) != 2 or len(self.level_c) != 4 or len(self.level_d) != 8:
            raise ValueError("CPT levels must hold 1, 2, 4 and 8 entries")
        e = self.entries
        if np.any(~((e >= 0) & (e <= 1))):
            raise ValueError("CPT entries must lie in [0, 1]")

    @property
    def entries(self) -> np.ndarray:
        return np.array([self.level_a, *self.level_b, *self.level_c, *self.level_d], dtype=float)

    @classmethod
    def from_entries(cls, entries) -> "CondProbTable":
        e = [float(x) for x in entries]
        if len(e) != N_ENTRIES:
            raise ValueError(f"expected {N_ENTRIES} CPT entries, got {len(e)}")
        return cls(e[0], tuple(e[1:3]), tuple(e[3:7]), tuple(e[7:15]))

    @classmethod
    def uniform(cls) -> "CondProbTable":
        return cls.from_entries([0.5] * N_ENTRIES)

    def conditional(self, level: int, prefix: int) -> float:
        """P(bit at ``level`` = 1 | higher bits = ``prefix``)."""
        return float(self.entries[entry_index(level, prefix)])

    def to_json(self) -> str:
        return json.dumps(self.entries.tolist())

    @classmethod
    def from_json(cls, text: str) -> "CondProbTable":
        return cls.from_entries(json.loads(text))


def validate_pmf(pmf, tol: float = PMF_TOL) -> np.ndarray:
    p = np.asarray(pmf, dtype=float)
    if p.shape != (N_VALUES,):
        raise ValueError(f"PMF must have {N_VALUES} entries, got shape {p.shape}")
    if np.any(~(p >= 0)):
        raise ValueError("PMF entries must be non-negative")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"PMF must sum to 1 (got {p.sum():.12g})")
    return p


def build_cpt(pmf) -> CondProbTable:
    """Binary-tree decomposition of a 16-bin PMF into conditional probabilities.

    Each entry is the share of its subtree's mass lying in the '1' half.
    Prefixes carrying no mass are unreachable and get 0.5.
    """
    p = validate_pmf(pmf)
    entries = np.empty(N_ENTRIES)
    for level in range(N_LEVELS):
        width = N_VALUES >> level
        blocks = p.reshape(1 << level, width)
        total = blocks.sum(axis=1)
        upper = blocks[:, width // 2:].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(total > 0, upper / np.where(total > 0, total, 1.0), 0.5)
        start = (1 << level) - 1
        entries[start:start + (1 << level)] = np.clip(cond, 0.0, 1.0)
    return CondProbTable.from_entries(entries)


def joint_probability(cpt: CondProbTable, nibble: int) -> float:
    """Chain-rule probability of emitting ``nibble`` (A is the MSB)."""
    if not 0 <= int(nibble) < N_VALUES:
        raise ValueError(f"nibble out of range: {nibble}")
    e = cpt.entries
    prob = 1.0
    for level in range(N_LEVELS):
        bit = (nibble >> (N_LEVELS - 1 - level)) & 1
        c = e[entry_index(level, nibble >> (N_LEVELS - level))]
        prob *= c if bit else 1.0 - c
    return prob


def pmf_from_cpt(cpt: CondProbTable) -> np.ndarray:
    e = cpt.entries
    values = np.arange(N_VALUES)
    pmf = np.ones(N_VALUES)
    for level in range(N_LEVELS):
        bits = (values >> (N_LEVELS - 1 - level)) & 1
        c = e[(1 << level) - 1 + (values >> (N_LEVELS - level))]
        pmf *= np.where(bits == 1, c, 1.0 - c)
    return pmf


def discrete_gaussian_pmf(mean: float = 8.0, variance: float = 4.0) -> np.ndarray:
    """Gaussian weights on {0..15}, truncated and renormalised."""
    v = np.arange(N_VALUES, dtype=float)
    w = np.exp(-((v - mean) ** 2) / (2.0 * variance))
    return w / w.sum()


def uniform_pmf() -> np.ndarray:
    return np.full(N_VALUES, 1.0 / N_VALUES)


def pair_name(level: int, prefix: int) -> str:
    mask = format(prefix, f"0{level}b") if level else ""
    return f"VDD{NODES[level]}{mask}"


@dataclass(frozen=True)
class VoltageProgram:
    pairs: tuple[VoltagePair, ...]
    t_pulse: float = DEFAULT_T_PULSE

    def __post_init__(self):
        if len(self.pairs) != N_ENTRIES:
            raise ValueError(f"a program holds exactly {N_ENTRIES} voltage pairs")

    def pair(self, node: str, prefix: int = 0) -> VoltagePair:
        level = NODES.index(node)
        if not 0 <= prefix < (1 << level):
            raise KeyError(f"node {node} has no parent mask {prefix}")
        return self.pairs[entry_index(level, prefix)]

    def to_dict(self) -> dict:
        rows = []
        for level in range(N_LEVELS):
            for prefix in range(1 << level):
                pr = self.pairs[entry_index(level, prefix)]
                rows.append({
                    "name": pair_name(level, prefix),
                    "node": NODES[level],
                    "parent_mask": format(prefix, f"0{level}b") if level else "",
                    "v_set": pr.v_set,
                    "v_reset": pr.v_reset,
                })
        return {"t_pulse": self.t_pulse, "pairs": rows}

    @classmethod
    def from_dict(cls, data: dict) -> "VoltageProgram":
        t = float(data["t_pulse"])
        pairs = tuple(VoltagePair(float(r["v_set"]), float(r["v_reset"]), t) for r in data["pairs"])
        return cls(pairs, t)


def clamp_entries(entries, eps: float = CLAMP_EPS) -> np.ndarray:
    return np.clip(np.asarray(entries, dtype=float), eps, 1.0 - eps)


def compile_cpt(cpt: CondProbTable, t_pulse: float = DEFAULT_T_PULSE,
                params: DeviceParams | None = None, eps: float = CLAMP_EPS) -> VoltageProgram:
    """Calibrate one memoryless voltage pair per (clamped) CPT entry."""
    params = params or DeviceParams()
    cache: dict[float, VoltagePair] = {}
    pairs = []
    for p in clamp_entries(cpt.entries, eps):
        p = float(p)
        if p not in cache:
            cache[p] = program_bernoulli(p, t_pulse, params)
        pairs.append(cache[p])
    return VoltageProgram(tuple(pairs), t_pulse)


def program_rates(program: VoltageProgram, params: DeviceParams,
                  op: OperatingPoint = NOMINAL) -> tuple[np.ndarray, np.ndarray]:
    """Switching probabilities (p01, p10) of all 15 pairs under ``op``."""
    v_set = np.array([pr.v_set for pr in program.pairs])
    v_reset = np.array([pr.v_reset for pr in program.pairs])
    p01 = switch_probability_from_voltage(v_set, Direction.P_TO_AP, program.t_pulse, params, op)
    p10 = switch_probability_from_voltage(v_reset, Direction.AP_TO_P, program.t_pulse, params, op)
    return np.asarray(p01), np.asarray(p10)


def decompile(program: VoltageProgram, params: DeviceParams, op: OperatingPoint = NOMINAL) -> CondProbTable:
    """CPT realised by the set pulses of ``program`` (P(1 | cell was 0))."""
    p01, _ = program_rates(program, params, op)
    return CondProbTable.from_entries(p01)


def stationary_cpt(program: VoltageProgram, params: DeviceParams, op: OperatingPoint = NOMINAL) -> CondProbTable:
    """Per-entry two-state stationary probabilities p01/(p01+p10)."""
    return CondProbTable.from_entries(two_state_stationary(*program_rates(program, params, op)))


def nibble_transition_matrix(p01, p10, variant: str = "bidirectional", persist: bool = True) -> np.ndarray:
    """Exact law of the generator: T[prev, next] over the 16 joint cell states.

    With persistent cells the state after a cycle equals the emitted
    nibble, so the generator is a 16-state Markov chain.
    """
    p01 = np.asarray(p01, dtype=float)
    p10 = np.asarray(p10, dtype=float)
    values = np.arange(N_VALUES)
    T = np.ones((N_VALUES, N_VALUES))
    for level in range(N_LEVELS):
        shift = N_LEVELS - 1 - level
        new_bit = (values >> shift) & 1  # columns
        e = (1 << level) - 1 + (values >> (N_LEVELS - level))
        old_bit = ((values >> shift) & 1) if persist else np.zeros(N_VALUES, dtype=int)
        if variant == "bidirectional":
            p_one = np.where(old_bit[:, None] == 0, p01[e][None, :], 1.0 - p10[e][None, :])
        elif variant == "unidirectional":
            p_one = np.broadcast_to(p01[e][None, :], (N_VALUES, N_VALUES))
        else:
            raise ValueError(f"unknown variant {variant!r}")
        T *= np.where(new_bit[None, :] == 1, p_one, 1.0 - p_one)
    return T


def stationary_pmf(program: VoltageProgram, params: DeviceParams, op: OperatingPoint = NOMINAL,
                   variant: str = "bidirectional", persist: bool = True) -> np.ndarray:
    """Long-run nibble distribution of the generator (left Perron vector)."""
    T = nibble_transition_matrix(*program_rates(program, params, op), variant=variant, persist=persist)
    A = T.T - np.eye(N_VALUES)
    A[-1, :] = 1.0
    b = np.zeros(N_VALUES)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def _run_cells(p01, p10, count: int, seed, bidirectional: bool, persist: bool, warmup: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    p01 = [float(x) for x in p01]
    # keep-one thresholds for a cell already in AP: stays 1 unless u < p10
    keep = [float(x) for x in p10]
    out = np.empty(count, dtype=np.uint8)
    prev = 0
    total = count + (warmup if persist else 0)
    chunk = 1 << 16
    n = 0
    while n < total:
        m = min(chunk, total - n)
        u = rng.random(4 * m).tolist()
        for k in range(m):
            base = 4 * k
            if not persist:
                prev = 0
            value = 0
            for level, shift in ((0, 3), (1, 2), (2, 1), (3, 0)):
                e = (1 << level) - 1 + value
                x = u[base + level]
                if bidirectional and (prev >> shift) & 1:
                    bit = x >= keep[e]
                else:
                    bit = x < p01[e]
                value = (value << 1) | bit
            prev = value
            idx = n + k - (warmup if persist else 0)
            if idx >= 0:
                out[idx] = value
        n += m
    return out


def generate(program: VoltageProgram, params: DeviceParams, op: OperatingPoint = NOMINAL, count: int = 1,
             seed=None, *, persist: bool = True, warmup: int = WARMUP_CYCLES) -> np.ndarray:
    """Emit ``count`` nibbles from four bidirectional cells.

    Cell states carry over between nibbles (read-feedback loop); the first
    ``warmup`` cycles after loading the program are discarded. With
    ``persist=False`` every cell is reset to P before each nibble.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    p01, p10 = program_rates(program, params, op)
    return _run_cells(p01, p10, count, seed, True, persist, warmup)


def generate_unidirectional(program: VoltageProgram, params: DeviceParams, op: OperatingPoint = NOMINAL,
                            count: int = 1, seed=None, *, persist: bool = True,
                            warmup: int = WARMUP_CYCLES) -> np.ndarray:
    """Baseline: every cycle resets the cell to P and then sets it with probability p01."""
    if count < 1:
        raise ValueError("count must be >= 1")
    p01, p10 = program_rates(program, params, op)
    return _run_cells(p01, p10, count, seed, False, persist, warmup)


def empirical_pmf(nibbles) -> np.ndarray:
    counts = np.bincount(np.asarray(nibbles, dtype=np.int64), minlength=N_VALUES)
    return counts / counts.sum()


def nibbles_to_bits(nibbles) -> np.ndarray:
    """Expand nibbles to a bit stream, node A first."""
    n = np.asarray(nibbles, dtype=np.uint8)
    shifts = np.array([3, 2, 1, 0], dtype=np.uint8)
    return ((n[:, None] >> shifts) & 1).astype(np.uint8).ravel()


# ---- dump formats -------------------------------------------------------

_HEADER_RE = re.compile(rb"^# mcpt packed (nibbles|bits) lsb-first count=(\d+)\n")


def write_nibbles_hex(nibbles, path) -> None:
    Path(path).write_text("".join(f"{int(v):x}\n" for v in nibbles))


def write_packed(values, path, kind: str = "nibbles") -> None:
    """Packed binary dump behind a one-line text header.

    nibbles: two per byte, the first in the low four bits.
    bits: eight per byte, the first in bit 0.
    """
    values = np.asarray(values, dtype=np.uint8)
    if kind == "nibbles":
        padded = np.zeros(len(values) + len(values) % 2, dtype=np.uint8)
        padded[:len(values)] = values
        payload = (padded[0::2] | (padded[1::2] << 4)).astype(np.uint8).tobytes()
    elif kind == "bits":
        payload = np.packbits(values, bitorder="little").tobytes()
    else:
        raise ValueError(f"unknown packed kind {kind!r}")
    header = f"# mcpt packed {kind} lsb-first count={len(values)}\n".encode()
    Path(path).write_bytes(header + payload)


def read_packed(path) -> tuple[str, np.ndarray]:
    raw = Path(path).read_bytes()
    m = _HEADER_RE.match(raw)
    if not m:
        raise ValueError(f"{path}: missing packed-dump header line")
    kind, count = m.group(1).decode(), int(m.group(2))
    data = np.frombuffer(raw[m.end():], dtype=np.uint8)
    if kind == "nibbles":
        out = np.empty(2 * len(data), dtype=np.uint8)
        out[0::2] = data & 0x0F
        out[1::2] = data >> 4
    else:
        out = np.unpackbits(data, bitorder="little")
    return kind, out[:count]


def read_nibbles_hex(path) -> np.ndarray:
    return np.array([int(tok, 16) for tok in Path(path).read_text().split()], dtype=np.uint8)


def read_bit_stream(path, fmt: str) -> np.ndarray:
    """Load a dump as bits. ``fmt`` is 'hex' (nibbles), 'bits' (one per line) or 'packed'."""
    if fmt == "hex":
        return nibbles_to_bits(read_nibbles_hex(path))
    if fmt == "bits":
        return np.array([int(t) for t in Path(path).read_text().split()], dtype=np.uint8)
    if fmt == "packed":
        kind, values = read_packed(path)
        return nibbles_to_bits(values) if kind == "nibbles" else values
    raise ValueError(f"unknown dump format {fmt!r}")
