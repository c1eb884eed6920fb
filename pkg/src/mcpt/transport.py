"""Monte Carlo solver for the 1-D slab angular-flux problem.

State space: 16 positions x 16 directions on [-1, 1] x [-1, 1]. Each time
step a particle streams by ``-v * omega * dt`` and then picks its next
direction from the row of the transition model: it keeps its direction
with probability ``1 - q1 + q1 * k(0)`` and jumps to ``l`` with
probability ``q1 * k(l - j)``, where ``k`` is the truncated discrete
Gaussian deflection kernel. Leaving [-1, 1] is absorption.

The flux estimate at a start state is the mean of the path integral of
``v * R(x)`` over W independent trajectories.

Positions are tracked continuously: a step of ``v * dt`` cannot land on
grid points for every direction at once, so only source evaluation snaps
to the containing cell. The source is cell-constant, which makes the
per-step integral exact.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cell import DEFAULT_T_PULSE, WARMUP_CYCLES
from .device import NOMINAL, DeviceParams, Direction, OperatingPoint, switch_probability_from_voltage
from .network import build_cpt, compile_cpt, program_rates

N_GRID = 16
MAX_STEPS = 10**7
REPLICATES_PER_UNIT = 128
SAMPLER_KINDS = ("reference-prng", "mcpt-trng")
VARIANTS = ("bidirectional", "unidirectional")


class DivergenceError(RuntimeError):
    """A trajectory exceeded the step cap."""


@dataclass(frozen=True)
class TransportConfig:
    v: float = 200.0
    sigma_s: float = 0.5
    n_x: int = 16
    n_omega: int = 16
    dx: float = 1.0 / 8.0
    d_omega: float = 1.0 / 8.0
    dt: float | None = None  # defaults to dx / v
    sigma_kernel: float = 2.0  # deflection width in direction-index units
    source_amplitude: float = 0.015
    w: int = 100  # particles per start state

    def __post_init__(self):
        if self.dt is None:
            object.__setattr__(self, "dt", self.dx / self.v)
        if self.n_x != N_GRID or self.n_omega != N_GRID:
            raise ValueError("the 4-bit sampler fixes n_x = n_omega = 16")
        for name in ("v", "dx", "d_omega", "dt", "sigma_kernel", "source_amplitude"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma_s < 0:
            raise ValueError("sigma_s must be non-negative")
        if self.w < 1:
            raise ValueError("w (particles per state) must be at least 1")
        if not math.isclose(self.n_x * self.dx, 2.0) or not math.isclose(self.n_omega * self.d_omega, 2.0):
            raise ValueError("grid must tile [-1, 1]")
        if self.v * self.dt > self.dx * (1 + 1e-12):
            raise ValueError("v * dt must not exceed dx")

    @classmethod
    def from_dict(cls, data: dict) -> "TransportConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown transport config key(s): {', '.join(unknown)}")
        kw = dict(data)
        for k in ("n_x", "n_omega", "w"):
            if k in kw:
                kw[k] = int(kw[k])
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "TransportConfig":
        d = self.to_dict()
        d.update(changes)
        if "dt" not in changes and ("dx" in changes or "v" in changes):
            d["dt"] = None
        return TransportConfig(**d)


@dataclass(frozen=True)
class StateIndex:
    """1-based grid state (i, j); ``i = j = 0`` is the absorbing state."""

    i: int
    j: int

    @property
    def absorbing(self) -> bool:
        return self.i == 0 and self.j == 0

    def __post_init__(self):
        if not self.absorbing and not (1 <= self.i <= N_GRID and 1 <= self.j <= N_GRID):
            raise ValueError(f"state index out of range: {self}")


ABSORBING = StateIndex(0, 0)


def source_term(x, config: TransportConfig | None = None):
    amp = (config or TransportConfig()).source_amplitude
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1):
        raise ValueError("x outside [-1, 1]")
    r = np.where(np.abs(xa) < 0.5, amp, 0.0)
    return r if r.ndim else float(r)


def grid_positions(config: TransportConfig) -> np.ndarray:
    return -1.0 + config.dx / 2 + np.arange(config.n_x) * config.dx


def grid_directions(config: TransportConfig) -> np.ndarray:
    return -1.0 + config.d_omega / 2 + np.arange(config.n_omega) * config.d_omega


def discrete_kernel(config: TransportConfig) -> np.ndarray:
    """K[j, l]: probability of deflecting from direction j to l given a scatter.

    Gaussian in the index offset, truncated to the direction grid and
    renormalised per row.
    """
    idx = np.arange(config.n_omega)
    z = (idx[None, :] - idx[:, None]) / config.sigma_kernel
    w = np.exp(-0.5 * z * z)
    return w / w.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class TransitionModel:
    q1: float
    kernel: np.ndarray  # (16, 16) deflection PMF per direction
    rows: np.ndarray  # (16, 16) next-direction PMF per direction
    displacement: np.ndarray  # (16,) position change per step for each direction
    config: TransportConfig = field(repr=False)

    def full_matrix(self) -> np.ndarray:
        """The 257 x 257 chain over grid states plus the absorbing state (last).

        Grid starts move to the cell containing ``x_i - v * omega_j * dt``.
        """
        n = N_GRID * N_GRID
        C = np.zeros((n + 1, n + 1))
        xs = grid_positions(self.config)
        for i in range(N_GRID):
            for j in range(N_GRID):
                row = i * N_GRID + j
                x_new = xs[i] + self.displacement[j]
                if abs(x_new) > 1:
                    C[row, n] = 1.0
                    continue
                k = _cell_of(np.array([x_new]), self.config)[0]
                C[row, k * N_GRID:(k + 1) * N_GRID] = self.rows[j]
        C[n, n] = 1.0
        return C


def scatter_probability(config: TransportConfig) -> float:
    return -math.expm1(-config.v * config.sigma_s * config.dt)


def build_transition(config: TransportConfig) -> TransitionModel:
    q1 = scatter_probability(config)
    kernel = discrete_kernel(config)
    rows = q1 * kernel
    rows[np.diag_indices(N_GRID)] += 1.0 - q1
    rows /= rows.sum(axis=1, keepdims=True)
    disp = -config.v * grid_directions(config) * config.dt
    return TransitionModel(q1=q1, kernel=kernel, rows=rows, displacement=disp, config=config)


def _cell_of(x: np.ndarray, config: TransportConfig) -> np.ndarray:
    return np.clip(np.floor((x + 1.0) / config.dx).astype(np.int64), 0, config.n_x - 1)


def _step_score(x0, x1, omega_abs, cell_source, config: TransportConfig):
    """Integral of v * R over a straight segment x0 -> x1 (|x1 - x0| < dx)."""
    c0 = _cell_of(x0, config)
    c1 = _cell_of(x1, config)
    edge = -1.0 + np.maximum(c0, c1) * config.dx
    same = c0 == c1
    len0 = np.where(same, np.abs(x1 - x0), np.abs(edge - x0))
    len1 = np.where(same, 0.0, np.abs(x1 - edge))
    return (cell_source[c0] * len0 + cell_source[c1] * len1) / omega_abs


# ---- direction samplers -------------------------------------------------

class ReferenceSampler:
    """Inverse-CDF sampling of the model rows from a software PRNG."""

    kind = "reference-prng"

    def __init__(self, model: TransitionModel):
        cum = np.cumsum(model.rows, axis=1)
        cum[:, -1] = 1.0
        self.cum = cum

    def start(self, j, rng):
        return np.zeros(len(j), dtype=np.int64)

    def draw(self, j, state, rng):
        u = rng.random(len(j))
        l = (self.cum[j] <= u[:, None]).sum(axis=1)
        return np.minimum(l, N_GRID - 1), state

    def describe(self) -> dict:
        return {"kind": self.kind}


class TrngSampler:
    """Direction draws served by the simulated four-cell Bayesian-network TRNG.

    One compiled program per current direction j programs that row. Each
    lane (particle) owns its four cells; their state persists between draws.
    ``voltage_noise`` is the relative sigma of an independent Gaussian
    perturbation applied to every write pulse.
    """

    kind = "mcpt-trng"

    def __init__(self, model: TransitionModel, params: DeviceParams | None = None,
                 op: OperatingPoint = NOMINAL, variant: str = "bidirectional",
                 voltage_noise: float = 0.0, t_pulse: float = DEFAULT_T_PULSE,
                 warmup: int = WARMUP_CYCLES):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.params = params or DeviceParams()
        self.op = op
        self.variant = variant
        self.voltage_noise = float(voltage_noise)
        self.warmup = warmup
        self.programs = [compile_cpt(build_cpt(row), t_pulse, self.params) for row in model.rows]
        self.t_pulse = t_pulse
        self.v_set = np.array([[p.v_set for p in prog.pairs] for prog in self.programs])
        self.v_reset = np.array([[p.v_reset for p in prog.pairs] for prog in self.programs])
        rates = [program_rates(prog, self.params, op) for prog in self.programs]
        self.p01 = np.array([r[0] for r in rates])
        self.p10 = np.array([r[1] for r in rates])

    def _noisy_rates(self, j, e, rng):
        eps = 1.0 + self.voltage_noise * rng.standard_normal(len(j))
        eps = np.maximum(eps, 1e-6)
        p01 = switch_probability_from_voltage(self.v_set[j, e] * eps, Direction.P_TO_AP,
                                              self.t_pulse, self.params, self.op)
        p10 = switch_probability_from_voltage(self.v_reset[j, e] * eps, Direction.AP_TO_P,
                                              self.t_pulse, self.params, self.op)
        return np.asarray(p01), np.asarray(p10)

    def _cycle(self, j, state, rng):
        n = len(j)
        u = rng.random((n, 4))
        value = np.zeros(n, dtype=np.int64)
        bidir = self.variant == "bidirectional"
        for level in range(4):
            shift = 3 - level
            e = (1 << level) - 1 + value
            if self.voltage_noise > 0:
                p01, p10 = self._noisy_rates(j, e, rng)
            else:
                p01, p10 = self.p01[j, e], self.p10[j, e]
            if bidir:
                old = (state >> shift) & 1
                bit = np.where(old == 1, u[:, level] >= p10, u[:, level] < p01)
            else:
                bit = u[:, level] < p01
            value = (value << 1) | bit
        return value

    def start(self, j, rng):
        state = np.zeros(len(j), dtype=np.int64)
        for _ in range(self.warmup):
            state = self._cycle(j, state, rng)
        return state

    def draw(self, j, state, rng):
        value = self._cycle(j, state, rng)
        return value, value

    def describe(self) -> dict:
        return {"kind": self.kind, "variant": self.variant, "operating_point": self.op.to_dict(),
                "voltage_noise": self.voltage_noise, "device": self.params.to_dict()}


def make_sampler(kind: str, model: TransitionModel, params=None, op=None, **kw):
    if kind == "reference-prng":
        return ReferenceSampler(model)
    if kind == "mcpt-trng":
        return TrngSampler(model, params, op or NOMINAL, **kw)
    raise ValueError(f"unknown sampler kind {kind!r}; choose from {SAMPLER_KINDS}")


# ---- tracking -----------------------------------------------------------

def track_particle(start: StateIndex, model: TransitionModel, config: TransportConfig, sampler, rng,
                   max_steps: int = MAX_STEPS):
    """Follow one particle to absorption.

    Returns the accumulated score and the visit trace: the snapped
    (cell, direction) state at the start of every step, ending with
    ``ABSORBING``.
    """
    if start.absorbing:
        raise ValueError("cannot start in the absorbing state")
    xs = grid_positions(config)
    dirs = grid_directions(config)
    cell_source = source_term(xs, config)
    x = float(xs[start.i - 1])
    j = np.array([start.j - 1])
    state = sampler.start(j, rng)
    score = 0.0
    trace = []
    for _ in range(max_steps):
        jj = int(j[0])
        trace.append(StateIndex(int(_cell_of(np.array([x]), config)[0]) + 1, jj + 1))
        x1 = x + model.displacement[jj]
        exited = abs(x1) > 1.0
        x_end = min(max(x1, -1.0), 1.0)
        score += float(_step_score(np.array([x]), np.array([x_end]), abs(dirs[jj]), cell_source, config)[0])
        if exited:
            trace.append(ABSORBING)
            return score, trace
        x = x1
        j, state = sampler.draw(j, state, rng)
    raise DivergenceError(f"particle from {start} not absorbed within {max_steps} steps")


def _simulate_unit(task):
    """Track a block of trajectories; returns per-start-state sums."""
    config, model, sampler, starts, seed, max_steps = task
    rng = np.random.default_rng(seed)
    xs = grid_positions(config)
    dirs = grid_directions(config)
    abs_dirs = np.abs(dirs)
    cell_source = source_term(xs, config)
    n_states = N_GRID * N_GRID

    origin = np.asarray(starts, dtype=np.int64)
    x = xs[origin // N_GRID]
    j = origin % N_GRID
    lane = np.arange(len(origin))
    score = np.zeros(len(origin))
    state = sampler.start(j, rng)

    steps = 0
    while lane.size:
        if steps >= max_steps:
            raise DivergenceError(f"{lane.size} trajectories not absorbed within {max_steps} steps")
        x1 = x + model.displacement[j]
        exited = np.abs(x1) > 1.0
        x_end = np.clip(x1, -1.0, 1.0)
        score[lane] += _step_score(x, x_end, abs_dirs[j], cell_source, config)
        keep = ~exited
        lane, x, j, state = lane[keep], x1[keep], j[keep], state[keep]
        if lane.size:
            j, state = sampler.draw(j, state, rng)
        steps += 1

    s1 = np.bincount(origin, weights=score, minlength=n_states)
    s2 = np.bincount(origin, weights=score * score, minlength=n_states)
    cnt = np.bincount(origin, minlength=n_states)
    return s1, s2, cnt, steps


# ---- flux field ---------------------------------------------------------

@dataclass
class FluxField:
    phi: np.ndarray  # (16, 16) indexed [i - 1, j - 1]
    counts: np.ndarray
    sem: np.ndarray  # standard error of each cell estimate
    config: dict
    total_particles: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.phi < 0):
            raise ValueError("flux must be non-negative")

    def to_csv(self, path=None) -> str:
        cfg = TransportConfig(**self.config)
        xs, ds = grid_positions(cfg), grid_directions(cfg)
        lines = ["i,j,x,omega,phi,count"]
        for i in range(N_GRID):
            for j in range(N_GRID):
                lines.append(f"{i + 1},{j + 1},{xs[i]!r},{ds[j]!r},{float(self.phi[i, j])!r},{int(self.counts[i, j])}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, config: TransportConfig | None = None) -> "FluxField":
        cfg = config or TransportConfig()
        rows = Path(path).read_text().strip().splitlines()[1:]
        phi = np.zeros((N_GRID, N_GRID))
        counts = np.zeros((N_GRID, N_GRID), dtype=np.int64)
        for r in rows:
            i, j, _, _, p, c = r.split(",")
            phi[int(i) - 1, int(j) - 1] = float(p)
            counts[int(i) - 1, int(j) - 1] = int(c)
        return cls(phi, counts, np.zeros_like(phi), cfg.to_dict(), int(counts.sum()))

    def to_dict(self) -> dict:
        return {
            "phi": self.phi.tolist(),
            "counts": self.counts.tolist(),
            "sem": self.sem.tolist(),
            "config": self.config,
            "total_particles": self.total_particles,
            "meta": self.meta,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _unit_tasks(config, model, sampler, seed, w, max_steps):
    n_states = N_GRID * N_GRID
    tasks = []
    done = 0
    k = 0
    while done < w:
        reps = min(REPLICATES_PER_UNIT, w - done)
        starts = np.tile(np.arange(n_states), reps)
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(k,))
        tasks.append((config, model, sampler, starts, ss, max_steps))
        done += reps
        k += 1
    return tasks


def solve(config: TransportConfig, model: TransitionModel | None = None, sampler_kind: str = "reference-prng",
          params: DeviceParams | None = None, op: OperatingPoint | None = None, seed: int = 0, *,
          variant: str = "bidirectional", voltage_noise: float = 0.0, w: int | None = None,
          workers: int = 1, max_steps: int = MAX_STEPS) -> FluxField:
    """Estimate the angular flux at every grid state from W trajectories each.

    Work is split into fixed blocks of replicates with sub-seeds derived
    from ``seed`` and the block index, so the result does not depend on
    ``workers``. Block tallies are merged with compensated summation.
    """
    w = config.w if w is None else w
    if w < 1:
        raise ValueError("W must be at least 1 particle per state")
    model = model or build_transition(config)
    if sampler_kind == "mcpt-trng":
        sampler = TrngSampler(model, params, op or NOMINAL, variant=variant, voltage_noise=voltage_noise)
    else:
        sampler = make_sampler(sampler_kind, model)
    tasks = _unit_tasks(config, model, sampler, seed, w, max_steps)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_unit, tasks))
    else:
        results = [_simulate_unit(t) for t in tasks]

    s1 = np.array([math.fsum(col) for col in np.array([r[0] for r in results]).T])
    s2 = np.array([math.fsum(col) for col in np.array([r[1] for r in results]).T])
    cnt = np.sum([r[2] for r in results], axis=0)
    mean = s1 / cnt
    var = np.maximum(s2 / cnt - mean * mean, 0.0) * cnt / np.maximum(cnt - 1, 1)
    sem = np.sqrt(var / cnt)
    shape = (N_GRID, N_GRID)
    meta = {"sampler": sampler.describe(), "seed": int(seed), "w": int(w),
            "max_steps_in_block": int(max(r[3] for r in results))}
    return FluxField(mean.reshape(shape), cnt.reshape(shape), sem.reshape(shape),
                     config.to_dict(), int(cnt.sum()), meta)


def voltage_sweep(config: TransportConfig, scales, seeds, oracle: FluxField, params: DeviceParams | None = None,
                  model: TransitionModel | None = None, workers: int = 1, w: int | None = None) -> list[dict]:
    """SSE against ``oracle`` for both write schemes at each voltage scale, seed-averaged."""
    from .stats import field_sse

    model = model or build_transition(config)
    rows = []
    for scale in scales:
        op = OperatingPoint(voltage_scale=float(scale))
        per_seed = {v: [] for v in VARIANTS}
        for s in seeds:
            for v in VARIANTS:
                f = solve(config, model, "mcpt-trng", params, op, s, variant=v, w=w, workers=workers)
                per_seed[v].append(field_sse(f, oracle))
        rows.append({
            "scale": float(scale),
            "sse_bidirectional": float(np.mean(per_seed["bidirectional"])),
            "sse_unidirectional": float(np.mean(per_seed["unidirectional"])),
            "sse_bidirectional_per_seed": per_seed["bidirectional"],
            "sse_unidirectional_per_seed": per_seed["unidirectional"],
        })
    return rows
