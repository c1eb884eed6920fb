"""Experiment recipes shared by the command line and the acceptance suite.

Every recipe takes a validated config dict, a 64-bit seed, an output
directory, a worker count and a list of generator variants. It writes its
CSV/JSON artifacts and returns an :class:`Outcome` holding the numbers for
the summary plus named acceptance checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import network as nw
from .device import DeviceParams, OperatingPoint
from .stats import PASS_THRESHOLD, field_mse, field_sse, pmf_mse, run_battery, squared_error_field
from .transport import VARIANTS, FluxField, TransportConfig, build_transition, grid_directions, grid_positions, solve

CYCLE_TIME = 21.6e-9  # seconds per 4-bit generation cycle of the hardware
SEED_MAX = 2**64 - 1


class ConfigError(ValueError):
    """Invalid experiment configuration, message names the offending field."""


@dataclass
class Outcome:
    results: dict
    checks: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def derive_seed(seed: int, *tags: int) -> int:
    """Independent 64-bit child seed for a (seed, tags...) pair."""
    return int(np.random.SeedSequence([int(seed), *map(int, tags)]).generate_state(1, np.uint64)[0])


# ---- configuration ------------------------------------------------------

_PMF_KEYS = {"pmf": "gaussian", "mean": 8.0, "variance": 4.0, "t_pulse": 5e-9, "eps": nw.CLAMP_EPS}
_ORACLE_KEYS = {"oracle_w": 10_000, "oracle": None}

SCHEMAS: dict[str, dict] = {
    "calibrate": {"device": {}, **_PMF_KEYS},
    "rng": {"device": {}, **_PMF_KEYS, "count": 1_000_000, "format": "hex", "temperature": 300.0,
            "voltage_scale": 1.0, "persist": True, "warmup": nw.WARMUP_CYCLES},
    "nist": {"device": {}, "input": None, "format": "packed", "groups": 10, "group_bits": 100_000,
             "threshold": PASS_THRESHOLD},
    "pmf-fidelity": {"device": {}, **_PMF_KEYS, "count": 1_000_000, "temperatures": [240.0, 300.0, 360.0],
                     "nominal_mse_max": 1e-4, "robustness_factor": 10.0},
    "pvt-sweep": {"device": {}, "transport": {}, **_ORACLE_KEYS, "runs": 3,
                  "noise_3sigma": 0.10, "noise_factor_max": 2.0},
    "transport-solve": {"device": {}, "transport": {}, **_ORACLE_KEYS, "runs": 3,
                        "temperature": 300.0, "voltage_scale": 1.0, "noise_3sigma": 0.0, "mse_max": 5e-5},
    "voltage-sweep": {"device": {}, "transport": {}, **_ORACLE_KEYS, "runs": 3,
                      "scales": [0.85, 1.0, 1.15], "check_scales": [0.85, 1.15], "ratio_max": 0.5},
}

DEFAULT_VARIANTS = {
    "calibrate": ["bidirectional"],
    "rng": ["bidirectional"],
    "nist": ["bidirectional"],
    "pmf-fidelity": list(VARIANTS),
    "pvt-sweep": list(VARIANTS),
    "transport-solve": ["bidirectional"],
    "voltage-sweep": list(VARIANTS),
}

_CHOICES = {"format": {"hex", "bits", "packed"}}


def _coerce(name: str, value, default):
    """Check ``value`` against the type of ``default``."""
    if default is None:
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"field '{name}': expected a path string or null, got {type(value).__name__}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"field '{name}': expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field '{name}': expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field '{name}': expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                  for v in value):
            raise ConfigError(f"field '{name}': expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"field '{name}': expected an object, got {type(value).__name__}")
        return dict(value)
    if isinstance(default, str):
        if name == "pmf" and isinstance(value, list):
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
                raise ConfigError(f"field 'pmf': expected 16 numbers, got {value!r}")
            return [float(v) for v in value]
        if not isinstance(value, str):
            raise ConfigError(f"field '{name}': expected a string, got {value!r}")
        if name in _CHOICES and value not in _CHOICES[name]:
            raise ConfigError(f"field '{name}': must be one of {sorted(_CHOICES[name])}, got {value!r}")
        return value
    raise ConfigError(f"field '{name}': unsupported type")  # pragma: no cover


def resolve_config(experiment: str, raw: dict | None) -> dict:
    """Merge ``raw`` over the experiment defaults, rejecting unknown keys and bad types."""
    if experiment not in SCHEMAS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    schema = SCHEMAS[experiment]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"field '{unknown[0]}': unknown key for {experiment} (allowed: {', '.join(sorted(schema))})")
    cfg = {k: _coerce(k, raw[k], d) if k in raw else (list(d) if isinstance(d, list) else d)
           for k, d in schema.items()}
    # nested sections reuse the strict loaders of their modules
    try:
        if "device" in cfg:
            cfg["device"] = DeviceParams.from_dict(cfg["device"]).to_dict()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"field 'device': {exc}") from None
    try:
        if "transport" in cfg:
            cfg["transport"] = TransportConfig.from_dict(cfg["transport"]).to_dict()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"field 'transport': {exc}") from None
    for key in ("count", "groups", "group_bits", "runs", "oracle_w"):
        if key in cfg and cfg[key] < 1:
            raise ConfigError(f"field '{key}': must be >= 1, got {cfg[key]}")
    if "pmf" in cfg:
        _target_pmf(cfg)
    return cfg


def _target_pmf(cfg: dict) -> np.ndarray:
    choice = cfg["pmf"]
    if isinstance(choice, list):
        try:
            return nw.validate_pmf(choice)
        except ValueError as exc:
            raise ConfigError(f"field 'pmf': {exc}") from None
    if choice == "gaussian":
        return nw.discrete_gaussian_pmf(cfg["mean"], cfg["variance"])
    if choice == "uniform":
        return nw.uniform_pmf()
    raise ConfigError(f"field 'pmf': expected 'gaussian', 'uniform' or 16 probabilities, got {choice!r}")


def _program(cfg: dict) -> tuple[DeviceParams, np.ndarray, nw.CondProbTable, nw.VoltageProgram]:
    params = DeviceParams.from_dict(cfg["device"])
    pmf = _target_pmf(cfg)
    cpt = nw.build_cpt(pmf)
    return params, pmf, cpt, nw.compile_cpt(cpt, cfg["t_pulse"], params, cfg["eps"])


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _generator(variant: str):
    return nw.generate if variant == "bidirectional" else nw.generate_unidirectional


# ---- bit-level experiments -----------------------------------------------

def run_calibrate(cfg, seed, out: Path, workers=1, variants=None) -> Outcome:
    params, pmf, cpt, program = _program(cfg)
    clamped = nw.clamp_entries(cpt.entries, cfg["eps"])
    p01, p10 = nw.program_rates(program, params)
    _write_json(out / "program.json", program.to_dict())
    _write_json(out / "cpt.json", {"entries": cpt.entries.tolist(), "clamped": clamped.tolist(),
                                   "pmf": pmf.tolist()})
    err_set = float(np.max(np.abs(p01 - clamped)))
    err_reset = float(np.max(np.abs(p10 - (1.0 - clamped))))
    realised = nw.stationary_pmf(program, params)
    return Outcome(
        results={"max_set_error": err_set, "max_reset_error": err_reset,
                 "pmf_mse_exact": pmf_mse(realised, pmf), "n_distinct_pairs": len(set(program.pairs))},
        checks={"calibration_within_tolerance": max(err_set, err_reset) <= 1e-8},
        files=["program.json", "cpt.json"],
    )


_EXT = {"hex": "hex", "bits": "txt", "packed": "bin"}


def _dump(nibbles, path: Path, fmt: str) -> np.ndarray:
    if fmt == "hex":
        nw.write_nibbles_hex(nibbles, path)
        return nw.read_nibbles_hex(path)
    if fmt == "packed":
        nw.write_packed(nibbles, path, "nibbles")
        return nw.read_packed(path)[1]
    bits = nw.nibbles_to_bits(nibbles)
    path.write_text("".join(f"{b}\n" for b in bits))
    return None


def run_rng(cfg, seed, out: Path, workers=1, variants=None) -> Outcome:
    params, pmf, _, program = _program(cfg)
    op = OperatingPoint(temperature=cfg["temperature"], voltage_scale=cfg["voltage_scale"])
    results, checks, files = {}, {}, []
    for variant in variants or DEFAULT_VARIANTS["rng"]:
        nib = _generator(variant)(program, params, op, cfg["count"], seed,
                                  persist=cfg["persist"], warmup=cfg["warmup"])
        name = f"nibbles_{variant}.{_EXT[cfg['format']]}"
        back = _dump(nib, out / name, cfg["format"])
        if back is None:
            back_bits = nw.read_bit_stream(out / name, "bits")
            checks[f"{variant}_dump_roundtrip"] = bool(np.array_equal(back_bits, nw.nibbles_to_bits(nib)))
        else:
            checks[f"{variant}_dump_roundtrip"] = bool(np.array_equal(back, nib))
        emp = nw.empirical_pmf(nib)
        results[variant] = {
            "count": int(cfg["count"]),
            "empirical_pmf": emp.tolist(),
            "pmf_mse": pmf_mse(emp, pmf),
            "modeled_generation_time_s": cfg["count"] * CYCLE_TIME,
            "modeled_throughput_bit_per_s": 4 / CYCLE_TIME,
        }
        files.append(name)
    return Outcome(results, checks, files)


def run_nist(cfg, seed, out: Path, workers=1, variants=None) -> Outcome:
    results, checks, files = {}, {}, []
    sources = []
    if cfg["input"] is not None:
        path = Path(cfg["input"])
        if not path.exists():
            raise ConfigError(f"field 'input': no such file {cfg['input']!r}")
        sources.append(("input", nw.read_bit_stream(path, cfg["format"])))
    else:
        params = DeviceParams.from_dict(cfg["device"])
        program = nw.compile_cpt(nw.CondProbTable.uniform(), params=params)
        n_nibbles = math.ceil(cfg["groups"] * cfg["group_bits"] / 4)
        for variant in variants or DEFAULT_VARIANTS["nist"]:
            nib = _generator(variant)(program, params, count=n_nibbles, seed=seed)
            sources.append((variant, nw.nibbles_to_bits(nib)))
    for label, bits in sources:
        bits = bits[:cfg["groups"] * cfg["group_bits"]]
        if bits.size < cfg["groups"] * cfg["group_bits"]:
            raise ConfigError(f"field 'group_bits': input holds {bits.size} bits, "
                              f"need {cfg['groups'] * cfg['group_bits']}")
        battery = run_battery(bits, cfg["groups"], cfg["threshold"])
        (out / f"nist_{label}.csv").write_text(battery.to_csv())
        _write_json(out / f"nist_{label}.json", battery.to_summary())
        files += [f"nist_{label}.csv", f"nist_{label}.json"]
        results[label] = battery.to_summary()
        checks[f"{label}_all_tests_pass"] = bool(battery.to_summary()["all_passed"])
    return Outcome(results, checks, files)


def run_pmf_fidelity(cfg, seed, out: Path, workers=1, variants=None) -> Outcome:
    params, pmf, _, program = _program(cfg)
    variants = variants or DEFAULT_VARIANTS["pmf-fidelity"]
    lines = ["temperature,variant,value,ideal,empirical,exact"]
    results = {}
    for k, temp in enumerate(cfg["temperatures"]):
        op = OperatingPoint(temperature=temp)
        run_seed = derive_seed(seed, k)  # seed-matched across variants
        row = {}
        for variant in variants:
            emp = nw.empirical_pmf(_generator(variant)(program, params, op, cfg["count"], run_seed))
            exact = nw.stationary_pmf(program, params, op, variant)
            for v in range(nw.N_VALUES):
                lines.append(f"{temp!r},{variant},{v},{pmf[v]!r},{emp[v]!r},{exact[v]!r}")
            row[variant] = {"mse": pmf_mse(emp, pmf), "mse_exact": pmf_mse(exact, pmf)}
        results[f"{temp:g}K"] = row
    (out / "pmf_fidelity.csv").write_text("\n".join(lines) + "\n")

    checks = {}
    for temp in cfg["temperatures"]:
        row = results[f"{temp:g}K"]
        if temp == DeviceParams.from_dict(cfg["device"]).t_ref:
            if "bidirectional" in row:
                checks["nominal_mse_below_max"] = row["bidirectional"]["mse"] < cfg["nominal_mse_max"]
        elif len(row) == 2:
            ratio = row["unidirectional"]["mse"] / row["bidirectional"]["mse"]
            row["mse_ratio_uni_over_bi"] = ratio
            checks[f"robust_at_{temp:g}K"] = ratio >= cfg["robustness_factor"]
    return Outcome(results, checks, ["pmf_fidelity.csv"])


# ---- transport experiments -------------------------------------------------

def _oracle(cfg, seed, out: Path, workers, model, tcfg) -> FluxField:
    if cfg["oracle"] is not None:
        path = Path(cfg["oracle"])
        if not path.exists():
            raise ConfigError(f"field 'oracle': no such file {cfg['oracle']!r}")
        oracle = FluxField.from_csv(path, tcfg)
    else:
        oracle = solve(tcfg, model, "reference-prng", seed=derive_seed(seed, 0), w=cfg["oracle_w"], workers=workers)
    oracle.to_csv(out / "oracle_field.csv")
    return oracle


def write_squared_error_csv(a: FluxField, b: FluxField, path: Path, config: TransportConfig) -> None:
    sq = squared_error_field(a, b)
    xs, ds = grid_positions(config), grid_directions(config)
    lines = ["i,j,x,omega,sq_error"]
    for i in range(sq.shape[0]):
        for j in range(sq.shape[1]):
            lines.append(f"{i + 1},{j + 1},{xs[i]!r},{ds[j]!r},{float(sq[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _run_seeds(seed, runs):
    return [derive_seed(seed, 1, r) for r in range(runs)]


def run_transport_solve(cfg, seed, out: Path, workers=1, variants=None) -> Outcome:
    tcfg = TransportConfig.from_dict(cfg["transport"])
    params = DeviceParams.from_dict(cfg["device"])
    model = build_transition(tcfg)
    oracle = _oracle(cfg, seed, out, workers, model, tcfg)
    op = OperatingPoint(temperature=cfg["temperature"], voltage_scale=cfg["voltage_scale"])
    results, checks, files = {}, {}, ["oracle_field.csv"]
    for variant in variants or DEFAULT_VARIANTS["transport-solve"]:
        mses, sses = [], []
        for r, s in enumerate(_run_seeds(seed, cfg["runs"])):
            f = solve(tcfg, model, "mcpt-trng", params, op, s, variant=variant,
                      voltage_noise=cfg["noise_3sigma"] / 3.0, workers=workers)
            mses.append(field_mse(f, oracle))
            sses.append(field_sse(f, oracle))
            if r == 0:
                f.to_csv(out / f"trng_field_{variant}.csv")
                write_squared_error_csv(f, oracle, out / f"squared_error_{variant}.csv", tcfg)
                files += [f"trng_field_{variant}.csv", f"squared_error_{variant}.csv"]
        results[variant] = {"field_mse": float(np.mean(mses)), "field_sse": float(np.mean(sses)),
                            "field_mse_per_run": mses}
        checks[f"{variant}_mse_below_max"] = float(np.mean(mses)) <= cfg["mse_max"]
    results["oracle_total_particles"] = oracle.total_particles
    return Outcome(results, checks, files)


def run_pvt_sweep(cfg, seed, out: Path, workers=1, variants=None) -> Outcome:
    tcfg = TransportConfig.from_dict(cfg["transport"])
    params = DeviceParams.from_dict(cfg["device"])
    model = build_transition(tcfg)
    oracle = _oracle(cfg, seed, out, workers, model, tcfg)
    sigma = cfg["noise_3sigma"] / 3.0
    lines = ["variant,condition,run,sse"]
    results, checks = {}, {}
    for variant in variants or DEFAULT_VARIANTS["pvt-sweep"]:
        row = {}
        for condition, noise in (("nominal", 0.0), ("perturbed", sigma)):
            sses = []
            for r, s in enumerate(_run_seeds(seed, cfg["runs"])):
                f = solve(tcfg, model, "mcpt-trng", params, None, s, variant=variant,
                          voltage_noise=noise, workers=workers)
                sses.append(field_sse(f, oracle))
                lines.append(f"{variant},{condition},{r},{sses[-1]!r}")
            row[f"sse_{condition}"] = float(np.mean(sses))
        row["perturbed_over_nominal"] = row["sse_perturbed"] / row["sse_nominal"]
        results[variant] = row
    if "bidirectional" in results:
        checks["bidirectional_within_factor"] = (
            results["bidirectional"]["perturbed_over_nominal"] <= cfg["noise_factor_max"])
    (out / "pvt_sweep.csv").write_text("\n".join(lines) + "\n")
    return Outcome(results, checks, ["oracle_field.csv", "pvt_sweep.csv"])


def run_voltage_sweep(cfg, seed, out: Path, workers=1, variants=None) -> Outcome:
    tcfg = TransportConfig.from_dict(cfg["transport"])
    params = DeviceParams.from_dict(cfg["device"])
    model = build_transition(tcfg)
    oracle = _oracle(cfg, seed, out, workers, model, tcfg)
    variants = variants or DEFAULT_VARIANTS["voltage-sweep"]
    lines = ["scale,variant,run,sse"]
    results, checks = {}, {}
    for scale in cfg["scales"]:
        op = OperatingPoint(voltage_scale=scale)
        row = {}
        for variant in variants:
            sses = []
            for r, s in enumerate(_run_seeds(seed, cfg["runs"])):
                f = solve(tcfg, model, "mcpt-trng", params, op, s, variant=variant, workers=workers)
                sses.append(field_sse(f, oracle))
                lines.append(f"{scale!r},{variant},{r},{sses[-1]!r}")
            row[f"sse_{variant}"] = float(np.mean(sses))
        if len(variants) == 2:
            row["ratio_bi_over_uni"] = row["sse_bidirectional"] / row["sse_unidirectional"]
        results[f"{scale:g}"] = row
    for scale in cfg["check_scales"]:
        row = results.get(f"{scale:g}")
        if row is not None and "ratio_bi_over_uni" in row:
            checks[f"ratio_at_{scale:g}"] = row["ratio_bi_over_uni"] <= cfg["ratio_max"]
    (out / "voltage_sweep.csv").write_text("\n".join(lines) + "\n")
    return Outcome(results, checks, ["oracle_field.csv", "voltage_sweep.csv"])


RECIPES = {
    "calibrate": run_calibrate,
    "rng": run_rng,
    "nist": run_nist,
    "pmf-fidelity": run_pmf_fidelity,
    "pvt-sweep": run_pvt_sweep,
    "transport-solve": run_transport_solve,
    "voltage-sweep": run_voltage_sweep,
}
