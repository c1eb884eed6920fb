"""Randomness battery (a subset of NIST SP 800-22) and distribution distances.

Each test maps a 0/1 array to a :class:`TestReport`. :func:`run_battery`
splits a stream into groups, runs every test on each group and aggregates
per test the way the reference suite's final report does: the number of
groups passing, and a second-level p-value for the uniformity of the
per-group p-values.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

PASS_THRESHOLD = 1e-4
STANDARD_THRESHOLD = 0.01
MIN_BITS = 100


class SequenceTooShortError(ValueError):
    def __init__(self, test: str, minimum: int, got: int):
        super().__init__(f"{test} needs at least {minimum} bits, got {got}")
        self.minimum = minimum


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    test_name: str
    p_value: float | None
    passed: bool
    groups_passed: int = 1
    groups_total: int = 1
    variant: str = ""


def _bits(bits, test: str, minimum: int = MIN_BITS) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int8).ravel()
    if b.size < minimum:
        raise SequenceTooShortError(test, minimum, b.size)
    if np.any((b != 0) & (b != 1)):
        raise ValueError("bit sequence must contain only 0 and 1")
    return b


def _report(name, p, threshold, variant="") -> TestReport:
    p = float(min(max(p, 0.0), 1.0))
    ok = p >= threshold
    return TestReport(name, p, ok, int(ok), 1, variant)


def frequency_test(bits, threshold: float = PASS_THRESHOLD) -> TestReport:
    b = _bits(bits, "Frequency")
    s = np.sum(2 * b.astype(np.int64) - 1)
    p = erfc(abs(s) / math.sqrt(b.size) / math.sqrt(2))
    return _report("Frequency", p, threshold)


def block_frequency_test(bits, block_len: int = 128, threshold: float = PASS_THRESHOLD) -> TestReport:
    b = _bits(bits, "BlockFrequency", max(MIN_BITS, block_len))
    n_blocks = b.size // block_len
    pi = b[: n_blocks * block_len].reshape(n_blocks, block_len).mean(axis=1)
    chi2 = 4.0 * block_len * np.sum((pi - 0.5) ** 2)
    return _report("BlockFrequency", gammaincc(n_blocks / 2.0, chi2 / 2.0), threshold)


def runs_test(bits, threshold: float = PASS_THRESHOLD) -> TestReport:
    b = _bits(bits, "Runs")
    n = b.size
    pi = b.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        # frequency prerequisite failed
        return _report("Runs", 0.0, threshold)
    v_obs = 1 + int(np.count_nonzero(b[1:] != b[:-1]))
    num = abs(v_obs - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return _report("Runs", erfc(num / den), threshold)


# (min length, block length M, class boundaries (low, high), class probabilities)
_LONGEST_RUN_TABLE = [
    (750_000, 10_000, (10, 16), [0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727]),
    (6_272, 128, (4, 9), [0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124]),
    (128, 8, (1, 4), [0.2148, 0.3672, 0.2305, 0.1875]),
]


def _longest_runs(blocks: np.ndarray) -> np.ndarray:
    """Length of the longest run of ones in each row."""
    n_blocks, m = blocks.shape
    padded = np.zeros((n_blocks, m + 2), dtype=np.int8)
    padded[:, 1:-1] = blocks
    d = np.diff(padded, axis=1)
    rows_s, cols_s = np.nonzero(d == 1)
    _, cols_e = np.nonzero(d == -1)
    out = np.zeros(n_blocks, dtype=np.int64)
    np.maximum.at(out, rows_s, cols_e - cols_s)
    return out


def longest_run_test(bits, threshold: float = PASS_THRESHOLD) -> TestReport:
    b = _bits(bits, "LongestRun", 128)
    for min_n, m, (lo, hi), probs in _LONGEST_RUN_TABLE:
        if b.size >= min_n:
            break
    n_blocks = b.size // m
    runs = _longest_runs(b[: n_blocks * m].reshape(n_blocks, m))
    classes = np.clip(runs, lo, hi) - lo
    nu = np.bincount(classes, minlength=len(probs))
    expected = n_blocks * np.asarray(probs)
    chi2 = float(np.sum((nu - expected) ** 2 / expected))
    return _report("LongestRun", gammaincc((len(probs) - 1) / 2.0, chi2 / 2.0), threshold)


def _cusum_p(n: int, z: int) -> float:
    def tdiv(a, b):  # C-style truncating division
        q = abs(a) // abs(b)
        return q if (a >= 0) == (b > 0) else -q

    sqn = math.sqrt(n)
    s1 = 0.0
    for k in range(tdiv(tdiv(-n, z) + 1, 4), tdiv(tdiv(n, z) - 1, 4) + 1):
        s1 += norm.cdf((4 * k + 1) * z / sqn) - norm.cdf((4 * k - 1) * z / sqn)
    s2 = 0.0
    for k in range(tdiv(tdiv(-n, z) - 3, 4), tdiv(tdiv(n, z) - 1, 4) + 1):
        s2 += norm.cdf((4 * k + 3) * z / sqn) - norm.cdf((4 * k + 1) * z / sqn)
    return 1.0 - s1 + s2


def cumulative_sums_test(bits, direction: str = "forward", threshold: float = PASS_THRESHOLD) -> TestReport:
    b = _bits(bits, "CumulativeSums")
    x = 2 * b.astype(np.int64) - 1
    if direction == "reverse":
        x = x[::-1]
    elif direction != "forward":
        raise ValueError("direction must be 'forward' or 'reverse'")
    z = int(np.max(np.abs(np.cumsum(x))))
    p = _cusum_p(b.size, z) if z > 0 else 1.0
    return _report("CumulativeSums", p, threshold, direction)


def _pattern_counts(b: np.ndarray, m: int) -> np.ndarray:
    """Counts of every overlapping m-bit pattern, wrapping around the end."""
    if m == 0:
        return np.array([b.size])
    ext = np.concatenate([b, b[: m - 1]]).astype(np.int64)
    codes = np.zeros(b.size, dtype=np.int64)
    for k in range(m):
        codes = (codes << 1) | ext[k:k + b.size]
    return np.bincount(codes, minlength=1 << m)


def approximate_entropy_test(bits, m: int = 10, threshold: float = PASS_THRESHOLD) -> TestReport:
    b = _bits(bits, "ApproximateEntropy")
    n = b.size

    def phi(mm):
        c = _pattern_counts(b, mm) / n
        c = c[c > 0]
        return float(np.sum(c * np.log(c)))

    apen = phi(m) - phi(m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return _report("ApproximateEntropy", gammaincc(2 ** (m - 1), chi2 / 2.0), threshold)


def _psi_sq(b: np.ndarray, m: int) -> float:
    if m <= 0:
        return 0.0
    c = _pattern_counts(b, m).astype(np.float64)
    return (2.0**m / b.size) * float(np.sum(c * c)) - b.size


def serial_test(bits, m: int = 16, direction: str = "forward", threshold: float = PASS_THRESHOLD) -> TestReport:
    """Serial test; ``forward`` reports the first-difference p-value, ``reverse`` the second."""
    b = _bits(bits, "Serial")
    psi = [_psi_sq(b, m), _psi_sq(b, m - 1), _psi_sq(b, m - 2)]
    if direction == "forward":
        p = gammaincc(2.0 ** (m - 2), (psi[0] - psi[1]) / 2.0)
    elif direction == "reverse":
        p = gammaincc(2.0 ** (m - 3), (psi[0] - 2 * psi[1] + psi[2]) / 2.0)
    else:
        raise ValueError("direction must be 'forward' or 'reverse'")
    return _report("Serial", p, threshold, direction)


BATTERY = (
    ("Frequency", "", lambda b, t: frequency_test(b, t)),
    ("BlockFrequency", "", lambda b, t: block_frequency_test(b, 128, t)),
    ("CumulativeSums", "forward", lambda b, t: cumulative_sums_test(b, "forward", t)),
    ("CumulativeSums", "reverse", lambda b, t: cumulative_sums_test(b, "reverse", t)),
    ("Runs", "", lambda b, t: runs_test(b, t)),
    ("LongestRun", "", lambda b, t: longest_run_test(b, t)),
    ("ApproximateEntropy", "", lambda b, t: approximate_entropy_test(b, 10, t)),
    ("Serial", "forward", lambda b, t: serial_test(b, 16, "forward", t)),
    ("Serial", "reverse", lambda b, t: serial_test(b, 16, "reverse", t)),
)


def uniformity_p_value(p_values) -> float:
    """Second-level chi-square test that p-values are uniform over ten bins."""
    p = np.asarray(p_values, dtype=float)
    counts = np.bincount(np.minimum((p * 10).astype(int), 9), minlength=10)
    expected = p.size / 10.0
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return float(gammaincc(9 / 2.0, chi2 / 2.0))


def min_pass_count(groups: int) -> int:
    """Pass-rate floor: 9 of 10 groups, scaled proportionally for other counts."""
    return math.ceil(0.9 * groups)


@dataclass
class BatteryResult:
    rows: list  # one TestReport per (test, variant, group)
    summary: list  # one aggregated TestReport per (test, variant)
    threshold: float
    groups: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["test", "variant", "group", "p_value", "pass"])
        for g, r in self.rows:
            w.writerow([r.test_name, r.variant, g, repr(r.p_value), int(r.passed)])
        return buf.getvalue()

    def to_summary(self) -> dict:
        return {
            "threshold": self.threshold,
            "groups": self.groups,
            "tests": [
                {"test": s.test_name, "variant": s.variant, "p_value": s.p_value,
                 "pass_rate": f"{s.groups_passed}/{s.groups_total}",
                 "result": "Pass" if s.passed else "Fail"}
                for s in self.summary
            ],
            "all_passed": all(s.passed for s in self.summary),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_summary(), indent=1)


def run_battery(bits, groups: int = 10, threshold: float = PASS_THRESHOLD) -> BatteryResult:
    b = np.asarray(bits, dtype=np.int8).ravel()
    size = b.size // groups
    if size < MIN_BITS:
        raise SequenceTooShortError("battery group", MIN_BITS, size)
    rows = []
    per_test: dict[tuple, list[TestReport]] = {}
    for g in range(groups):
        chunk = b[g * size:(g + 1) * size]
        for name, variant, fn in BATTERY:
            r = fn(chunk, threshold)
            rows.append((g, r))
            per_test.setdefault((name, variant), []).append(r)
    summary = []
    floor = min_pass_count(groups)
    for (name, variant), reps in per_test.items():
        n_pass = sum(r.passed for r in reps)
        p_t = uniformity_p_value([r.p_value for r in reps])
        summary.append(TestReport(name, p_t, n_pass >= floor and p_t >= threshold, n_pass, groups, variant))
    return BatteryResult(rows, summary, threshold, groups)


# ---- distances ----------------------------------------------------------

def _as_array(a) -> np.ndarray:
    return np.asarray(getattr(a, "phi", a), dtype=float)


def _check(a, b):
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def pmf_mse(empirical, ideal) -> float:
    a, b = _check(empirical, ideal)
    return float(np.mean((a - b) ** 2))


def field_sse(a, b) -> float:
    a, b = _check(a, b)
    return float(np.sum((a - b) ** 2))


def field_mse(a, b) -> float:
    a, b = _check(a, b)
    return float(np.mean((a - b) ** 2))


def squared_error_field(a, b) -> np.ndarray:
    a, b = _check(a, b)
    return (a - b) ** 2


def report_dict(r: TestReport) -> dict:
    return asdict(r)
