import json

import numpy as np
import pytest

from mcpt import network as nw
from mcpt.device import DeviceParams, OperatingPoint

P = DeviceParams()

# frozen from tests/oracles/derived_values.py (prefix sums over the normalised Gaussian)
GAUSSIAN_CPT = [
    0.59971053804682357, 0.9713100083218311, 0.064056144898297067, 0.95617504500992409,
    0.76398966824310097, 0.33094847930699814, 0.069048019457853683, 0.86703575980217075,
    0.79818677773962117, 0.70578502783701123, 0.59266659995406976, 0.46879062662624374,
    0.34864513533394576, 0.24508501313237171, 0.16451646289656316,
]


@pytest.fixture(scope="module")
def gaussian_program():
    return nw.compile_cpt(nw.build_cpt(nw.discrete_gaussian_pmf()), params=P)


def test_uniform_pmf_gives_half_everywhere():
    assert np.all(nw.build_cpt(nw.uniform_pmf()).entries == 0.5)


def test_point_mass():
    pmf = np.zeros(16)
    pmf[15] = 1.0
    cpt = nw.build_cpt(pmf)
    path = [nw.entry_index(level, (1 << level) - 1) for level in range(4)]
    assert np.all(cpt.entries[path] == 1.0)
    off = np.setdiff1d(np.arange(15), path)
    assert np.all(cpt.entries[off] == 0.5)
    assert np.array_equal(nw.pmf_from_cpt(cpt), pmf)


def test_gaussian_cpt_matches_oracle():
    cpt = nw.build_cpt(nw.discrete_gaussian_pmf(8, 4))
    assert np.allclose(cpt.entries, GAUSSIAN_CPT, rtol=0, atol=1e-14)
    assert cpt.level_a == pytest.approx(nw.discrete_gaussian_pmf()[8:].sum(), abs=1e-15)


def test_joint_probability():
    assert nw.joint_probability(nw.CondProbTable.uniform(), 0b1011) == 0.0625
    cpt = nw.CondProbTable.from_entries(GAUSSIAN_CPT)
    a = cpt.conditional(0, 0)
    b = cpt.conditional(1, 0b1)
    c = cpt.conditional(2, 0b10)
    d = cpt.conditional(3, 0b101)
    assert nw.joint_probability(cpt, 0b1011) == pytest.approx(a * (1 - b) * c * d, rel=1e-15)
    with pytest.raises(ValueError):
        nw.joint_probability(cpt, 16)


def test_pmf_validation():
    with pytest.raises(ValueError):
        nw.validate_pmf(np.full(15, 1 / 15))
    with pytest.raises(ValueError):
        nw.validate_pmf(np.r_[np.full(15, 0.07), -0.05])
    with pytest.raises(ValueError):
        nw.validate_pmf(np.full(16, 0.07))


def test_cpt_validation_and_json():
    with pytest.raises(ValueError):
        nw.CondProbTable.from_entries([0.5] * 14)
    with pytest.raises(ValueError):
        nw.CondProbTable.from_entries([0.5] * 14 + [1.5])
    cpt = nw.CondProbTable.from_entries(GAUSSIAN_CPT)
    assert nw.CondProbTable.from_json(cpt.to_json()) == cpt
    assert len(json.loads(cpt.to_json())) == 15


def test_uniform_program_pairs_identical():
    prog = nw.compile_cpt(nw.CondProbTable.uniform(), params=P)
    assert len(set(prog.pairs)) == 1
    assert prog.pair("A") == prog.pair("D", 0b101)
    with pytest.raises(KeyError):
        prog.pair("B", 2)


def test_zero_entry_is_clamped():
    pmf = np.zeros(16)
    pmf[:8] = 1 / 8
    cpt = nw.build_cpt(pmf)
    assert cpt.level_a == 0.0
    prog = nw.compile_cpt(cpt, params=P)
    assert nw.decompile(prog, P).level_a == pytest.approx(nw.CLAMP_EPS, abs=1e-9)


def test_decompile_roundtrip(gaussian_program):
    assert np.max(np.abs(nw.decompile(gaussian_program, P).entries - GAUSSIAN_CPT)) < 1e-9
    assert np.max(np.abs(nw.stationary_cpt(gaussian_program, P).entries - GAUSSIAN_CPT)) < 1e-9


def test_program_dict_roundtrip(gaussian_program):
    d = gaussian_program.to_dict()
    assert [r["name"] for r in d["pairs"]][:4] == ["VDDA", "VDDB0", "VDDB1", "VDDC00"]
    assert nw.VoltageProgram.from_dict(json.loads(json.dumps(d))) == gaussian_program


def test_uniform_generation_frequencies():
    prog = nw.compile_cpt(nw.CondProbTable.uniform(), params=P)
    nib = nw.generate(prog, P, count=1_000_000, seed=8)
    freq = nw.empirical_pmf(nib)
    sigma = np.sqrt(1 / 16 * 15 / 16 / 1_000_000)
    assert np.all(np.abs(freq - 1 / 16) < 3.5 * sigma)


def test_gaussian_generation(gaussian_program):
    nib = nw.generate(gaussian_program, P, count=1_000_000, seed=9)
    assert np.mean((nw.empirical_pmf(nib) - nw.discrete_gaussian_pmf()) ** 2) < 1e-4


def test_generation_is_deterministic(gaussian_program):
    a = nw.generate(gaussian_program, P, count=5000, seed=123)
    assert np.array_equal(a, nw.generate(gaussian_program, P, count=5000, seed=123))
    assert not np.array_equal(a, nw.generate(gaussian_program, P, count=5000, seed=124))
    with pytest.raises(ValueError):
        nw.generate(gaussian_program, P, count=0)


def test_unidirectional_worse_when_hot(gaussian_program):
    ideal = nw.discrete_gaussian_pmf()
    op = OperatingPoint(temperature=360.0)
    bi = nw.empirical_pmf(nw.generate(gaussian_program, P, op, 200_000, seed=1))
    uni = nw.empirical_pmf(nw.generate_unidirectional(gaussian_program, P, op, 200_000, seed=1))
    assert np.mean((uni - ideal) ** 2) > np.mean((bi - ideal) ** 2)


def test_unidirectional_low_voltage_skews_to_zero_bits():
    prog = nw.compile_cpt(nw.CondProbTable.uniform(), params=P)
    nib = nw.generate_unidirectional(prog, P, OperatingPoint(voltage_scale=0.85), 100_000, seed=2)
    assert nw.nibbles_to_bits(nib).mean() < 0.4
    assert nw.empirical_pmf(nib)[0] > nw.empirical_pmf(nib)[15]


def test_nominal_variants_agree(gaussian_program):
    exact_bi = nw.stationary_pmf(gaussian_program, P, variant="bidirectional")
    exact_uni = nw.stationary_pmf(gaussian_program, P, variant="unidirectional")
    assert np.allclose(exact_bi, nw.discrete_gaussian_pmf(), atol=1e-9)
    assert np.allclose(exact_uni, exact_bi, atol=1e-9)


def test_exact_law_matches_simulation(gaussian_program):
    op = OperatingPoint(temperature=240.0)
    exact = nw.stationary_pmf(gaussian_program, P, op)
    emp = nw.empirical_pmf(nw.generate(gaussian_program, P, op, 400_000, seed=4))
    assert np.max(np.abs(emp - exact)) < 4 * np.sqrt(0.25 / 400_000)


def test_transition_matrix_rows_sum_to_one(gaussian_program):
    p01, p10 = nw.program_rates(gaussian_program, P, OperatingPoint(temperature=360.0))
    for variant in ("bidirectional", "unidirectional"):
        for persist in (True, False):
            T = nw.nibble_transition_matrix(p01, p10, variant, persist)
            assert np.allclose(T.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        nw.nibble_transition_matrix(p01, p10, "sideways")


def test_bits_msb_first():
    assert nw.nibbles_to_bits([0b1011, 0b0001]).tolist() == [1, 0, 1, 1, 0, 0, 0, 1]


@pytest.mark.parametrize("count", [1, 7, 8])
def test_dump_formats(tmp_path, count):
    nib = np.arange(count, dtype=np.uint8) % 16
    nw.write_nibbles_hex(nib, tmp_path / "n.hex")
    assert np.array_equal(nw.read_nibbles_hex(tmp_path / "n.hex"), nib)
    nw.write_packed(nib, tmp_path / "n.bin")
    kind, back = nw.read_packed(tmp_path / "n.bin")
    assert kind == "nibbles" and np.array_equal(back, nib)
    bits = nw.nibbles_to_bits(nib)
    nw.write_packed(bits, tmp_path / "b.bin", "bits")
    assert np.array_equal(nw.read_bit_stream(tmp_path / "b.bin", "packed"), bits)
    assert np.array_equal(nw.read_bit_stream(tmp_path / "n.hex", "hex"), bits)


def test_packed_layout_is_low_nibble_first(tmp_path):
    nw.write_packed([0x1, 0x2, 0x3], tmp_path / "n.bin")
    raw = (tmp_path / "n.bin").read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert header == b"# mcpt packed nibbles lsb-first count=3"
    assert payload == bytes([0x21, 0x03])
    (tmp_path / "bad.bin").write_bytes(b"\x00\x01")
    with pytest.raises(ValueError):
        nw.read_packed(tmp_path / "bad.bin")
