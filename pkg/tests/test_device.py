import json
import math

import numpy as np
import pytest

from mcpt.device import (
    NOMINAL,
    CalibrationRangeError,
    DeviceParams,
    Direction,
    DomainError,
    OperatingPoint,
    ProcessSample,
    attainable_range,
    calibrate_current,
    effective_params,
    mean_switch_time,
    sample_process_variation,
    switch_probability,
    switch_probability_from_voltage,
    voltage_to_current,
)

# frozen from tests/oracles/derived_values.py
TAU_AT_09 = 1.49182469764127e-9
P_AT_09 = 0.964971744044426
EXP_03 = 1.349858807576

REFERENCE = DeviceParams(tau0=1e-9, delta0=40.0)


def test_tau_at_critical_current_is_attempt_time():
    p = DeviceParams()
    assert mean_switch_time(p.ic0, p) == pytest.approx(p.tau0, rel=1e-15)


def test_tau_small_current_limit():
    p = DeviceParams()
    assert mean_switch_time(p.ic0 * 1e-12, p) == pytest.approx(p.tau0 * math.exp(p.delta0), rel=1e-9)


def test_tau_reference_value():
    assert mean_switch_time(0.9 * REFERENCE.ic0, REFERENCE) == pytest.approx(TAU_AT_09, rel=1e-12)


def test_tau_saturates_above_critical_current():
    p = DeviceParams()
    assert mean_switch_time(2 * p.ic0, p) == pytest.approx(p.tau0)


def test_tau_rejects_non_positive_current():
    with pytest.raises(DomainError):
        mean_switch_time(0.0, DeviceParams())
    with pytest.raises(DomainError):
        mean_switch_time(np.array([1e-6, -1e-6]), DeviceParams())


def test_switch_probability_values():
    p = REFERENCE
    i = 0.9 * p.ic0
    assert switch_probability(i, 0.0, p) == 0.0
    assert switch_probability(i, TAU_AT_09, p) == pytest.approx(1 - math.exp(-1), rel=1e-12)
    assert switch_probability(i, 5e-9, p) == pytest.approx(P_AT_09, rel=1e-12)
    with pytest.raises(DomainError):
        switch_probability(i, -1e-9, p)


def test_switch_probability_monotone_in_current_and_time():
    p = DeviceParams()
    i = np.linspace(1e-6, 1.5 * p.ic0, 400)
    prob = switch_probability(i, 5e-9, p)
    assert np.all(np.diff(prob) >= 0)
    assert switch_probability(0.7 * p.ic0, 2e-9, p) < switch_probability(0.7 * p.ic0, 8e-9, p)


def test_voltage_to_current():
    p = DeviceParams(r_p=1000.0, tmr=2.0)
    assert voltage_to_current(1.0, Direction.P_TO_AP, p) == pytest.approx(1e-3)
    assert voltage_to_current(1.0, Direction.P_TO_AP, p, OperatingPoint(voltage_scale=0.85)) == pytest.approx(0.85e-3)
    assert voltage_to_current(1.0, Direction.AP_TO_P, p) == pytest.approx(1.0 / 3000.0)
    with pytest.raises(DomainError):
        voltage_to_current(0.0, Direction.P_TO_AP, p)


def test_effective_params():
    p = DeviceParams()
    assert effective_params(p, NOMINAL) == p
    hot = effective_params(p, OperatingPoint(temperature=360.0))
    assert hot.delta0 == pytest.approx(p.delta0 * 300 / 360)
    thick = effective_params(p, OperatingPoint(process_sample=ProcessSample(f_ttb=1.03)))
    assert thick.r_p == pytest.approx(p.r_p * EXP_03, rel=1e-12)
    thin = effective_params(p, OperatingPoint(process_sample=ProcessSample(f_tfl=0.9, f_tmr=1.1)))
    assert thin.delta0 == pytest.approx(0.9 * p.delta0)
    assert thin.ic0 == pytest.approx(0.9 * p.ic0)
    assert thin.tmr == pytest.approx(1.1 * p.tmr)


def test_temperature_raises_switching_probability():
    p = DeviceParams()
    i = np.linspace(0.3, 0.6, 20) * p.ic0  # below float saturation at 360 K
    cold = switch_probability(i, 5e-9, p, OperatingPoint(temperature=240.0))
    hot = switch_probability(i, 5e-9, p, OperatingPoint(temperature=360.0))
    assert np.all(hot > cold)


def test_process_variation_statistics():
    p = DeviceParams()
    assert sample_process_variation(p, 3) == sample_process_variation(p, 3)
    rng = np.random.default_rng(11)
    draws = np.array([[s.f_tfl, s.f_ttb, s.f_tmr] for s in (sample_process_variation(p, rng) for _ in range(100_000))])
    assert np.all((draws >= 0.85) & (draws <= 1.15))
    assert np.all(np.abs(draws.std(axis=0) - 0.03) < 0.002)
    assert np.all(np.abs(draws.mean(axis=0) - 1.0) < 0.001)


def test_calibration_roundtrip():
    p = DeviceParams()
    i = calibrate_current(0.5, 5e-9, p)
    assert switch_probability(i, 5e-9, p) == pytest.approx(0.5, abs=1e-9)
    i = calibrate_current(1 - math.exp(-1), 5e-9, p)
    assert mean_switch_time(i, p) == pytest.approx(5e-9, rel=1e-7)


def test_calibration_reference_inverse():
    i = calibrate_current(P_AT_09, 5e-9, REFERENCE)
    assert i / REFERENCE.ic0 == pytest.approx(0.9, abs=1e-6)


@pytest.mark.parametrize("target", [1e-4, 0.01, 0.3, 0.9, 0.999, 1 - 1e-4])
def test_default_device_reaches_clamp_range(target):
    p = DeviceParams()
    i = calibrate_current(target, 5e-9, p)
    assert switch_probability(i, 5e-9, p) == pytest.approx(target, abs=1e-9)


def test_calibration_errors():
    p = DeviceParams()
    with pytest.raises(CalibrationRangeError):
        calibrate_current(0.0, 5e-9, p)
    with pytest.raises(CalibrationRangeError):
        calibrate_current(1.0, 5e-9, p)
    # the reference device saturates below 1 - 1e-4 at 5 ns
    lo, hi = attainable_range(5e-9, REFERENCE)
    assert hi < 1 - 1e-4
    with pytest.raises(CalibrationRangeError):
        calibrate_current(1 - 1e-4, 5e-9, REFERENCE)


def test_params_json(tmp_path):
    path = tmp_path / "device.json"
    path.write_text(json.dumps({"tau0": 2e-10, "delta0": 30}))
    p = DeviceParams.from_json(path)
    assert p.tau0 == 2e-10 and p.delta0 == 30.0
    assert DeviceParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError, match="unknown"):
        DeviceParams.from_dict({"tau_0": 1e-9})
    with pytest.raises(DomainError):
        DeviceParams(tmr=-0.1)


def test_voltage_path_matches_current_path():
    p = DeviceParams()
    v = 0.06
    i = voltage_to_current(v, Direction.AP_TO_P, p)
    assert switch_probability_from_voltage(v, Direction.AP_TO_P, 5e-9, p) == switch_probability(i, 5e-9, p)
