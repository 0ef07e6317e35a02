import math

import numpy as np
import pytest

from homodyne_opu.calibration import DEAD, CalibrationMap, calibrate_array, calibrate_unit, wrap_phase
from homodyne_opu.compiler import GemmShape, execute_gemm, plan_gemm
from homodyne_opu.device import DeviceConfig
from homodyne_opu.errors import CalibrationError, FormatError
from homodyne_opu.noise import PRESETS, fit_noise_to_sigma


def with_offsets(cfg, offsets, gains=None):
    return cfg.replace(unit_phase_offset=wrap_phase(offsets), unit_gain=gains)


def test_zero_offset_gives_zero_correction():
    theta, gain = calibrate_unit(DeviceConfig(2, 2), None, 1, 1)
    assert abs(theta) < 1e-6 and abs(gain - 1) < 1e-9


def test_recovers_injected_offset():
    offsets = np.zeros((2, 2))
    offsets[0, 1] = 0.3
    theta, _ = calibrate_unit(with_offsets(DeviceConfig(2, 2), offsets), None, 0, 1, sweep_steps=64)
    assert abs(theta + 0.3) < 1e-3


@pytest.mark.parametrize("n,floor", [(8, 0.9999), (256, 0.999)])
def test_array_residual_gain(n, floor):
    gen = np.random.default_rng(n)
    cfg = with_offsets(DeviceConfig(n, n), gen.uniform(-math.pi / 2, math.pi / 2, (n, n)))
    cal = calibrate_array(cfg)
    assert cal.residual_report.min() >= floor
    assert not cal.dead.any()


def test_gain_correction_normalizes_units():
    gen = np.random.default_rng(3)
    gains = gen.uniform(0.5, 1.5, (4, 4))
    cfg = with_offsets(DeviceConfig(4, 4), gen.uniform(-1, 1, (4, 4)), gains)
    cal = calibrate_array(cfg)
    np.testing.assert_allclose(cal.gain_correction * gains, 1.0, rtol=1e-6)


def test_calibration_is_idempotent():
    gen = np.random.default_rng(5)
    cfg = with_offsets(DeviceConfig(8, 8), gen.uniform(-1.5, 1.5, (8, 8)))
    cal = calibrate_array(cfg)
    again = calibrate_array(cal.corrected_config(cfg))
    assert np.abs(again.phase_correction).max() < 1e-4
    assert np.abs(again.gain_correction - 1).max() < 1e-6


def test_identity_device_yields_near_zero_map():
    cal = calibrate_array(DeviceConfig(4, 4))
    assert np.abs(cal.phase_correction).max() < 1e-6
    assert np.allclose(cal.residual_report, 1.0)


def test_dead_unit_flagged():
    gains = np.ones((3, 3))
    gains[1, 2] = 1e-4
    cfg = DeviceConfig(3, 3, unit_gain=gains)
    cal = calibrate_array(cfg)
    assert cal.residual_report[1, 2] == DEAD
    assert cal.flags()["dead_units"] == [[1, 2]]
    with pytest.raises(CalibrationError):
        calibrate_unit(cfg, None, 1, 2)
    x = np.ones((8, 3))
    with pytest.raises(CalibrationError):
        execute_gemm(np.ones((3, 8)), x, plan_gemm(GemmShape(3, 8, 3), cfg), cfg, cal=cal)


def test_map_save_load(tmp_path):
    gen = np.random.default_rng(1)
    cal = calibrate_array(with_offsets(DeviceConfig(4, 5), gen.uniform(-1, 1, (4, 5))))
    path, sidecar = cal.save(tmp_path / "cal.opt1")
    back = CalibrationMap.load(path)
    np.testing.assert_allclose(back.phase_correction, cal.phase_correction, atol=1e-6)
    np.testing.assert_allclose(back.residual_report, cal.residual_report)
    sidecar.write_text("{}")
    with pytest.raises(FormatError):
        CalibrationMap.load(path)


def gemm_sigma(cfg, noise, cal, seed):
    gen = np.random.default_rng(seed)
    w, x = gen.uniform(-1, 1, (8, 64)), gen.uniform(-1, 1, (64, 64))
    _, rep = execute_gemm(w, x, plan_gemm(GemmShape(8, 64, 64), cfg), cfg, noise, cal, reference=True)
    return rep.error.std_relative


def test_calibration_improves_noisy_gemm():
    cfg0 = DeviceConfig(8, 8)
    noise = fit_noise_to_sigma(PRESETS["S1"], cfg0, 64, n_macs=4000)
    gen = np.random.default_rng(7)
    for trial in range(5):
        cfg = with_offsets(cfg0, gen.uniform(-math.pi / 4, math.pi / 4, (8, 8)))
        cal = calibrate_array(cfg, noise)
        assert gemm_sigma(cfg, noise, cal, trial) < gemm_sigma(cfg, noise, None, trial)


def test_calibration_never_degrades_small_offsets():
    # offsets up to pi/3 and an already-calibrated device
    cfg0 = DeviceConfig(8, 8)
    noise = fit_noise_to_sigma(PRESETS["S1"], cfg0, 64, n_macs=4000)
    gen = np.random.default_rng(9)
    for spread in (0.0, math.pi / 6, math.pi / 3):
        cfg = with_offsets(cfg0, gen.uniform(-spread, spread, (8, 8)))
        cal = calibrate_array(cfg, noise)
        assert gemm_sigma(cfg, noise, cal, 1) <= gemm_sigma(cfg, noise, None, 1) * 1.02
