import math

import numpy as np
import pytest

from homodyne_opu.device import DeviceConfig, crossbar_pass, encode_vector
from homodyne_opu.errors import NoiseFitError
from homodyne_opu.noise import (
    PRESETS,
    NoiseModel,
    NoisePreset,
    NoiseRatios,
    PhaseDrift,
    fit_noise_to_sigma,
    measure_sigma,
    perturb_pulse_train,
    perturb_readout,
)
from homodyne_opu.numerics import QuantSpec


def test_zero_model_is_identity():
    p = encode_vector(np.linspace(-1, 1, 9), None)
    nm = NoiseModel()
    assert nm.is_zero
    assert perturb_pulse_train(p, 3, 10, nm) is p
    assert perturb_readout(1.25, 4.0, (0, 0), 7, nm) == 1.25


def test_amplitude_jitter_statistics():
    nm = NoiseModel(amp_noise_rel=0.01, seed=11)
    f = nm.amplitude_factors(np.arange(10), 0, 10_000)
    assert 0.0097 <= np.std(f - 1) <= 0.0103
    assert abs(np.mean(f - 1)) < 3 * 0.01 / math.sqrt(f.size)


def test_amplitude_factors_never_negative():
    f = NoiseModel(amp_noise_rel=2.0, seed=1).amplitude_factors(np.arange(4), 0, 1000)
    assert f.min() >= 0


def test_phase_jitter_statistics():
    z = NoiseModel(phase_jitter_std=0.2, seed=3).phase_jitter(np.arange(10), 5, 10_000)
    assert abs(np.std(z) - 0.2) < 0.004


def test_drift_random_walk_variance():
    step, passes = 0.01, 400
    nm = NoiseModel(phase_drift_step=step, seed=2)
    drift = PhaseDrift(nm, 2000)
    # walk after `passes` increments, one channel per independent sample
    d = drift.at(np.arange(2000), passes - 1)
    assert abs(np.var(d) / (passes * step**2) - 1) < 0.1


def test_drift_independent_of_request_order():
    nm = NoiseModel(phase_drift_step=0.05, seed=9)
    a = PhaseDrift(nm, 6)
    b = PhaseDrift(nm, 6)
    late = a.at(np.arange(6), 700)
    b.at(np.arange(6), 3)
    np.testing.assert_array_equal(b.at(np.arange(6), 700), late)
    np.testing.assert_array_equal(nm.drift_at(np.arange(6), 700), late)


def test_drift_origin_keys_absolute_pass():
    nm = NoiseModel(phase_drift_step=0.05, seed=9)
    from_zero = nm.drift_increments(np.arange(3), np.arange(100, 110))
    walk = PhaseDrift(nm, 3, origin=100)
    np.testing.assert_allclose(walk.at(np.arange(3), 109), from_zero.sum(axis=1))
    with pytest.raises(ValueError):
        walk.at([0], 99)


def test_shot_noise_variance():
    nm = NoiseModel(shot_factor=0.04, seed=4)
    z = nm.readout_noise(np.arange(100), np.arange(1000), 0, np.full((100, 1000), 2.5))
    assert abs(np.var(z) / (0.04 * 2.5) - 1) < 0.05


def test_readout_noise_on_zero_signal():
    nm = NoiseModel(readout_noise_std=0.1, seed=4)
    z = nm.readout_noise(np.arange(300), np.arange(300), 0, np.zeros((300, 300)))
    assert abs(np.std(z) - 0.1) < 0.002
    assert perturb_readout(0.0, 0.0, (1, 2), 0, nm) == z[1, 2]
    with pytest.raises(ValueError):
        perturb_readout(0.0, -1.0, (0, 0), 0, nm)


def test_perturb_pulse_train_matches_crossbar_draws():
    nm = NoiseModel(0.05, 0.1, 0.0, 0.0, 0.0, seed=8)
    p = encode_vector(np.full(16, 0.5), None)
    q = perturb_pulse_train(p, 2, 41, nm)
    np.testing.assert_allclose(q.amplitudes, 0.5 * nm.amplitude_factors([2], 41, 16)[0])
    np.testing.assert_allclose(q.phase_errors, nm.phase_jitter([2], 41, 16)[0])


def test_channel_sharing_correlates_units_on_a_row():
    # units on one row share the weight channel's noise; different rows do not
    cfg = DeviceConfig.ideal(2, 2, max_integration_len=64)
    nm = NoiseModel(amp_noise_rel=0.1, seed=1)
    w, x = np.ones((2, 64)), np.ones((64, 2))
    errs = np.array([crossbar_pass(w, x, cfg, nm, p).raw_charge - 64 for p in range(400)])
    same_row = np.corrcoef(errs[:, 0, 0], errs[:, 0, 1])[0, 1]
    diff_both = np.corrcoef(errs[:, 0, 0], errs[:, 1, 1])[0, 1]
    assert same_row > 0.3
    assert abs(diff_both) < 0.15


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseModel(amp_noise_rel=-0.1)
    with pytest.raises(ValueError):
        NoiseModel(readout_noise_std=float("nan"))
    with pytest.raises(ValueError):
        NoisePreset("x", 0.2)


def test_preset_table():
    assert {k: p.target_sigma for k, p in PRESETS.items()} == {
        "50GSa": 0.0119, "100GSa": 0.0152, "120GSa": 0.0226, "S1": 0.0165, "stageB": 0.0053}


def test_sigma_monotone_in_jitter():
    cfg = DeviceConfig(8, 8)
    sig = [measure_sigma(cfg, NoiseRatios().model(j, 0), 64, 2000).std_relative for j in (0.0, 0.1, 0.2, 0.4, 0.8)]
    assert all(a < b for a, b in zip(sig, sig[1:]))


@pytest.mark.parametrize("label,m,lo,hi", [("100GSa", 64, 0.0137, 0.0167), ("S1", 100, 0.0149, 0.0182)])
def test_fit_hits_target_on_held_out_data(label, m, lo, hi):
    cfg = DeviceConfig(8, 8, max_integration_len=m)
    nm = fit_noise_to_sigma(PRESETS[label], cfg, m)
    held_out = measure_sigma(cfg, nm, m, 10_000, data_seed=777, pass_base=1 << 20)
    assert lo <= held_out.std_relative <= hi


def test_fit_below_quantization_floor_reports_floor():
    coarse = DeviceConfig(8, 8, adc=QuantSpec(3))
    with pytest.raises(NoiseFitError) as exc:
        fit_noise_to_sigma(0.001, coarse, 64, n_macs=2000)
    assert exc.value.floor > 0.001
    assert measure_sigma(DeviceConfig.ideal(8, 8), None, 64, 1000).std_relative < 1e-12
