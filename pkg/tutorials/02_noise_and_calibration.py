# coding: utf-8

# # Noise presets and phase calibration

# In[1]:

import math

import numpy as np

from homodyne_opu import DeviceConfig, GemmShape, execute_gemm, plan_gemm
from homodyne_opu.calibration import calibrate_array, wrap_phase
from homodyne_opu.noise import PRESETS, NoiseRatios, fit_noise_to_sigma, measure_sigma

# Noise is behavioral. Five knobs (amplitude jitter, phase jitter, phase
# drift, shot noise, readout noise) are tied together by fixed ratios and a
# single phase-jitter value is bisected until length-M MACs show the wanted
# error deviation. The presets name the measured deviations we fit to.

# In[2]:

for label, preset in PRESETS.items():
    print(f"{label:>7}  {preset.target_sigma:.2%}")


# In[3]:

cfg = DeviceConfig(8, 8, max_integration_len=64)
for label in ("50GSa", "100GSa", "120GSa"):
    model = fit_noise_to_sigma(PRESETS[label], cfg, 64)
    # measure on data the fit never saw
    held = measure_sigma(cfg, model, 64, 10_000, data_seed=99, pass_base=1 << 24)
    print(f"{label}: jitter {model.phase_jitter_std:.3f} rad -> {held.std_relative:.3%} ({held.effective_bits:.2f} bits)")


# Deviation grows with jitter, starting from the 8-bit quantization floor.

# In[4]:

for jitter in (0.0, 0.1, 0.2, 0.4):
    s = measure_sigma(cfg, NoiseRatios().model(jitter, 0), 64, 4000).std_relative
    print(f"jitter {jitter:.1f}: {s:.3%}")


# ## Calibration
#
# Each unit has an unknown phase offset between its two channels, which
# shrinks its response by cos(offset). Calibration sweeps a phase shifter
# over a full turn on every unit at once, takes the peak with a parabolic
# refinement, and then trims the gain.

# In[5]:

gen = np.random.default_rng(1)
offsets = gen.uniform(-math.pi / 2, math.pi / 2, (8, 8))
skewed = cfg.replace(unit_phase_offset=wrap_phase(offsets))

cal = calibrate_array(skewed)
print("worst residual gain", cal.residual_report.min())
print("correction + offset", np.abs(wrap_phase(cal.phase_correction + offsets)).max())


# Under noise the sweep averages repeated readings per point. The payoff
# shows on a GEMM: same data, same noise draws, with and without the map.

# In[6]:

noise = fit_noise_to_sigma(PRESETS["S1"], cfg, 64)
noisy_cal = calibrate_array(skewed, noise)

w, x = gen.uniform(-1, 1, (8, 64)), gen.uniform(-1, 1, (64, 64))
plan = plan_gemm(GemmShape(8, 64, 64), skewed)
for name, m in (("raw", None), ("calibrated", noisy_cal)):
    _, rep = execute_gemm(w, x, plan, skewed, noise, m, reference=True)
    print(f"{name:>10}: {rep.error.std_relative:.3%}")


# Maps are saved as OPT1 tensors with a JSON sidecar that carries the
# residual report and dead-unit flags.

# In[7]:

import tempfile
from pathlib import Path

with tempfile.TemporaryDirectory() as tmp:
    path, sidecar = noisy_cal.save(Path(tmp) / "cal.opt1")
    print(sorted(p.name for p in Path(tmp).iterdir()))
