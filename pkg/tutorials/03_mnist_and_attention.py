# coding: utf-8

# # Workloads: MNIST inference and attention stages
#
# Models are chains of layers. Each layer is one GEMM (dense layers directly,
# convolutions after im2col lowering) followed by an activation applied
# digitally.

# In[1]:

from pathlib import Path

import numpy as np

from homodyne_opu import DeviceConfig, GemmShape, estimate_passes
from homodyne_opu.config import ExperimentConfig
from homodyne_opu.fixtures import load_fixture_model, mnist_test
from homodyne_opu.workloads import attention_model, im2col, run_inference, run_layers, synthetic_operands

data = mnist_test().head(300)
mlp = load_fixture_model("mnist_mlp")
conv = load_fixture_model("mnist_conv")
print(len(data), [layer.kind for layer in mlp], [layer.kind for layer in conv])


# The packaged-system config: 8x8 array, 100-symbol windows, 14-bit readout,
# noise fitted to a 1.65% deviation. Fitting happens when the model is asked
# for.

# In[2]:

exp = ExperimentConfig.load(Path(__file__).resolve().parents[1] / "configs" / "packaged_8x8.toml")
cfg = exp.device_config(seed=0)
noise = exp.noise_model(cfg, seed=0)
print(noise)


# In[3]:

rep = run_inference(mlp, data, cfg, noise, mode="both")
print(f"digital {rep.digital_accuracy:.3f}  optical {rep.optical_accuracy:.3f}")
for i, e in enumerate(rep.per_layer_error):
    print(f"  layer {i}: deviation {e.std_relative:.3%}")


# Without noise only quantization is left. A sample is margin-safe when its
# digital top-two logit gap exceeds twice the analytic bound on logit
# error; those predictions cannot flip.

# In[4]:

clean = run_inference(mlp, data, cfg, None, mode="both")
print(f"{clean.margin_safe_agree}/{clean.margin_safe_count} margin-safe predictions kept")


# The conv fixture goes through the same path. im2col turns each image into a
# (C*kh*kw, positions) matrix so the kernel becomes a plain GEMM operand.
# Unlike the MLP it was trained without noise injection, and it shows: at
# the same 1.65% deviation it loses far more accuracy.

# In[5]:

patches = im2col(data.images[0][None], 5, stride=2)
print(patches.shape)
print(run_inference(conv, data, cfg, noise, mode="both").to_dict()["optical_accuracy"])


# ## Attention stages
#
# Two GEMMs: G = Kr^T V (128x64 by 64x64) and Y = Qr G (64x128 by 128x64).
# On an 8x8 array with 128-symbol windows they take 128 and 64 passes.

# In[6]:

dev = DeviceConfig(8, 8, max_integration_len=128)
print(estimate_passes(GemmShape(128, 64, 64), dev), estimate_passes(GemmShape(64, 128, 64), dev))

kr_t, v, qr = synthetic_operands(seed=3)
traces = run_layers(attention_model(kr_t, qr), v, "optical", dev)
print([t.error.std_relative for t in traces])


# Those deviations are fractions of the worst-case full scale (128 * max|Qr| *
# max|G|, about 1000 here). Sums of 128 random-sign products are typically
# near 17, so the same 8-bit readout error is much larger relative to the
# outputs themselves:

# In[7]:

ref = qr @ (kr_t @ v)
print(np.linalg.norm(traces[-1].output - ref) / np.linalg.norm(ref))
