# coding: utf-8

# # A first GEMM on the simulated array
#
# The simulator models a crossbar of homodyne multiply-accumulate units. Each
# row of W and each column of X is encoded as a pulse train on its own
# channel, every unit integrates the product of one row and one column, and
# an ADC reads out the accumulated charge.
#
# Here we run a small matrix product, first on an ideal device and then on
# the default one with 8-bit converters.

# In[1]:

import numpy as np

from homodyne_opu import DeviceConfig, GemmShape, execute_gemm, plan_gemm

gen = np.random.default_rng(0)
w = gen.uniform(-1, 1, (20, 150))
x = gen.uniform(-1, 1, (150, 12))


# The device is 8x8 with integration windows of up to 64 symbols. Bigger
# problems are tiled: 20 rows need 3 row tiles, 12 columns need 2 column
# tiles and 150 symbols need 3 chunks.

# In[2]:

cfg = DeviceConfig.ideal(8, 8, max_integration_len=64)
plan = plan_gemm(GemmShape(20, 150, 12), cfg)
print(plan.pass_count)          # 3 * 2 * 3 = 18
print(plan.tasks[0])


# With no quantization and no noise the result is the reference product up to
# float rounding.

# In[3]:

y, report = execute_gemm(w, x, plan, cfg, reference=True)
print(np.abs(y - w @ x).max())
print(report.error)


# ## Quantized converters
#
# The default device has 8-bit DAC and ADC. Each pass is scaled by the max-abs
# of its operand blocks, so the ADC never clips, and the compiler returns a
# per-element error bound alongside the result.

# In[4]:

cfg8 = DeviceConfig(8, 8)
y8, rep8 = execute_gemm(w, x, plan_gemm(GemmShape(20, 150, 12), cfg8), cfg8, reference=True)
err = np.abs(y8 - w @ x)
print(f"max error {err.max():.4f}, worst error/bound {np.max(err / rep8.error_bound):.2f}")
print(f"deviation {rep8.error.std_relative:.3%} of full scale, {rep8.error.effective_bits:.1f} effective bits")


# Zero blocks cost nothing: a pass whose W or X block is all zeros is
# skipped.

# In[5]:

w_sparse = w.copy()
w_sparse[8:16] = 0
_, rep = execute_gemm(w_sparse, x, plan_gemm(GemmShape(20, 150, 12), cfg8), cfg8)
print(rep.executed_passes, rep.skipped_passes)
