# coding: utf-8

# # Throughput and power

# In[1]:

from homodyne_opu.perf import (
    PRINTED_BUDGET_W,
    EnergyBudget,
    EnergyItem,
    energy_total,
    estimate,
    format_table,
    reference_budget,
    table_rows,
    throughput,
)

# Every unit does a multiply and an accumulate per symbol, so a 256x256 array
# at 20 GSa/s runs 2 * 256 * 256 * 20e9 operations per second.

# In[2]:

print(throughput(256, 256, 20e9) / 1e12, "TOPS")
print(throughput(256, 256, 120e9) / 1e12, "TOPS at 120 GSa/s")


# The published budget, recomputed from its unit costs. The driver line is
# 2 mW on each of 512 channels, 1.024 W against the printed 1 W.

# In[3]:

budget = reference_budget()
print(format_table(table_rows(budget, PRINTED_BUDGET_W), energy_total(budget), 8.0))


# In[4]:

est = estimate(256, 256, 20e9, budget)
print(f"{est.efficiency_tops_per_w:.1f} TOPS/W on the computed total")
print(f"{estimate(256, 256, 20e9, power_w=8.0).efficiency_tops_per_w:.2f} TOPS/W on the printed 8 W")


# Budgets are plain lists of items: a fixed power per instance or an energy
# per access at some rate. Scaling to the 8x8 packaged array, with a
# hypothetical 14-bit readout ADC added on top:

# In[5]:

small = reference_budget(8, 8, 2.4e9)
small = EnergyBudget(small.items + (EnergyItem("readout_adc_14b", energy_pj=2.0, rate=2.4e9, count=1),))
for name, watts in small.breakdown().items():
    print(f"{name:<24}{watts:.4f} W")
print(estimate(8, 8, 2.4e9, small))
