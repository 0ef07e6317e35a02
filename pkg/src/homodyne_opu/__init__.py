"""Desk-scale simulator of a homodyne photonic tensor processor.

The device model encodes signed vectors as amplitude/phase pulse trains,
multiplies them by homodyne interference and integrates the products as
charge. The compiler tiles arbitrary GEMMs onto the crossbar.
"""

from .calibration import CalibrationMap, calibrate_array, calibrate_unit
from .compiler import GemmPlan, GemmShape, RunReport, TileTask, estimate_passes, execute_gemm, plan_gemm
from .config import ExperimentConfig
from .device import (
    DeviceConfig,
    PulseTrain,
    ReadoutBlock,
    adc_readout,
    crossbar_pass,
    decode_vector,
    encode_vector,
    homodyne_accumulate,
)
from .errors import (
    CalibrationError,
    ConfigError,
    DomainError,
    FormatError,
    NoiseFitError,
    OpuError,
    RangeError,
    SaturationError,
    ShapeError,
)
from .noise import (
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
from .numerics import ErrorStats, QuantSpec, effective_bits, error_stats, matmul_reference, quantize
from .perf import EnergyBudget, EnergyItem, PerfEstimate, efficiency, energy_total, estimate, throughput

__version__ = "0.1.0"
