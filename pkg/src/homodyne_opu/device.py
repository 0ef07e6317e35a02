"""Single-pass model of the homodyne crossbar.

A pass drives ``rows`` weight modulators and ``cols`` input modulators with
``M``-symbol pulse trains. Every crossing interferes one weight train with one
input train on a balanced detector; the differential photocurrent of symbol
``m`` is ``A_w * A_x * sin(dtheta)`` and a charge integrator sums it over the
pass. Signed operands are carried as a non-negative amplitude plus a binary
phase (0 or pi), so sign flips come out of the interference itself.

The crossbar operates at quadrature: with zero phase error ``dtheta = pi/2``,
so ``sin(pi/2 + e) = cos(e)`` and residual phase error shows up as a gain loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .errors import DomainError, RangeError, ShapeError
from .numerics import QuantSpec, as_matrix, quantize_array

if TYPE_CHECKING:
    from .noise import NoiseModel, PhaseDrift

__all__ = [
    "DeviceConfig",
    "PulseTrain",
    "HomodyneReadout",
    "ReadoutBlock",
    "encode_vector",
    "decode_vector",
    "homodyne_accumulate",
    "adc_readout",
    "crossbar_pass",
    "weight_channels",
    "input_channels",
]


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DeviceConfig:
    """Crossbar geometry, converters and per-unit non-idealities.

    ``dac``/``adc`` of ``None`` model ideal (unquantized) converters. Both
    quantizers work on normalized quantities: DAC inputs are amplitudes in
    [0, 1], ADC inputs are charges divided by the pass full scale.
    """

    rows: int
    cols: int
    clock_rate: float = 20e9
    dac: QuantSpec | None = field(default_factory=lambda: QuantSpec(8))
    adc: QuantSpec | None = field(default_factory=lambda: QuantSpec(8))
    max_integration_len: int = 64
    unit_gain: np.ndarray | None = None
    unit_phase_offset: np.ndarray | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if self.max_integration_len < 1:
            raise ValueError("max_integration_len must be >= 1")
        if not self.clock_rate > 0:
            raise ValueError("clock_rate must be positive")
        shape = (self.rows, self.cols)
        gain = np.ones(shape) if self.unit_gain is None else np.asarray(self.unit_gain, float)
        phase = np.zeros(shape) if self.unit_phase_offset is None else np.asarray(self.unit_phase_offset, float)
        if gain.shape != shape or phase.shape != shape:
            raise ShapeError(f"unit maps must have shape {shape}")
        if not np.all((gain > 0) & (gain <= 2)):
            raise ValueError("unit_gain entries must lie in (0, 2]")
        if not np.all((phase >= -math.pi) & (phase < math.pi)):
            raise ValueError("unit_phase_offset entries must lie in [-pi, pi)")
        object.__setattr__(self, "unit_gain", _frozen(gain))
        object.__setattr__(self, "unit_phase_offset", _frozen(phase))

    @classmethod
    def ideal(cls, rows, cols, max_integration_len=64, clock_rate=20e9):
        """Unquantized, perfectly calibrated device."""
        return cls(rows, cols, clock_rate, None, None, max_integration_len)

    def replace(self, **changes) -> DeviceConfig:
        return replace(self, **changes)

    @property
    def n_channels(self) -> int:
        return self.rows + self.cols

    def to_dict(self) -> dict:
        def q(spec):
            return None if spec is None else {"bits": spec.bits, "full_scale": spec.full_scale}

        return {
            "rows": self.rows,
            "cols": self.cols,
            "clock_rate": self.clock_rate,
            "dac": q(self.dac),
            "adc": q(self.adc),
            "max_integration_len": self.max_integration_len,
            "unit_gain_mean": float(self.unit_gain.mean()),
            "unit_phase_offset_rms": float(np.sqrt(np.mean(self.unit_phase_offset**2))),
        }


def weight_channels(rows) -> np.ndarray:
    """Modulator ids of the weight (row) channels."""
    return np.arange(rows)


def input_channels(cfg: DeviceConfig, cols) -> np.ndarray:
    """Modulator ids of the input (column) channels; they follow the row channels."""
    return cfg.rows + np.arange(cols)


@dataclass(frozen=True, eq=False)
class PulseTrain:
    amplitudes: np.ndarray
    phase_bits: np.ndarray
    phase_errors: np.ndarray

    def __post_init__(self):
        a, p, e = (np.asarray(v, dtype=np.float64) for v in (self.amplitudes, self.phase_bits, self.phase_errors))
        if not (a.ndim == p.ndim == e.ndim == 1 and a.shape == p.shape == e.shape):
            raise ShapeError("pulse train sequences must be 1-D with equal length")
        if np.any(a < 0):
            raise RangeError("pulse amplitudes must be non-negative")
        if not np.all((p == 0) | (p == math.pi)):
            raise ValueError("phase bits must be 0 or pi")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "phase_bits", p)
        object.__setattr__(self, "phase_errors", e)

    def __len__(self):
        return self.amplitudes.shape[0]

    @property
    def signs(self) -> np.ndarray:
        return np.where(self.phase_bits == 0, 1.0, -1.0)


def _encode(values, dac, scale):
    """Amplitudes and signs for an array of values (any shape)."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise DomainError("cannot encode non-finite values")
    mag = np.abs(v) / scale
    if np.any(mag > 1.0):
        raise RangeError(f"|v|/scale reaches {mag.max():.6g} > 1; rescale before encoding")
    return quantize_array(mag, dac), np.where(v >= 0, 1.0, -1.0)


def encode_vector(v, dac: QuantSpec | None, scale: float = 1.0) -> PulseTrain:
    """Map a signed vector onto a pulse train (amplitude + sign phase)."""
    amps, signs = _encode(v, dac, scale)
    if amps.ndim != 1:
        raise ShapeError("encode_vector expects a 1-D sequence")
    return PulseTrain(amps, np.where(signs > 0, 0.0, math.pi), np.zeros_like(amps))


def decode_vector(p: PulseTrain, scale: float = 1.0) -> np.ndarray:
    return scale * p.amplitudes * p.signs


def homodyne_accumulate(w: PulseTrain, x: PulseTrain, gain=1.0, phase_offset=0.0, max_integration_len=None) -> float:
    """Integrated differential charge of one homodyne unit."""
    if len(w) != len(x):
        raise ShapeError(f"pulse train lengths differ: {len(w)} vs {len(x)}")
    if max_integration_len is not None and len(w) > max_integration_len:
        raise RangeError(f"integration length {len(w)} exceeds limit {max_integration_len}")
    s = w.signs * x.signs
    dtheta = math.pi / 2 + phase_offset + w.phase_errors + x.phase_errors
    return float(gain * np.sum(s * w.amplitudes * x.amplitudes * np.sin(dtheta)))


@dataclass(frozen=True)
class HomodyneReadout:
    raw_charge: float
    adc_code: float
    saturated: bool


def adc_readout(raw_charge: float, adc: QuantSpec | None, output_scale: float) -> HomodyneReadout:
    """Quantize one integrated charge against the full scale ``output_scale``."""
    if not output_scale > 0:
        raise ValueError("output_scale must be positive")
    if not math.isfinite(raw_charge):
        raise DomainError("raw charge is not finite")
    x = raw_charge / output_scale
    return HomodyneReadout(float(raw_charge), float(quantize_array(x, adc)), bool(abs(x) > 1.0))


@dataclass(frozen=True, eq=False)
class ReadoutBlock:
    """Readouts of a ``rows x cols`` block of units, stored as parallel arrays.

    ``adc_code`` is normalized to the pass full scale ``output_scale``;
    ``mac_magnitude`` is ``sum_m |A_w A_x|`` per unit (the shot-noise driver).
    """

    raw_charge: np.ndarray
    adc_code: np.ndarray
    saturated: np.ndarray
    output_scale: float
    mac_magnitude: np.ndarray

    @property
    def shape(self):
        return self.raw_charge.shape

    def __getitem__(self, idx) -> HomodyneReadout:
        r, c = idx
        return HomodyneReadout(float(self.raw_charge[r, c]), float(self.adc_code[r, c]), bool(self.saturated[r, c]))

    def values(self) -> np.ndarray:
        """ADC codes rescaled back to charge units."""
        return self.adc_code * self.output_scale


def crossbar_pass(
    w_tile,
    x_tile,
    cfg: DeviceConfig,
    noise: NoiseModel | None = None,
    pass_id: int = 0,
    *,
    drift: PhaseDrift | None = None,
    phase_correction=None,
    gain_correction=None,
    phase_shift=None,
    output_scale: float | None = None,
    unit_origin=(0, 0),
) -> ReadoutBlock:
    """Evaluate one pass: ``w_tile`` (r x M) against ``x_tile`` (M x c).

    Tiles occupy the ``r x c`` units starting at ``unit_origin`` (top-left by
    default) and must already be scaled into [-1, 1]. Each of the ``r + c`` operand vectors is encoded and
    perturbed once, then shared by every unit on its row/column.

    ``phase_correction`` and ``phase_shift`` (full-array maps or scalars) add
    to the unit phase offsets;
    ``gain_correction`` trims the integrator gain ahead of the ADC.
    ``output_scale`` is the ADC full scale in charge units (default ``M``).
    """
    w_tile = as_matrix(w_tile, "w_tile")
    x_tile = as_matrix(x_tile, "x_tile")
    r, m = w_tile.shape
    if x_tile.shape[0] != m:
        raise ShapeError(f"tile inner dimensions differ: {w_tile.shape} x {x_tile.shape}")
    c = x_tile.shape[1]
    r0, c0 = unit_origin
    if r0 < 0 or c0 < 0 or r0 + r > cfg.rows or c0 + c > cfg.cols:
        raise ShapeError(f"tile {r}x{c} at {unit_origin} exceeds the {cfg.rows}x{cfg.cols} array")
    units = (slice(r0, r0 + r), slice(c0, c0 + c))
    full = (cfg.rows, cfg.cols)
    if m > cfg.max_integration_len:
        raise RangeError(f"integration length {m} exceeds limit {cfg.max_integration_len}")

    a_w, s_w = _encode(w_tile, cfg.dac, 1.0)
    a_x, s_x = _encode(x_tile.T, cfg.dac, 1.0)

    noisy = noise is not None and not noise.is_zero
    phi_w = phi_x = None
    if noisy:
        ch_w = r0 + weight_channels(r)
        ch_x = input_channels(cfg, c) + c0
        a_w = a_w * noise.amplitude_factors(ch_w, pass_id, m)
        a_x = a_x * noise.amplitude_factors(ch_x, pass_id, m)
        if noise.phase_jitter_std > 0 or noise.phase_drift_step > 0:
            phi_w = noise.phase_jitter(ch_w, pass_id, m)
            phi_x = noise.phase_jitter(ch_x, pass_id, m)
            if noise.phase_drift_step > 0:
                if drift is None:
                    phi_w = phi_w + noise.drift_at(ch_w, pass_id)[:, None]
                    phi_x = phi_x + noise.drift_at(ch_x, pass_id)[:, None]
                else:
                    phi_w = phi_w + drift.at(ch_w, pass_id)[:, None]
                    phi_x = phi_x + drift.at(ch_x, pass_id)[:, None]

    offset = cfg.unit_phase_offset[units]
    if phase_correction is not None:
        offset = offset + np.broadcast_to(phase_correction, full)[units]
    if phase_shift is not None:
        offset = offset + np.broadcast_to(phase_shift, full)[units]

    p_w = s_w * a_w
    p_x = s_x * a_x
    if phi_w is None:
        charge = np.cos(offset) * (p_w @ p_x.T)
    else:
        cw, sw = p_w * np.cos(phi_w), p_w * np.sin(phi_w)
        cx, sx = p_x * np.cos(phi_x), p_x * np.sin(phi_x)
        in_phase = cw @ cx.T - sw @ sx.T
        quadrature = sw @ cx.T + cw @ sx.T
        charge = np.cos(offset) * in_phase - np.sin(offset) * quadrature
    charge = charge * cfg.unit_gain[units]

    mac_mag = np.abs(a_w) @ np.abs(a_x).T
    if noisy and (noise.shot_factor > 0 or noise.readout_noise_std > 0):
        charge = charge + noise.readout_noise(r0 + np.arange(r), c0 + np.arange(c), pass_id, mac_mag)
    if gain_correction is not None:
        charge = charge * np.broadcast_to(gain_correction, full)[units]

    scale = float(m) if output_scale is None else float(output_scale)
    if not scale > 0:
        raise ValueError("output_scale must be positive")
    normalized = charge / scale
    return ReadoutBlock(
        raw_charge=charge,
        adc_code=quantize_array(normalized, cfg.adc),
        saturated=np.abs(normalized) > 1.0,
        output_scale=scale,
        mac_magnitude=mac_mag,
    )
