"""Per-unit phase and gain calibration.

Each unit is driven with full-amplitude, phase-aligned pulse trains while a
phase shifter in front of its detector is stepped over one period. The
setting with the largest differential charge is refined by a parabola through
it and its two neighbours; the integrator gain is then trimmed so the unit
reads the nominal ``M`` at that setting (``M`` scaled by the mean jitter
loss when the device is noisy).

Calibration reads the integrated charge directly (the detector monitor path)
rather than through the computing ADC, whose resolution is far coarser than
the curvature of the response near its peak.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorio
from .device import DeviceConfig, crossbar_pass
from .errors import CalibrationError, FormatError
from .noise import NoiseModel, PhaseDrift

__all__ = ["CalibrationMap", "calibrate_unit", "calibrate_array", "wrap_phase", "DEAD"]

DEAD = -1.0
"""``residual_report`` sentinel for units declared dead."""

CAL_PASS_BASE = 1 << 40
_CAL_DRIFT_DOMAIN = 1


def wrap_phase(x):
    """Wrap angles into [-pi, pi)."""
    return (np.asarray(x) + math.pi) % (2 * math.pi) - math.pi


@dataclass(frozen=True, eq=False)
class CalibrationMap:
    """Per-unit corrections.

    ``residual_report`` holds the post-calibration phase-alignment gain
    ``cos(offset + correction)`` of each unit, computed against the device's
    true offsets, or :data:`DEAD` for units that were not fitted.
    """

    phase_correction: np.ndarray
    gain_correction: np.ndarray
    residual_report: np.ndarray
    sweep_steps: int = 0
    repeats: int = 0

    @classmethod
    def identity(cls, rows, cols):
        return cls(np.zeros((rows, cols)), np.ones((rows, cols)), np.ones((rows, cols)))

    @property
    def shape(self):
        return self.phase_correction.shape

    @property
    def dead(self) -> np.ndarray:
        return self.residual_report == DEAD

    def corrected_config(self, cfg: DeviceConfig) -> DeviceConfig:
        """Fold the corrections into the device maps (a calibrated device)."""
        if self.shape != (cfg.rows, cfg.cols):
            raise CalibrationError(f"map shape {self.shape} does not match device {(cfg.rows, cfg.cols)}")
        return cfg.replace(
            unit_phase_offset=wrap_phase(cfg.unit_phase_offset + self.phase_correction),
            unit_gain=np.clip(cfg.unit_gain * self.gain_correction, 1e-12, 2.0),
        )

    def flags(self) -> dict:
        dead = np.argwhere(self.dead)
        live = self.residual_report[~self.dead]
        return {
            "rows": self.shape[0],
            "cols": self.shape[1],
            "sweep_steps": self.sweep_steps,
            "repeats": self.repeats,
            "dead_units": [[int(r), int(c)] for r, c in dead],
            "min_residual_gain": float(live.min()) if live.size else None,
        }

    def save(self, path) -> tuple[Path, Path]:
        """Write ``<path>`` (OPT1, planes: phase, gain) and ``<path>.json`` (flags)."""
        path = Path(path)
        tensorio.save(path, np.stack([self.phase_correction, self.gain_correction]))
        sidecar = path.with_name(path.name + ".json")
        flags = self.flags()
        flags["residual_report"] = self.residual_report.tolist()
        sidecar.write_text(json.dumps(flags, indent=1))
        return path, sidecar

    @classmethod
    def load(cls, path) -> CalibrationMap:
        path = Path(path)
        planes = tensorio.load(path)
        if planes.ndim != 3 or planes.shape[0] != 2:
            raise FormatError(f"{path}: calibration tensor must have shape (2, rows, cols), got {planes.shape}")
        sidecar = path.with_name(path.name + ".json")
        try:
            flags = json.loads(sidecar.read_text())
            residual = np.asarray(flags["residual_report"], dtype=np.float64)
        except (OSError, ValueError, KeyError) as exc:
            raise FormatError(f"cannot read calibration sidecar {sidecar}: {exc}") from exc
        if residual.shape != planes.shape[1:]:
            raise FormatError(f"{sidecar}: residual_report shape mismatch")
        return cls(planes[0], planes[1], residual, flags.get("sweep_steps", 0), flags.get("repeats", 0))


def _jitter_gain(noise):
    """Mean response factor of a unit under per-symbol phase jitter on both channels."""
    return 1.0 if noise is None else math.exp(-noise.phase_jitter_std**2)


def _averaged_charge(cfg, noise, block, m, passes, drift, **kw):
    r0, c0, r, c = block
    ones_w, ones_x = np.ones((r, m)), np.ones((m, c))
    acc = np.zeros((r, c))
    for pid in passes:
        acc += crossbar_pass(ones_w, ones_x, cfg, noise, pid, drift=drift, unit_origin=(r0, c0), **kw).raw_charge
    return acc / len(passes)


def _calibrate_block(cfg, noise, block, sweep_steps, repeats, length, dead_threshold, pass_base):
    if sweep_steps < 8:
        raise ValueError("sweep_steps must be >= 8")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    r0, c0, r, c = block
    m = length or cfg.max_integration_len
    if noise is not None and noise.is_zero:
        noise = None
    reps = repeats if noise is not None else 1
    drift = None
    if noise is not None and noise.phase_drift_step:
        drift = PhaseDrift(noise, cfg.n_channels, _CAL_DRIFT_DOMAIN, origin=pass_base)

    h = 2 * math.pi / sweep_steps
    sweep = np.empty((sweep_steps, r, c))
    shift = np.zeros((cfg.rows, cfg.cols))
    for i in range(sweep_steps):
        shift[r0:r0 + r, c0:c0 + c] = i * h
        passes = range(pass_base + i * reps, pass_base + (i + 1) * reps)
        sweep[i] = _averaged_charge(cfg, noise, block, m, passes, drift, phase_shift=shift)

    best = np.argmax(sweep, axis=0)
    peak = np.take_along_axis(sweep, best[None], axis=0)[0]
    y_prev = np.take_along_axis(sweep, ((best - 1) % sweep_steps)[None], axis=0)[0]
    y_next = np.take_along_axis(sweep, ((best + 1) % sweep_steps)[None], axis=0)[0]
    curvature = y_prev - 2 * peak + y_next
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(curvature < 0, 0.5 * (y_prev - y_next) / curvature, 0.0)
    theta = wrap_phase((best + np.clip(frac, -0.5, 0.5)) * h)
    dead = peak < dead_threshold * m

    shift[r0:r0 + r, c0:c0 + c] = theta
    base = pass_base + sweep_steps * reps
    measured = _averaged_charge(cfg, noise, block, m, range(base, base + reps), drift, phase_shift=shift)
    # Trim toward the nominal noisy response: jitter shrinks every unit by the
    # same E[cos(phi_w + phi_x)], which is a property of the noise, not the unit.
    nominal = m * _jitter_gain(noise)
    with np.errstate(divide="ignore"):
        gain = np.where(dead | (measured <= 0), 1.0, nominal / measured)

    true_offset = cfg.unit_phase_offset[r0:r0 + r, c0:c0 + c]
    residual = np.where(dead, DEAD, np.cos(wrap_phase(true_offset + theta)))
    return np.where(dead, 0.0, theta), gain, residual


def calibrate_unit(cfg: DeviceConfig, noise: NoiseModel | None, row: int, col: int, sweep_steps: int = 64,
                   repeats: int = 16, length: int | None = None, dead_threshold: float = 0.01,
                   pass_base: int = CAL_PASS_BASE) -> tuple[float, float]:
    """Calibrate one unit; returns ``(phase_correction, gain_correction)``.

    Raises :class:`CalibrationError` when the unit's peak response is below
    ``dead_threshold`` of the ideal reading.
    """
    if not (0 <= row < cfg.rows and 0 <= col < cfg.cols):
        raise IndexError(f"unit ({row}, {col}) is outside the array")
    theta, gain, residual = _calibrate_block(
        cfg, noise, (row, col, 1, 1), sweep_steps, repeats, length, dead_threshold, pass_base
    )
    if residual[0, 0] == DEAD:
        raise CalibrationError(f"unit ({row}, {col}) is dead: no usable differential photocurrent")
    return float(theta[0, 0]), float(gain[0, 0])


def calibrate_array(cfg: DeviceConfig, noise: NoiseModel | None = None, sweep_steps: int = 64,
                    repeats: int = 16, length: int | None = None, dead_threshold: float = 0.01,
                    pass_base: int = CAL_PASS_BASE) -> CalibrationMap:
    """Calibrate every unit of the array.

    All units sweep their phase shifters together, one crossbar pass per
    sweep point and repeat. ``repeats`` readings are averaged per point when
    noise is present.
    """
    theta, gain, residual = _calibrate_block(
        cfg, noise, (0, 0, cfg.rows, cfg.cols), sweep_steps, repeats, length, dead_threshold, pass_base
    )
    return CalibrationMap(theta, gain, residual, sweep_steps, repeats)
