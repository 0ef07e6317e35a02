"""Stochastic perturbations of pulse trains and readouts, and fitting them to a target error deviation.

All randomness is drawn from :mod:`homodyne_opu.rng` keyed by
``(seed, stream, ..., pass, symbol)``; a realization never depends on the
order in which units or passes are evaluated.
"""

from __future__ import annotations

import math
import threading
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import rng
from .device import DeviceConfig, PulseTrain, crossbar_pass
from .errors import NoiseFitError
from .numerics import ErrorStats, error_stats, matmul_reference

__all__ = [
    "NoiseModel",
    "NoiseRatios",
    "NoisePreset",
    "PRESETS",
    "PhaseDrift",
    "perturb_pulse_train",
    "perturb_readout",
    "measure_sigma",
    "fit_noise_to_sigma",
    "uniform_tiles",
]

# stream tags
_AMP, _JITTER, _DRIFT, _READOUT = 1, 2, 3, 4


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian noise knobs.

    amp_noise_rel: relative amplitude jitter per symbol.
    phase_jitter_std: i.i.d. per-symbol phase error (rad).
    phase_drift_step: per-pass random-walk increment of each channel's phase (rad).
    shot_factor: charge-noise variance per unit of ``sum |A_w A_x|``.
    readout_noise_std: additive charge noise per readout.
    """

    amp_noise_rel: float = 0.0
    phase_jitter_std: float = 0.0
    phase_drift_step: float = 0.0
    shot_factor: float = 0.0
    readout_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("amp_noise_rel", "phase_jitter_std", "phase_drift_step", "shot_factor", "readout_noise_std"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite value >= 0, got {v}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def is_zero(self) -> bool:
        return not (
            self.amp_noise_rel or self.phase_jitter_std or self.phase_drift_step
            or self.shot_factor or self.readout_noise_std
        )

    def replace(self, **changes) -> NoiseModel:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    # vectorized draws, shape (len(channels), m) unless noted
    def amplitude_factors(self, channels, pass_id, m):
        if not self.amp_noise_rel:
            return np.ones((len(channels), m))
        eps = rng.normal(self.seed, _AMP, np.asarray(channels)[:, None], pass_id, np.arange(m)[None, :])
        # a modulator cannot transmit a negative field amplitude
        return np.maximum(1.0 + self.amp_noise_rel * eps, 0.0)

    def phase_jitter(self, channels, pass_id, m):
        if not self.phase_jitter_std:
            return np.zeros((len(channels), m))
        z = rng.normal(self.seed, _JITTER, np.asarray(channels)[:, None], pass_id, np.arange(m)[None, :])
        return self.phase_jitter_std * z

    def drift_increments(self, channels, passes, domain=0):
        z = rng.normal(self.seed, _DRIFT, domain, np.asarray(channels)[:, None], np.asarray(passes)[None, :])
        return self.phase_drift_step * z

    def drift_at(self, channels, pass_id, domain=0):
        """Accumulated drift of ``channels`` after pass ``pass_id`` (stateless, O(pass_id))."""
        if not self.phase_drift_step:
            return np.zeros(len(channels))
        return PhaseDrift(self, max(np.max(channels) + 1, 1), domain).at(channels, pass_id)

    def readout_noise(self, rows, cols, pass_id, mac_magnitude):
        mac_magnitude = np.asarray(mac_magnitude, dtype=np.float64)
        var = self.shot_factor * mac_magnitude + self.readout_noise_std**2
        z = rng.normal(self.seed, _READOUT, np.asarray(rows)[:, None], np.asarray(cols)[None, :], pass_id)
        return np.sqrt(var) * z


class PhaseDrift:
    """Per-channel random-walk phase, owned by one simulation context.

    The walk after pass ``p`` is the sum of keyed increments for passes
    ``origin..p`` (zero before ``origin``); ``domain`` separates independent walks (e.g. calibration
    sessions from workload runs). Prefix sums are cached in fixed-size blocks so the stored values
    do not depend on the order passes are requested in.
    """

    BLOCK = 256

    def __init__(self, model: NoiseModel, n_channels: int, domain: int = 0, origin: int = 0):
        self.model = model
        self.n_channels = int(n_channels)
        self.domain = domain
        self.origin = origin
        self._blocks: list[np.ndarray] = []
        self._lock = threading.Lock()

    def _extend_to(self, pass_id):
        with self._lock:
            while len(self._blocks) * self.BLOCK <= pass_id:
                b = len(self._blocks)
                passes = self.origin + np.arange(b * self.BLOCK, (b + 1) * self.BLOCK)
                inc = self.model.drift_increments(np.arange(self.n_channels), passes, self.domain)
                start = self._blocks[-1][:, -1:] if self._blocks else 0.0
                self._blocks.append(start + np.cumsum(inc, axis=1))

    def at(self, channels, pass_id) -> np.ndarray:
        channels = np.asarray(channels)
        if not self.model.phase_drift_step:
            return np.zeros(channels.shape[0])
        k = pass_id - self.origin
        if k < 0:
            raise ValueError(f"pass_id {pass_id} precedes the drift origin {self.origin}")
        self._extend_to(k)
        block = self._blocks[k // self.BLOCK]
        return block[channels, k % self.BLOCK]


def perturb_pulse_train(p: PulseTrain, channel_id: int, pass_id: int, model: NoiseModel,
                        drift: PhaseDrift | None = None) -> PulseTrain:
    """Noisy realization of ``p`` as emitted by modulator ``channel_id`` during ``pass_id``."""
    if model.is_zero:
        return p
    m = len(p)
    ch = np.array([channel_id])
    amps = p.amplitudes * model.amplitude_factors(ch, pass_id, m)[0]
    phase = p.phase_errors + model.phase_jitter(ch, pass_id, m)[0]
    if model.phase_drift_step:
        d = drift.at(ch, pass_id) if drift is not None else model.drift_at(ch, pass_id)
        phase = phase + d[0]
    return PulseTrain(amps, p.phase_bits, phase)


def perturb_readout(charge: float, mac_magnitude: float, unit_id, pass_id: int, model: NoiseModel) -> float:
    """Add shot and readout noise to one integrated charge."""
    if mac_magnitude < 0:
        raise ValueError("mac_magnitude must be >= 0")
    if model.is_zero:
        return charge
    r, c = unit_id
    return float(charge + model.readout_noise([r], [c], pass_id, [[mac_magnitude]])[0, 0])


@dataclass(frozen=True)
class NoisePreset:
    label: str
    target_sigma: float
    clock_rate: float | None = None

    def __post_init__(self):
        if not 0 < self.target_sigma < 0.1:
            raise ValueError("target_sigma must lie in (0, 0.1)")


PRESETS = {
    p.label: p
    for p in (
        NoisePreset("50GSa", 0.0119, 50e9),
        NoisePreset("100GSa", 0.0152, 100e9),
        NoisePreset("120GSa", 0.0226, 120e9),
        # packaged 8x8 system, 16 monitored units
        NoisePreset("S1", 0.0165, 2.4e9),
        # attention stage B (Y = Qr G)
        NoisePreset("stageB", 0.0053, None),
    )
}


@dataclass(frozen=True)
class NoiseRatios:
    """Std of each knob per unit of ``phase_jitter_std`` during a fit.

    The defaults give amplitude : phase : readout variances of 1 : 4 : 1.
    """

    amp: float = 0.5
    readout: float = 0.5
    shot: float = 0.0
    drift: float = 0.0

    def model(self, jitter, seed) -> NoiseModel:
        return NoiseModel(
            amp_noise_rel=self.amp * jitter,
            phase_jitter_std=jitter,
            phase_drift_step=self.drift * jitter,
            shot_factor=(self.shot * jitter) ** 2,
            readout_noise_std=self.readout * jitter,
            seed=seed,
        )


def uniform_tiles(gen: np.random.Generator, rows, m, cols):
    """Default MAC workload: i.i.d. uniform operands on [-1, 1]."""
    return gen.uniform(-1, 1, (rows, m)), gen.uniform(-1, 1, (m, cols))


def _max_abs_scale(a):
    s = float(np.max(np.abs(a)))
    return a / s if s > 0 else a


def measure_sigma(cfg: DeviceConfig, model: NoiseModel | None, m: int, n_macs: int = 10_000,
                  data_seed: int = 0, sampler=uniform_tiles, pass_base: int = 0) -> ErrorStats:
    """Error deviation of length-``m`` MACs on ``cfg`` under ``model``.

    Runs full-array passes on sampled tiles, each tile scaled by its max-abs
    value as the compiler does, and normalizes errors by the pass full scale
    ``m``.
    """
    gen = np.random.default_rng(data_seed)
    per_pass = cfg.rows * cfg.cols
    n_passes = -(-n_macs // per_pass)
    drift = PhaseDrift(model, cfg.n_channels) if model is not None and model.phase_drift_step else None
    measured, truth = [], []
    for i in range(n_passes):
        w, x = sampler(gen, cfg.rows, m, cfg.cols)
        w, x = _max_abs_scale(w), _max_abs_scale(x)
        block = crossbar_pass(w, x, cfg, model, pass_base + i, drift=drift)
        measured.append(block.values())
        truth.append(matmul_reference(w, x))
    return error_stats(np.concatenate(measured), np.concatenate(truth), float(m))


def fit_noise_to_sigma(preset: NoisePreset | float, cfg: DeviceConfig, m: int, *, n_macs: int = 10_000,
                       seed: int = 0, data_seed: int = 12345, ratios: NoiseRatios = NoiseRatios(),
                       sampler=uniform_tiles, rel_tol: float = 2e-3, max_jitter: float = 2.0) -> NoiseModel:
    """Bisect ``phase_jitter_std`` (other knobs tied by ``ratios``) to hit a target deviation.

    The same data and noise keys are reused at every step, so the measured
    deviation is a smooth function of the knob. Raises
    :class:`NoiseFitError` when the target sits below the noiseless
    (quantization) floor or above what ``max_jitter`` reaches.
    """
    target = preset.target_sigma if isinstance(preset, NoisePreset) else float(preset)
    if not target > 0:
        raise ValueError("target sigma must be positive")

    def sigma(jitter):
        return measure_sigma(cfg, ratios.model(jitter, seed), m, n_macs, data_seed, sampler).std_relative

    floor = sigma(0.0)
    if floor >= target:
        raise NoiseFitError(
            f"target sigma {target:.4g} is at or below the noiseless floor {floor:.4g} of this device", floor
        )
    lo, hi = 0.0, 0.05
    s_hi = sigma(hi)
    while s_hi < target:
        lo, hi = hi, hi * 2
        if hi > max_jitter:
            raise NoiseFitError(f"target sigma {target:.4g} exceeds the reachable {s_hi:.4g}", s_hi)
        s_hi = sigma(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        s = sigma(mid)
        if abs(s - target) <= rel_tol * target:
            return ratios.model(mid, seed)
        if s < target:
            lo = mid
        else:
            hi = mid
    return ratios.model(0.5 * (lo + hi), seed)
