"""Experiment configuration files (TOML).

A config has up to five sections, all optional. Unknown sections or keys are
rejected. See ``configs/example.toml`` for every key with its default.

    [device]       geometry, converters, per-unit non-idealities
    [noise]        explicit knobs, or a preset fitted at load time
    [calibration]  sweep settings for the calibrate command
    [energy]       power budget for estimate-perf
    [run]          seed, sample counts, workers, output directory
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorio
from .device import DeviceConfig
from .errors import ConfigError, FormatError, NoiseFitError
from .noise import PRESETS, NoiseModel, NoiseRatios, fit_noise_to_sigma, uniform_tiles
from .numerics import QuantSpec
from .perf import EnergyBudget, EnergyItem, reference_budget

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

NOISE_KNOBS = ("amp_noise_rel", "phase_jitter_std", "phase_drift_step", "shot_factor", "readout_noise_std")

DEFAULTS = {
    "device": {
        "rows": 8,
        "cols": 8,
        "clock_rate": 20e9,
        "max_integration_len": 64,
        "dac": {"bits": 8, "full_scale": 1.0},
        "adc": {"bits": 8, "full_scale": 1.0},
        "gain_map": None,
        "phase_map": None,
        "gain_spread": 0.0,
        "phase_offset_spread": 0.0,
    },
    "noise": {
        "preset": None,
        "target_sigma": None,
        "fit_length": None,
        "fit_samples": 10_000,
        "sampler": "uniform",
        "ratios": {"amp": 0.5, "readout": 0.5, "shot": 0.0, "drift": 0.0},
        **{k: 0.0 for k in NOISE_KNOBS},
    },
    "calibration": {"sweep_steps": 64, "repeats": 16, "length": None, "dead_threshold": 0.01},
    "energy": {"budget": "reference", "items": []},
    "run": {"seed": 0, "samples": 1000, "workers": 1, "out": "out", "model": "mnist_mlp"},
}

_ITEM_KEYS = {"name", "power_mw", "energy_pj", "rate", "count"}


def _samplers():
    from .workloads.attention import stage_y_sampler

    return {"uniform": uniform_tiles, "stage_y": stage_y_sampler}


def _merge(defaults: dict, given: dict, where: str) -> dict:
    out = {}
    for key in given:
        if key not in defaults:
            raise ConfigError(f"unknown key '{where}{key}'")
    for key, default in defaults.items():
        value = given.get(key, default)
        if isinstance(default, dict) and key in given:
            if not isinstance(value, dict):
                if key in ("dac", "adc") and value == "ideal":
                    out[key] = "ideal"
                    continue
                raise ConfigError(f"{where}{key} must be a table")
            value = _merge(default, value, f"{where}{key}.")
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    """Resolved config sections. ``source`` is the file it came from, if any."""

    device: dict
    noise: dict
    calibration: dict
    energy: dict
    run: dict
    source: Path | None = None

    @classmethod
    def from_dict(cls, data: dict, source=None) -> ExperimentConfig:
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown section(s) {sorted(unknown)}; expected {sorted(DEFAULTS)}")
        sections = {}
        for name, defaults in DEFAULTS.items():
            given = data.get(name, {})
            if not isinstance(given, dict):
                raise ConfigError(f"[{name}] must be a table")
            sections[name] = _merge(defaults, given, f"{name}.")
        cfg = cls(**sections, source=None if source is None else Path(source))
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
        return cls.from_dict(data, source=path)

    def _validate(self):
        n = self.noise
        if n["preset"] is not None and n["target_sigma"] is not None:
            raise ConfigError("noise: give preset or target_sigma, not both")
        fitted = n["preset"] is not None or n["target_sigma"] is not None
        if n["preset"] is not None and n["preset"] != "noiseless" and n["preset"] not in PRESETS:
            raise ConfigError(f"noise.preset {n['preset']!r} unknown; choose from {['noiseless', *PRESETS]}")
        if fitted and any(n[k] for k in NOISE_KNOBS):
            raise ConfigError("noise: explicit knobs cannot be combined with a preset or target_sigma")
        if n["sampler"] not in ("uniform", "stage_y"):
            raise ConfigError(f"noise.sampler must be 'uniform' or 'stage_y', got {n['sampler']!r}")
        for item in self.energy["items"]:
            if not isinstance(item, dict) or not set(item) <= _ITEM_KEYS or "name" not in item:
                raise ConfigError(f"energy item {item!r}: keys must be a subset of {sorted(_ITEM_KEYS)} incl. name")
        if self.energy["budget"] not in ("reference", "none"):
            raise ConfigError("energy.budget must be 'reference' or 'none'")
        if self.run["workers"] < 1:
            raise ConfigError("run.workers must be >= 1")
        try:
            self.device_config(0)
            self.energy_budget()
        except (ConfigError, FormatError):
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def _path(self, p) -> Path:
        p = Path(p)
        if not p.is_absolute() and self.source is not None:
            p = self.source.parent / p
        return p

    def device_config(self, seed: int) -> DeviceConfig:
        d = self.device

        def q(spec):
            if spec == "ideal":
                return None
            try:
                return QuantSpec(int(spec["bits"]), float(spec["full_scale"]))
            except ValueError as exc:
                raise ConfigError(f"device converter: {exc}") from exc

        rows, cols = int(d["rows"]), int(d["cols"])
        gen = np.random.default_rng([seed, 0xDE7])
        gain = phase = None
        if d["gain_map"] is not None:
            gain = tensorio.load(self._path(d["gain_map"]))
        elif d["gain_spread"]:
            gain = gen.uniform(1 - d["gain_spread"], 1 + d["gain_spread"], (rows, cols))
        if d["phase_map"] is not None:
            phase = tensorio.load(self._path(d["phase_map"]))
        elif d["phase_offset_spread"]:
            phase = gen.uniform(-d["phase_offset_spread"], d["phase_offset_spread"], (rows, cols))
        try:
            return DeviceConfig(rows, cols, float(d["clock_rate"]), q(d["dac"]), q(d["adc"]),
                                int(d["max_integration_len"]), gain, phase)
        except ValueError as exc:
            raise ConfigError(f"[device] {exc}") from exc

    def noise_model(self, device: DeviceConfig, seed: int) -> NoiseModel | None:
        """The noise model, fitting a preset or target on ``device`` when asked."""
        n = self.noise
        if n["preset"] == "noiseless":
            return None
        target = PRESETS[n["preset"]] if n["preset"] is not None else n["target_sigma"]
        if target is None:
            model = NoiseModel(**{k: float(n[k]) for k in NOISE_KNOBS}, seed=seed)
            return None if model.is_zero else model
        ratios = NoiseRatios(**n["ratios"])
        length = n["fit_length"] or device.max_integration_len
        try:
            return fit_noise_to_sigma(target, device, int(length), n_macs=int(n["fit_samples"]), seed=seed,
                                      ratios=ratios, sampler=_samplers()[n["sampler"]])
        except NoiseFitError as exc:
            raise ConfigError(f"noise fit failed: {exc}") from exc

    def energy_budget(self) -> EnergyBudget:
        d = self.device
        items = []
        if self.energy["budget"] == "reference":
            items.extend(reference_budget(int(d["rows"]), int(d["cols"]), float(d["clock_rate"])).items)
        for item in self.energy["items"]:
            items.append(EnergyItem(**item))
        return EnergyBudget(tuple(items))

    def to_dict(self) -> dict:
        """Effective config as given plus defaults (echoed into reports)."""
        return {
            "device": self.device,
            "noise": self.noise,
            "calibration": self.calibration,
            "energy": self.energy,
            "run": self.run,
        }
