"""Command-line entry point: ``homodyne-opu <command>`` or ``python -m homodyne_opu``.

Every command takes an optional TOML config plus ``--seed``, ``--out`` and
``--workers`` overrides, writes its outputs under the output directory and
appends a JSON-lines report there that embeds the effective config and seed.

Exit status: 0 ok, 2 config error, 3 file format error, 4 saturation,
1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import tensorio
from .calibration import CalibrationMap, calibrate_array
from .compiler import GemmShape, execute_gemm, plan_gemm
from .config import ExperimentConfig
from .errors import ConfigError, FormatError, OpuError, SaturationError
from .noise import PRESETS, measure_sigma
from .perf import (
    PRINTED_BUDGET_W,
    PUBLISHED_EFFICIENCY_TOPS_PER_W,
    PUBLISHED_TOTAL_W,
    estimate,
    format_table,
    table_rows,
)

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_FORMAT, EXIT_SATURATION = 0, 1, 2, 3, 4


class Session:
    """Resolved config, seed and output directory shared by one command."""

    def __init__(self, args, command):
        self.command = command
        self.config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
        run = self.config.run
        if args.seed is not None:
            run["seed"] = args.seed
        if args.out is not None:
            run["out"] = args.out
        if args.workers is not None:
            run["workers"] = args.workers
        self.seed = int(run["seed"])
        self.workers = int(run["workers"])
        self.out = Path(run["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.records: list[dict] = []
        self._device = None
        self._noise = "unset"

    @property
    def device(self):
        if self._device is None:
            self._device = self.config.device_config(self.seed)
        return self._device

    @property
    def noise(self):
        if self._noise == "unset":
            self._noise = self.config.noise_model(self.device, self.seed)
        return self._noise

    def header(self) -> dict:
        return {
            "record": "run",
            "command": self.command,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "device": self.device.to_dict(),
            "noise": self._noise_record(),
        }

    def _noise_record(self):
        if isinstance(self._noise, str):
            return "unused"
        return None if self._noise is None else self._noise.to_dict()

    def emit(self, record: dict):
        self.records.append(record)

    def finish(self) -> Path:
        path = self.out / f"{self.command}.jsonl"
        lines = [json.dumps(r, sort_keys=True) for r in [self.header(), *self.records]]
        path.write_text("\n".join(lines) + "\n")
        for line in lines[1:]:
            print(line)
        return path


def _load_calibration(path, sess):
    if path is None:
        return None
    cal = CalibrationMap.load(path)
    if cal.shape != (sess.device.rows, sess.device.cols):
        raise ConfigError(f"calibration map {cal.shape} does not match the configured device")
    return cal


def cmd_simulate_gemm(args) -> int:
    sess = Session(args, "simulate-gemm")
    w = tensorio.load(args.w)
    x = tensorio.load(args.x)
    if w.ndim != 2 or x.ndim != 2 or w.shape[1] != x.shape[0]:
        raise FormatError(f"operands must be 2-D with matching inner dimension, got {w.shape} and {x.shape}")
    cfg = sess.device
    plan = plan_gemm(GemmShape(w.shape[0], w.shape[1], x.shape[1]), cfg)
    y, report = execute_gemm(w, x, plan, cfg, sess.noise, _load_calibration(args.calibration, sess),
                             reference=args.reference, workers=sess.workers)
    y_path = sess.out / "Y.opt1"
    tensorio.save(y_path, y)
    rec = {"record": "gemm", "w": str(args.w), "x": str(args.x), "y": str(y_path), **report.to_dict()}
    sess.emit(rec)
    if args.plan:
        (sess.out / "plan.jsonl").write_text(plan.to_jsonl())
    sess.finish()
    return EXIT_OK


def cmd_characterize(args) -> int:
    sess = Session(args, "characterize")
    labels = [s.strip() for s in args.rates.split(",") if s.strip()]
    for label in labels:
        if label != "noiseless" and label not in PRESETS:
            raise ConfigError(f"unknown rate label {label!r}; choose from {['noiseless', *PRESETS]}")
    cfg = sess.device
    n = sess.config.noise
    length = int(n["fit_length"] or cfg.max_integration_len)
    samples = int(args.samples or sess.config.run["samples"])
    rows = []
    for label in labels:
        sub = ExperimentConfig.from_dict({**sess.config.to_dict(),
                                          "noise": {**n, "preset": label, "target_sigma": None}},
                                         source=sess.config.source)
        model = sub.noise_model(cfg, sess.seed)
        # measure on data the fit never saw
        stats = measure_sigma(cfg, model, length, samples, data_seed=sess.seed + 1)
        rows.append((label, stats.std_relative, stats.effective_bits))
        sess.emit({"record": "characterize", "rate": label, "length": length,
                   "noise": None if model is None else model.to_dict(), **stats.to_dict()})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rate", "sigma", "effective_bits"])
    for label, sigma, bits in rows:
        writer.writerow([label, f"{sigma:.6g}", f"{bits:.4f}"])
    (sess.out / "characterize.csv").write_text(buf.getvalue())
    sess.finish()
    return EXIT_OK


def cmd_calibrate(args) -> int:
    sess = Session(args, "calibrate")
    c = sess.config.calibration
    cal = calibrate_array(sess.device, sess.noise, sweep_steps=int(c["sweep_steps"]), repeats=int(c["repeats"]),
                          length=c["length"], dead_threshold=float(c["dead_threshold"]))
    path, sidecar = cal.save(sess.out / "calibration.opt1")
    live = ~cal.dead
    sess.emit({
        "record": "calibration",
        "map": str(path),
        "sidecar": str(sidecar),
        **cal.flags(),
        "max_abs_phase_correction": float(np.abs(cal.phase_correction[live]).max()) if live.any() else None,
        "gain_correction_range": [float(cal.gain_correction[live].min()), float(cal.gain_correction[live].max())]
        if live.any() else None,
    })
    sess.finish()
    return EXIT_OK


def cmd_infer(args) -> int:
    from .fixtures import load_fixture_model, mnist_test
    from .workloads import load_mnist_idx, load_model, run_inference

    sess = Session(args, "infer")
    model_ref = args.model or sess.config.run["model"]
    model = load_model(model_ref) if model_ref.endswith(".json") else load_fixture_model(model_ref)
    data = load_mnist_idx(args.images, args.labels) if args.images else mnist_test()
    samples = int(args.samples or sess.config.run["samples"])
    data = data.head(min(samples, len(data)))
    optical = args.mode != "digital"
    report = run_inference(model, data, sess.device if optical else None, sess.noise if optical else None,
                           _load_calibration(args.calibration, sess) if optical else None,
                           mode=args.mode, workers=sess.workers)
    sess.emit({"record": "inference", "model": model_ref, "mode": args.mode, **report.to_dict()})
    sess.finish()
    return EXIT_OK


def cmd_estimate_perf(args) -> int:
    sess = Session(args, "estimate-perf")
    d = sess.config.device
    budget = sess.config.energy_budget()
    est = estimate(int(d["rows"]), int(d["cols"]), float(d["clock_rate"]), budget)
    # published cells only apply to the published geometry and plain table budget
    published = (sess.config.energy["budget"] == "reference" and not sess.config.energy["items"]
                 and (int(d["rows"]), int(d["cols"]), float(d["clock_rate"])) == (256, 256, 20e9))
    rows = table_rows(budget, PRINTED_BUDGET_W if published else None)
    print(format_table(rows, est.power_w, PUBLISHED_TOTAL_W if published else None), file=sys.stderr)
    sess.emit({"record": "energy", "items": rows, "total_w": est.power_w})
    perf = {"record": "performance", **est.to_dict()}
    if published:
        perf.update(
            published_total_w=PUBLISHED_TOTAL_W,
            efficiency_at_published_total_tops_per_w=est.throughput_tops / PUBLISHED_TOTAL_W,
            published_efficiency_tops_per_w=PUBLISHED_EFFICIENCY_TOPS_PER_W,
            note="published 330 TOPS/W is throughput / 8 W (327.68) rounded up",
        )
    sess.emit(perf)
    sess.finish()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="homodyne-opu", description="Homodyne photonic tensor processor simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", "-c", help="TOML experiment config (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", help="override run.out (output directory)")
        p.add_argument("--workers", type=int, help="override run.workers")
        p.set_defaults(func=func)
        return p

    p = add("simulate-gemm", cmd_simulate_gemm, "run Y = W @ X on the simulated device")
    p.add_argument("w", help="W matrix, OPT1")
    p.add_argument("x", help="X matrix, OPT1")
    p.add_argument("--reference", action="store_true", help="compare against the digital reference")
    p.add_argument("--calibration", help="calibration map from the calibrate command")
    p.add_argument("--plan", action="store_true", help="also write the pass plan as plan.jsonl")

    p = add("characterize", cmd_characterize, "fit and measure error deviation per rate preset")
    p.add_argument("--rates", default="50GSa,100GSa,120GSa", help="comma-separated preset labels")
    p.add_argument("--samples", type=int, help="MACs measured per rate (default run.samples)")

    add("calibrate", cmd_calibrate, "calibrate every unit and write the correction map")

    p = add("infer", cmd_infer, "MNIST inference, digital and/or optical")
    p.add_argument("--mode", choices=("digital", "optical", "both"), default="both")
    p.add_argument("--model", help="fixture name or model manifest .json (default run.model)")
    p.add_argument("--images", help="IDX image file (default: bundled test split)")
    p.add_argument("--labels", help="IDX label file")
    p.add_argument("--samples", type=int, help="number of test images (default run.samples)")
    p.add_argument("--calibration", help="calibration map from the calibrate command")

    add("estimate-perf", cmd_estimate_perf, "throughput, power and efficiency from the energy budget")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "images", None) and not getattr(args, "labels", None):
        print("error: --images needs --labels", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except SaturationError as exc:
        print(f"saturation: {exc}", file=sys.stderr)
        return EXIT_SATURATION
    except (OpuError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
