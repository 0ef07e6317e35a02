"""Layer-by-layer inference with every GEMM routed digitally or through the simulated OPU.

Activations are feature-major matrices (features x batch), so a layer over a
whole batch is one GEMM. Bias, activations and softmax always stay digital.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import tensorio
from ..calibration import CalibrationMap
from ..compiler import GemmShape, execute_gemm, plan_gemm
from ..device import DeviceConfig
from ..errors import FormatError, ShapeError
from ..noise import NoiseModel
from ..numerics import ErrorStats, matmul_reference
from .conv import conv_output_size, im2col
from .mnist import LabeledImages

KINDS = ("linear", "conv2d", "attention_stage")
ACTIVATIONS = ("none", "relu", "softmax")
MANIFEST_FORMAT = "homodyne-opu-model/1"
_LAYER_PASS_STRIDE = 1 << 32


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """One GEMM layer.

    ``weight`` is the left GEMM operand (out x in); conv kernels are stored
    lowered to (O, C*kh*kw). ``dims`` carries kind-specific geometry:
    conv2d needs ``in_channels``, ``height``, ``width``, ``kernel``
    ([kh, kw]), ``stride`` and ``padding``; attention_stage needs ``stage``
    (``"G"`` for ``G = Kr^T V`` or ``"Y"`` for ``Y = Qr G``).
    """

    kind: str
    weight: np.ndarray
    activation: str = "none"
    bias: np.ndarray | None = None
    dims: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError(f"layer {self.name!r}: weight must be 2-D")
        object.__setattr__(self, "weight", w)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
            if b.shape[0] != w.shape[0]:
                raise ShapeError(f"layer {self.name!r}: bias length {b.shape[0]} != {w.shape[0]} outputs")
            object.__setattr__(self, "bias", b)
        if self.kind == "conv2d":
            d = self.dims
            missing = {"in_channels", "height", "width", "kernel", "stride", "padding"} - set(d)
            if missing:
                raise ValueError(f"conv2d layer {self.name!r} missing dims {sorted(missing)}")
            kh, kw = d["kernel"]
            if w.shape[1] != d["in_channels"] * kh * kw:
                raise ShapeError(f"conv2d layer {self.name!r}: weight has {w.shape[1]} columns, "
                                 f"expected {d['in_channels'] * kh * kw}")
        if self.kind == "attention_stage" and self.dims.get("stage") not in ("G", "Y"):
            raise ValueError("attention_stage needs dims['stage'] in {'G', 'Y'}")

    @property
    def input_size(self) -> int:
        if self.kind == "conv2d":
            return self.dims["in_channels"] * self.dims["height"] * self.dims["width"]
        return self.weight.shape[1]

    def conv_out_hw(self):
        d = self.dims
        kh, kw = d["kernel"]
        return (conv_output_size(d["height"], kh, d["stride"], d["padding"]),
                conv_output_size(d["width"], kw, d["stride"], d["padding"]))

    @property
    def output_size(self) -> int:
        if self.kind == "conv2d":
            oh, ow = self.conv_out_hw()
            return self.weight.shape[0] * oh * ow
        return self.weight.shape[0]

    def lower(self, acts):
        """GEMM right operand for ``acts`` and the map from GEMM output back to activations."""
        if self.kind != "conv2d":
            return acts, lambda y: y
        d = self.dims
        n = acts.shape[1]
        c, h, w = d["in_channels"], d["height"], d["width"]
        images = acts.T.reshape(n, c, h, w)
        cols = np.concatenate([im2col(img, d["kernel"], d["stride"], d["padding"]) for img in images], axis=1)
        o = self.weight.shape[0]
        p = cols.shape[1] // n

        def finish(y):
            return y.reshape(o, n, p).transpose(0, 2, 1).reshape(o * p, n)

        return cols, finish

    def add_bias(self, y):
        if self.bias is None:
            return y
        if self.kind == "conv2d":
            oh, ow = self.conv_out_hw()
            return y + np.repeat(self.bias, oh * ow)[:, None]
        return y + self.bias[:, None]


def activate(kind, y):
    if kind == "relu":
        return np.maximum(y, 0.0)
    if kind == "softmax":
        e = np.exp(y - y.max(axis=0, keepdims=True))
        return e / e.sum(axis=0, keepdims=True)
    return y


def check_chain(model, n_features):
    size = n_features
    for i, layer in enumerate(model):
        if layer.input_size != size:
            raise ShapeError(f"layer {i} ({layer.name or layer.kind}) expects {layer.input_size} inputs, gets {size}")
        size = layer.output_size
    return size


@dataclass(eq=False)
class LayerTrace:
    logits: np.ndarray      # pre-activation output
    output: np.ndarray      # post-activation output
    error: ErrorStats | None = None
    error_bound: np.ndarray | None = None


def run_layers(model, acts, mode="digital", cfg: DeviceConfig | None = None, noise: NoiseModel | None = None,
               cal: CalibrationMap | None = None, workers=1) -> list[LayerTrace]:
    """Run ``acts`` (features x batch) through ``model``; one trace per layer.

    In optical mode each trace's ``error`` compares the OPU GEMM with the
    digital GEMM of the same (optical) inputs.
    """
    if mode not in ("digital", "optical"):
        raise ValueError(f"mode must be 'digital' or 'optical', got {mode!r}")
    if mode == "optical" and cfg is None:
        raise ValueError("optical mode needs a device config")
    acts = np.asarray(acts, dtype=np.float64)
    check_chain(model, acts.shape[0])
    traces = []
    for i, layer in enumerate(model):
        x, finish = layer.lower(acts)
        if mode == "digital":
            y, err, bound = matmul_reference(layer.weight, x), None, None
        else:
            plan = plan_gemm(GemmShape(layer.weight.shape[0], x.shape[0], x.shape[1]), cfg)
            y, rep = execute_gemm(layer.weight, x, plan, cfg, noise, cal, reference=True, workers=workers,
                                  pass_offset=i * _LAYER_PASS_STRIDE)
            err, bound = rep.error, finish(rep.error_bound)
        logits = layer.add_bias(finish(y))
        acts = activate(layer.activation, logits)
        traces.append(LayerTrace(logits, acts, err, bound))
    return traces


def logit_error_bound(model, traces) -> np.ndarray:
    """Bound on |optical - digital| pre-activation outputs of the last layer (noiseless device).

    Input errors propagate through ``|W|``; relu is 1-Lipschitz. A softmax
    on a hidden layer makes the bound infinite.
    """
    err = None
    for layer, tr in zip(model, traces):
        if err is None:
            err = tr.error_bound.copy()
        else:
            x, finish = layer.lower(err)
            err = finish(matmul_reference(np.abs(layer.weight), x)) + tr.error_bound
        if layer is not model[-1] and layer.activation == "softmax":
            err = np.full_like(err, np.inf)
    return err


def margin_safe(logits, bound) -> np.ndarray:
    """Samples whose digital top-1 cannot change under per-logit errors ``bound``."""
    top = np.argmax(logits, axis=0)
    cols = np.arange(logits.shape[1])
    gap = logits[top, cols][None, :] - logits
    slack = bound[top, cols][None, :] + bound
    gap[top, cols] = np.inf
    return np.all(gap > slack, axis=0)


@dataclass(eq=False)
class InferenceReport:
    digital_accuracy: float | None
    optical_accuracy: float | None
    per_layer_error: list[ErrorStats]
    sample_count: int
    digital_predictions: np.ndarray | None = field(default=None, repr=False)
    optical_predictions: np.ndarray | None = field(default=None, repr=False)
    margin_safe_count: int | None = None
    margin_safe_agree: int | None = None

    def to_dict(self) -> dict:
        return {
            "digital_accuracy": self.digital_accuracy,
            "optical_accuracy": self.optical_accuracy,
            "per_layer_error": [e.to_dict() for e in self.per_layer_error],
            "sample_count": self.sample_count,
            "margin_safe_count": self.margin_safe_count,
            "margin_safe_agree": self.margin_safe_agree,
        }


def run_inference(model, data, cfg: DeviceConfig | None = None, noise: NoiseModel | None = None,
                  cal: CalibrationMap | None = None, mode="both", workers=1) -> InferenceReport:
    """Classify ``data`` (a :class:`LabeledImages` or ``(features x batch, labels)``).

    ``mode`` is ``"digital"``, ``"optical"`` or ``"both"``. With a
    noiseless device and ``mode="both"`` the report also counts the samples
    whose digital margin exceeds the analytic quantization bound
    (``margin_safe_count``) and how many of them kept their prediction.
    """
    if mode not in ("digital", "optical", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    if isinstance(data, LabeledImages):
        acts, labels = data.flat(), data.labels
    else:
        acts, labels = data
    acts = np.asarray(acts, dtype=np.float64)
    labels = np.asarray(labels)
    if acts.shape[1] != labels.shape[0]:
        raise ShapeError(f"{acts.shape[1]} samples but {labels.shape[0]} labels")

    rep = InferenceReport(None, None, [], int(labels.shape[0]))
    if mode in ("digital", "both"):
        dig = run_layers(model, acts, "digital")
        rep.digital_predictions = np.argmax(dig[-1].logits, axis=0)
        rep.digital_accuracy = float(np.mean(rep.digital_predictions == labels))
    if mode in ("optical", "both"):
        opt = run_layers(model, acts, "optical", cfg, noise, cal, workers)
        rep.optical_predictions = np.argmax(opt[-1].logits, axis=0)
        rep.optical_accuracy = float(np.mean(rep.optical_predictions == labels))
        rep.per_layer_error = [t.error for t in opt if t.error is not None]
        if mode == "both" and (noise is None or noise.is_zero):
            safe = margin_safe(dig[-1].logits, logit_error_bound(model, opt))
            rep.margin_safe_count = int(safe.sum())
            rep.margin_safe_agree = int(np.sum(rep.optical_predictions[safe] == rep.digital_predictions[safe]))
    return rep


def save_model(directory, model, name="model") -> Path:
    """Write ``model`` as OPT1 tensors plus a JSON manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, layer in enumerate(model):
        stem = layer.name or f"layer{i}"
        entry = {"name": layer.name, "kind": layer.kind, "activation": layer.activation,
                 "dims": layer.dims, "weight": f"{stem}.weight.opt1", "bias": None}
        tensorio.save(directory / entry["weight"], layer.weight)
        if layer.bias is not None:
            entry["bias"] = f"{stem}.bias.opt1"
            tensorio.save(directory / entry["bias"], layer.bias)
        entries.append(entry)
    manifest = directory / f"{name}.json"
    manifest.write_text(json.dumps({"format": MANIFEST_FORMAT, "layers": entries}, indent=1))
    return manifest


def load_model(manifest_path) -> list[LayerSpec]:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text())
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read model manifest {manifest_path}: {exc}") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{manifest_path}: unsupported manifest format {doc.get('format')!r}")
    layers = []
    for entry in doc["layers"]:
        weight = tensorio.load(manifest_path.parent / entry["weight"])
        bias = tensorio.load(manifest_path.parent / entry["bias"]) if entry.get("bias") else None
        try:
            layers.append(LayerSpec(entry["kind"], weight, entry.get("activation", "none"), bias,
                                    entry.get("dims", {}), entry.get("name", "")))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{manifest_path}: bad layer entry {entry.get('name')!r}: {exc}") from exc
    return layers
