from .attention import attention_model, stage_y_sampler, synthetic_operands
from .conv import im2col, lower_weight
from .inference import (
    InferenceReport,
    LayerSpec,
    load_model,
    run_inference,
    run_layers,
    save_model,
)
from .mnist import LabeledImages, load_mnist_idx, read_idx, write_idx

__all__ = [
    "InferenceReport",
    "LabeledImages",
    "LayerSpec",
    "attention_model",
    "im2col",
    "load_mnist_idx",
    "load_model",
    "lower_weight",
    "read_idx",
    "run_inference",
    "run_layers",
    "save_model",
    "stage_y_sampler",
    "synthetic_operands",
    "write_idx",
]
