"""Bundled datasets and pretrained models."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .workloads.inference import load_model
from .workloads.mnist import LabeledImages, load_mnist_idx


def data_dir() -> Path:
    return Path(str(resources.files("homodyne_opu") / "data"))


def mnist_test() -> LabeledImages:
    """1,000 MNIST test images (100 per digit) held out from the fixture models' training."""
    d = data_dir()
    return load_mnist_idx(d / "mnist-test-images.idx.gz", d / "mnist-test-labels.idx.gz")


def model_manifest(name="mnist_mlp") -> Path:
    return data_dir() / name / f"{name}.json"


def load_fixture_model(name="mnist_mlp"):
    """``mnist_mlp`` (784-64-10) or ``mnist_conv`` (8 5x5/2 kernels, then linear)."""
    return load_model(model_manifest(name))
