"""Dense-matrix helpers, fixed-point quantization and error metrics.

Matrices are plain 2-D ``float64`` numpy arrays; :func:`as_matrix` is the
single gate that enforces the shape and finiteness rules device paths rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "QuantSpec",
    "ErrorStats",
    "as_matrix",
    "quantize",
    "quantize_array",
    "error_stats",
    "matmul_reference",
]


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array or raise."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class QuantSpec:
    """Uniform symmetric quantizer over ``[-full_scale, +full_scale]``.

    The grid is mid-tread with ``2**bits - 1`` levels (codes
    ``-(2**(bits-1) - 1) .. 2**(bits-1) - 1``), so zero and both rails are
    exact levels. Inputs beyond the rails saturate.
    """

    bits: int
    full_scale: float = 1.0

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 2:
            raise ValueError(f"bits must be an integer >= 2, got {self.bits}")
        if not (self.full_scale > 0 and math.isfinite(self.full_scale)):
            raise ValueError(f"full_scale must be positive, got {self.full_scale}")

    @property
    def max_code(self) -> int:
        return 2 ** (self.bits - 1) - 1

    @property
    def step(self) -> float:
        return self.full_scale / self.max_code

    @property
    def level_count(self) -> int:
        return 2 * self.max_code + 1

    def levels(self) -> np.ndarray:
        return np.arange(-self.max_code, self.max_code + 1) * self.step


def quantize_array(x, spec: QuantSpec | None) -> np.ndarray:
    """Vectorized :func:`quantize`. ``spec=None`` means an ideal converter."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot quantize non-finite values")
    if spec is None:
        return x.copy()
    codes = np.clip(np.rint(x / spec.step), -spec.max_code, spec.max_code)
    return codes * spec.step


def quantize(x: float, spec: QuantSpec | None) -> float:
    """Nearest level of ``spec``'s grid, saturating at the rails."""
    return float(quantize_array(x, spec))


@dataclass(frozen=True)
class ErrorStats:
    mean_abs_error: float
    std_relative: float
    effective_bits: float
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "mean_abs_error": self.mean_abs_error,
            "std_relative": self.std_relative,
            "effective_bits": self.effective_bits,
            "sample_count": self.sample_count,
        }


def effective_bits(std_relative: float) -> float:
    if std_relative < 0:
        raise ValueError("std_relative must be non-negative")
    return math.inf if std_relative == 0 else math.log2(1.0 / std_relative)


def error_stats(measured, truth, full_scale) -> ErrorStats:
    """Error deviation of ``measured`` against ``truth``.

    ``std_relative`` is the population standard deviation of
    ``(measured - truth) / full_scale``. ``full_scale`` may be a scalar or an
    array broadcastable to the operands (per-element output full scale).
    """
    measured = np.asarray(measured, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if measured.shape != truth.shape:
        raise ShapeError(f"shape mismatch: {measured.shape} vs {truth.shape}")
    fs = np.asarray(full_scale, dtype=np.float64)
    if np.any(fs <= 0) or not np.all(np.isfinite(fs)):
        raise ValueError("full_scale must be positive and finite")
    if measured.size < 2:
        raise ValueError("error_stats needs at least 2 samples")
    resid = measured - truth
    rel = np.broadcast_to(resid / fs, resid.shape)
    std = float(np.std(rel))
    return ErrorStats(
        mean_abs_error=float(np.mean(np.abs(resid))),
        std_relative=std,
        effective_bits=effective_bits(std),
        sample_count=int(resid.size),
    )


def matmul_reference(a, b) -> np.ndarray:
    """Digital ground-truth GEMM.

    Accumulates rank-1 updates in ascending inner index so the summation
    order is fixed and independent of any BLAS threading.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    for m in range(a.shape[1]):
        out += np.multiply.outer(a[:, m], b[m, :])
    return out
