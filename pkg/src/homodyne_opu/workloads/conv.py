"""Convolution lowering to GEMM."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def conv_output_size(size, kernel, stride, padding):
    out = (size + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ShapeError(f"kernel {kernel} does not fit input {size} with padding {padding}")
    return out


def im2col(x, kernel, stride=1, padding=0) -> np.ndarray:
    """Unroll patches of ``x`` (C, H, W) into a (C*kh*kw, out_h*out_w) matrix.

    Row order is channel-major then kernel row then kernel column, matching a
    weight tensor (O, C, kh, kw) reshaped to (O, C*kh*kw).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"im2col expects (C, H, W), got shape {x.shape}")
    kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
    if stride < 1 or padding < 0:
        raise ShapeError("stride must be >= 1 and padding >= 0")
    c, h, w = x.shape
    oh = conv_output_size(h, kh, stride, padding)
    ow = conv_output_size(w, kw, stride, padding)
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    cols = np.empty((c, kh, kw, oh, ow))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i:i + stride * oh:stride, j:j + stride * ow:stride]
    return cols.reshape(c * kh * kw, oh * ow)


def lower_weight(weight) -> np.ndarray:
    """(O, C, kh, kw) kernel -> (O, C*kh*kw) GEMM operand."""
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 4:
        raise ShapeError(f"conv weight must be (O, C, kh, kw), got {weight.shape}")
    return weight.reshape(weight.shape[0], -1)
