"""IDX (MNIST) dataset files.

Image files start with the big-endian magic ``0x00000803`` followed by
count, rows and cols; label files with ``0x00000801`` and a count. Payloads
are unsigned bytes. Gzip-compressed files are detected and read transparently.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class LabeledImages:
    images: np.ndarray  # (count, rows, cols), values in [0, 1]
    labels: np.ndarray  # (count,), ints 0..9

    def __len__(self):
        return self.labels.shape[0]

    def flat(self) -> np.ndarray:
        """Feature-major matrix (rows*cols, count), one column per image."""
        return self.images.reshape(len(self), -1).T

    def head(self, n) -> LabeledImages:
        return LabeledImages(self.images[:n], self.labels[:n])


def _read_bytes(path) -> bytes:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (OSError, EOFError) as exc:
            raise FormatError(f"{path}: corrupt gzip stream: {exc}") from exc
    return data


def read_idx(path) -> np.ndarray:
    """Raw uint8 array of an IDX image (3-D) or label (1-D) file."""
    data = _read_bytes(path)
    if len(data) < 8:
        raise FormatError(f"{path}: too short for an IDX header")
    magic, count = struct.unpack(">II", data[:8])
    if magic == IMAGES_MAGIC:
        if len(data) < 16:
            raise FormatError(f"{path}: truncated image header")
        rows, cols = struct.unpack(">II", data[8:16])
        shape, offset = (count, rows, cols), 16
    elif magic == LABELS_MAGIC:
        shape, offset = (count,), 8
    else:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    size = int(np.prod(shape))
    if len(data) - offset != size:
        raise FormatError(f"{path}: payload has {len(data) - offset} bytes, header declares {size}")
    return np.frombuffer(data, dtype=np.uint8, offset=offset).reshape(shape)


def write_idx(path, array, compress=None) -> None:
    """Write a uint8 array as an IDX image (3-D) or label (1-D) file."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        raise ValueError("IDX payload must be uint8")
    if a.ndim == 3:
        header = struct.pack(">IIII", IMAGES_MAGIC, *a.shape)
    elif a.ndim == 1:
        header = struct.pack(">II", LABELS_MAGIC, a.shape[0])
    else:
        raise ValueError("IDX writer supports 3-D images or 1-D labels")
    data = header + a.tobytes()
    if compress is None:
        compress = str(path).endswith(".gz")
    Path(path).write_bytes(gzip.compress(data, mtime=0) if compress else data)


def load_mnist_idx(images_path, labels_path) -> LabeledImages:
    """Load an image/label IDX pair, scaling pixels to [0, 1]."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim != 3:
        raise FormatError(f"{images_path}: not an image file")
    if labels.ndim != 1:
        raise FormatError(f"{labels_path}: not a label file")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"image count {images.shape[0]} != label count {labels.shape[0]}")
    if labels.size and labels.max() > 9:
        raise FormatError(f"{labels_path}: labels outside 0..9")
    return LabeledImages(images.astype(np.float64) / 255.0, labels.astype(np.int64))
