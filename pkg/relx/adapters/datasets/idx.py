"""IDX image/label files (the MNIST distribution format)."""

import logging
import struct
from pathlib import Path
from typing import BinaryIO, Optional

import numpy as np

from ...core.errors import DimensionMismatchError, ModelFormatError
from ...core.models import LabeledDataset

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 2051  # 0x00000803: unsigned bytes, 3 dimensions
IDX_LABEL_MAGIC = 2049  # 0x00000801: unsigned bytes, 1 dimension


def read_be32(f: BinaryIO) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise ModelFormatError("truncated IDX header")
    (value,) = struct.unpack(">l", data)
    return value


def read_idx(path: str | Path, magic: int) -> np.ndarray:
    """Raw uint8 array from an IDX file whose header carries `magic`.

    Big-endian i32 magic, one i32 per dimension, then the bytes row-wise.
    """
    with open(path, "rb") as f:
        found = read_be32(f)
        if found != magic:
            raise ModelFormatError(f"magic number mismatch in {path}: {found}, expected {magic}")
        ndim = magic & 0xFF
        shape = tuple(read_be32(f) for _ in range(ndim))
        payload = f.read()
    expected = int(np.prod(shape))
    if len(payload) != expected:
        raise ModelFormatError(f"{path}: header promises {expected} bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(shape)


def load_idx_dataset(
    images_path: str | Path, labels_path: str | Path, k: Optional[int] = None
) -> LabeledDataset:
    """Flattened images scaled to [0, 1] with one-hot labels."""
    images = read_idx(images_path, IDX_IMAGE_MAGIC)
    labels = read_idx(labels_path, IDX_LABEL_MAGIC).astype(int)
    if images.shape[0] != labels.shape[0]:
        raise DimensionMismatchError("label count", images.shape[0], labels.shape[0])
    k = int(labels.max()) + 1 if k is None and labels.size else (k or 1)
    if labels.size and labels.max() >= k:
        raise ModelFormatError(f"label {labels.max()} outside 0..{k - 1}")

    inputs = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    targets = np.zeros((labels.shape[0], k))
    targets[np.arange(labels.shape[0]), labels] = 1.0
    logger.info(f"Loaded {inputs.shape[0]} IDX images of width {inputs.shape[1]}")
    return LabeledDataset(inputs=inputs, targets=targets, source="file")
