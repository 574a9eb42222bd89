"""IDX image/label codec for Fashion-MNIST style datasets.

Images::

    [offset] [type]          [value]
    0000     32 bit integer  0x00000803  magic, big-endian
    0004     32 bit integer  count
    0008     32 bit integer  rows
    0012     32 bit integer  cols
    0016     unsigned byte   pixels, row-major

Labels::

    0000     32 bit integer  0x00000801  magic, big-endian
    0004     32 bit integer  count
    0008     unsigned byte   labels
"""

import gzip
import logging
import os
import struct
from pathlib import Path
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from netsym.core.training import Dataset

logger = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
NUM_CLASSES = 10
DATA_DIR_ENV = "NETSYM_DATA_DIR"

FASHION_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    """Malformed IDX content."""


class IdxDataset(NamedTuple):
    """Images scaled to ``[0, 1]`` with shape ``(count, rows, cols)`` and byte labels."""

    images: np.ndarray
    labels: np.ndarray

    @property
    def features(self) -> np.ndarray:
        return self.images.reshape(len(self.images), -1)


def parse_idx(image_bytes: bytes, label_bytes: bytes) -> IdxDataset:
    """Decode an image file and a label file.

    Raises:
        IdxFormatError: On a bad magic number, a truncated file, differing image
            and label counts, or a label outside ``[0, 9]``.
    """
    if len(image_bytes) < 16 or len(label_bytes) < 8:
        raise IdxFormatError("truncated file")
    magic, count, rows, cols = struct.unpack(">IIII", image_bytes[:16])
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(f"bad magic: image file starts with 0x{magic:08x}")
    label_magic, label_count = struct.unpack(">II", label_bytes[:8])
    if label_magic != LABEL_MAGIC:
        raise IdxFormatError(f"bad magic: label file starts with 0x{label_magic:08x}")

    pixels = np.frombuffer(image_bytes, dtype=np.uint8, offset=16)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, offset=8)
    if len(pixels) < count * rows * cols or len(labels) < label_count:
        raise IdxFormatError("truncated file")
    if len(pixels) > count * rows * cols or len(labels) > label_count:
        raise IdxFormatError("unexpected trailing bytes")
    if count != label_count:
        raise IdxFormatError(f"count mismatch: {count} images, {label_count} labels")
    if np.any(labels >= NUM_CLASSES):
        raise IdxFormatError(f"label out of range: {int(labels.max())}")

    images = pixels.reshape(count, rows, cols).astype(np.float64) / 255.0
    return IdxDataset(images, labels.copy())


def write_idx(dataset: IdxDataset) -> Tuple[bytes, bytes]:
    """Encode ``dataset`` back to image and label file bytes; inverse of :func:`parse_idx`."""
    count, rows, cols = dataset.images.shape
    pixels = np.rint(dataset.images * 255.0).astype(np.uint8)
    image_bytes = struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols) + pixels.tobytes()
    label_bytes = struct.pack(">II", LABEL_MAGIC, len(dataset.labels)) + np.asarray(
        dataset.labels, dtype=np.uint8
    ).tobytes()
    return image_bytes, label_bytes


def _read(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise FileNotFoundError(
        f"{stem}[.gz] not found in {directory}; point data_dir or ${DATA_DIR_ENV} at the IDX files"
    )


def resolve_data_dir(directory: Optional[Union[str, Path]] = None) -> Path:
    """``directory`` if given, else ``$NETSYM_DATA_DIR``."""
    value = directory if directory is not None else os.environ.get(DATA_DIR_ENV)
    if not value:
        raise FileNotFoundError(f"no dataset directory: set data_dir or ${DATA_DIR_ENV}")
    return Path(value)


def load_fashion_mnist(
    directory: Optional[Union[str, Path]] = None,
) -> Tuple[IdxDataset, IdxDataset]:
    """Read the train and test splits from raw or gzipped IDX files."""
    root = resolve_data_dir(directory)
    splits = []
    for split in ("train", "test"):
        image_stem, label_stem = FASHION_FILES[split]
        data = parse_idx(_read(_find(root, image_stem)), _read(_find(root, label_stem)))
        logger.info("loaded %d %s images from %s", len(data.labels), split, root)
        splits.append(data)
    return splits[0], splits[1]


def to_dataset(train: IdxDataset, test: IdxDataset, limit: Optional[int] = None) -> Dataset:
    """Flatten IDX splits into a training :class:`Dataset`.

    With ``limit`` only the first ``limit`` training rows are kept.
    """
    train_x, train_y = train.features, train.labels.astype(int)
    if limit is not None:
        train_x, train_y = train_x[:limit], train_y[:limit]
    return Dataset(train_x, train_y, test.features, test.labels.astype(int), NUM_CLASSES)
