"""Tests for the IDX codec and dataset loading."""

import gzip
import struct

import numpy as np
import pytest

from netsym.core.idx import (
    FASHION_FILES,
    IMAGE_MAGIC,
    LABEL_MAGIC,
    IdxDataset,
    IdxFormatError,
    load_fashion_mnist,
    parse_idx,
    resolve_data_dir,
    to_dataset,
    write_idx,
)


def _image_bytes(count, rows, cols, pixels=b""):
    return struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols) + pixels


def _label_bytes(labels):
    return struct.pack(">II", LABEL_MAGIC, len(labels)) + bytes(labels)


@pytest.fixture
def tiny():
    images = np.arange(2 * 2 * 3, dtype=np.uint8).reshape(2, 2, 3) * 10
    return _image_bytes(2, 2, 3, images.tobytes()), _label_bytes([3, 9])


class TestParse:
    def test_single_zero_image(self):
        data = parse_idx(_image_bytes(1, 1, 1, b"\x00"), _label_bytes([0]))
        assert data.images.shape == (1, 1, 1)
        assert data.images[0, 0, 0] == 0.0
        assert data.labels.tolist() == [0]

    def test_scaling_and_features(self, tiny):
        data = parse_idx(*tiny)
        assert data.images.max() == pytest.approx(110 / 255)
        assert data.features.shape == (2, 6)
        assert data.labels.tolist() == [3, 9]

    def test_label_out_of_range(self):
        with pytest.raises(IdxFormatError, match="label out of range"):
            parse_idx(_image_bytes(1, 1, 1, b"\x00"), _label_bytes([255]))

    def test_bad_image_magic(self):
        bad = struct.pack(">IIII", 0x00000802, 1, 1, 1) + b"\x00"
        with pytest.raises(IdxFormatError, match="bad magic"):
            parse_idx(bad, _label_bytes([0]))

    def test_bad_label_magic(self):
        bad = struct.pack(">II", IMAGE_MAGIC, 1) + b"\x00"
        with pytest.raises(IdxFormatError, match="bad magic"):
            parse_idx(_image_bytes(1, 1, 1, b"\x00"), bad)

    def test_truncated_header(self):
        with pytest.raises(IdxFormatError, match="truncated"):
            parse_idx(b"\x00\x00\x08", _label_bytes([0]))

    def test_truncated_pixels(self):
        with pytest.raises(IdxFormatError, match="truncated"):
            parse_idx(_image_bytes(2, 2, 2, b"\x00" * 5), _label_bytes([0, 1]))

    def test_count_mismatch(self):
        with pytest.raises(IdxFormatError, match="count mismatch"):
            parse_idx(_image_bytes(1, 1, 1, b"\x00"), _label_bytes([0, 1]))

    def test_format_error_is_value_error(self):
        assert issubclass(IdxFormatError, ValueError)


class TestWrite:
    def test_bytes_reproduced(self, tiny):
        assert write_idx(parse_idx(*tiny)) == tiny

    def test_header(self):
        images, labels = write_idx(IdxDataset(np.ones((1, 2, 2)), np.array([4])))
        assert struct.unpack(">IIII", images[:16]) == (IMAGE_MAGIC, 1, 2, 2)
        assert images[16:] == b"\xff" * 4
        assert labels == _label_bytes([4])


class TestLoad:
    def _write_split(self, directory, split, data, compress):
        image_stem, label_stem = FASHION_FILES[split]
        for stem, payload in zip((image_stem, label_stem), write_idx(data)):
            if compress:
                (directory / (stem + ".gz")).write_bytes(gzip.compress(payload))
            else:
                (directory / stem).write_bytes(payload)

    def test_raw_and_gzip_files(self, tmp_path):
        train = IdxDataset(np.zeros((3, 2, 2)), np.array([0, 1, 2]))
        test = IdxDataset(np.ones((2, 2, 2)), np.array([5, 6]))
        self._write_split(tmp_path, "train", train, compress=True)
        self._write_split(tmp_path, "test", test, compress=False)
        loaded_train, loaded_test = load_fashion_mnist(tmp_path)
        assert loaded_train.labels.tolist() == [0, 1, 2]
        np.testing.assert_array_equal(loaded_test.images, test.images)

    def test_environment_directory(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NETSYM_DATA_DIR", str(tmp_path))
        assert resolve_data_dir() == tmp_path

    def test_missing_directory_setting(self, monkeypatch):
        monkeypatch.delenv("NETSYM_DATA_DIR", raising=False)
        with pytest.raises(FileNotFoundError, match="NETSYM_DATA_DIR"):
            resolve_data_dir()

    def test_missing_files(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="train-images-idx3-ubyte"):
            load_fashion_mnist(tmp_path)

    def test_to_dataset_limit(self):
        train = IdxDataset(np.zeros((5, 2, 2)), np.array([0, 1, 2, 3, 4], dtype=np.uint8))
        test = IdxDataset(np.zeros((2, 2, 2)), np.array([1, 1], dtype=np.uint8))
        dataset = to_dataset(train, test, limit=3)
        assert dataset.train_x.shape == (3, 4)
        assert dataset.test_x.shape == (2, 4)
        assert dataset.num_classes == 10
        assert dataset.train_y.dtype.kind == "i"
