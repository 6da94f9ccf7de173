"""Datasets: labeled CSV, IDX image/label pairs and a synthetic bar-image generator."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError
from .net import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
PIXEL_MAX = 255.0


@dataclass
class Dataset:
    inputs: np.ndarray  # N x C x H x W, values in [0, 1]
    labels: np.ndarray
    num_classes: int

    def __len__(self):
        return len(self.labels)

    def full_batch(self):
        return Batch(self.inputs, self.labels)

    def batches(self, batch_size, epoch=0, seed=0):
        """Shuffled minibatches; the order depends only on ``(seed, epoch)``."""
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        order = np.random.default_rng([seed, epoch]).permutation(len(self))
        for lo in range(0, len(order), batch_size):
            idx = order[lo:lo + batch_size]
            yield Batch(self.inputs[idx], self.labels[idx])


def _check_labels(labels, num_classes, where):
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if labels.size else 0
    bad = np.flatnonzero((labels < 0) | (labels >= num_classes))
    if bad.size:
        raise InputError(f"label {labels[bad[0]]} outside [0, {num_classes})", where(bad[0]))
    return num_classes


def _square_shape(npix, where):
    side = int(round(npix ** 0.5))
    if side * side != npix:
        raise InputError(f"{npix} pixel columns do not form a square image; "
                         "pass image_shape", where)
    return (1, side, side)


def load_csv(path, image_shape=None, num_classes=None):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("empty CSV file", "row 1") from None
        header = [h.strip() for h in header]
        if "label" not in header:
            raise InputError("no 'label' column in header", "row 1")
        li = header.index("label")
        width = len(header)
        labels, pixels = [], []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise InputError(f"expected {width} fields, got {len(row)}", f"row {rowno}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise InputError(str(exc), f"row {rowno}") from None
            if vals[li] != int(vals[li]):
                raise InputError("label is not an integer", f"row {rowno}")
            px = vals[:li] + vals[li + 1:]
            if any(not 0 <= v <= PIXEL_MAX for v in px):
                raise InputError(f"pixel value outside [0, {PIXEL_MAX:g}]", f"row {rowno}")
            labels.append(int(vals[li]))
            pixels.append(px)
    if not labels:
        raise InputError("CSV has no data rows", "row 2")
    X = np.asarray(pixels) / PIXEL_MAX
    y = np.asarray(labels, dtype=np.int64)
    shape = tuple(image_shape) if image_shape else _square_shape(X.shape[1], "row 1")
    if int(np.prod(shape)) != X.shape[1]:
        raise InputError(f"image_shape {shape} does not match {X.shape[1]} pixel columns", "row 1")
    num_classes = _check_labels(y, num_classes, lambda i: f"row {i + 2}")
    return Dataset(X.reshape((len(y),) + shape), y, num_classes)


def read_idx(path, expected_magic):
    """Parse an IDX file (unsigned-byte payload) into an ndarray."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise InputError("file too short for an IDX header", "byte 0")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise InputError(f"magic 0x{magic:08x}, expected 0x{expected_magic:08x}", "byte 0")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise InputError("truncated IDX dimension header", f"byte {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    size = int(np.prod(dims))
    if len(raw) != head + size:
        raise InputError(f"payload is {len(raw) - head} bytes, dimensions need {size}",
                         f"byte {min(len(raw), head + size)}")
    return np.frombuffer(raw, dtype=">u1", offset=head).reshape(dims)


def write_idx(path, array, magic):
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
    Path(path).write_bytes(header + array.tobytes())


def load_idx_pair(images_path, labels_path=None, num_classes=None):
    images_path = Path(images_path)
    if labels_path is None:
        name = images_path.name
        if "images" not in name:
            raise InputError("cannot derive the labels file name; pass labels_path")
        labels_path = images_path.with_name(name.replace("images", "labels", 1))
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise InputError(f"{images.shape[0]} images but {labels.shape[0]} labels", "byte 4")
    num_classes = _check_labels(labels, num_classes, lambda i: f"byte {8 + i}")
    X = images.astype(float)[:, None, :, :] / PIXEL_MAX
    return Dataset(X, labels, num_classes)


def load_dataset(path, format="csv_labeled", *, labels_path=None, image_shape=None,
                 num_classes=None):
    if format == "csv_labeled":
        return load_csv(path, image_shape, num_classes)
    if format == "idx_pair":
        return load_idx_pair(path, labels_path, num_classes)
    raise InputError(f"unknown dataset format {format!r}")


def make_synthetic(n=256, size=8, seed=0, noise=0.15):
    """Two-class ``size x size`` images: a horizontal bar (0) or a vertical bar (1).

    Bar position and length vary per sample; Gaussian pixel noise is clipped
    back into [0, 1]. Classes alternate so the set is balanced.
    """
    rng = np.random.default_rng(seed)
    X = np.zeros((n, 1, size, size))
    y = np.arange(n) % 2
    for i in range(n):
        line = rng.integers(1, size - 1)
        length = rng.integers(size // 2, size + 1)
        start = rng.integers(0, size - length + 1)
        if y[i] == 0:
            X[i, 0, line, start:start + length] = 1.0
        else:
            X[i, 0, start:start + length, line] = 1.0
    X = np.clip(X + noise * rng.standard_normal(X.shape), 0.0, 1.0)
    return Dataset(X, y.astype(np.int64), 2)
