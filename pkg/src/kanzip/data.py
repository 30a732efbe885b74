"""Dataset ingestion: MNIST IDX and CIFAR binary files, split, batching.

Expected directory layout (gzipped variants are accepted):

    mnist/     train-images-idx3-ubyte, train-labels-idx1-ubyte,
               t10k-images-idx3-ubyte,  t10k-labels-idx1-ubyte
    cifar10/   data_batch_1.bin .. data_batch_5.bin, test_batch.bin
    cifar100/  train.bin, test.bin
"""
import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MNIST_MEAN, MNIST_STD = 0.1307, 0.3081
CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32, normalized
    labels: np.ndarray  # (N,) int64
    class_count: int

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataFormatError(
                f"{self.images.shape[0]} images vs {self.labels.shape[0]} labels")

    def __len__(self):
        return self.images.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    val_fraction: float = 0.1
    seed: int = 0


def _read_file(path):
    if not os.path.exists(path) and os.path.exists(path + ".gz"):
        path = path + ".gz"
    if not os.path.exists(path):
        raise DataFormatError(f"missing data file: {path}")
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as f:
        return f.read()


def _read_idx(path, expect_magic):
    data = _read_file(path)
    if len(data) < 4:
        raise DataFormatError(f"{path}: truncated header at offset 0")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expect_magic:
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x} at offset 0")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise DataFormatError(f"{path}: truncated dimension list at offset 4")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = int(np.prod(dims))
    if len(data) - header < count:
        raise DataFormatError(
            f"{path}: expected {count} payload bytes, file ends at offset {len(data)}")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_mnist(data_dir, train=True):
    prefix = "train" if train else "t10k"
    images = _read_idx(os.path.join(data_dir, f"{prefix}-images-idx3-ubyte"),
                       IDX_IMAGES_MAGIC)
    labels = _read_idx(os.path.join(data_dir, f"{prefix}-labels-idx1-ubyte"),
                       IDX_LABELS_MAGIC)
    images = images.astype(np.float32) / 255.0
    images = (images - MNIST_MEAN) / MNIST_STD
    return Dataset(images=images[:, None, :, :], labels=labels.astype(np.int64),
                   class_count=10)


def _decode_cifar(data, path, label_bytes, take_label):
    record = label_bytes + 3072
    if len(data) % record != 0:
        raise DataFormatError(
            f"{path}: size {len(data)} is not a multiple of record size {record}; "
            f"truncated at offset {len(data) - len(data) % record}")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, record)
    labels = raw[:, take_label].astype(np.int64)
    images = raw[:, label_bytes:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    mean = np.asarray(CIFAR_MEAN, dtype=np.float32)[:, None, None]
    std = np.asarray(CIFAR_STD, dtype=np.float32)[:, None, None]
    return (images - mean) / std, labels


def load_cifar10(data_dir, train=True):
    names = [f"data_batch_{i}.bin" for i in range(1, 6)] if train else ["test_batch.bin"]
    images, labels = [], []
    for name in names:
        path = os.path.join(data_dir, name)
        im, lb = _decode_cifar(_read_file(path), path, label_bytes=1, take_label=0)
        images.append(im)
        labels.append(lb)
    return Dataset(images=np.concatenate(images), labels=np.concatenate(labels),
                   class_count=10)


def load_cifar100(data_dir, train=True):
    path = os.path.join(data_dir, "train.bin" if train else "test.bin")
    # record = coarse label byte + fine label byte + pixels; keep the fine label
    images, labels = _decode_cifar(_read_file(path), path, label_bytes=2, take_label=1)
    return Dataset(images=images, labels=labels, class_count=100)


_LOADERS = {"mnist": load_mnist, "cifar10": load_cifar10, "cifar100": load_cifar100}


def load_dataset(kind, data_dir, train=True):
    if kind not in _LOADERS:
        raise DataFormatError(f"unknown dataset kind {kind!r}")
    ds = _LOADERS[kind](data_dir, train)
    if ds.labels.min() < 0 or ds.labels.max() >= ds.class_count:
        raise DataFormatError(f"{kind}: label outside [0, {ds.class_count})")
    return ds


def split_train_val(ds, spec):
    """Seeded shuffle, then |val| = round(val_fraction * N)."""
    n = len(ds)
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_val = int(round(spec.val_fraction * n))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    make = lambda idx: Dataset(images=ds.images[idx], labels=ds.labels[idx],
                               class_count=ds.class_count)
    return make(train_idx), make(val_idx)


def iterate_batches(ds, batch_size, rng=None):
    """Yields (images, labels); shuffled when an rng is given."""
    n = len(ds)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for lo in range(0, n, batch_size):
        idx = order[lo:lo + batch_size]
        yield ds.images[idx], ds.labels[idx]


def augment_batch(images, rng):
    """Random 4-pixel-pad crop plus horizontal flip (p=0.5), per image."""
    b, c, h, w = images.shape
    padded = np.pad(images, ((0, 0), (0, 0), (4, 4), (4, 4)))
    out = np.empty_like(images)
    offs = rng.integers(0, 9, size=(b, 2))
    flips = rng.random(b) < 0.5
    for i in range(b):
        oy, ox = offs[i]
        crop = padded[i, :, oy:oy + h, ox:ox + w]
        out[i] = crop[:, :, ::-1] if flips[i] else crop
    return out
