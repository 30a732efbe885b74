import gzip
import os
import struct

import numpy as np
import pytest

from kanzip.data import (CIFAR_MEAN, CIFAR_STD, MNIST_MEAN, MNIST_STD, SplitSpec,
                         augment_batch, iterate_batches, load_dataset,
                         split_train_val)
from kanzip.errors import DataFormatError


def write_idx_images(path, images, gz=False):
    n, h, w = images.shape
    blob = struct.pack(">IIII", 0x803, n, h, w) + images.astype(np.uint8).tobytes()
    (gzip.open if gz else open)(path, "wb").write(blob)


def write_idx_labels(path, labels, gz=False):
    blob = struct.pack(">II", 0x801, len(labels)) + bytes(labels)
    (gzip.open if gz else open)(path, "wb").write(blob)


def make_mnist_dir(tmp_path, n=12, gz=False):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(n, 28, 28)).astype(np.uint8)
    labels = list(rng.integers(0, 10, size=n))
    sfx = ".gz" if gz else ""
    for prefix in ("train", "t10k"):
        write_idx_images(os.path.join(tmp_path, f"{prefix}-images-idx3-ubyte{sfx}"),
                         images, gz)
        write_idx_labels(os.path.join(tmp_path, f"{prefix}-labels-idx1-ubyte{sfx}"),
                         labels, gz)
    return images, np.array(labels)


@pytest.mark.parametrize("gz", [False, True])
def test_mnist_idx_round_trip(tmp_path, gz):
    images, labels = make_mnist_dir(str(tmp_path), gz=gz)
    ds = load_dataset("mnist", str(tmp_path))
    assert ds.images.shape == (12, 1, 28, 28)
    assert ds.images.dtype == np.float32
    assert np.array_equal(ds.labels, labels)
    expected = (images[3].astype(np.float32) / 255.0 - MNIST_MEAN) / MNIST_STD
    assert np.allclose(ds.images[3, 0], expected, atol=1e-6)


def test_idx_errors(tmp_path):
    p = os.path.join(str(tmp_path), "train-images-idx3-ubyte")
    with pytest.raises(DataFormatError, match="missing"):
        load_dataset("mnist", str(tmp_path))
    open(p, "wb").write(struct.pack(">I", 0x805))
    with pytest.raises(DataFormatError, match="magic"):
        load_dataset("mnist", str(tmp_path))
    open(p, "wb").write(struct.pack(">IIII", 0x803, 5, 28, 28) + b"\x00" * 10)
    with pytest.raises(DataFormatError, match="payload"):
        load_dataset("mnist", str(tmp_path))
    with pytest.raises(DataFormatError, match="unknown dataset"):
        load_dataset("imagenet", str(tmp_path))


def make_cifar10_dir(tmp_path, per_batch=4):
    rng = np.random.default_rng(1)
    all_labels, all_pixels = [], []
    for name in [f"data_batch_{i}.bin" for i in range(1, 6)] + ["test_batch.bin"]:
        labels = rng.integers(0, 10, size=per_batch).astype(np.uint8)
        pixels = rng.integers(0, 256, size=(per_batch, 3072)).astype(np.uint8)
        records = np.concatenate([labels[:, None], pixels], axis=1)
        open(os.path.join(tmp_path, name), "wb").write(records.tobytes())
        if name != "test_batch.bin":
            all_labels.append(labels)
            all_pixels.append(pixels)
    return np.concatenate(all_pixels), np.concatenate(all_labels)


def test_cifar10_decoding(tmp_path):
    pixels, labels = make_cifar10_dir(str(tmp_path))
    ds = load_dataset("cifar10", str(tmp_path))
    assert ds.images.shape == (20, 3, 32, 32)
    assert np.array_equal(ds.labels, labels)
    raw = pixels[7].reshape(3, 32, 32).astype(np.float32) / 255.0
    mean = np.asarray(CIFAR_MEAN, np.float32)[:, None, None]
    std = np.asarray(CIFAR_STD, np.float32)[:, None, None]
    assert np.allclose(ds.images[7], (raw - mean) / std, atol=1e-6)


def test_cifar100_keeps_fine_label(tmp_path):
    rng = np.random.default_rng(2)
    coarse = rng.integers(0, 20, size=6).astype(np.uint8)
    fine = rng.integers(0, 100, size=6).astype(np.uint8)
    pixels = rng.integers(0, 256, size=(6, 3072)).astype(np.uint8)
    records = np.concatenate([coarse[:, None], fine[:, None], pixels], axis=1)
    for name in ("train.bin", "test.bin"):
        open(os.path.join(str(tmp_path), name), "wb").write(records.tobytes())
    ds = load_dataset("cifar100", str(tmp_path))
    assert ds.class_count == 100
    assert np.array_equal(ds.labels, fine)


def test_cifar_truncation(tmp_path):
    open(os.path.join(str(tmp_path), "train.bin"), "wb").write(b"\x00" * 3000)
    with pytest.raises(DataFormatError, match="record size"):
        load_dataset("cifar100", str(tmp_path))


def test_split_partition_and_determinism(tmp_path):
    make_mnist_dir(str(tmp_path), n=20)
    ds = load_dataset("mnist", str(tmp_path))
    a_train, a_val = split_train_val(ds, SplitSpec(val_fraction=0.25, seed=3))
    b_train, b_val = split_train_val(ds, SplitSpec(val_fraction=0.25, seed=3))
    assert len(a_val) == 5 and len(a_train) == 15
    assert np.array_equal(a_train.images, b_train.images)
    assert np.array_equal(a_val.labels, b_val.labels)
    # every source image appears exactly once across the two splits
    merged = np.concatenate([a_train.images, a_val.images])
    assert np.array_equal(np.sort(merged.reshape(20, -1), axis=0),
                          np.sort(ds.images.reshape(20, -1), axis=0))
    c_train, _ = split_train_val(ds, SplitSpec(val_fraction=0.25, seed=4))
    assert not np.array_equal(a_train.labels, c_train.labels)


def test_iterate_batches_covers_everything(tmp_path):
    make_mnist_dir(str(tmp_path), n=10)
    ds = load_dataset("mnist", str(tmp_path))
    seen = []
    for xb, yb in iterate_batches(ds, 4):
        assert xb.shape[0] == yb.shape[0] <= 4
        seen.extend(yb.tolist())
    assert seen == ds.labels.tolist()
    shuffled = [y for _, yb in [(0, b) for _, b in
                iterate_batches(ds, 4, np.random.default_rng(0))] for y in yb]
    assert sorted(shuffled) == sorted(seen)


def test_augment_shapes_and_values(rng):
    images = rng.normal(size=(6, 3, 8, 8)).astype(np.float32)
    out = augment_batch(images, np.random.default_rng(0))
    assert out.shape == images.shape
    # each output is some padded crop of its input, optionally flipped
    padded = np.pad(images, ((0, 0), (0, 0), (4, 4), (4, 4)))
    for i in range(6):
        candidates = []
        for oy in range(9):
            for ox in range(9):
                crop = padded[i, :, oy:oy + 8, ox:ox + 8]
                candidates.append(crop)
                candidates.append(crop[:, :, ::-1])
        assert any(np.array_equal(out[i], c) for c in candidates)


def test_augment_identity_is_reachable(rng):
    """With zero offset and no flip the crop is the original image."""
    images = rng.normal(size=(1, 1, 4, 4)).astype(np.float32)
    padded = np.pad(images, ((0, 0), (0, 0), (4, 4), (4, 4)))
    crop = padded[0, :, 4:8, 4:8]
    assert np.array_equal(crop, images[0])


def test_augment_hand_shift():
    """A one-pixel horizontal offset moves columns and zero-fills the edge."""
    images = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
    padded = np.pad(images, ((0, 0), (0, 0), (4, 4), (4, 4)))
    shifted = padded[0, 0, 4:8, 5:9]  # ox = 5: shift left by one
    assert np.array_equal(shifted[:, :3], images[0, 0, :, 1:])
    assert np.all(shifted[:, 3] == 0.0)
