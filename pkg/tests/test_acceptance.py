"""Acceptance gate: ten checks, one PASS/FAIL line each (run with -s).

Checks 8 and 9 train on the real MNIST IDX files and are skipped with an
explanation when the files are absent (point KANZIP_DATA_DIR at them).
"""
import math
import time

import numpy as np
import pytest

from kanzip.basis import BasisSpec, evaluate_array, evaluate_basis
from kanzip.cluster import ClusterConfig, kmeans_fit
from kanzip.codebook import (build_clustered_model, fit_codebooks, memory_report,
                             scalar_compression_factor, vector_compression_factor)
from kanzip.data import Dataset, SplitSpec, load_dataset, split_train_val
from kanzip.errors import DataFormatError
from kanzip.layers import (KanLayerSpec, kan_conv_backward, kan_conv_forward,
                           kan_dense_backward, kan_dense_forward)
from kanzip.network import (ConvKanArch, DenseKanArch, KanModel, MetaSource,
                            PlainSource, softmax_cross_entropy)
from kanzip.pipeline import (default_config, evaluate_accuracy, run_cluster_stage,
                             run_finetune, run_training)
from kanzip.serialize import load_model_bytes, model_bytes, pack_indices

from conftest import mnist_dir
from oracles import bspline_all, finite_diff_grad, kmeans_best_partition
from test_serialize import random_model, sample_input

BASES = {
    "bspline": BasisSpec("bspline", degree=3, grid_size=5, grid_min=-1, grid_max=1),
    "rbf": BasisSpec("rbf", num_centers=8, grid_min=-2, grid_max=2),
    "gram": BasisSpec("gram", degree=3),
}


def report(num, ok, detail):
    print(f"\nCRITERION {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def _max_rel_err(analytic, fd):
    scale = np.maximum(np.abs(fd), 1e-3)
    return float(np.max(np.abs(analytic - fd) / scale))


def test_criterion_1_gradient_fidelity():
    t0 = time.time()
    worst = 0.0
    rng = np.random.default_rng(2024)
    for name, basis in BASES.items():
        base = name != "gram"
        for kind in ("dense", "conv"):
            if kind == "dense":
                spec = KanLayerSpec(kind="dense", basis=basis, in_features=3,
                                    out_features=2, base_enabled=base)
                x = rng.uniform(-0.8, 0.8, size=(2, 3))
                fwd, bwd = kan_dense_forward, kan_dense_backward
            else:
                spec = KanLayerSpec(kind="conv", basis=basis, in_channels=2,
                                    out_channels=2, base_enabled=base)
                x = rng.uniform(-0.8, 0.8, size=(1, 2, 3, 3))
                fwd, bwd = kan_conv_forward, kan_conv_backward
            params = {"coeffs": rng.normal(size=(spec.n_edges, spec.param_width)) * 0.3,
                      "bias": rng.normal(size=2), "x": x}

            def loss():
                out, _ = fwd(spec, params["coeffs"], params["bias"], params["x"])
                return float(out.sum())

            out, cache = fwd(spec, params["coeffs"], params["bias"], params["x"])
            g = bwd(cache, np.ones_like(out))
            for pname, analytic in (("coeffs", g.d_coeffs), ("bias", g.d_bias),
                                    ("x", g.d_input)):
                worst = max(worst, _max_rel_err(analytic,
                                                finite_diff_grad(loss, params, pname)))
    # meta-learner path: FD through the full generated network
    basis = BASES["gram"]
    specs = [KanLayerSpec(kind="dense", basis=basis, in_features=2, out_features=2,
                          base_enabled=False),
             KanLayerSpec(kind="dense", basis=basis, in_features=2, out_features=2,
                          base_enabled=False)]
    arch = DenseKanArch(specs)
    model = KanModel.create(arch, MetaSource(arch, d_emb=1), rng)
    model.params = {k: v.astype(np.float64) for k, v in model.params.items()}
    x = rng.uniform(-1, 1, size=(3, 2))
    labels = np.array([0, 1, 0])

    def mloss():
        return softmax_cross_entropy(model.predict_logits(x), labels)[0]

    logits, cache = model.forward(x)
    _, d_logits = softmax_cross_entropy(logits, labels)
    grads = model.backward(cache, d_logits)
    for pname in ["meta_w1", "meta_b1", "meta_w2", "meta_b2", "emb_z"]:
        worst = max(worst, _max_rel_err(grads[pname],
                                        finite_diff_grad(mloss, model.params, pname)))
    elapsed = time.time() - t0
    report(1, worst < 1e-4 and elapsed < 120,
           f"max relative gradient error {worst:.2e} (<1e-4), {elapsed:.1f}s (<120s)")


def test_criterion_2_basis_correctness():
    bs = BASES["bspline"]
    xs = np.random.default_rng(0).uniform(bs.grid_min, bs.grid_max, 1000)
    vals, _ = evaluate_array(bs, xs)
    pou = float(np.max(np.abs(vals.sum(axis=1) - 1.0)))
    knots = bs.knots()
    oracle = max(float(np.max(np.abs(evaluate_basis(bs, x).values
                                     - bspline_all(x, knots, 3))))
                 for x in np.random.default_rng(1).uniform(-2, 2, 100))
    rbf = BASES["rbf"]
    center_val = evaluate_basis(rbf, rbf.centers()[2]).values[2]
    gram = BASES["gram"]
    u = np.tanh(np.random.default_rng(2).uniform(-3, 3, 50))
    gvals, _ = evaluate_array(gram, np.arctanh(u))
    closed = np.stack([np.ones_like(u), u, (3 * u ** 2 - 1) / 2,
                       (5 * u ** 3 - 3 * u) / 2], axis=1)
    gram_err = float(np.max(np.abs(gvals - closed)))
    ok = pou < 1e-9 and oracle <= 1e-12 and center_val == 1.0 and gram_err < 1e-9
    report(2, ok, f"partition-of-unity err {pou:.1e}, oracle err {oracle:.1e}, "
                  f"RBF center value {center_val}, Gram closed-form err {gram_err:.1e}")


def test_criterion_3_kmeans_optimality():
    t0 = time.time()
    rng = np.random.default_rng(77)
    ok = True
    details = []
    for inst in range(2):
        points = rng.normal(size=(10, 9))
        best, _ = kmeans_best_partition(points, k=3)
        traces = []
        got = math.inf
        for seed in range(20):
            cb, trace = kmeans_fit(points, ClusterConfig(k=3, seed=seed))
            traces.append(trace)
            got = min(got, trace[-1])
        monotone = all(b <= a + 1e-9 for t in traces for a, b in zip(t, t[1:]))
        ok = ok and abs(got - best) < 1e-9 and monotone
        details.append(f"instance {inst}: lloyd {got:.6f} vs exhaustive {best:.6f}")
    elapsed = time.time() - t0
    report(3, ok and elapsed < 60,
           "; ".join(details) + f"; traces non-increasing; {elapsed:.1f}s (<60s)")


def test_criterion_4_lossless_codebook():
    basis = BASES["bspline"]
    specs = [KanLayerSpec(kind="dense", basis=basis, in_features=6, out_features=6),
             KanLayerSpec(kind="dense", basis=basis, in_features=6, out_features=6)]
    arch = DenseKanArch(specs)
    model = KanModel.create(arch, PlainSource(arch), np.random.default_rng(3))
    books = fit_codebooks(model, ClusterConfig(k=36, seed=0))
    clustered = build_clustered_model(model, books)
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, size=(64, 6)).astype(np.float32)
    labels = rng.integers(0, 6, size=64).astype(np.int64)
    ds = Dataset(images=x.reshape(64, 1, 1, 6), labels=labels, class_count=6)
    bit_identical = np.array_equal(model.predict_logits(x),
                                   clustered.predict_logits(x))
    acc_equal = evaluate_accuracy(model, ds) == evaluate_accuracy(clustered, ds)
    report(4, bit_identical and acc_equal,
           f"k=n forward bit-identical: {bit_identical}, accuracy equal: {acc_equal}")


def test_criterion_5_serialization():
    rng = np.random.default_rng(5)
    round_trips = 0
    for _ in range(100):
        model = random_model(rng)
        data = model_bytes(model)
        loaded = load_model_bytes(data)
        x = sample_input(model, rng)
        if np.array_equal(model.predict_logits(x), loaded.predict_logits(x)) \
                and model_bytes(loaded) == data:
            round_trips += 1
    fixture_ok = pack_indices([3, 15, 0, 1], 16) == b"\x3f\x01"
    data = bytearray(model_bytes(random_model(rng)))
    detected = 0
    for pos in range(len(data)):
        corrupt = bytearray(data)
        corrupt[pos] ^= 0x01
        try:
            load_model_bytes(bytes(corrupt))
        except DataFormatError:
            detected += 1
    report(5, round_trips == 100 and fixture_ok and detected == len(data),
           f"{round_trips}/100 bit-exact round trips, index fixture ok: {fixture_ok}, "
           f"corruption detected at {detected}/{len(data)} byte positions")


def test_criterion_6_memory_model_consistency():
    basis = BASES["bspline"]
    specs = [KanLayerSpec(kind="dense", basis=basis, in_features=784, out_features=32),
             KanLayerSpec(kind="dense", basis=basis, in_features=32, out_features=10)]
    arch = DenseKanArch(specs)
    model = KanModel.create(arch, PlainSource(arch), np.random.default_rng(6))
    clustered = build_clustered_model(model,
                                      fit_codebooks(model, ClusterConfig(k=16, seed=0)))
    data = model_bytes(clustered)
    size = len(data)
    accounted = memory_report(clustered).total_bytes
    # documented overhead: magic+version (6), descriptor length field (4),
    # descriptor JSON, 13 framing bytes per clustered layer, CRC (4)
    desc_len = int.from_bytes(data[6:10], "little")
    documented = 6 + 4 + desc_len + 13 * len(arch.layer_specs) + 4
    mismatch = abs(size - documented - accounted) / accounted
    rng = np.random.default_rng(7)
    degenerate_ok = all(
        scalar_compression_factor(n, k, b)
        == vector_compression_factor(n, 1, k, b)
        for n, k, b in ((int(rng.integers(10, 10 ** 6)), int(rng.integers(2, 512)),
                         int(rng.choice([16, 32, 64]))) for _ in range(50)))
    report(6, mismatch < 0.01 and degenerate_ok,
           f"file size minus documented overhead vs report: {mismatch:.3%} off "
           f"(<1%), width-1 factor identity on 50 random triples: {degenerate_ok}")


def test_criterion_7_compression_figures():
    def clustered_report(in_features):
        basis = BASES["bspline"]
        specs = [KanLayerSpec(kind="dense", basis=basis, in_features=in_features,
                              out_features=32),
                 KanLayerSpec(kind="dense", basis=basis, in_features=32,
                              out_features=10)]
        arch = DenseKanArch(specs)
        model = KanModel.create(arch, PlainSource(arch), np.random.default_rng(8))
        books = fit_codebooks(model, ClusterConfig(k=16, seed=0))
        return memory_report(build_clustered_model(model, books))

    cifar = clustered_report(3072)
    mnist = clustered_report(784)
    factor = cifar.compression_factor
    mnist_kb = mnist.total_bytes / 1024
    ok = factor >= 70 and abs(factor - 80) / 80 <= 0.10 \
        and abs(mnist_kb - 13.84) / 13.84 <= 0.10
    report(7, ok, f"CIFAR dense factor {factor:.1f}x (>=70, 80 +/- 10%), "
                  f"MNIST clustered size {mnist_kb:.2f} KB (13.84 +/- 10%)")


def _mnist_splits(cfg):
    d = mnist_dir()
    train_full = load_dataset("mnist", d, train=True)
    test_ds = load_dataset("mnist", d, train=False)
    train_ds, val_ds = split_train_val(
        train_full, SplitSpec(val_fraction=cfg.val_fraction, seed=cfg.seed))
    return train_ds, val_ds, test_ds


MNIST_SKIP = ("MNIST IDX files not found; place train/t10k images+labels under "
              "$KANZIP_DATA_DIR (or ./data/mnist) to run this criterion")


@pytest.mark.skipif(mnist_dir() is None, reason=MNIST_SKIP)
def test_criterion_8_mnist_end_to_end():
    t0 = time.time()
    # MetaKAN with a 20-epoch budget (allowed when the floors are met)
    cfg = default_config("MetaClusterKAN", seed=0, epochs=20, finetune_epochs=5)
    train_ds, val_ds, test_ds = _mnist_splits(cfg)
    model, _ = run_training(cfg, train_ds, val_ds)
    meta_acc = evaluate_accuracy(model, test_ds)
    clustered, _ = run_cluster_stage(model, cfg)
    post_cluster = evaluate_accuracy(clustered, test_ds)
    tuned, _ = run_finetune(clustered, cfg, train_ds, val_ds)
    post_finetune = evaluate_accuracy(tuned, test_ds)

    pcfg = default_config("ClusterKAN", seed=0, epochs=20, finetune_epochs=5)
    pmodel, _ = run_training(pcfg, train_ds, val_ds)
    plain_acc = evaluate_accuracy(pmodel, test_ds)
    pclustered, _ = run_cluster_stage(pmodel, pcfg)
    plain_post = evaluate_accuracy(pclustered, test_ds)
    ptuned, _ = run_finetune(pclustered, pcfg, train_ds, val_ds)
    plain_recovered = evaluate_accuracy(ptuned, test_ds)
    elapsed = time.time() - t0
    ok = (meta_acc >= 0.950 and meta_acc - post_cluster <= 0.015
          and post_finetune >= 0.950 and plain_acc - plain_post >= 0.15
          and plain_recovered >= 0.91 and elapsed < 3600)
    report(8, ok,
           f"MetaKAN test {meta_acc:.4f} (>=0.95), cluster drop "
           f"{meta_acc - post_cluster:.4f} (<=0.015), finetuned {post_finetune:.4f} "
           f"(>=0.95); ClusterKAN {plain_acc:.4f} -> {plain_post:.4f} "
           f"(drop >=0.15) -> {plain_recovered:.4f} (>=0.91); {elapsed:.0f}s")


@pytest.mark.skipif(mnist_dir() is None, reason=MNIST_SKIP)
def test_criterion_9_embedding_size_trend():
    drops = {}
    for d_emb in (1, 4):
        cfg = default_config("MetaClusterFastKAN", seed=0, epochs=20,
                             finetune_epochs=5, d_emb=d_emb)
        train_ds, val_ds, test_ds = _mnist_splits(cfg)
        model, _ = run_training(cfg, train_ds, val_ds)
        before = evaluate_accuracy(model, test_ds)
        clustered, _ = run_cluster_stage(model, cfg)
        drops[d_emb] = before - evaluate_accuracy(clustered, test_ds)
    report(9, drops[4] >= drops[1],
           f"post-cluster drop at d_emb=4 ({drops[4]:.4f}) >= at d_emb=1 "
           f"({drops[1]:.4f})")


def test_criterion_10_conv_scale_exclusion():
    # Full conv CIFAR training is out of desk-scale scope by design; the
    # conv path is exercised at small scale by criteria 1, 4, and 5 and the
    # unit suite. This check confirms the conv fixtures really run.
    basis = BASES["gram"]
    specs = [KanLayerSpec(kind="conv", basis=basis, in_channels=1, out_channels=2,
                          base_enabled=False)]
    arch = ConvKanArch(specs, num_classes=3)
    model = KanModel.create(arch, PlainSource(arch), np.random.default_rng(10))
    x = np.random.default_rng(11).uniform(-1, 1, size=(2, 1, 8, 8)).astype(np.float32)
    logits = model.predict_logits(x)
    report(10, logits.shape == (2, 3) and np.all(np.isfinite(logits)),
           "conv CIFAR accuracy reproduction excluded at desk scale; conv path "
           "verified on small fixtures (criteria 1, 4, 5)")
