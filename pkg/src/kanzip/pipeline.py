"""Experiment orchestration: train -> cluster -> fine-tune, plus reporting.

Scheme names follow the {Meta}{Cluster}{KAN|FastKAN|GramKAN}{Conv}
convention, e.g. "MetaClusterKAN" or "ClusterFastKANConv". Stage
defaults are keyed off the scheme and can be overridden per config key.
"""
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .basis import BSPLINE, GRAM, RBF, BasisSpec
from .cluster import SCOPE_GLOBAL, SCOPE_PER_LAYER, ClusterConfig
from .codebook import build_clustered_model, fit_codebooks, memory_report
from .data import SplitSpec, augment_batch, iterate_batches, load_dataset, split_train_val
from .errors import ConfigError, NumericError
from .layers import KanLayerSpec
from .network import (ClusteredSource, ConvKanArch, DenseKanArch, KanModel, MetaSource,
                      PlainSource, softmax_cross_entropy)
from .optim import AdamW, EarlyStopping, ParamGroup

_BASE_BASIS = {"KAN": BSPLINE, "FastKAN": RBF, "GramKAN": GRAM}


@dataclass(frozen=True)
class SchemeInfo:
    basis_kind: str
    meta: bool
    cluster: bool
    conv: bool


def parse_scheme(name):
    s = name
    meta = s.startswith("Meta")
    s = s.removeprefix("Meta")
    cluster = s.startswith("Cluster")
    s = s.removeprefix("Cluster")
    conv = s.endswith("Conv")
    s = s.removesuffix("Conv")
    if s not in _BASE_BASIS:
        raise ConfigError(f"unknown scheme {name!r}")
    return SchemeInfo(_BASE_BASIS[s], meta, cluster, conv)


@dataclass
class ExperimentConfig:
    scheme: str
    dataset: str = "mnist"
    seed: int = 0
    epochs: int = 50
    patience: int = 10
    batch_size: int = 128
    lr: float = 1e-3
    lr_meta: float = 5e-4
    lr_emb: float = 5e-3
    lr_finetune: float = 1e-4
    finetune_epochs: int = 5
    finetune_patience: int = 3
    weight_decay: float = 0.0
    d_emb: int = 1
    hidden_dims: list = field(default_factory=lambda: [32])
    conv_channels: list = field(default_factory=lambda: [32, 64, 128, 512])
    clusters: int = 16
    cluster_scope: str = SCOPE_PER_LAYER
    cluster_max_iters: int = 300
    cluster_tol: float = 1e-6
    degree: int = 3
    grid_size: int = 5
    num_centers: int = 8
    grid_min: float = -1.0
    grid_max: float = 1.0
    dropout: float = 0.0
    head_dropout: float = 0.5
    cosine_schedule: bool = False
    augment: bool = False
    val_fraction: float = 0.1

    def __post_init__(self):
        parse_scheme(self.scheme)
        if self.epochs > 0 and self.finetune_epochs * 4 > self.epochs:
            raise ConfigError(
                f"finetune_epochs={self.finetune_epochs} too large for "
                f"epochs={self.epochs}: the fine-tune stage must be brief")

    def to_dict(self):
        return asdict(self)

    def hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def default_config(scheme, dataset="mnist", seed=0, **overrides):
    """Per-scheme hyperparameter defaults (dense and conv tables)."""
    info = parse_scheme(scheme)
    kw = {"scheme": scheme, "dataset": dataset, "seed": seed}
    if not info.conv:
        kw.update(epochs=50, patience=10, clusters=16, d_emb=1, lr_finetune=1e-4)
        if info.basis_kind == BSPLINE:
            kw.update(lr=1e-4, lr_meta=5e-4, lr_emb=5e-3, grid_min=-1.0, grid_max=1.0)
        elif info.basis_kind == RBF:
            kw.update(lr=1e-3, lr_meta=1e-3, lr_emb=1e-2, grid_min=-2.0, grid_max=2.0)
        else:
            kw.update(lr=1e-3, lr_meta=1e-4, lr_emb=1e-3)
    else:
        kw.update(epochs=150, patience=10, clusters=256, lr_finetune=1e-5,
                  dropout=0.25, head_dropout=0.5, grid_min=-3.0, grid_max=3.0,
                  lr_meta=1e-4, lr_emb=5e-3, cosine_schedule=info.meta,
                  d_emb=1 if info.basis_kind == GRAM else 2,
                  lr=1e-3 if info.basis_kind == BSPLINE or not info.meta else 5e-3,
                  augment=dataset in ("cifar10", "cifar100"))
    kw.update(overrides)
    return ExperimentConfig(**kw)


def config_from_dict(d):
    d = dict(d)
    scheme = d.pop("scheme", None)
    if scheme is None:
        raise ConfigError("config is missing the 'scheme' key")
    dataset = d.pop("dataset", "mnist")
    seed = d.pop("seed", 0)
    try:
        return default_config(scheme, dataset, seed, **d)
    except TypeError as exc:
        raise ConfigError(f"bad config key: {exc}") from exc


def _basis_spec(cfg):
    info = parse_scheme(cfg.scheme)
    return BasisSpec(kind=info.basis_kind, degree=cfg.degree, grid_size=cfg.grid_size,
                     num_centers=cfg.num_centers, grid_min=cfg.grid_min,
                     grid_max=cfg.grid_max)


def build_model(cfg, input_shape, num_classes):
    """input_shape is (C, H, W) for conv schemes, a feature count otherwise."""
    info = parse_scheme(cfg.scheme)
    basis = _basis_spec(cfg)
    base_enabled = info.basis_kind != GRAM  # Gram already carries a constant term
    if info.conv:
        specs = []
        c_prev = input_shape[0]
        for c in cfg.conv_channels:
            specs.append(KanLayerSpec(kind="conv", basis=basis, in_channels=c_prev,
                                      out_channels=c, base_enabled=base_enabled,
                                      dropout_rate=cfg.dropout))
            c_prev = c
        arch = ConvKanArch(specs, num_classes, head_dropout=cfg.head_dropout)
    else:
        in_dim = int(np.prod(input_shape))
        dims = [in_dim] + list(cfg.hidden_dims) + [num_classes]
        specs = [KanLayerSpec(kind="dense", basis=basis, in_features=dims[i],
                              out_features=dims[i + 1], base_enabled=base_enabled,
                              dropout_rate=cfg.dropout)
                 for i in range(len(dims) - 1)]
        arch = DenseKanArch(specs)
    rng = np.random.default_rng(cfg.seed)
    source = MetaSource(arch, cfg.d_emb) if info.meta else PlainSource(arch)
    return KanModel.create(arch, source, rng)


def _make_optimizer(model, cfg, stage):
    residuals = model.residual_names()
    if stage == "finetune":
        groups = [ParamGroup(model.source.param_names() + residuals, cfg.lr_finetune,
                             cfg.weight_decay)]
    elif model.source.kind == "meta":
        cosine = cfg.epochs if cfg.cosine_schedule else 0
        meta_names = ["meta_w1", "meta_b1", "meta_w2", "meta_b2"]
        groups = [
            ParamGroup(meta_names, cfg.lr_meta, cfg.weight_decay, cosine),
            ParamGroup(["emb_z"], cfg.lr_emb, cfg.weight_decay, cosine),
            ParamGroup(residuals, cfg.lr if model.arch.kind == "conv" else cfg.lr_meta,
                       cfg.weight_decay),
        ]
    else:
        groups = [ParamGroup(model.source.param_names() + residuals, cfg.lr,
                             cfg.weight_decay)]
    return AdamW(model.params, groups)


def _prepare(arch, images):
    if arch.kind == "dense":
        return images.reshape(images.shape[0], -1)
    return images


def evaluate_accuracy(model, ds, batch_size=512):
    """Deterministic top-1 accuracy (no dropout)."""
    hits = 0
    for images, labels in iterate_batches(ds, batch_size):
        logits = model.predict_logits(_prepare(model.arch, images))
        hits += int((logits.argmax(axis=1) == labels).sum())
    return hits / len(ds)


def _train_model(model, cfg, train_ds, val_ds, epochs, patience, stage, log=None):
    opt = _make_optimizer(model, cfg, stage)
    stopper = EarlyStopping(patience)
    data_rng = np.random.default_rng(cfg.seed + 0x5EED)
    step = 0
    history = []
    for epoch in range(epochs):
        opt.set_epoch(epoch)
        for images, labels in iterate_batches(train_ds, cfg.batch_size, data_rng):
            if cfg.augment and model.arch.kind == "conv" and stage != "eval":
                images = augment_batch(images, data_rng)
            x = _prepare(model.arch, images)
            logits, cache = model.forward(x, training=True, rng=data_rng)
            loss, d_logits = softmax_cross_entropy(logits, labels)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at step {step}")
            grads = model.backward(cache, d_logits)
            opt.step(grads)
            step += 1
        val_acc = evaluate_accuracy(model, val_ds)
        history.append({"epoch": epoch, "val_accuracy": val_acc})
        if log:
            log(f"[{stage}] epoch {epoch}: val_acc={val_acc:.4f}")
        if not stopper.check(val_acc, model.params):
            break
    stopper.restore(model.params)
    return history


def run_training(cfg, train_ds, val_ds, log=None):
    """Stage 1: train the (plain or meta) scheme with early stopping."""
    t0 = time.time()
    model = build_model(cfg, train_ds.images.shape[1:], train_ds.class_count)
    history = _train_model(model, cfg, train_ds, val_ds, cfg.epochs, cfg.patience,
                           "train", log)
    record = {
        "stage": "train",
        "epochs_run": len(history),
        "history": history,
        "val_accuracy": evaluate_accuracy(model, val_ds),
        "memory": memory_report(model).to_dict(),
        "wall_clock_sec": time.time() - t0,
    }
    return model, record


def run_cluster_stage(model, cfg, val_ds=None, log=None):
    """Stage 2: K-means the materialized coefficients, drop the generator."""
    t0 = time.time()
    ccfg = ClusterConfig(k=cfg.clusters, scope=cfg.cluster_scope,
                         max_iters=cfg.cluster_max_iters, tol=cfg.cluster_tol,
                         seed=cfg.seed)
    books = fit_codebooks(model, ccfg)
    clustered = build_clustered_model(model, books, shared=ccfg.scope == SCOPE_GLOBAL)
    record = {
        "stage": "cluster",
        "clusters": cfg.clusters,
        "scope": cfg.cluster_scope,
        "memory": memory_report(clustered).to_dict(),
        "wall_clock_sec": time.time() - t0,
    }
    if val_ds is not None:
        record["val_accuracy"] = evaluate_accuracy(clustered, val_ds)
        if log:
            log(f"[cluster] val_acc={record['val_accuracy']:.4f}")
    return clustered, record


def run_finetune(model, cfg, train_ds, val_ds, log=None):
    """Stage 3: brief centroid + residual training; assignments frozen."""
    if not isinstance(model.source, ClusteredSource):
        raise ConfigError("fine-tuning requires a clustered model")
    t0 = time.time()
    history = []
    if cfg.finetune_epochs > 0:
        history = _train_model(model, cfg, train_ds, val_ds, cfg.finetune_epochs,
                               cfg.finetune_patience, "finetune", log)
    record = {
        "stage": "finetune",
        "epochs_run": len(history),
        "history": history,
        "wall_clock_sec": time.time() - t0,
    }
    if val_ds is not None:
        record["val_accuracy"] = evaluate_accuracy(model, val_ds)
    return model, record


def export_coefficients(model, path):
    """One CSV row per edge: layer id, edge id, D' coefficient values."""
    mats = model.materialized_coeffs()
    width = max(m.shape[1] for m in mats)
    with open(path, "w") as f:
        f.write("layer,edge," + ",".join(f"c{i}" for i in range(width)) + "\n")
        for li, mat in enumerate(mats):
            for ei in range(mat.shape[0]):
                vals = ",".join(f"{v:.9g}" for v in mat[ei])
                f.write(f"{li},{ei},{vals}\n")


def load_splits(cfg, data_dir):
    train_full = load_dataset(cfg.dataset, data_dir, train=True)
    test_ds = load_dataset(cfg.dataset, data_dir, train=False)
    train_ds, val_ds = split_train_val(
        train_full, SplitSpec(val_fraction=cfg.val_fraction, seed=cfg.seed))
    return train_ds, val_ds, test_ds


def run_pipeline(cfg, data_dir, log=None):
    """All three stages; returns (final model, full RunRecord)."""
    info = parse_scheme(cfg.scheme)
    t0 = time.time()
    train_ds, val_ds, test_ds = load_splits(cfg, data_dir)
    model, train_rec = run_training(cfg, train_ds, val_ds, log)
    train_rec["test_accuracy"] = evaluate_accuracy(model, test_ds)
    stages = [train_rec]
    final = model
    if info.cluster:
        clustered, cluster_rec = run_cluster_stage(model, cfg, val_ds, log)
        cluster_rec["test_accuracy"] = evaluate_accuracy(clustered, test_ds)
        stages.append(cluster_rec)
        final, ft_rec = run_finetune(clustered, cfg, train_ds, val_ds, log)
        ft_rec["test_accuracy"] = evaluate_accuracy(final, test_ds)
        stages.append(ft_rec)
    record = {
        "scheme": cfg.scheme,
        "dataset": cfg.dataset,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "kernel_backend": kernels.backend_name(),
        "stages": stages,
        "memory": memory_report(final).to_dict(),
        "wall_clock_sec": time.time() - t0,
    }
    return final, record
