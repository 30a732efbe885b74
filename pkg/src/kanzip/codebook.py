"""Compressed model construction and the storage/compression accounting.

A clustered model stores, per KAN layer, a k x D' centroid table and a
per-edge index array; biases and the conv classifier head stay
uncompressed. The byte accounting mirrors the analytic compression model
(see :func:`vector_compression_factor`) with indices rounded up to whole
bits and bytes.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import SCOPE_GLOBAL, Codebook, kmeans_fit
from .errors import IntegrityError
from .network import ClusteredSource, KanModel


def index_bit_width(k):
    """Bits per stored index: ceil(log2 k); 0 for a single centroid."""
    return max(int(math.ceil(math.log2(k))), 0) if k > 1 else 0


def scalar_compression_factor(n, k, b):
    """Shared-scalar codebook model: r = n b / (n log2 k + k b)."""
    return (n * b) / (n * math.log2(k) + k * b)

def vector_compression_factor(n, coeff_width, k, b):
    """Shared-vector codebook model: r = n w b / (n log2 k + w k b)."""
    return (n * coeff_width * b) / (n * math.log2(k) + coeff_width * k * b)


@dataclass
class LayerMemory:
    name: str
    n_edges: int
    coeff_width: int
    index_bits: int
    codebook_bytes: int

    @property
    def total_bytes(self):
        return (self.index_bits + 7) // 8 + self.codebook_bytes


@dataclass
class MemoryReport:
    layers: list = field(default_factory=list)
    residual_bytes: int = 0
    uncompressed_bytes: int = 0

    @property
    def index_bits(self):
        return sum(l.index_bits for l in self.layers)

    @property
    def codebook_bytes(self):
        return sum(l.codebook_bytes for l in self.layers)

    @property
    def total_bytes(self):
        return sum(l.total_bytes for l in self.layers) + self.residual_bytes

    @property
    def compression_factor(self):
        return self.uncompressed_bytes / self.total_bytes

    def to_dict(self):
        return {
            "layers": [
                {
                    "name": l.name,
                    "n_edges": l.n_edges,
                    "coeff_width": l.coeff_width,
                    "index_bits": l.index_bits,
                    "codebook_bytes": l.codebook_bytes,
                    "total_bytes": l.total_bytes,
                }
                for l in self.layers
            ],
            "index_bits": self.index_bits,
            "codebook_bytes": self.codebook_bytes,
            "residual_bytes": self.residual_bytes,
            "total_bytes": self.total_bytes,
            "total_kb": self.total_bytes / 1024.0,
            "uncompressed_bytes": self.uncompressed_bytes,
            "uncompressed_kb": self.uncompressed_bytes / 1024.0,
            "compression_factor": self.compression_factor,
        }


def memory_report(model, bits_per_scalar=32):
    """Byte accounting for a plain or clustered :class:`KanModel`."""
    b = bits_per_scalar
    specs = model.arch.layer_specs
    residual_bytes = sum(
        int(np.prod(shape)) * b // 8 for shape in model.arch.residual_shapes().values())
    uncompressed = sum(s.n_edges * s.param_width * b // 8 for s in specs) + residual_bytes
    report = MemoryReport(residual_bytes=residual_bytes, uncompressed_bytes=uncompressed)
    clustered = isinstance(model.source, ClusteredSource)
    for i, spec in enumerate(specs):
        if clustered:
            centroids = model.source._centroids(model.params, i)
            k = centroids.shape[0]
            # a shared (global-scope) codebook is stored and counted once
            counted = not (model.source.shared and i > 0)
            report.layers.append(LayerMemory(
                name=f"layer{i}",
                n_edges=spec.n_edges,
                coeff_width=spec.param_width,
                index_bits=spec.n_edges * index_bit_width(k),
                codebook_bytes=k * spec.param_width * b // 8 if counted else 0,
            ))
        else:
            report.layers.append(LayerMemory(
                name=f"layer{i}",
                n_edges=spec.n_edges,
                coeff_width=spec.param_width,
                index_bits=0,
                codebook_bytes=spec.n_edges * spec.param_width * b // 8,
            ))
    return report


def fit_codebooks(model, cfg):
    """K-means over the materialized coefficient rows of every KAN layer.

    Returns a list of per-layer :class:`Codebook`. Under global scope all
    layers are clustered jointly and share one centroid table.
    """
    mats = model.materialized_coeffs()
    if cfg.scope == SCOPE_GLOBAL:
        widths = {m.shape[1] for m in mats}
        if len(widths) != 1:
            raise IntegrityError("global clustering requires a uniform coefficient width")
        stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in mats], axis=0)
        cb, _ = kmeans_fit(stacked, cfg)
        books, start = [], 0
        for m in mats:
            stop = start + m.shape[0]
            books.append(Codebook(centroids=cb.centroids,
                                  assignments=cb.assignments[start:stop]))
            start = stop
        return books
    books = []
    for i, m in enumerate(mats):
        layer_cfg = type(cfg)(k=cfg.k, scope=cfg.scope, max_iters=cfg.max_iters,
                              tol=cfg.tol, seed=cfg.seed + i)
        cb, _ = kmeans_fit(np.asarray(m, dtype=np.float64), layer_cfg)
        books.append(cb)
    return books


def build_clustered_model(model, codebooks, shared=False):
    """Swap the model's parameter source for frozen codebook lookups.

    The meta-learner and embeddings (if any) do not survive: the new model
    holds only centroid tables and the residual parameters.
    """
    specs = model.arch.layer_specs
    if len(codebooks) != len(specs):
        raise IntegrityError(
            f"{len(codebooks)} codebooks for {len(specs)} KAN layers")
    source = ClusteredSource(model.arch, [cb.assignments for cb in codebooks],
                             shared=shared)
    params = {}
    if shared:
        params["centroids0"] = codebooks[0].centroids.astype(np.float32)
    else:
        for i, cb in enumerate(codebooks):
            params[f"centroids{i}"] = cb.centroids.astype(np.float32)
    for name in model.arch.residual_shapes():
        params[name] = model.params[name].copy()
    return KanModel(model.arch, source, params)
