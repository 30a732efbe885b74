"""Affine-ReLU-affine generator mapping per-edge embeddings to coefficients.

One generator serves every KAN layer with the same materialized width; the
embedding table holds one row per edge across all served layers, and the
generated matrix is sliced back into per-layer views by recorded edge
ranges. Both objects exist only during training and are dropped once the
model has been clustered.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

HIDDEN_DIM = 32


@dataclass
class MetaLearner:
    w1: np.ndarray  # (hidden, d_emb)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (d_out, hidden)
    b2: np.ndarray  # (d_out,)

    @property
    def d_emb(self):
        return self.w1.shape[1]

    @property
    def d_out(self):
        return self.w2.shape[0]


@dataclass
class EmbeddingTable:
    z: np.ndarray  # (n_edges, d_emb)
    ranges: list = field(default_factory=list)  # (start, stop) per served layer


def init_meta_learner(d_emb, d_out, rng, hidden=HIDDEN_DIM, dtype=np.float32,
                      out_scale=1.0):
    """Kaiming-uniform fan-in init for the generator weights.

    ``out_scale`` shrinks the output layer so the generated coefficients
    start at the same magnitude as directly-initialized ones; without it
    the generated rows are O(1) and the downstream layers saturate (or,
    for B-splines, extrapolate explosively) from the first step.
    """
    lim1 = np.sqrt(6.0 / d_emb)
    lim2 = np.sqrt(6.0 / hidden) * out_scale
    return MetaLearner(
        w1=rng.uniform(-lim1, lim1, size=(hidden, d_emb)).astype(dtype),
        b1=np.zeros(hidden, dtype=dtype),
        w2=rng.uniform(-lim2, lim2, size=(d_out, hidden)).astype(dtype),
        b2=np.zeros(d_out, dtype=dtype),
    )


def init_embeddings(edge_counts, d_emb, rng, dtype=np.float32):
    """One uniform[-1, 1] embedding row per edge, with per-layer ranges."""
    total = int(sum(edge_counts))
    ranges, start = [], 0
    for n in edge_counts:
        ranges.append((start, start + int(n)))
        start += int(n)
    return EmbeddingTable(z=rng.uniform(-1.0, 1.0, size=(total, d_emb)).astype(dtype),
                          ranges=ranges)


def generate_weights(m, table, relu=True):
    """Materialize the full edge-parameter matrix: W2 relu(W1 z + b1) + b2.

    ``relu=False`` exists for rank tests only (the manifold bound is exact
    for the purely affine configuration).
    """
    z = table.z
    if z.ndim != 2 or z.shape[1] != m.d_emb:
        raise DimensionError(f"embeddings {z.shape} do not match d_emb={m.d_emb}")
    pre = z @ m.w1.T + m.b1
    hid = np.maximum(pre, 0.0) if relu else pre
    out = hid @ m.w2.T + m.b2
    cache = {"z": z, "pre": pre, "hid": hid, "relu": relu}
    return out, cache


def slice_layers(out, table):
    return [out[a:b] for a, b in table.ranges]


def meta_backward(m, cache, d_params):
    """Chain-rule gradients of the generated matrix back onto (W1,b1,W2,b2,z)."""
    hid, pre, z = cache["hid"], cache["pre"], cache["z"]
    if d_params.shape != (z.shape[0], m.d_out):
        raise DimensionError(
            f"d_params {d_params.shape} does not match generated shape "
            f"{(z.shape[0], m.d_out)}")
    d_w2 = d_params.T @ hid
    d_b2 = d_params.sum(axis=0)
    d_hid = d_params @ m.w2
    d_pre = d_hid * (pre > 0) if cache["relu"] else d_hid
    d_w1 = d_pre.T @ z
    d_b1 = d_pre.sum(axis=0)
    d_z = d_pre @ m.w1
    return d_w1, d_b1, d_w2, d_b2, d_z
