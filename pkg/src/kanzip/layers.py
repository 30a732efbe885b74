"""Dense and convolutional KAN layers with analytic forward/backward.

A layer never owns its coefficients: forward passes take a materialized
edge-parameter matrix, so plain, meta-generated, and clustered sources are
interchangeable. Row order is ``out * n_in + in`` for dense layers and
``((c_out * C_in + c_in) * 3 + ky) * 3 + kx`` for 3x3 conv layers.

When the SiLU base term is enabled, the per-edge base weight is the last
column of the matrix, so D' = coeff_dim + 1.
"""
from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, evaluate_array
from .errors import DimensionError

CONV_KERNEL = 3  # 3x3, stride 1, padding 1 is the only supported geometry


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def silu_grad(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


@dataclass(frozen=True)
class KanLayerSpec:
    kind: str  # "dense" | "conv"
    basis: BasisSpec
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    base_enabled: bool = True
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dense", "conv"):
            raise DimensionError(f"unknown layer kind {self.kind!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise DimensionError("dropout_rate must be in [0, 1)")

    @property
    def n_edges(self):
        if self.kind == "dense":
            return self.out_features * self.in_features
        return self.out_channels * self.in_channels * CONV_KERNEL * CONV_KERNEL

    @property
    def n_out(self):
        return self.out_features if self.kind == "dense" else self.out_channels

    @property
    def param_width(self):
        """Columns of the edge-parameter matrix (D' in the storage model)."""
        return self.basis.coeff_dim + (1 if self.base_enabled else 0)

    def to_dict(self):
        return {
            "kind": self.kind,
            "basis": self.basis.to_dict(),
            "in_features": self.in_features,
            "out_features": self.out_features,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "base_enabled": self.base_enabled,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["basis"] = BasisSpec.from_dict(d["basis"])
        return cls(**d)


@dataclass
class LayerGradients:
    d_coeffs: np.ndarray
    d_input: np.ndarray
    d_bias: np.ndarray


def _expand(spec, x, base_enabled, want_deriv, dtype):
    """Basis values (and d/dx) for every scalar in x, plus the SiLU column."""
    vals, derivs = evaluate_array(spec, x, want_deriv)
    vals = vals.astype(dtype, copy=False)
    if base_enabled:
        vals = np.concatenate([vals, silu(x)[..., None].astype(dtype)], axis=-1)
    if not want_deriv:
        return vals, None
    derivs = derivs.astype(dtype, copy=False)
    if base_enabled:
        derivs = np.concatenate([derivs, silu_grad(x)[..., None].astype(dtype)], axis=-1)
    return vals, derivs


def _dropout_mask(shape, rate, rng, dtype):
    # inverted dropout: surviving units scaled by 1/(1-rate)
    keep = (rng.random(shape) >= rate).astype(dtype)
    return keep / dtype.type(1.0 - rate)


def kan_dense_forward(layer, params, bias, x, training=False, rng=None):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != layer.in_features:
        raise DimensionError(f"expected input (batch, {layer.in_features}), got {x.shape}")
    dp = layer.param_width
    if params.shape != (layer.n_edges, dp):
        raise DimensionError(f"expected params {(layer.n_edges, dp)}, got {params.shape}")
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.dtype(np.float64)
    mask = None
    if training and layer.dropout_rate > 0.0:
        mask = _dropout_mask(x.shape, layer.dropout_rate, rng, dtype)
        x = x * mask
    vals, _ = _expand(layer.basis, x, layer.base_enabled, False, dtype)
    w = params.reshape(layer.out_features, layer.in_features, dp)
    out = np.einsum("bid,oid->bo", vals, w, optimize=True) + bias.astype(dtype)
    cache = {"layer": layer, "x": x, "mask": mask, "vals": vals, "w": w, "dtype": dtype}
    return out, cache


def kan_dense_backward(cache, upstream):
    layer = cache["layer"]
    x, vals, w = cache["x"], cache["vals"], cache["w"]
    if upstream.shape != (x.shape[0], layer.out_features):
        raise DimensionError(f"upstream shape {upstream.shape} does not match forward pass")
    upstream = upstream.astype(cache["dtype"], copy=False)
    d_coeffs = np.einsum("bo,bid->oid", upstream, vals, optimize=True)
    d_coeffs = d_coeffs.reshape(layer.n_edges, layer.param_width)
    _, derivs = _expand(layer.basis, x, layer.base_enabled, True, cache["dtype"])
    d_input = np.einsum("bo,oid,bid->bi", upstream, w, derivs, optimize=True)
    if cache["mask"] is not None:
        d_input = d_input * cache["mask"]
    return LayerGradients(d_coeffs=d_coeffs, d_input=d_input, d_bias=upstream.sum(axis=0))


def _im2col3x3(x):
    """(B, C, H, W) -> (B, H*W, C*9) patches under zero padding 1."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((b, c, 9, h, w), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, :, ky * 3 + kx] = xp[:, :, ky:ky + h, kx:kx + w]
    return cols.transpose(0, 3, 4, 1, 2).reshape(b, h * w, c * 9)


def _col2im3x3(dcols, shape):
    """Adjoint of _im2col3x3: scatter-add patches back to the input."""
    b, c, h, w = shape
    dcols = dcols.reshape(b, h, w, c, 9).transpose(0, 3, 4, 1, 2)
    dxp = np.zeros((b, c, h + 2, w + 2), dtype=dcols.dtype)
    for ky in range(3):
        for kx in range(3):
            dxp[:, :, ky:ky + h, kx:kx + w] += dcols[:, :, ky * 3 + kx]
    return dxp[:, :, 1:1 + h, 1:1 + w]


# basis expansion of conv patches is memory-hungry; bound the transient size
_CONV_CHUNK = 8


def kan_conv_forward(layer, params, bias, x, training=False, rng=None):
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != layer.in_channels:
        raise DimensionError(
            f"expected input (batch, {layer.in_channels}, H, W), got {x.shape}")
    dp = layer.param_width
    if params.shape != (layer.n_edges, dp):
        raise DimensionError(f"expected params {(layer.n_edges, dp)}, got {params.shape}")
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.dtype(np.float64)
    mask = None
    if training and layer.dropout_rate > 0.0:
        mask = _dropout_mask(x.shape, layer.dropout_rate, rng, dtype)
        x = x * mask
    b, c, h, w_sp = x.shape
    w = params.reshape(layer.out_channels, layer.in_channels * 9, dp)
    out = np.empty((b, layer.out_channels, h, w_sp), dtype=dtype)
    for lo in range(0, b, _CONV_CHUNK):
        hi = min(lo + _CONV_CHUNK, b)
        cols = _im2col3x3(x[lo:hi])
        vals, _ = _expand(layer.basis, cols, layer.base_enabled, False, dtype)
        chunk = np.einsum("bpid,oid->bpo", vals, w, optimize=True)
        out[lo:hi] = chunk.transpose(0, 2, 1).reshape(hi - lo, layer.out_channels, h, w_sp)
    out += bias.astype(dtype)[None, :, None, None]
    cache = {"layer": layer, "x": x, "mask": mask, "w": w, "dtype": dtype}
    return out, cache


def kan_conv_backward(cache, upstream):
    layer = cache["layer"]
    x, w, dtype = cache["x"], cache["w"], cache["dtype"]
    b, c, h, w_sp = x.shape
    if upstream.shape != (b, layer.out_channels, h, w_sp):
        raise DimensionError(f"upstream shape {upstream.shape} does not match forward pass")
    upstream = upstream.astype(dtype, copy=False)
    d_w = np.zeros_like(w)
    d_input = np.empty_like(x)
    for lo in range(0, b, _CONV_CHUNK):
        hi = min(lo + _CONV_CHUNK, b)
        cols = _im2col3x3(x[lo:hi])
        vals, derivs = _expand(layer.basis, cols, layer.base_enabled, True, dtype)
        up = upstream[lo:hi].reshape(hi - lo, layer.out_channels, h * w_sp).transpose(0, 2, 1)
        d_w += np.einsum("bpo,bpid->oid", up, vals, optimize=True)
        dcols = np.einsum("bpo,oid,bpid->bpi", up, w, derivs, optimize=True)
        d_input[lo:hi] = _col2im3x3(dcols, (hi - lo, c, h, w_sp))
    if cache["mask"] is not None:
        d_input = d_input * cache["mask"]
    d_bias = upstream.sum(axis=(0, 2, 3))
    return LayerGradients(
        d_coeffs=d_w.reshape(layer.n_edges, layer.param_width),
        d_input=d_input,
        d_bias=d_bias,
    )


def maxpool2x2_forward(x):
    b, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    tiles = x[:, :, :h2 * 2, :w2 * 2].reshape(b, c, h2, 2, w2, 2)
    tiles = tiles.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2, w2, 4)
    idx = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
    return out, {"idx": idx, "shape": x.shape}


def maxpool2x2_backward(cache, upstream):
    b, c, h, w = cache["shape"]
    h2, w2 = h // 2, w // 2
    d_tiles = np.zeros((b, c, h2, w2, 4), dtype=upstream.dtype)
    np.put_along_axis(d_tiles, cache["idx"][..., None], upstream[..., None], axis=-1)
    d = d_tiles.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros((b, c, h, w), dtype=upstream.dtype)
    dx[:, :, :h2 * 2, :w2 * 2] = d.reshape(b, c, h2 * 2, w2 * 2)
    return dx


def global_avgpool_forward(x):
    b, c, h, w = x.shape
    return x.mean(axis=(2, 3)), {"shape": x.shape}


def global_avgpool_backward(cache, upstream):
    b, c, h, w = cache["shape"]
    return np.broadcast_to(upstream[:, :, None, None] / (h * w), cache["shape"]).astype(
        upstream.dtype)


def affine_forward(w, bias, x):
    return x @ w.T + bias, {"x": x, "w": w}


def affine_backward(cache, upstream):
    return upstream.T @ cache["x"], upstream @ cache["w"], upstream.sum(axis=0)


def dropout_forward(x, rate, training, rng):
    if not training or rate <= 0.0:
        return x, None
    mask = _dropout_mask(x.shape, rate, rng, x.dtype)
    return x * mask, mask


def dropout_backward(mask, upstream):
    return upstream if mask is None else upstream * mask
