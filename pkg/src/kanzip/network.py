"""Model assembly: architectures, parameter sources, and the KanModel shell.

An architecture consumes *materialized* per-layer coefficient matrices; a
parameter source produces those matrices from its own trainable arrays
(plain coefficients, a meta-learner + embeddings, or a codebook) and
routes coefficient gradients back onto them. Equal materialized matrices
therefore give bit-identical forward outputs regardless of source.
"""
import numpy as np

from . import layers as L
from . import meta as M
from .errors import DimensionError, IntegrityError
from .layers import KanLayerSpec


def _coeff_init(spec, rng, dtype=np.float32):
    n_in_eff = spec.in_features if spec.kind == "dense" else spec.in_channels * 9
    d = spec.basis.coeff_dim
    std = 1.0 / np.sqrt(max(n_in_eff * d, 1))
    mat = rng.normal(0.0, std, size=(spec.n_edges, spec.param_width))
    if spec.base_enabled:
        mat[:, -1] = rng.normal(0.0, 1.0 / np.sqrt(max(n_in_eff, 1)), size=spec.n_edges)
    return mat.astype(dtype)


class DenseKanArch:
    """A stack of dense KAN layers; input is pre-flattened."""

    kind = "dense"

    def __init__(self, layer_specs):
        self.layer_specs = list(layer_specs)

    @property
    def num_classes(self):
        return self.layer_specs[-1].out_features

    def residual_shapes(self):
        return {f"bias{i}": (s.out_features,) for i, s in enumerate(self.layer_specs)}

    def forward(self, coeffs, residuals, x, training=False, rng=None):
        caches = []
        h = x
        for i, spec in enumerate(self.layer_specs):
            h, cache = L.kan_dense_forward(spec, coeffs[i], residuals[f"bias{i}"], h,
                                           training, rng)
            caches.append(cache)
        return h, caches

    def backward(self, caches, d_logits):
        d_coeffs = [None] * len(self.layer_specs)
        d_res = {}
        up = d_logits
        for i in reversed(range(len(self.layer_specs))):
            g = L.kan_dense_backward(caches[i], up)
            d_coeffs[i] = g.d_coeffs
            d_res[f"bias{i}"] = g.d_bias
            up = g.d_input
        return d_coeffs, d_res

    def to_dict(self):
        return {"type": "dense", "layers": [s.to_dict() for s in self.layer_specs]}


class ConvKanArch:
    """Conv KAN blocks (3x3 KAN conv -> 2x2 max pool), then global average
    pooling and a plain affine classifier with dropout."""

    kind = "conv"

    def __init__(self, layer_specs, num_classes, head_dropout=0.5):
        self.layer_specs = list(layer_specs)
        self.num_classes = num_classes
        self.head_dropout = head_dropout

    def residual_shapes(self):
        shapes = {f"bias{i}": (s.out_channels,) for i, s in enumerate(self.layer_specs)}
        feat = self.layer_specs[-1].out_channels
        shapes["head_w"] = (self.num_classes, feat)
        shapes["head_b"] = (self.num_classes,)
        return shapes

    def forward(self, coeffs, residuals, x, training=False, rng=None):
        caches = {"conv": [], "pool": []}
        h = x
        for i, spec in enumerate(self.layer_specs):
            h, cache = L.kan_conv_forward(spec, coeffs[i], residuals[f"bias{i}"], h,
                                          training, rng)
            caches["conv"].append(cache)
            h, pc = L.maxpool2x2_forward(h)
            caches["pool"].append(pc)
        h, caches["gap"] = L.global_avgpool_forward(h)
        h, caches["drop"] = L.dropout_forward(h, self.head_dropout, training, rng)
        logits, caches["head"] = L.affine_forward(residuals["head_w"],
                                                  residuals["head_b"], h)
        return logits, caches

    def backward(self, caches, d_logits):
        d_w, d_h, d_b = L.affine_backward(caches["head"], d_logits)
        d_res = {"head_w": d_w, "head_b": d_b}
        d_h = L.dropout_backward(caches["drop"], d_h)
        d_h = L.global_avgpool_backward(caches["gap"], d_h)
        d_coeffs = [None] * len(self.layer_specs)
        for i in reversed(range(len(self.layer_specs))):
            d_h = L.maxpool2x2_backward(caches["pool"][i], d_h)
            g = L.kan_conv_backward(caches["conv"][i], d_h)
            d_coeffs[i] = g.d_coeffs
            d_res[f"bias{i}"] = g.d_bias
            d_h = g.d_input
        return d_coeffs, d_res

    def to_dict(self):
        return {
            "type": "conv",
            "layers": [s.to_dict() for s in self.layer_specs],
            "num_classes": self.num_classes,
            "head_dropout": self.head_dropout,
        }


def arch_from_dict(d):
    specs = [KanLayerSpec.from_dict(s) for s in d["layers"]]
    if d["type"] == "dense":
        return DenseKanArch(specs)
    return ConvKanArch(specs, d["num_classes"], d.get("head_dropout", 0.5))


class PlainSource:
    """Each layer owns its coefficient matrix directly."""

    kind = "plain"

    def __init__(self, arch):
        self.arch = arch

    def param_names(self):
        return [f"coeffs{i}" for i in range(len(self.arch.layer_specs))]

    def init_params(self, rng):
        return {f"coeffs{i}": _coeff_init(s, rng)
                for i, s in enumerate(self.arch.layer_specs)}

    def materialize(self, params):
        return [params[f"coeffs{i}"] for i in range(len(self.arch.layer_specs))], None

    def grads(self, params, ctx, d_coeffs):
        return {f"coeffs{i}": g.astype(params[f"coeffs{i}"].dtype)
                for i, g in enumerate(d_coeffs)}


class MetaSource:
    """Coefficients are generated per forward pass from embeddings."""

    kind = "meta"

    def __init__(self, arch, d_emb, hidden=M.HIDDEN_DIM):
        widths = {s.param_width for s in arch.layer_specs}
        if len(widths) != 1:
            raise IntegrityError("one meta-learner requires a uniform coefficient width")
        self.arch = arch
        self.d_emb = d_emb
        self.hidden = hidden
        self.d_out = widths.pop()
        self.ranges = None  # filled by init_params or attach

    def param_names(self):
        return ["meta_w1", "meta_b1", "meta_w2", "meta_b2", "emb_z"]

    def _out_scale(self):
        # match the magnitude of _coeff_init for the widest served layer
        n_eff = max(s.in_features if s.kind == "dense" else s.in_channels * 9
                    for s in self.arch.layer_specs)
        return 1.0 / np.sqrt(n_eff * self.arch.layer_specs[0].basis.coeff_dim)

    def init_params(self, rng, dtype=np.float32):
        ml = M.init_meta_learner(self.d_emb, self.d_out, rng, self.hidden, dtype,
                                 out_scale=self._out_scale())
        table = M.init_embeddings([s.n_edges for s in self.arch.layer_specs],
                                  self.d_emb, rng, dtype)
        self.ranges = table.ranges
        return {"meta_w1": ml.w1, "meta_b1": ml.b1, "meta_w2": ml.w2, "meta_b2": ml.b2,
                "emb_z": table.z}

    def _learner(self, params):
        return M.MetaLearner(params["meta_w1"], params["meta_b1"],
                             params["meta_w2"], params["meta_b2"])

    def materialize(self, params):
        table = M.EmbeddingTable(z=params["emb_z"], ranges=self.ranges)
        out, cache = M.generate_weights(self._learner(params), table)
        return M.slice_layers(out, table), cache

    def grads(self, params, ctx, d_coeffs):
        d_params = np.concatenate([np.asarray(g, dtype=params["emb_z"].dtype)
                                   for g in d_coeffs], axis=0)
        d_w1, d_b1, d_w2, d_b2, d_z = M.meta_backward(self._learner(params), ctx,
                                                      d_params)
        return {"meta_w1": d_w1, "meta_b1": d_b1, "meta_w2": d_w2, "meta_b2": d_b2,
                "emb_z": d_z}


class ClusteredSource:
    """Coefficients come from per-layer codebooks; assignments are frozen.

    ``shared`` marks globally-scoped clustering, where all layers read one
    centroid table (stored once, under the name "centroids0").
    """

    kind = "clustered"

    def __init__(self, arch, assignments, shared=False):
        if len(assignments) != len(arch.layer_specs):
            raise IntegrityError("every KAN layer needs an assignment array")
        for spec, a in zip(arch.layer_specs, assignments):
            if a.shape[0] != spec.n_edges:
                raise IntegrityError(
                    f"assignment length {a.shape[0]} != edge count {spec.n_edges}")
        self.arch = arch
        self.assignments = [np.asarray(a, dtype=np.int32) for a in assignments]
        self.shared = shared

    def param_names(self):
        if self.shared:
            return ["centroids0"]
        return [f"centroids{i}" for i in range(len(self.arch.layer_specs))]

    def _centroids(self, params, i):
        return params["centroids0" if self.shared else f"centroids{i}"]

    def materialize(self, params):
        return [self._centroids(params, i)[a]
                for i, a in enumerate(self.assignments)], None

    def grads(self, params, ctx, d_coeffs):
        grads = {name: np.zeros_like(params[name]) for name in self.param_names()}
        for i, (a, g) in enumerate(zip(self.assignments, d_coeffs)):
            name = "centroids0" if self.shared else f"centroids{i}"
            np.add.at(grads[name], a, g.astype(grads[name].dtype))
        return grads


class KanModel:
    """Architecture + parameter source + one flat dict of trainable arrays."""

    def __init__(self, arch, source, params):
        self.arch = arch
        self.source = source
        self.params = params

    @classmethod
    def create(cls, arch, source, rng):
        params = source.init_params(rng)
        res_rng = rng
        for name, shape in arch.residual_shapes().items():
            if name == "head_w":
                lim = np.sqrt(6.0 / shape[1])
                params[name] = res_rng.uniform(-lim, lim, size=shape).astype(np.float32)
            else:
                params[name] = np.zeros(shape, dtype=np.float32)
        return cls(arch, source, params)

    def residual_names(self):
        return list(self.arch.residual_shapes())

    def materialized_coeffs(self):
        mats, _ = self.source.materialize(self.params)
        return mats

    def forward(self, x, training=False, rng=None):
        mats, ctx = self.source.materialize(self.params)
        logits, caches = self.arch.forward(mats, self.params, x, training, rng)
        return logits, (caches, ctx)

    def backward(self, cache, d_logits):
        caches, ctx = cache
        d_coeffs, d_res = self.arch.backward(caches, d_logits)
        grads = self.source.grads(self.params, ctx, d_coeffs)
        grads.update(d_res)
        return grads

    def predict_logits(self, x):
        logits, _ = self.forward(x, training=False)
        return logits


def softmax_cross_entropy(logits, labels):
    """Mean CE over the batch; returns (loss, d_logits)."""
    if logits.shape[0] != labels.shape[0]:
        raise DimensionError("logits/labels batch mismatch")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    nll = -np.log(np.maximum(probs[np.arange(n), labels], 1e-30))
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    return float(nll.mean()), d_logits / n
