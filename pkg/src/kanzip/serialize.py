"""Binary "KANC" checkpoint format.

Layout (all integers little-endian):

    magic "KANC" | version u16
    descriptor: u32 byte length + canonical JSON (arch, source kind,
        shared flag, residual names/shapes)
    per KAN layer, flag u8 then payload:
        0 plain:     u32 n, u32 D', f32 coefficient matrix
        1 clustered: u32 k, u32 D', f32 centroids, u32 n, packed indices
        2 clustered, shared codebook (global scope, layers after the
          first): u32 n, packed indices
    residual parameter blocks, raw f32, in descriptor order
    CRC32 u32 of every preceding byte

Indices are packed at ceil(log2 k) bits each, MSB-first within bytes,
zero-padded to a byte boundary per layer. Meta-learner models are saved
with their materialized coefficients (the generator is training-time
state and is not persisted).
"""
import json
import struct
import zlib

import numpy as np

from .codebook import index_bit_width
from .errors import DataFormatError
from .network import ClusteredSource, KanModel, PlainSource, arch_from_dict

MAGIC = b"KANC"
VERSION = 1

FLAG_PLAIN = 0
FLAG_CLUSTERED = 1
FLAG_CLUSTERED_SHARED = 2


def pack_indices(indices, k):
    """Bit-pack index array at ceil(log2 k) bits, MSB-first within bytes."""
    width = index_bit_width(k)
    if width == 0:
        return b""
    idx = np.asarray(indices, dtype=np.uint32)
    bits = ((idx[:, None] >> np.arange(width - 1, -1, -1, dtype=np.uint32)) & 1)
    return np.packbits(bits.astype(np.uint8).ravel()).tobytes()


def unpack_indices(data, n, k):
    width = index_bit_width(k)
    if width == 0:
        return np.zeros(n, dtype=np.int32)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=n * width)
    weights = (1 << np.arange(width - 1, -1, -1, dtype=np.int64))
    return (bits.reshape(n, width) @ weights).astype(np.int32)


class _Writer:
    def __init__(self):
        self.parts = []

    def raw(self, data):
        self.parts.append(bytes(data))

    def u8(self, v):
        self.raw(struct.pack("<B", v))

    def u16(self, v):
        self.raw(struct.pack("<H", v))

    def u32(self, v):
        self.raw(struct.pack("<I", v))

    def f32_array(self, a):
        self.raw(np.ascontiguousarray(a, dtype="<f4").tobytes())

    def getvalue(self):
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.off = 0

    def take(self, n):
        if self.off + n > len(self.data):
            raise DataFormatError(
                f"truncated file: needed {n} bytes at offset {self.off}")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def u8(self):
        return struct.unpack("<B", self.take(1))[0]

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def f32_array(self, shape):
        count = int(np.prod(shape))
        return np.frombuffer(self.take(count * 4), dtype="<f4").reshape(shape).copy()


def model_bytes(model):
    if model.source.kind == "meta":
        mats = [m.astype(np.float32) for m in model.materialized_coeffs()]
        params = {f"coeffs{i}": m for i, m in enumerate(mats)}
        for name in model.arch.residual_shapes():
            params[name] = model.params[name]
        model = KanModel(model.arch, PlainSource(model.arch), params)
    clustered = isinstance(model.source, ClusteredSource)
    shared = clustered and model.source.shared
    residuals = [[name, list(shape)]
                 for name, shape in model.arch.residual_shapes().items()]
    descriptor = {
        "arch": model.arch.to_dict(),
        "source": "clustered" if clustered else "plain",
        "shared": shared,
        "residuals": residuals,
    }
    w = _Writer()
    w.raw(MAGIC)
    w.u16(VERSION)
    desc = json.dumps(descriptor, sort_keys=True, separators=(",", ":")).encode()
    w.u32(len(desc))
    w.raw(desc)
    for i, spec in enumerate(model.arch.layer_specs):
        if not clustered:
            mat = model.params[f"coeffs{i}"]
            w.u8(FLAG_PLAIN)
            w.u32(mat.shape[0])
            w.u32(mat.shape[1])
            w.f32_array(mat)
            continue
        assignments = model.source.assignments[i]
        centroids = model.source._centroids(model.params, i)
        k = centroids.shape[0]
        if shared and i > 0:
            w.u8(FLAG_CLUSTERED_SHARED)
        else:
            w.u8(FLAG_CLUSTERED)
            w.u32(k)
            w.u32(centroids.shape[1])
            w.f32_array(centroids)
        w.u32(assignments.shape[0])
        w.raw(pack_indices(assignments, k))
    for name, shape in residuals:
        w.f32_array(model.params[name])
    body = w.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model, path):
    with open(path, "wb") as f:
        f.write(model_bytes(model))


def load_model_bytes(data):
    if len(data) < 4:
        raise DataFormatError("truncated file: missing CRC")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise DataFormatError("CRC mismatch: file is corrupt")
    r = _Reader(body)
    if r.take(4) != MAGIC:
        raise DataFormatError("bad magic: not a KANC checkpoint")
    version = r.u16()
    if version != VERSION:
        raise DataFormatError(f"unsupported KANC version {version}")
    try:
        descriptor = json.loads(r.take(r.u32()).decode())
        arch = arch_from_dict(descriptor["arch"])
    except (ValueError, KeyError) as exc:
        raise DataFormatError(f"malformed descriptor: {exc}") from exc
    params = {}
    clustered = descriptor["source"] == "clustered"
    shared = descriptor.get("shared", False)
    assignments = []
    shared_k = None
    for i, spec in enumerate(arch.layer_specs):
        flag = r.u8()
        if flag == FLAG_PLAIN:
            n, dp = r.u32(), r.u32()
            if n != spec.n_edges or dp != spec.param_width:
                raise DataFormatError(
                    f"layer {i} shape ({n}, {dp}) disagrees with descriptor")
            params[f"coeffs{i}"] = r.f32_array((n, dp))
        elif flag in (FLAG_CLUSTERED, FLAG_CLUSTERED_SHARED):
            if flag == FLAG_CLUSTERED:
                k, dp = r.u32(), r.u32()
                name = "centroids0" if shared else f"centroids{i}"
                params[name] = r.f32_array((k, dp))
                shared_k = k
            else:
                if shared_k is None:
                    raise DataFormatError(
                        f"layer {i} references a shared codebook before one exists")
                k = shared_k
            n = r.u32()
            width = index_bit_width(k)
            packed = r.take((n * width + 7) // 8)
            idx = unpack_indices(packed, n, k)
            if idx.size and idx.max() >= k:
                raise DataFormatError(f"layer {i} index out of range")
            assignments.append(idx)
        else:
            raise DataFormatError(f"unknown layer flag {flag} at offset {r.off - 1}")
    for name, shape in descriptor["residuals"]:
        params[name] = r.f32_array(tuple(shape))
    if r.off != len(body):
        raise DataFormatError(f"{len(body) - r.off} trailing bytes at offset {r.off}")
    if clustered:
        source = ClusteredSource(arch, assignments, shared=shared)
    else:
        source = PlainSource(arch)
    return KanModel(arch, source, params)


def load_model(path):
    with open(path, "rb") as f:
        return load_model_bytes(f.read())
