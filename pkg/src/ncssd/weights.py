"""Named tensor store, its binary container, and deterministic initialization.

Container layout (all integers little-endian)::

    b"NCSD" | version:u32 | config_len:u32 | config JSON (UTF-8)
    count:u32
    count x { name_len:u32 | name (UTF-8) | dtype:u8 | rank:u8 | extents:u64*rank | data }

dtype codes: 0 = float32, 1 = float64. Data is raw little-endian, row-major.
Linear weights are stored [in, out]; convolution weights [out, in, kh, kw].
"""

from __future__ import annotations

import io
import math
import struct
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .errors import (
    BadMagicError,
    MissingTensorError,
    ShapeMismatchError,
    TruncatedFileError,
    UnknownDtypeError,
)

MAGIC = b"NCSD"
VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
CODE_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}

# bias for the A head so that softplus(bias) == 1
A_BIAS = math.log(math.e - 1.0)
INIT_STD = 0.02


def context_widths(cfg: ModelConfig) -> list[int]:
    c = cfg.match.context_dim
    narrow = max(8, c // 4)
    return [narrow, narrow, max(8, c // 2), max(8, c // 2), c, c]


def context_strides(cfg: ModelConfig) -> list[int]:
    n_down = int(math.log2(cfg.downsample))
    return [2 if (k % 2 == 0 and k // 2 < n_down) else 1 for k in range(6)]


def weight_spec(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], str]]:
    """Every tensor the assembled model requests: name -> (shape, init kind)."""
    b, m = cfg.block, cfg.match
    D, N, Hd, k, p = b.embed_dim, b.state_dim, b.num_heads, b.conv_kernel, b.patch_size
    spec: dict[str, tuple[tuple[int, ...], str]] = {}

    def lin(name, din, dout, bias_init="zeros"):
        spec[f"{name}.weight"] = ((din, dout), "normal")
        spec[f"{name}.bias"] = ((dout,), bias_init)

    def conv(name, cout, cin, ks):
        spec[f"{name}.weight"] = ((cout, cin, ks, ks), "normal")
        spec[f"{name}.bias"] = ((cout,), "zeros")

    def norm(name, d):
        spec[f"{name}.gamma"] = ((d,), "ones")
        spec[f"{name}.beta"] = ((d,), "zeros")

    lin("embed", 3 * p * p, D)
    for i in range(b.num_blocks):
        pre = f"block{i}"
        norm(f"{pre}.norm1", D)
        lin(f"{pre}.x_proj", D, D)
        lin(f"{pre}.a_proj", D, Hd, bias_init="a_bias")
        lin(f"{pre}.z_proj", D, D)
        spec[f"{pre}.conv.weight"] = ((D, 1, k, k), "normal")
        spec[f"{pre}.conv.bias"] = ((D,), "zeros")
        lin(f"{pre}.b_proj", D, N)
        lin(f"{pre}.c_proj", D, N)
        norm(f"{pre}.norm2", D)
        lin(f"{pre}.out_proj", D, D)
    lin("feat_proj", D, D)

    widths = context_widths(cfg)
    strides = context_strides(cfg)
    conv("context.stem", widths[0], 3, 3)
    cin = widths[0]
    for r, (w, s) in enumerate(zip(widths, strides)):
        pre = f"context.res{r}"
        conv(f"{pre}.conv1", w, cin, 3)
        norm(f"{pre}.norm1", w)
        conv(f"{pre}.conv2", w, w, 3)
        norm(f"{pre}.norm2", w)
        if s != 1 or cin != w:
            conv(f"{pre}.skip", w, cin, 1)
        cin = w
    conv("context.out", m.context_dim, cin, 1)

    Dh, Dm, Dx = m.hidden_dim, m.motion_dim, m.context_in_dim
    s2 = 9 * p * p
    for task, fc, look in (
        ("flow", 2, m.corr_levels * (2 * m.radius + 1) ** 2),
        ("disp", 1, m.corr_levels * (2 * m.radius + 1)),
    ):
        pre = f"update_{task}"
        conv(f"{pre}.motion.conv1", Dm, look + fc, 1)
        conv(f"{pre}.motion.conv2", Dm, Dm, 3)
        extra = Dh if (task == "disp" and m.disparity_scales > 1) else 0
        for g in ("z", "r", "q"):
            conv(f"{pre}.gru0.conv{g}", Dh, Dh + Dm + Dx + extra, 3)
        if task == "disp":
            for level in range(1, m.disparity_scales):
                coarser = Dh if level + 1 < m.disparity_scales else 0
                for g in ("z", "r", "q"):
                    conv(f"{pre}.gru{level}.conv{g}", Dh, Dh + Dh + Dx + coarser, 3)
        conv(f"{pre}.delta.conv1", Dh, Dh, 3)
        conv(f"{pre}.delta.conv2", fc, Dh, 3)
        conv(f"{pre}.mask.conv1", Dh, Dh, 3)
        conv(f"{pre}.mask.conv2", s2, Dh, 1)
    return spec


@dataclass
class ModelWeights(Mapping):
    """Immutable-by-convention map from dotted names to arrays, plus the config manifest."""

    config: ModelConfig
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            raise MissingTensorError(name) from None

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def require_all(self) -> None:
        for name, (shape, _) in weight_spec(self.config).items():
            if name not in self.entries:
                raise MissingTensorError(name)
            if self.entries[name].shape != shape:
                raise ShapeMismatchError(f"tensor {name!r} has shape {self.entries[name].shape}, expected {shape}")

    @property
    def dtype(self):
        return next(iter(self.entries.values())).dtype if self.entries else np.dtype(np.float32)

    def astype(self, dtype) -> "ModelWeights":
        return ModelWeights(self.config, {k: v.astype(dtype) for k, v in self.entries.items()})


def init_weights(cfg: ModelConfig | None = None, seed: int = 0, dtype=np.float32) -> ModelWeights:
    """Deterministic initialization from a seeded PCG64 stream, in ``weight_spec`` order."""
    cfg = cfg or ModelConfig()
    rng = np.random.Generator(np.random.PCG64(seed))
    entries = {}
    for name, (shape, kind) in weight_spec(cfg).items():
        if kind == "normal":
            arr = rng.normal(0.0, INIT_STD, size=shape)
        elif kind == "zeros":
            arr = np.zeros(shape)
        elif kind == "ones":
            arr = np.ones(shape)
        elif kind == "a_bias":
            arr = np.full(shape, A_BIAS)
        else:  # pragma: no cover
            raise ValueError(kind)
        entries[name] = np.ascontiguousarray(arr, dtype=dtype)
    return ModelWeights(cfg, entries)


def dump_weights(w: ModelWeights) -> bytes:
    buf = io.BytesIO()
    cfg = w.config.to_json().encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(cfg)))
    buf.write(cfg)
    buf.write(struct.pack("<I", len(w.entries)))
    for name, arr in w.entries.items():
        code = CODE_OF.get(arr.dtype)
        if code is None:
            raise UnknownDtypeError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BB", code, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes())
    return buf.getvalue()


def save_weights(w: ModelWeights, path) -> None:
    Path(path).write_bytes(dump_weights(w))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str, tensor=None) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedFileError(self.pos, tensor, what)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str, tensor=None):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what, tensor))


def parse_weights(data: bytes) -> ModelWeights:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, cfg_len = r.unpack("<II", "header")
    if version != VERSION:
        raise BadMagicError(f"unsupported container version {version}")
    cfg = ModelConfig.from_json(r.take(cfg_len, "config block").decode("utf-8"))
    spec = weight_spec(cfg)
    (count,) = r.unpack("<I", "tensor count")
    entries: dict[str, np.ndarray] = {}
    for idx in range(count):
        (nlen,) = r.unpack("<I", f"name length of tensor #{idx}")
        name = r.take(nlen, f"name of tensor #{idx}").decode("utf-8")
        code, rank = r.unpack("<BB", "dtype/rank", name)
        if code not in DTYPE_CODES:
            raise UnknownDtypeError(f"tensor {name!r} has unknown dtype code {code}")
        shape = r.unpack(f"<{rank}Q", "extents", name)
        dt = DTYPE_CODES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        raw = r.take(nbytes, "data", name)
        if name not in spec:
            raise ShapeMismatchError(f"tensor {name!r} is not part of the model described by the manifest")
        if tuple(shape) != spec[name][0]:
            raise ShapeMismatchError(f"tensor {name!r} has shape {tuple(shape)}, manifest expects {spec[name][0]}")
        entries[name] = np.frombuffer(raw, dtype=dt).astype(dt.newbyteorder("="), copy=True).reshape(shape)
    if r.pos != len(data):
        raise ShapeMismatchError(f"{len(data) - r.pos} trailing bytes after tensor table")
    return ModelWeights(cfg, entries)


def load_weights(path) -> ModelWeights:
    return parse_weights(Path(path).read_bytes())
