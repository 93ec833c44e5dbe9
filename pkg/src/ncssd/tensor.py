"""Dense numeric primitives.

Every array-valued quantity in the package is a C-contiguous ``numpy.ndarray``
of dtype float32 or float64. The functions here add the shape checks and
border conventions the rest of the code relies on; results are always fresh
arrays, never views into the inputs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError

FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


def as_tensor(x, dtype=None) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True, order="C")
    if arr.dtype not in FLOAT_DTYPES:
        arr = arr.astype(np.float64)
    if arr.ndim < 1:
        arr = arr.reshape(1)
    if any(n < 1 for n in arr.shape):
        raise DimensionError(f"all extents must be >= 1, got {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} x {b.shape}")
    if a.dtype != b.dtype:
        raise DimensionError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    return np.ascontiguousarray(a @ b)


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """``x[..., in] @ weight[in, out] + bias[out]``."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    y = x @ weight
    if bias is not None:
        y = y + bias
    return y


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> np.ndarray:
    """Zero-padded 2-D cross-correlation of a [Cin,H,W] map.

    ``weight`` is [Cout, Cin/groups, kh, kw]. ``groups == Cin == Cout`` gives
    a depthwise convolution.
    """
    if x.ndim != 3 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects [C,H,W] input and 4-D weight, got {x.shape}, {weight.shape}")
    cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError(f"kernel extents must be odd, got {kh}x{kw}")
    if cin % groups or cout % groups or cin // groups != cin_g:
        raise DimensionError(f"channel/group mismatch: input {cin}, weight {weight.shape}, groups {groups}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d output extent < 1 for input {x.shape}, kernel {kh}x{kw}")
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    if groups == 1:
        cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, cin * kh * kw)
        out = (cols @ weight.reshape(cout, -1).T).T.reshape(cout, ho, wo)
    elif groups == cin and cout == cin:
        out = np.einsum("chwij,cij->chw", win, weight[:, 0])
    else:
        parts = []
        for g in range(groups):
            xs = slice(g * cin_g, (g + 1) * cin_g)
            ws = slice(g * (cout // groups), (g + 1) * (cout // groups))
            cols = win[xs].transpose(1, 2, 0, 3, 4).reshape(ho * wo, -1)
            wg = weight[ws]
            parts.append((cols @ wg.reshape(wg.shape[0], -1).T).T.reshape(-1, ho, wo))
        out = np.concatenate(parts, axis=0)
    if bias is not None:
        out = out + bias[:, None, None]
    return np.ascontiguousarray(out, dtype=x.dtype)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(f"layer_norm affine shape {gamma.shape} does not match width {x.shape[-1]}")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc / np.sqrt(var + eps) * gamma + beta


def instance_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Per-channel normalization over the spatial axes of a [C,H,W] map."""
    mu = x.mean(axis=(1, 2), keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=(1, 2), keepdims=True)
    return xc / np.sqrt(var + eps) * gamma[:, None, None] + beta[:, None, None]


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x).astype(x.dtype, copy=False)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"axis {axis} out of range for rank {x.ndim}")
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def concat(parts: Sequence[np.ndarray], axis: int = 0) -> np.ndarray:
    return np.concatenate(list(parts), axis=axis)


def split(x: np.ndarray, sizes: Sequence[int], axis: int = 0) -> list[np.ndarray]:
    if sum(sizes) != x.shape[axis]:
        raise DimensionError(f"split sizes {list(sizes)} do not sum to extent {x.shape[axis]}")
    return [np.ascontiguousarray(p) for p in np.split(x, np.cumsum(sizes)[:-1], axis=axis)]


def avg_pool(x: np.ndarray, k: int = 1) -> np.ndarray:
    """Average-pool the last ``k`` axes by a factor of two (floor on odd extents)."""
    lead = x.shape[: x.ndim - k]
    trail = x.shape[x.ndim - k :]
    if any(n // 2 < 1 for n in trail):
        raise DimensionError(f"pooling {trail} by 2 would produce an empty extent")
    crop = tuple(slice(None) for _ in lead) + tuple(slice(0, 2 * (n // 2)) for n in trail)
    y = x[crop]
    shape = list(lead)
    for n in trail:
        shape += [n // 2, 2]
    y = y.reshape(shape)
    red = tuple(len(lead) + 2 * i + 1 for i in range(k))
    return y.mean(axis=red)


def upsample_replicate(x: np.ndarray, k: int = 1, factor: int = 2) -> np.ndarray:
    """Nearest-neighbour upsampling of the last ``k`` axes by replication."""
    for ax in range(x.ndim - k, x.ndim):
        x = np.repeat(x, factor, axis=ax)
    return x


def bilinear_sample(fmap: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Sample a [C,H,W] map at ``coords`` [P,2] given as (row, col).

    Coordinates are clamped to the map so out-of-range samples take edge
    values. Returns [P,C].
    """
    c, h, w = fmap.shape
    y = np.clip(coords[:, 0], 0, h - 1)
    x = np.clip(coords[:, 1], 0, w - 1)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (y - y0)[:, None]
    wx = (x - x0)[:, None]
    f = fmap.transpose(1, 2, 0)
    top = f[y0, x0] * (1 - wx) + f[y0, x1] * wx
    bot = f[y1, x0] * (1 - wx) + f[y1, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(fmap.dtype, copy=False)


def linear_sample(line: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Border-clamped linear interpolation along the last axis of ``line``.

    ``coords`` broadcasts against ``line.shape[:-1] + (K,)``.
    """
    n = line.shape[-1]
    x = np.clip(coords, 0, n - 1)
    x0 = np.floor(x).astype(np.intp)
    x1 = np.minimum(x0 + 1, n - 1)
    t = x - x0
    v0 = np.take_along_axis(line, x0, axis=-1)
    v1 = np.take_along_axis(line, x1, axis=-1)
    return (v0 * (1 - t) + v1 * t).astype(line.dtype, copy=False)


def upsample2x_bilinear(x: np.ndarray) -> np.ndarray:
    """Double the spatial extents of a [C,H,W] map (half-pixel centres, clamped border)."""
    c, h, w = x.shape
    ys = (np.arange(2 * h) + 0.5) / 2 - 0.5
    xs = (np.arange(2 * w) + 0.5) / 2 - 0.5
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    pts = np.stack([gy.ravel(), gx.ravel()], axis=1)
    return bilinear_sample(x, pts).T.reshape(c, 2 * h, 2 * w)
