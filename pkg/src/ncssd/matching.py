"""Correlation volumes, pyramids, lookup, ConvGRU refinement and convex upsampling.

Conventions
-----------
* Flow fields are [2, H, W] with channel 0 = horizontal (u, columns) and
  channel 1 = vertical (v, rows). Pixel (i, j) of the first frame maps to
  (i + v, j + u) in the second.
* Disparity fields are [1, H, W], d >= 0, left pixel (i, j) matching right
  pixel (i, j - d).
* Lookup features are returned channel-last, [H, W, K].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .config import ModelConfig
from .errors import DimensionError
from .tensor import avg_pool, conv2d, linear_sample, sigmoid, silu, softmax, upsample2x_bilinear

Kind = Literal["flow", "disparity"]
Weights = Mapping[str, np.ndarray]


@dataclass(frozen=True)
class FieldEstimate:
    kind: Kind
    values: np.ndarray  # [2,H,W] flow or [1,H,W] disparity, in pixels at this resolution
    resolution_scale: int = 1  # downsample factor relative to the input image

    def __post_init__(self):
        want = 2 if self.kind == "flow" else 1
        if self.values.ndim != 3 or self.values.shape[0] != want:
            raise DimensionError(f"{self.kind} field must be [{want},H,W], got {self.values.shape}")


@dataclass(frozen=True)
class CorrelationPyramid:
    kind: Kind
    levels: list[np.ndarray]

    @property
    def num_levels(self) -> int:
        return len(self.levels)


@dataclass
class GruState:
    hidden: list[np.ndarray] = field(default_factory=list)  # finest first, each [Dh,h,w]


def build_flow_volume(fl: np.ndarray, fr: np.ndarray) -> np.ndarray:
    """All-pairs dot products ``C[i,j,k,l] = <fl[:,i,j], fr[:,k,l]>``."""
    if fl.shape != fr.shape or fl.ndim != 3:
        raise DimensionError(f"feature maps must share a [D,H,W] shape, got {fl.shape} and {fr.shape}")
    D, H, W = fl.shape
    return (fl.reshape(D, H * W).T @ fr.reshape(D, H * W)).reshape(H, W, H, W)


def build_disparity_volume(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Same-row dot products ``C[i,j,k] = <f[:,i,j], g[:,i,k]>``."""
    if f.shape != g.shape or f.ndim != 3:
        raise DimensionError(f"feature maps must share a [D,H,W] shape, got {f.shape} and {g.shape}")
    return f.transpose(1, 2, 0) @ g.transpose(1, 0, 2)


def build_pyramid(volume: np.ndarray, kind: Kind, num_levels: int = 4) -> CorrelationPyramid:
    k = 2 if kind == "flow" else 1
    need = 2 ** (num_levels - 1)
    trail = volume.shape[-k:]
    if any(n < need for n in trail):
        raise DimensionError(f"trailing extents {trail} too small for {num_levels} pyramid levels")
    levels = [volume]
    for _ in range(num_levels - 1):
        levels.append(avg_pool(levels[-1], k))
    return CorrelationPyramid(kind, levels)


def _offsets_2d(r: int):
    d = np.arange(-r, r + 1, dtype=np.float64)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    return dy.ravel(), dx.ravel()


def lookup_flow(pyr: CorrelationPyramid, est: FieldEstimate, r: int) -> np.ndarray:
    """Bilinear window of (2r+1)^2 correlations per level around the current match. [H,W,levels*(2r+1)^2]"""
    if pyr.kind != "flow" or est.kind != "flow":
        raise ValueError("lookup_flow needs a flow pyramid and a flow estimate")
    _, H, W = est.values.shape
    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    dy, dx = _offsets_2d(r)
    ci = ii + est.values[1].astype(np.float64)
    cj = jj + est.values[0].astype(np.float64)
    gi, gj = ii[..., None], jj[..., None]
    out = []
    for k, vol in enumerate(pyr.levels):
        hk, wk = vol.shape[2:]
        y = np.clip(ci[..., None] / 2**k + dy, 0, hk - 1)
        x = np.clip(cj[..., None] / 2**k + dx, 0, wk - 1)
        y0 = np.floor(y).astype(np.intp)
        x0 = np.floor(x).astype(np.intp)
        y1 = np.minimum(y0 + 1, hk - 1)
        x1 = np.minimum(x0 + 1, wk - 1)
        ty, tx = y - y0, x - x0
        top = vol[gi, gj, y0, x0] * (1 - tx) + vol[gi, gj, y0, x1] * tx
        bot = vol[gi, gj, y1, x0] * (1 - tx) + vol[gi, gj, y1, x1] * tx
        out.append(top * (1 - ty) + bot * ty)
    return np.concatenate(out, axis=-1).astype(pyr.levels[0].dtype, copy=False)


def lookup_disparity(pyr: CorrelationPyramid, est: FieldEstimate, r: int) -> np.ndarray:
    """Linear window of 2r+1 correlations per level around column j - d. [H,W,levels*(2r+1)]"""
    if pyr.kind != "disparity" or est.kind != "disparity":
        raise ValueError("lookup_disparity needs a disparity pyramid and a disparity estimate")
    _, H, W = est.values.shape
    centre = np.arange(W)[None, :] - est.values[0].astype(np.float64)
    offs = np.arange(-r, r + 1, dtype=np.float64)
    out = [linear_sample(vol, centre[..., None] / 2**k + offs) for k, vol in enumerate(pyr.levels)]
    return np.concatenate(out, axis=-1).astype(pyr.levels[0].dtype, copy=False)


def argmax_flow(volume: np.ndarray) -> np.ndarray:
    """Winner-take-all flow from a level-0 volume. [2,H,W]"""
    H, W, H2, W2 = volume.shape
    idx = volume.reshape(H, W, H2 * W2).argmax(axis=-1)
    k, l = np.divmod(idx, W2)
    ii, jj = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    return np.stack([l - jj, k - ii]).astype(np.float64)


def argmax_disparity(volume: np.ndarray) -> np.ndarray:
    """Winner-take-all disparity ``j - argmax_k C[i,j,k]``. [1,H,W]"""
    W = volume.shape[1]
    return (np.arange(W)[None, :] - volume.argmax(axis=-1))[None].astype(np.float64)


def _argmax_nearest(feats: np.ndarray, dist: np.ndarray) -> np.ndarray:
    # clamped samples past the border repeat the edge value; prefer the smallest offset among ties
    order = np.argsort(dist, kind="stable")
    return order[feats[..., order].argmax(axis=-1)]


def lookup_argmax_flow(pyr: CorrelationPyramid, est: FieldEstimate, r: int) -> np.ndarray:
    """Refine ``est`` by the best integer offset in the level-0 lookup window."""
    feats = lookup_flow(CorrelationPyramid("flow", pyr.levels[:1]), est, r)
    dy, dx = _offsets_2d(r)
    best = _argmax_nearest(feats, dy * dy + dx * dx)
    return est.values + np.stack([dx[best], dy[best]])


def lookup_argmax_disparity(pyr: CorrelationPyramid, est: FieldEstimate, r: int) -> np.ndarray:
    feats = lookup_disparity(CorrelationPyramid("disparity", pyr.levels[:1]), est, r)
    offs = np.arange(-r, r + 1)
    # sampling at column j - d + o corresponds to disparity d - o
    return est.values - offs[_argmax_nearest(feats, np.abs(offs))][None]


def conv_gru(h: np.ndarray, x: np.ndarray, w: Weights, pre: str) -> np.ndarray:
    hx = np.concatenate([h, x], axis=0)
    z = sigmoid(conv2d(hx, w[f"{pre}.convz.weight"], w[f"{pre}.convz.bias"], padding=1))
    r = sigmoid(conv2d(hx, w[f"{pre}.convr.weight"], w[f"{pre}.convr.bias"], padding=1))
    q = np.tanh(conv2d(np.concatenate([r * h, x], axis=0), w[f"{pre}.convq.weight"], w[f"{pre}.convq.bias"], padding=1))
    return (1 - z) * h + z * q


def _conv(x, w: Weights, name, pad):
    return conv2d(x, w[f"{name}.weight"], w[f"{name}.bias"], padding=pad)


def gru_update(
    state: GruState,
    lookup_feats: np.ndarray,
    context_feats: np.ndarray,
    est: FieldEstimate,
    w: Weights,
    prefix: str,
    extra: Sequence[np.ndarray] = (),
) -> tuple[GruState, np.ndarray, np.ndarray]:
    """Motion encoding, one ConvGRU step on the finest hidden state, and the delta / mask heads."""
    h = state.hidden[0]
    look = np.ascontiguousarray(lookup_feats.transpose(2, 0, 1))
    spatial = {h.shape[1:], look.shape[1:], context_feats.shape[1:], est.values.shape[1:]}
    spatial |= {e.shape[1:] for e in extra}
    if len(spatial) != 1:
        raise DimensionError(f"gru_update inputs are not spatially aligned: {sorted(spatial)}")
    motion = silu(_conv(np.concatenate([look, est.values.astype(look.dtype)]), w, f"{prefix}.motion.conv1", 0))
    motion = silu(_conv(motion, w, f"{prefix}.motion.conv2", 1))
    x = np.concatenate([motion, context_feats, *extra], axis=0)
    h = conv_gru(h, x, w, f"{prefix}.gru0")
    delta = _conv(silu(_conv(h, w, f"{prefix}.delta.conv1", 1)), w, f"{prefix}.delta.conv2", 1)
    mask = _conv(silu(_conv(h, w, f"{prefix}.mask.conv1", 1)), w, f"{prefix}.mask.conv2", 0)
    return GruState([h, *state.hidden[1:]]), delta, mask


def convex_upsample(field: np.ndarray, mask_logits: np.ndarray, s: int, scale_values: bool = True) -> np.ndarray:
    """Each fine pixel is a softmax-weighted mix of its coarse cell's 3x3 (edge-clamped) neighbourhood.

    ``mask_logits`` channel ``n*s*s + a*s + b`` weights neighbour ``n`` (row-major
    over dy, dx in {-1,0,1}) for fine sub-pixel (a, b).
    """
    c, h, w = field.shape
    if mask_logits.shape != (9 * s * s, h, w):
        raise DimensionError(f"mask logits must be {(9 * s * s, h, w)}, got {mask_logits.shape}")
    wts = softmax(mask_logits.reshape(9, s, s, h, w), axis=0)
    padded = np.pad(field, ((0, 0), (1, 1), (1, 1)), mode="edge")
    neigh = np.stack(
        [padded[:, 1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dy in (-1, 0, 1) for dx in (-1, 0, 1)], axis=1
    )
    out = np.einsum("nabhw,cnhw->chawb", wts, neigh).reshape(c, h * s, w * s)
    return out * s if scale_values else out


def split_context(context: np.ndarray, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Initial hidden state ``tanh(ctx[:Dh])`` and GRU context input ``silu(ctx[Dh:])``."""
    Dh = cfg.match.hidden_dim
    return np.tanh(context[:Dh]), silu(context[Dh:])


def iterate_flow(
    pyr: CorrelationPyramid, context: np.ndarray, iters: int, r: int, w: Weights, cfg: ModelConfig
) -> list[FieldEstimate]:
    if iters < 1:
        raise ValueError("iters must be >= 1")
    s = cfg.downsample
    h, ctx = split_context(context, cfg)
    state = GruState([h])
    flow = np.zeros((2, *context.shape[1:]), dtype=context.dtype)
    out = []
    for _ in range(iters):
        est = FieldEstimate("flow", flow, s)
        look = lookup_flow(pyr, est, r)
        state, delta, mask = gru_update(state, look, ctx, est, w, "update_flow")
        flow = flow + delta
        out.append(FieldEstimate("flow", convex_upsample(flow, mask, s, True), 1))
    return out


def iterate_disparity_multires(
    pyr: CorrelationPyramid, context: np.ndarray, iters: int, r: int, w: Weights, cfg: ModelConfig
) -> list[FieldEstimate]:
    """Refinement with ConvGRUs at the feature resolution and 2x / 4x coarser.

    Each iteration runs coarse to fine; a coarser hidden state enters the next
    finer GRU through bilinear 2x upsampling. Only the finest level performs
    the correlation lookup and the disparity update. Emitted full-resolution
    disparities are clamped to >= 0; the running estimate is not.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    scales = cfg.match.disparity_scales
    _, h, wd = context.shape
    div = 2 ** (scales - 1)
    if h % div or wd % div:
        raise DimensionError(f"feature extents {h}x{wd} must be divisible by {div} for {scales} scales")
    s = cfg.downsample
    h0, c0 = split_context(context, cfg)
    hidden = [h0]
    ctxs = [c0]
    for _ in range(scales - 1):
        hidden.append(avg_pool(hidden[-1], 2))
        ctxs.append(avg_pool(ctxs[-1], 2))
    disp = np.zeros((1, h, wd), dtype=context.dtype)
    out = []
    for _ in range(iters):
        for lvl in range(scales - 1, 0, -1):
            inputs = [avg_pool(hidden[lvl - 1], 2), ctxs[lvl]]
            if lvl + 1 < scales:
                inputs.append(upsample2x_bilinear(hidden[lvl + 1]))
            hidden[lvl] = conv_gru(hidden[lvl], np.concatenate(inputs), w, f"update_disp.gru{lvl}")
        extra = [upsample2x_bilinear(hidden[1])] if scales > 1 else []
        est = FieldEstimate("disparity", disp, s)
        look = lookup_disparity(pyr, est, r)
        state, delta, mask = gru_update(GruState([hidden[0]]), look, ctxs[0], est, w, "update_disp", extra)
        hidden[0] = state.hidden[0]
        disp = disp + delta
        up = np.maximum(convex_upsample(disp, mask, s, True), 0)
        out.append(FieldEstimate("disparity", up, 1))
    return out
