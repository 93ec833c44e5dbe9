"""Pairwise feature fusion with non-causal SSD blocks, and the context CNN."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import BlockConfig, ModelConfig
from .errors import DimensionError
from .ssd import clamp_decay, multihead_ncssd
from .tensor import conv2d, instance_norm, layer_norm, linear, silu, softplus
from .weights import context_strides

Weights = Mapping[str, np.ndarray]


@dataclass(frozen=True)
class ImagePair:
    left: np.ndarray  # [3,H,W]; stereo left, or frame t for flow
    right: np.ndarray  # [3,H,W]; stereo right, or frame t+1

    def __post_init__(self):
        if self.left.shape != self.right.shape or self.left.ndim != 3 or self.left.shape[0] != 3:
            raise DimensionError(f"image pair must be two [3,H,W] arrays, got {self.left.shape}, {self.right.shape}")
        for img in (self.left, self.right):
            if not np.all(np.isfinite(img)) or np.abs(img).max() > 1.0:
                raise ValueError("image values must be finite and within [-1, 1]")


@dataclass(frozen=True)
class PairFeatures:
    f_left: np.ndarray  # [D,h,w]
    f_right: np.ndarray  # [D,h,w]
    context: np.ndarray  # [Dc,h,w]


def _lin(x, w: Weights, name):
    return linear(x, w[f"{name}.weight"], w[f"{name}.bias"])


def _ln(x, w: Weights, name):
    return layer_norm(x, w[f"{name}.gamma"], w[f"{name}.beta"])


def patch_embed(img: np.ndarray, cfg: BlockConfig, w: Weights) -> np.ndarray:
    """Split into non-overlapping p x p patches (row-major) and project to D. Returns [L, D]."""
    c, H, W = img.shape
    p = cfg.patch_size
    if H % p or W % p:
        raise DimensionError(f"image {H}x{W} is not divisible by patch size {p}")
    h, wd = H // p, W // p
    patches = img.reshape(c, h, p, wd, p).transpose(1, 3, 0, 2, 4).reshape(h * wd, c * p * p)
    return _lin(patches, w, "embed")


def ssd_branch(u: np.ndarray, grid: tuple[int, int], cfg: BlockConfig, w: Weights, pre: str) -> np.ndarray:
    """Projection, depthwise conv + SiLU, B/C heads and one multi-head NC-SSD pass on [L, D] tokens."""
    h, wd = grid
    D = cfg.embed_dim
    xp = _lin(u, w, f"{pre}.x_proj")
    A = clamp_decay(softplus(_lin(u, w, f"{pre}.a_proj")))
    k = cfg.conv_kernel
    grid_feats = np.ascontiguousarray(xp.T).reshape(D, h, wd)
    conv = conv2d(grid_feats, w[f"{pre}.conv.weight"], w[f"{pre}.conv.bias"], padding=k // 2, groups=D)
    X = np.ascontiguousarray(silu(conv).reshape(D, h * wd).T)
    B = _lin(X, w, f"{pre}.b_proj")
    C = _lin(X, w, f"{pre}.c_proj")
    return multihead_ncssd(X, A, B, C, cfg.num_heads)


def densepercept_block(
    tokens_pair: np.ndarray, grid: tuple[int, int], cfg: BlockConfig, w: Weights, index: int = 0
) -> np.ndarray:
    """One fusion block over stacked left/right tokens [2, L, D] laid out on ``grid``.

    Each image runs its own NC-SSD pass; the results are cross-gated with the
    other image's Z projection, passed through a second NC-SSD (same
    projections), projected out and added to the input.
    """
    if tokens_pair.ndim != 3 or tokens_pair.shape[0] != 2:
        raise DimensionError(f"expected [2, L, D] token pair, got {tokens_pair.shape}")
    if grid[0] * grid[1] != tokens_pair.shape[1]:
        raise DimensionError(f"grid {grid} does not hold {tokens_pair.shape[1]} tokens")
    pre = f"block{index}"
    u = _ln(tokens_pair, w, f"{pre}.norm1")
    z = _lin(u, w, f"{pre}.z_proj")
    y = [_ln(ssd_branch(u[i], grid, cfg, w, pre), w, f"{pre}.norm2") for i in (0, 1)]
    gated = [y[0] * silu(z[1]), y[1] * silu(z[0])]
    fused = np.stack([ssd_branch(g, grid, cfg, w, pre) for g in gated])
    return tokens_pair + _lin(fused, w, f"{pre}.out_proj")


def residual_block(x: np.ndarray, w: Weights, pre: str, stride: int) -> np.ndarray:
    y = silu(instance_norm(conv2d(x, w[f"{pre}.conv1.weight"], w[f"{pre}.conv1.bias"], stride, 1),
                           w[f"{pre}.norm1.gamma"], w[f"{pre}.norm1.beta"]))
    y = silu(instance_norm(conv2d(y, w[f"{pre}.conv2.weight"], w[f"{pre}.conv2.bias"], 1, 1),
                           w[f"{pre}.norm2.gamma"], w[f"{pre}.norm2.beta"]))
    if f"{pre}.skip.weight" in w:
        x = conv2d(x, w[f"{pre}.skip.weight"], w[f"{pre}.skip.bias"], stride, 0)
    return x + y


def context_encode(img: np.ndarray, cfg: ModelConfig, w: Weights) -> np.ndarray:
    """Six residual blocks with stride-2 stages down to 1/``cfg.downsample``. Returns [Dc, H/p, W/p]."""
    p = cfg.downsample
    if img.shape[1] % p or img.shape[2] % p:
        raise DimensionError(f"image {img.shape[1:]} is not divisible by downsample {p}")
    x = silu(conv2d(img, w["context.stem.weight"], w["context.stem.bias"], 1, 1))
    for r, s in enumerate(context_strides(cfg)):
        x = residual_block(x, w, f"context.res{r}", s)
    return conv2d(x, w["context.out.weight"], w["context.out.bias"])


def extract_pair_features(pair: ImagePair, cfg: ModelConfig, w: Weights) -> PairFeatures:
    b = cfg.block
    _, H, W = pair.left.shape
    grid = (H // b.patch_size, W // b.patch_size)
    dtype = w["embed.weight"].dtype
    left = pair.left.astype(dtype, copy=False)
    right = pair.right.astype(dtype, copy=False)
    tokens = np.stack([patch_embed(left, b, w), patch_embed(right, b, w)])
    for i in range(b.num_blocks):
        tokens = densepercept_block(tokens, grid, b, w, i)
    tokens = _lin(tokens, w, "feat_proj")
    maps = np.ascontiguousarray(tokens.transpose(0, 2, 1)).reshape(2, b.embed_dim, *grid)
    return PairFeatures(maps[0].copy(), maps[1].copy(), context_encode(left, cfg, w))
