"""End-to-end flow / disparity estimation."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Literal

from .blocks import ImagePair, extract_pair_features
from .errors import ConfigError, DimensionError, NcssdError, StageError
from .matching import (
    FieldEstimate,
    build_disparity_volume,
    build_flow_volume,
    build_pyramid,
    iterate_disparity_multires,
    iterate_flow,
)
from .weights import ModelWeights


@dataclass(frozen=True)
class TaskRequest:
    task: Literal["flow", "disparity"]
    images: ImagePair  # consecutive frames for flow, rectified left/right for disparity
    iterations: int | None = None  # None -> config default
    radius: int | None = None

    def __post_init__(self):
        if self.task not in ("flow", "disparity"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError("iterations must be >= 1")


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (NcssdError, ValueError, KeyError) as e:
        raise StageError(name, e) from e


def estimate(req: TaskRequest, w: ModelWeights) -> tuple[FieldEstimate, list[FieldEstimate]]:
    """Run features -> correlation volume -> pyramid -> iterative refinement.

    Returns the final full-resolution field and the per-iteration list.
    """
    cfg = w.config
    m = cfg.match
    radius = m.radius if req.radius is None else req.radius
    if radius != m.radius:
        raise ConfigError(f"radius {radius} differs from the radius {m.radius} the weights were built for")
    _, H, W = req.images.left.shape
    if H % cfg.downsample or W % cfg.downsample:
        raise StageError("input", DimensionError(f"image {H}x{W} not divisible by {cfg.downsample}"))
    with stage("weights"):
        w.require_all()
    with stage("features"):
        feats = extract_pair_features(req.images, cfg, w)
    if req.task == "flow":
        iters = m.flow_iters if req.iterations is None else req.iterations
        with stage("correlation"):
            pyr = build_pyramid(build_flow_volume(feats.f_left, feats.f_right), "flow", m.corr_levels)
        with stage("refinement"):
            outs = iterate_flow(pyr, feats.context, iters, radius, w, cfg)
    else:
        iters = m.disparity_iters if req.iterations is None else req.iterations
        with stage("correlation"):
            pyr = build_pyramid(build_disparity_volume(feats.f_left, feats.f_right), "disparity", m.corr_levels)
        with stage("refinement"):
            outs = iterate_disparity_multires(pyr, feats.context, iters, radius, w, cfg)
    return outs[-1], outs
