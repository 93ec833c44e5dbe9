"""Accuracy and real-time metrics.

Outlier rules follow the KITTI convention: a pixel is an outlier when its
end-point error exceeds both 3 px and 5 % of the ground-truth magnitude.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, MetricError

OUTLIER_PX = 3.0
OUTLIER_REL = 0.05
MOTION_RANGES = ((0.0, 10.0), (10.0, 40.0), (40.0, math.inf))


def _prep(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3:
        raise MetricError(f"prediction {pred.shape} and ground truth {gt.shape} must share a [C,H,W] shape")
    if mask is None:
        mask = np.ones(gt.shape[1:], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != gt.shape[1:]:
        raise MetricError(f"mask {mask.shape} does not match field {gt.shape[1:]}")
    mask = mask & np.all(np.isfinite(gt), axis=0)
    if not mask.any():
        raise MetricError("no valid pixels")
    return pred, gt, mask


def endpoint_errors(pred, gt) -> np.ndarray:
    """Per-pixel L2 error over channels (absolute error for 1-channel disparity)."""
    return np.sqrt(((np.asarray(pred, dtype=np.float64) - gt) ** 2).sum(axis=0))


def epe(pred, gt, mask=None) -> float:
    pred, gt, mask = _prep(pred, gt, mask)
    return float(endpoint_errors(pred, gt)[mask].mean())


def epe_by_motion_range(pred, gt, mask=None) -> tuple[float | None, float | None, float | None]:
    """EPE over pixels whose ground-truth magnitude is in [0,10), [10,40), [40,inf); None for empty buckets."""
    pred, gt, mask = _prep(pred, gt, mask)
    err = endpoint_errors(pred, gt)
    mag = np.sqrt((gt**2).sum(axis=0))
    out = []
    for lo, hi in MOTION_RANGES:
        sel = mask & (mag >= lo) & (mag < hi)
        out.append(float(err[sel].mean()) if sel.any() else None)
    return tuple(out)


def outlier_percent(pred, gt, mask=None) -> float:
    pred, gt, mask = _prep(pred, gt, mask)
    err = endpoint_errors(pred, gt)
    mag = np.sqrt((gt**2).sum(axis=0))
    bad = (err > OUTLIER_PX) & (err > OUTLIER_REL * mag)
    return float(100.0 * bad[mask].mean())


def f1_all(pred, gt, mask=None) -> float:
    if np.shape(gt)[0] != 2:
        raise MetricError("F1-all is defined for 2-channel flow")
    return outlier_percent(pred, gt, mask)


def d1(pred, gt, mask=None) -> float:
    if np.shape(gt)[0] != 1:
        raise MetricError("D1 is defined for 1-channel disparity")
    return outlier_percent(pred, gt, mask)


def somer(fps: float, epe_px: float, memory_mb: float) -> float:
    """Speed / error / memory score: ``fps / (epe * ln(memory_mb))``; higher is better."""
    if not (fps > 0 and epe_px > 0 and memory_mb > 1):
        raise DomainError(f"somer needs fps > 0, epe > 0, memory_mb > 1 (got {fps}, {epe_px}, {memory_mb})")
    return fps / (epe_px * math.log(memory_mb))


@dataclass
class MetricReport:
    epe: float | None = None
    f1_all: float | None = None
    d1: float | None = None
    s_0_10: float | None = None
    s_10_40: float | None = None
    s_40plus: float | None = None
    fps: float | None = None
    memory_mb: float | None = None
    somer: float | None = None

    def __post_init__(self):
        for name in ("f1_all", "d1"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 100.0:
                raise MetricError(f"{name} = {v} is not a percentage")
        for name in ("fps", "memory_mb"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise MetricError(f"{name} must be positive")
        if self.somer is None and None not in (self.fps, self.epe, self.memory_mb):
            if self.epe > 0 and self.memory_mb > 1:
                self.somer = somer(self.fps, self.epe, self.memory_mb)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        rows = [(k, "-" if v is None else f"{v:.4f}") for k, v in self.to_dict().items()]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v:>12}" for k, v in rows)


def evaluate(task: str, pred, gt, mask=None, fps=None, memory_mb=None) -> MetricReport:
    rep = MetricReport(epe=epe(pred, gt, mask), fps=fps, memory_mb=memory_mb)
    if task == "flow":
        rep.f1_all = f1_all(pred, gt, mask)
        rep.s_0_10, rep.s_10_40, rep.s_40plus = epe_by_motion_range(pred, gt, mask)
    else:
        rep.d1 = d1(pred, gt, mask)
    return rep
