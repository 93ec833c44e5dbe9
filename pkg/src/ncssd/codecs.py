"""Readers and writers for images, Middlebury ``.flo`` and PFM disparity maps."""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CodecError

FLO_MAGIC = 202021.25


def read_image(path) -> np.ndarray:
    """8-bit PNG / PPM -> float32 [3,H,W] scaled to [-1, 1]."""
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
    except (OSError, ValueError) as e:
        raise CodecError(f"cannot decode image {path}: {e}") from None
    return np.ascontiguousarray((2.0 * rgb / 255.0 - 1.0).transpose(2, 0, 1))


def write_image(path, img: np.ndarray) -> None:
    """Inverse of :func:`read_image` for a [3,H,W] array in [-1, 1]."""
    rgb = np.clip(np.rint((img.transpose(1, 2, 0) + 1.0) * 127.5), 0, 255).astype(np.uint8)
    Image.fromarray(rgb).save(path)


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 0


def encode_flo(flow: np.ndarray) -> bytes:
    """[2,H,W] flow -> .flo bytes (u, v interleaved, little-endian float32)."""
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise CodecError(f"flow must be [2,H,W], got {flow.shape}")
    _, h, w = flow.shape
    body = np.ascontiguousarray(flow.transpose(1, 2, 0), dtype="<f4").tobytes()
    return struct.pack("<fii", FLO_MAGIC, w, h) + body


def decode_flo(data: bytes) -> np.ndarray:
    if len(data) < 12:
        raise CodecError(".flo header truncated")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise CodecError(f"bad .flo magic {magic}")
    if w < 1 or h < 1 or len(data) != 12 + 8 * w * h:
        raise CodecError(f".flo dimensions {w}x{h} inconsistent with payload of {len(data) - 12} bytes")
    arr = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2)
    return np.ascontiguousarray(arr.transpose(2, 0, 1), dtype=np.float32)


def write_flow_flo(path, flow: np.ndarray) -> None:
    Path(path).write_bytes(encode_flo(flow))


def read_flow_flo(path) -> np.ndarray:
    return decode_flo(Path(path).read_bytes())


def encode_pfm(disp: np.ndarray) -> bytes:
    """[1,H,W] or [H,W] map -> greyscale PFM, little-endian, rows bottom to top."""
    d = disp[0] if disp.ndim == 3 else disp
    if d.ndim != 2:
        raise CodecError(f"disparity must be [1,H,W] or [H,W], got {disp.shape}")
    h, w = d.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(d[::-1], dtype="<f4").tobytes()


_PFM_HEADER = re.compile(rb"^(Pf|PF)\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s")


def decode_pfm(data: bytes) -> np.ndarray:
    """PFM bytes -> float32 [1,H,W] (greyscale) or [3,H,W] (colour), top row first."""
    m = _PFM_HEADER.match(data[:256])
    if not m:
        raise CodecError("malformed PFM header")
    chans = 3 if m.group(1) == b"PF" else 1
    w, h = int(m.group(2)), int(m.group(3))
    scale = float(m.group(4))
    if w < 1 or h < 1 or scale == 0:
        raise CodecError(f"invalid PFM dimensions {w}x{h} or scale {scale}")
    dt = "<f4" if scale < 0 else ">f4"
    body = data[m.end():]
    if len(body) != 4 * w * h * chans:
        raise CodecError(f"PFM payload has {len(body)} bytes, expected {4 * w * h * chans}")
    arr = np.frombuffer(body, dtype=dt).reshape(h, w, chans)[::-1]
    return np.ascontiguousarray(arr.transpose(2, 0, 1), dtype=np.float32)


def write_disparity_pfm(path, disp: np.ndarray) -> None:
    Path(path).write_bytes(encode_pfm(disp))


def read_disparity_pfm(path) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes())


def make_colorwheel() -> np.ndarray:
    """Baker et al. flow colour wheel, 55 x 3 in [0, 255]."""
    RY, YG, GC, CB, BM, MR = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((RY + YG + GC + CB + BM + MR, 3))
    col = 0
    for n, ramp_chan, hold_chan, rising in (
        (RY, 1, 0, True), (YG, 0, 1, False), (GC, 2, 1, True),
        (CB, 1, 2, False), (BM, 0, 2, True), (MR, 2, 0, False),
    ):
        ramp = np.floor(255 * np.arange(n) / n)
        wheel[col : col + n, hold_chan] = 255
        wheel[col : col + n, ramp_chan] = ramp if rising else 255 - ramp
        col += n
    return wheel


def flow_to_rgb(flow: np.ndarray) -> np.ndarray:
    u, v = flow[0].astype(np.float64), flow[1].astype(np.float64)
    rad = np.sqrt(u * u + v * v)
    u, v = u / (rad.max() + 1e-8), v / (rad.max() + 1e-8)
    rad = np.sqrt(u * u + v * v)
    wheel = make_colorwheel()
    ncols = wheel.shape[0]
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = ((1 - f) * wheel[k0] + f * wheel[k1]) / 255.0
    r = np.minimum(rad, 1)[..., None]
    col = np.where(r <= 1, 1 - r * (1 - col), col * 0.75)
    return np.floor(255 * col).astype(np.uint8)


def disparity_to_rgb(disp: np.ndarray) -> np.ndarray:
    """Blue (near zero) through green and yellow to red (max disparity)."""
    d = disp[0] if disp.ndim == 3 else disp
    t = d / (d.max() + 1e-8)
    knots = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    colors = np.array([[0, 0, 143], [0, 128, 255], [64, 255, 128], [255, 220, 0], [200, 0, 0]], dtype=float)
    rgb = np.stack([np.interp(t, knots, colors[:, c]) for c in range(3)], axis=-1)
    return rgb.astype(np.uint8)


def write_flow_visualization(path, flow: np.ndarray) -> None:
    Image.fromarray(flow_to_rgb(flow)).save(path)


def write_disparity_visualization(path, disp: np.ndarray) -> None:
    Image.fromarray(disparity_to_rgb(disp)).save(path)
