"""Dense optical flow between consecutive frames, plus a clipped 3-channel
byte encoding of the flow field.

Flow is computed with the Farneback polynomial-expansion algorithm (OpenCV
implementation).  The encoding maps horizontal and vertical displacement to
channels 0-1 and magnitude to channel 2, each linearly scaled to [0, 255]
with saturation at a fixed clip displacement.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import DataError

MIN_FRAME_SIDE = 16


@dataclass
class FlowConfig:
    """Farneback parameters (pyramid, window, polynomial expansion)."""

    levels: int = 3
    pyr_scale: float = 0.5
    winsize: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def digest_key(self) -> str:
        return (f"fb-l{self.levels}-s{self.pyr_scale}-w{self.winsize}"
                f"-i{self.iterations}-n{self.poly_n}-g{self.poly_sigma}")


@dataclass
class Frame:
    """Grayscale image with intensities in [0, 1]."""

    pixels: np.ndarray  # (H, W) float32

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 2:
            raise DataError(f"frame must be 2-D grayscale, got shape {self.pixels.shape}")
        h, w = self.pixels.shape
        if h < MIN_FRAME_SIDE or w < MIN_FRAME_SIDE:
            raise DataError(f"frame {w}x{h} below minimum side {MIN_FRAME_SIDE}")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass
class FlowMap:
    """Per-pixel displacement field; `encoded` holds the byte channels once
    encode_flow has run."""

    u: np.ndarray                        # (H, W) float32, pixels/frame
    v: np.ndarray
    encoded: np.ndarray | None = None    # (3, H, W) uint8

    @property
    def height(self):
        return self.u.shape[0]

    @property
    def width(self):
        return self.u.shape[1]


def _to_u8(frame: Frame) -> np.ndarray:
    return np.clip(np.rint(frame.pixels * 255.0), 0, 255).astype(np.uint8)


def farneback_flow(prev: Frame, nxt: Frame, cfg: FlowConfig | None = None) -> FlowMap:
    """Estimate per-pixel displacement (u, v) such that nxt(x+u, y+v) ~ prev(x, y).

    Constant (textureless) frame pairs yield zero flow rather than an error.
    """
    cfg = cfg or FlowConfig()
    if prev.pixels.shape != nxt.pixels.shape:
        raise DataError(
            f"frame size mismatch: {prev.pixels.shape} vs {nxt.pixels.shape}")
    flow = cv2.calcOpticalFlowFarneback(
        _to_u8(prev), _to_u8(nxt), None, cfg.pyr_scale, cfg.levels, cfg.winsize,
        cfg.iterations, cfg.poly_n, cfg.poly_sigma, 0)
    u = np.nan_to_num(flow[:, :, 0], copy=False).astype(np.float32)
    v = np.nan_to_num(flow[:, :, 1], copy=False).astype(np.float32)
    return FlowMap(u=u, v=v)


def encode_flow(flow: FlowMap, clip: float = 16.0) -> FlowMap:
    """Fill flow.encoded with the 3-channel byte image.

    channel0 = round(255 * (clamp(u, -clip, clip) + clip) / (2 clip))
    channel1 = the same for v
    channel2 = round(255 * min(|(u,v)|, clip*sqrt(2)) / (clip*sqrt(2)))

    round is half-to-even.  The clip range is fixed (not per-frame min/max)
    so byte values are comparable across frames and videos.
    """
    if clip <= 0:
        raise DataError(f"clip must be positive, got {clip}")
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    c0 = np.rint(255.0 * (np.clip(u, -clip, clip) + clip) / (2.0 * clip))
    c1 = np.rint(255.0 * (np.clip(v, -clip, clip) + clip) / (2.0 * clip))
    mag_cap = clip * np.sqrt(2.0)
    mag = np.sqrt(u * u + v * v)
    c2 = np.rint(255.0 * np.minimum(mag, mag_cap) / mag_cap)
    flow.encoded = np.stack([c0, c1, c2]).astype(np.uint8)
    return flow


def encode_video_flows(frames: list[Frame], cfg: FlowConfig | None = None,
                       clip: float = 16.0) -> np.ndarray:
    """Encoded flow for every consecutive frame pair: (N-1, 3, H, W) uint8."""
    if len(frames) < 2:
        raise DataError("need at least two frames to compute flow")
    out = np.empty((len(frames) - 1, 3, frames[0].height, frames[0].width),
                   dtype=np.uint8)
    for i in range(len(frames) - 1):
        out[i] = encode_flow(farneback_flow(frames[i], frames[i + 1], cfg), clip).encoded
    return out


_NUM_RE = re.compile(r"(\d+)")


def _numeric_sort_key(p: Path):
    m = _NUM_RE.search(p.stem)
    return (int(m.group(1)) if m else 0, p.name)


def load_frame(path) -> Frame:
    """Read an 8-bit grayscale or 24-bit color image file; color is
    luma-converted."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DataError(f"cannot read image {path}")
    if img.ndim == 3:
        img = cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)
    if img.dtype != np.uint8:
        img = np.clip(img, 0, 255).astype(np.uint8)
    return Frame(img.astype(np.float32) / 255.0)


def load_frame_dir(directory) -> list[Frame]:
    """Load every image in a directory, ordered by zero-padded numeric name."""
    directory = Path(directory)
    paths = [p for p in directory.iterdir()
             if p.suffix.lower() in (".pgm", ".png", ".jpg", ".jpeg", ".bmp", ".pbm")]
    if not paths:
        raise DataError(f"no image files in {directory}")
    return [load_frame(p) for p in sorted(paths, key=_numeric_sort_key)]


def export_encoded(flow: FlowMap, path):
    """Write the encoded channels as a color image for inspection."""
    if flow.encoded is None:
        raise DataError("flow has no encoded channels; call encode_flow first")
    bgr = flow.encoded[::-1].transpose(1, 2, 0)  # cv2 writes BGR
    cv2.imwrite(str(path), np.ascontiguousarray(bgr))
