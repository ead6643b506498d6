"""Body-part patch extraction from encoded flow maps.

Five parts are cut per frame pair: squares around each foot, the upper-body
joint bounding box (head through hips, hands included), the lower-body box
(hips through feet, hands excluded), and the full-body box over all joints.
Training crops get stochastic outward bound extensions; evaluation crops get
the deterministic mean extension.  Patches are bilinearly resized to 48x48.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataError
from .rng import substream

PATCH_SIZE = 48

PART_ORDER = ("right-foot", "left-foot", "upper-body", "lower-body", "full-body")

REQUIRED_JOINTS = (
    "head",
    "left_shoulder", "right_shoulder",
    "left_hand", "right_hand",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_foot", "right_foot",
)

_UPPER_JOINTS = ("head", "left_shoulder", "right_shoulder",
                 "left_hand", "right_hand", "left_hip", "right_hip")
_LOWER_JOINTS = ("left_hip", "right_hip", "left_knee", "right_knee",
                 "left_foot", "right_foot")


@dataclass
class PoseKeypoints:
    """Named 2-D joint coordinates for one frame."""

    frame_index: int
    joints: dict[str, tuple[float, float]]

    def require(self, names) -> None:
        for name in names:
            if name not in self.joints:
                raise DataError(
                    f"missing required joint '{name}' in frame {self.frame_index}")


@dataclass
class PatchSpec:
    """A part name plus its (x0, y0, w, h) box in source-frame pixels."""

    part: str
    box: tuple[float, float, float, float]


@dataclass
class Patch:
    part: str
    tensor: np.ndarray   # (3, 48, 48) float32 in [0, 1]
    pair_index: int


def _bbox(points) -> tuple[float, float, float, float]:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return (min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))


def clamp_box(box, frame_w, frame_h):
    """Clamp a box to the frame, keeping at least a 1-pixel side."""
    x0, y0, w, h = box
    nx0 = min(max(x0, 0.0), frame_w - 1.0)
    ny0 = min(max(y0, 0.0), frame_h - 1.0)
    nx1 = min(max(x0 + w, nx0 + 1.0), float(frame_w))
    ny1 = min(max(y0 + h, ny0 + 1.0), float(frame_h))
    return (nx0, ny0, nx1 - nx0, ny1 - ny0)


def build_part_boxes(kp: PoseKeypoints, frame_w: int, frame_h: int,
                     foot_side_frac: float = 0.25) -> list[PatchSpec]:
    """All five part boxes for one frame, clamped to the frame.

    Foot squares are centered on the foot keypoints with side equal to
    foot_side_frac of the full-body box height.
    """
    kp.require(REQUIRED_JOINTS)
    joints = kp.joints
    full = _bbox([joints[n] for n in REQUIRED_JOINTS])
    side = foot_side_frac * full[3]
    specs = []
    for part, foot in (("right-foot", "right_foot"), ("left-foot", "left_foot")):
        cx, cy = joints[foot]
        specs.append(PatchSpec(part, (cx - side / 2.0, cy - side / 2.0, side, side)))
    specs.append(PatchSpec("upper-body", _bbox([joints[n] for n in _UPPER_JOINTS])))
    specs.append(PatchSpec("lower-body", _bbox([joints[n] for n in _LOWER_JOINTS])))
    specs.append(PatchSpec("full-body", full))
    return [replace(s, box=clamp_box(s.box, frame_w, frame_h)) for s in specs]


def sample_augmented_box(spec: PatchSpec, rng: np.random.Generator,
                         frame_w: int | None = None,
                         frame_h: int | None = None) -> PatchSpec:
    """Training-time box: independent outward extensions, left/right from
    Uniform[0, w/3] and top/bottom from Uniform[0, h/3].  Sampling order is
    left, right, top, bottom.  Clamped when frame dimensions are given."""
    x0, y0, w, h = spec.box
    dl = rng.uniform(0.0, w / 3.0)
    dr = rng.uniform(0.0, w / 3.0)
    dt = rng.uniform(0.0, h / 3.0)
    db = rng.uniform(0.0, h / 3.0)
    box = (x0 - dl, y0 - dt, w + dl + dr, h + dt + db)
    if frame_w is not None:
        box = clamp_box(box, frame_w, frame_h)
    return replace(spec, box=box)


def center_test_box(spec: PatchSpec, frame_w: int | None = None,
                    frame_h: int | None = None) -> PatchSpec:
    """Evaluation-time box: the mean extension (w/6 per side horizontally,
    h/6 vertically), so the part sits centered as in training expectation."""
    x0, y0, w, h = spec.box
    box = (x0 - w / 6.0, y0 - h / 6.0, w + w / 3.0, h + h / 3.0)
    if frame_w is not None:
        box = clamp_box(box, frame_w, frame_h)
    return replace(spec, box=box)


def crop_resize(encoded: np.ndarray, spec: PatchSpec, pair_index: int = 0,
                size: int = PATCH_SIZE) -> Patch:
    """Bilinear crop-resize of (3, H, W) encoded flow bytes to a patch.

    Sample positions use half-pixel centers (an axis-aligned integer box of
    exactly `size` pixels reproduces the source region bit-for-bit); border
    samples clamp to the edge pixel.  Output values are bytes / 255.
    """
    if encoded is None:
        raise DataError("flow has no encoded channels; call encode_flow first")
    x0, y0, w, h = spec.box
    _, fh, fw = encoded.shape
    if w <= 0 or h <= 0:
        raise DataError(f"box for part '{spec.part}' has non-positive size {w}x{h}")
    if x0 >= fw or y0 >= fh or x0 + w <= 0 or y0 + h <= 0:
        raise DataError(f"box for part '{spec.part}' lies outside the {fw}x{fh} frame")
    xs = x0 + (np.arange(size) + 0.5) * (w / size) - 0.5
    ys = y0 + (np.arange(size) + 0.5) * (h / size) - 0.5
    fx0 = np.floor(xs)
    fy0 = np.floor(ys)
    wx = (xs - fx0)[None, None, :]
    wy = (ys - fy0)[None, :, None]
    ix0 = np.clip(fx0, 0, fw - 1).astype(np.int64)
    ix1 = np.clip(fx0 + 1, 0, fw - 1).astype(np.int64)
    iy0 = np.clip(fy0, 0, fh - 1).astype(np.int64)
    iy1 = np.clip(fy0 + 1, 0, fh - 1).astype(np.int64)
    enc = encoded.astype(np.float64)
    ia = enc[:, iy0[:, None], ix0[None, :]]
    ib = enc[:, iy0[:, None], ix1[None, :]]
    ic = enc[:, iy1[:, None], ix0[None, :]]
    idq = enc[:, iy1[:, None], ix1[None, :]]
    out = (ia * (1 - wx) * (1 - wy) + ib * wx * (1 - wy)
           + ic * (1 - wx) * wy + idq * wx * wy) / 255.0
    return Patch(part=spec.part, tensor=out.astype(np.float32), pair_index=pair_index)


def video_patches(encoded_flows: np.ndarray, keypoints: dict[int, PoseKeypoints],
                  parts=PART_ORDER, augment_seed: int | None = None,
                  foot_side_frac: float = 0.25, size: int = PATCH_SIZE) -> list[Patch]:
    """Patches for every frame pair of a video, (N-1) * j in canonical part
    order within each pair.

    Frame pair i uses the keypoints of frame i.  With augment_seed set, each
    (pair, part) crop gets its own rng substream so the stream is identical
    no matter how pairs are scheduled; without it the deterministic
    evaluation extension is applied.
    """
    bad = [p for p in parts if p not in PART_ORDER]
    if bad:
        raise DataError(f"unknown part names {bad}; valid parts are {list(PART_ORDER)}")
    n_pairs, _, fh, fw = encoded_flows.shape
    out = []
    for i in range(n_pairs):
        if i not in keypoints:
            raise DataError(f"no keypoints for frame {i}")
        specs = {s.part: s for s in
                 build_part_boxes(keypoints[i], fw, fh, foot_side_frac)}
        for part in parts:
            spec = specs[part]
            if augment_seed is not None:
                rng = substream(augment_seed, "augment", i, part)
                spec = sample_augmented_box(spec, rng, fw, fh)
            else:
                spec = center_test_box(spec, fw, fh)
            out.append(crop_resize(encoded_flows[i], spec, pair_index=i, size=size))
    return out


def read_keypoints(path) -> dict[int, PoseKeypoints]:
    """Parse a sidecar file of `frame_index joint_name x y` lines."""
    frames: dict[int, dict[str, tuple[float, float]]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise DataError(f"{path}:{lineno}: expected 'frame joint x y', got {line!r}")
        try:
            idx = int(fields[0])
            x, y = float(fields[2]), float(fields[3])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        frames.setdefault(idx, {})[fields[1]] = (x, y)
    if not frames:
        raise DataError(f"{path}: no keypoint records")
    return {idx: PoseKeypoints(frame_index=idx, joints=joints)
            for idx, joints in sorted(frames.items())}


def write_keypoints(path, frames: dict[int, PoseKeypoints]) -> None:
    lines = []
    for idx in sorted(frames):
        kp = frames[idx]
        for name in sorted(kp.joints):
            x, y = kp.joints[name]
            lines.append(f"{idx} {name} {x:.3f} {y:.3f}")
    Path(path).write_text("\n".join(lines) + "\n")
