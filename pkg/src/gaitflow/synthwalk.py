"""Synthetic walking-figure corpus generator.

Renders an articulated stick figure with identity-specific sinusoidal gait
kinematics over a static textured background, yielding frames, silhouette
masks, ground-truth keypoints, and a corpus manifest in the layout the CLI
ingests.  Both the figure and the background carry texture so optical flow
has gradients to track.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from .errors import DataError
from .optflow import Frame
from .posepatch import PatchSpec, PoseKeypoints, write_keypoints
from .rng import substream

CONDITIONS = ("normal", "perturbed-a", "perturbed-b")

# default video roster per subject: six normal walks plus two of each
# perturbed condition, mirroring the usual gallery/probe structure
DEFAULT_VIDEOS = (
    ("n00", "normal"), ("n01", "normal"), ("n02", "normal"),
    ("n03", "normal"), ("n04", "normal"), ("n05", "normal"),
    ("a00", "perturbed-a"), ("a01", "perturbed-a"),
    ("b00", "perturbed-b"), ("b01", "perturbed-b"),
)

MIN_FRAMES = 32  # roughly one gait cycle

_BG_BASE = 0.20
_BODY_BASE = 0.80
_TEX_AMP = 0.10


@dataclass
class WalkerIdentity:
    """Gait parameters that define one synthetic subject."""

    stride_freq: float            # cycles/frame
    limb_amp: float               # leg swing amplitude, pixels
    phases: dict[str, float]      # radians per limb: leg, arm, torso
    torso_sway: float             # vertical bob amplitude, pixels
    height: float                 # head-to-foot, pixels
    speed: float                  # horizontal translation, pixels/frame

    def __post_init__(self):
        if not 0.01 < self.stride_freq < 0.2:
            raise DataError(
                f"stride frequency {self.stride_freq} outside (0.01, 0.2)")
        for key in ("leg", "arm", "torso"):
            if key not in self.phases:
                raise DataError(f"missing phase offset for limb '{key}'")


@dataclass
class SyntheticVideo:
    label: str
    condition: str
    frames: list[Frame]
    masks: list[np.ndarray]                 # (H, W) bool
    keypoints: dict[int, PoseKeypoints]
    background: np.ndarray | None = None    # the static plate, for subtraction


def sample_identities(n: int, rng: np.random.Generator) -> list[WalkerIdentity]:
    """n identities from shuffled stratified grids: every parameter takes n
    evenly spaced values assigned by independent permutations, so any two
    identities differ in every field."""
    if n < 1:
        raise DataError("need at least one identity")

    def grid(lo, hi):
        vals = np.linspace(lo, hi, n)
        return vals[rng.permutation(n)]

    freqs = grid(0.05, 0.13)
    amps = grid(4.0, 9.0)
    leg_ph = grid(0.0, 2.0 * math.pi * (1.0 - 1.0 / max(n, 2)))
    arm_ph = grid(-0.6, 0.6)
    torso_ph = grid(0.0, 2.0 * math.pi * (1.0 - 1.0 / max(n, 2)))
    sways = grid(0.8, 2.2)
    heights = grid(68.0, 86.0)
    speeds = grid(0.15, 0.5)
    return [WalkerIdentity(
        stride_freq=float(freqs[i]), limb_amp=float(amps[i]),
        phases={"leg": float(leg_ph[i]), "arm": float(arm_ph[i]),
                "torso": float(torso_ph[i])},
        torso_sway=float(sways[i]), height=float(heights[i]),
        speed=float(speeds[i])) for i in range(n)]


def _skeleton(ident: WalkerIdentity, t: int, x0: float, ground_y: float,
              frame_w: int, amp_f: float, freq_f: float) -> dict[str, tuple[float, float]]:
    """Joint positions at frame t; x wraps modulo the frame width."""
    h = ident.height
    amp = ident.limb_amp * amp_f
    lift = 0.4 * amp
    phase = 2.0 * math.pi * (ident.stride_freq * freq_f * t) + ident.phases["leg"]
    bob = ident.torso_sway * math.sin(2.0 * phase + ident.phases["torso"])
    cx = (x0 + ident.speed * t) % frame_w
    top = ground_y - h + bob

    def leg(side_phase):
        swing = math.sin(phase + side_phase)
        foot_x = cx + amp * swing
        foot_y = ground_y - lift * (0.5 + 0.5 * math.sin(phase + side_phase))
        knee_x = cx + 0.55 * amp * swing
        knee_y = ground_y - 0.26 * h + 0.5 * bob
        return (knee_x, knee_y), (foot_x, foot_y)

    def hand(shoulder_x, side_phase):
        sw = math.sin(phase + side_phase + math.pi + ident.phases["arm"])
        return (shoulder_x + 0.7 * amp * sw, top + 0.55 * h + 0.15 * amp * sw)

    shoulder_y = top + 0.18 * h
    hip_y = top + 0.52 * h
    lsh, rsh = (cx - 0.11 * h, shoulder_y), (cx + 0.11 * h, shoulder_y)
    lknee, lfoot = leg(0.0)
    rknee, rfoot = leg(math.pi)
    joints = {
        "head": (cx, top),
        "left_shoulder": lsh, "right_shoulder": rsh,
        "left_hand": hand(lsh[0], 0.0), "right_hand": hand(rsh[0], math.pi),
        "left_hip": (cx - 0.07 * h, hip_y), "right_hip": (cx + 0.07 * h, hip_y),
        "left_knee": lknee, "right_knee": rknee,
        "left_foot": lfoot, "right_foot": rfoot,
    }
    return {k: (x % frame_w, y) for k, (x, y) in joints.items()}


_SEGMENTS = (
    ("head", "head", 5.0),            # zero-length capsule, i.e. a disc
    ("left_shoulder", "right_shoulder", 3.0),
    ("head", "left_hip", 4.0),        # spine approximated head-to-hips
    ("head", "right_hip", 4.0),
    ("left_shoulder", "left_hand", 2.5),
    ("right_shoulder", "right_hand", 2.5),
    ("left_hip", "left_knee", 2.8),
    ("right_hip", "right_knee", 2.8),
    ("left_knee", "left_foot", 2.8),
    ("right_knee", "right_foot", 2.8),
)


def _draw_capsule(alpha: np.ndarray, p0, p1, radius: float) -> None:
    """Max-combine an anti-aliased thick segment into the coverage map."""
    h, w = alpha.shape
    x_lo = int(math.floor(min(p0[0], p1[0]) - radius - 1))
    x_hi = int(math.ceil(max(p0[0], p1[0]) + radius + 2))
    y_lo = int(math.floor(min(p0[1], p1[1]) - radius - 1))
    y_hi = int(math.ceil(max(p0[1], p1[1]) + radius + 2))
    x_lo, x_hi = max(x_lo, 0), min(x_hi, w)
    y_lo, y_hi = max(y_lo, 0), min(y_hi, h)
    if x_lo >= x_hi or y_lo >= y_hi:
        return
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    norm2 = dx * dx + dy * dy
    if norm2 < 1e-12:
        dist = np.hypot(xs - p0[0], ys - p0[1])
    else:
        t = np.clip(((xs - p0[0]) * dx + (ys - p0[1]) * dy) / norm2, 0.0, 1.0)
        dist = np.hypot(xs - (p0[0] + t * dx), ys - (p0[1] + t * dy))
    cov = np.clip(radius + 0.5 - dist, 0.0, 1.0)
    np.maximum(alpha[y_lo:y_hi, x_lo:x_hi], cov, out=alpha[y_lo:y_hi, x_lo:x_hi])


def _figure_alpha(joints, frame_w: int, frame_h: int) -> np.ndarray:
    alpha = np.zeros((frame_h, frame_w), dtype=np.float64)
    for a, b, radius in _SEGMENTS:
        pa, pb = joints[a], joints[b]
        # redraw at +-width so figures straddling the seam never truncate
        for off in (0.0, -float(frame_w), float(frame_w)):
            _draw_capsule(alpha, (pa[0] + off, pa[1]), (pb[0] + off, pb[1]), radius)
    return alpha


def _smooth_field(shape, rng: np.random.Generator, cell: int = 4) -> np.ndarray:
    """Band-limited noise in [-1, 1]: coarse uniform grid upsampled bilinearly."""
    h, w = shape
    coarse = rng.uniform(-1.0, 1.0, size=(max(h // cell, 2), max(w // cell, 2)))
    return cv2.resize(coarse, (w, h), interpolation=cv2.INTER_LINEAR)


def _sample_wrapped(tex: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear sample with periodic wrap, so body texture translates smoothly."""
    h, w = tex.shape
    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy, fx = ys - y0, xs - x0
    iy0 = y0.astype(np.int64) % h
    ix0 = x0.astype(np.int64) % w
    iy1, ix1 = (iy0 + 1) % h, (ix0 + 1) % w
    return (tex[iy0, ix0] * (1 - fy) * (1 - fx) + tex[iy0, ix1] * (1 - fy) * fx
            + tex[iy1, ix0] * fy * (1 - fx) + tex[iy1, ix1] * fy * fx)


def generate(ident: WalkerIdentity, condition: str, n_frames: int,
             frame_size: tuple[int, int], rng: np.random.Generator,
             label: str = "subject") -> SyntheticVideo:
    """Render one video.  The renderer consumes exactly the keypoints that
    are emitted, so sidecar joints match drawn limbs by construction."""
    if condition not in CONDITIONS:
        raise DataError(f"unknown condition {condition!r}; expected {CONDITIONS}")
    if n_frames < MIN_FRAMES:
        raise DataError(f"need at least {MIN_FRAMES} frames, got {n_frames}")
    frame_w, frame_h = frame_size
    if ident.height > frame_h - 10:
        raise DataError(
            f"figure height {ident.height} too tall for frame height {frame_h}")

    if condition == "normal":
        amp_f = freq_f = 1.0
    else:
        amp_f = float(rng.uniform(0.9, 1.1))
        freq_f = float(rng.uniform(0.9, 1.1))

    background = _BG_BASE + _TEX_AMP * _smooth_field((frame_h, frame_w), rng)
    body_tex = _BODY_BASE + _TEX_AMP * _smooth_field((2 * frame_h, 2 * frame_w), rng)
    ground_y = frame_h - 6.0
    x0 = 14.0 + float(rng.uniform(0.0, 2.0))

    ys_grid, xs_grid = np.mgrid[0:frame_h, 0:frame_w].astype(np.float64)
    frames, masks, keypoints = [], [], {}
    for t in range(n_frames):
        joints = _skeleton(ident, t, x0, ground_y, frame_w, amp_f, freq_f)
        alpha = _figure_alpha(joints, frame_w, frame_h)
        # texture anchored to the torso so the body interior moves with it
        anchor_x = (x0 + ident.speed * t) % frame_w
        anchor_y = ident.torso_sway * math.sin(
            2.0 * (2.0 * math.pi * ident.stride_freq * freq_f * t
                   + ident.phases["leg"]) + ident.phases["torso"])
        body = _sample_wrapped(body_tex, ys_grid - anchor_y, xs_grid - anchor_x)
        pixels = background * (1.0 - alpha) + body * alpha
        frames.append(Frame(np.clip(pixels, 0.0, 1.0).astype(np.float32)))
        masks.append(alpha > 0.5)
        kp = PoseKeypoints(frame_index=t, joints={
            k: (min(max(x, 0.0), frame_w - 1.0), min(max(y, 0.0), frame_h - 1.0))
            for k, (x, y) in joints.items()})
        keypoints[t] = kp
    return SyntheticVideo(label=label, condition=condition, frames=frames,
                          masks=masks, keypoints=keypoints, background=background)


def bbox_from_mask(mask: np.ndarray) -> PatchSpec:
    """Tight full-body box over foreground pixels, pixel-count sized."""
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise DataError("empty mask: no foreground pixels")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return PatchSpec("full-body", (float(x0), float(y0),
                                   float(x1 - x0 + 1), float(y1 - y0 + 1)))


def subtract_background(frames: list[Frame], background: np.ndarray,
                        threshold: float = 0.3,
                        largest_component: bool = True) -> list[np.ndarray]:
    """Threshold |frame - background|, then keep the largest 8-connected
    component (skippable for diagnostic use)."""
    out = []
    struct = np.ones((3, 3), dtype=bool)
    for fr in frames:
        if fr.pixels.shape != background.shape:
            raise DataError(
                f"frame {fr.pixels.shape} vs background {background.shape} mismatch")
        mask = np.abs(fr.pixels.astype(np.float64) - background) > threshold
        if largest_component and mask.any():
            labels, count = ndimage.label(mask, structure=struct)
            sizes = ndimage.sum_labels(mask, labels, index=range(1, count + 1))
            mask = labels == (1 + int(np.argmax(sizes)))
        out.append(mask)
    return out


def _write_video(video_dir: Path, video: SyntheticVideo) -> None:
    frames_dir = video_dir / "frames"
    masks_dir = video_dir / "masks"
    frames_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    for t, (frame, mask) in enumerate(zip(video.frames, video.masks)):
        pix = np.clip(np.rint(frame.pixels * 255.0), 0, 255).astype(np.uint8)
        cv2.imwrite(str(frames_dir / f"{t:04d}.pgm"), pix)
        cv2.imwrite(str(masks_dir / f"{t:04d}.pbm"),
                    mask.astype(np.uint8) * 255)
    write_keypoints(video_dir / "keypoints.txt", video.keypoints)


def write_corpus(root, seed: int, n_subjects: int = 20, n_frames: int = 64,
                 frame_size: tuple[int, int] = (64, 96),
                 videos=DEFAULT_VIDEOS, train_fraction: float = 0.5) -> dict:
    """Generate and write the full corpus; returns the manifest dict.

    Every video derives its rng substream from (seed, subject, video name),
    so regeneration is reproducible video-by-video in any order.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    identities = sample_identities(n_subjects, substream(seed, "identities"))
    subjects = [f"s{i:02d}" for i in range(n_subjects)]
    n_train = int(round(train_fraction * n_subjects))
    manifest = {
        "seed": seed,
        "frame_size": list(frame_size),
        "n_frames": n_frames,
        "subjects": subjects,
        "conditions": {name: cond for name, cond in videos},
        "splits": {"train": subjects[:n_train], "eval": subjects[n_train:]},
        "identity_params": {},
    }
    for si, (subject, ident) in enumerate(zip(subjects, identities)):
        manifest["identity_params"][subject] = {
            "stride_freq": ident.stride_freq, "limb_amp": ident.limb_amp,
            "phases": ident.phases, "torso_sway": ident.torso_sway,
            "height": ident.height, "speed": ident.speed,
        }
        for name, cond in videos:
            video = generate(ident, cond, n_frames, frame_size,
                             substream(seed, "corpus", si, name), label=subject)
            _write_video(root / subject / name, video)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def read_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.is_file():
        raise DataError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("subjects", "conditions", "splits", "frame_size"):
        if key not in manifest:
            raise DataError(f"{path}: missing key {key!r}")
    return manifest


def load_mask(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DataError(f"cannot read mask {path}")
    return img > 127


def video_dirs(root, manifest: dict | None = None):
    """Yield (subject, video-name, condition, directory) in sorted order."""
    root = Path(root)
    manifest = manifest or read_manifest(root)
    for subject in manifest["subjects"]:
        subject_dir = root / subject
        if not subject_dir.is_dir():
            raise DataError(f"missing subject directory {subject_dir}")
        for name in sorted(manifest["conditions"]):
            video_dir = subject_dir / name
            if video_dir.is_dir():
                yield subject, name, manifest["conditions"][name], video_dir
