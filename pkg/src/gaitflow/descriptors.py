"""Per-patch features, per-video gait descriptors, and PCA reduction.

Features are the network's last hidden layer in eval mode.  A video's
descriptor is either the mean over all (N-1)*j patch features (avg fusion)
or the per-part temporal means concatenated in canonical part order (concat
fusion), L2-normalized in both cases.  PCA is fit on gallery descriptors
only; projected vectors are re-normalized before nearest-neighbor use.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (DataError, DegenerateDescriptorError, DimensionError)
from .posepatch import PART_ORDER, Patch
from .tensornet import Network

_MAGIC = b"GFDESCRS"
_VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


@dataclass
class FrameFeature:
    part: str
    pair_index: int
    vector: np.ndarray


@dataclass
class GaitDescriptor:
    subject_label: str
    condition: str
    fusion: str                  # "avg" | "concat"
    vector: np.ndarray
    video_id: str = ""
    pca_dim: int | None = None


@dataclass
class PcaModel:
    mean: np.ndarray             # (d,)
    components: np.ndarray       # (d, k), orthonormal columns
    eigenvalues: np.ndarray      # (k,), descending


def l2_normalize(v: np.ndarray, what: str = "descriptor") -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if norm < 1e-12 or not np.isfinite(norm):
        raise DegenerateDescriptorError(
            f"{what} has {'zero' if norm < 1e-12 else 'non-finite'} norm")
    return v / norm


def extract_features(net: Network, patches: list[Patch],
                     batch: int = 256) -> list[FrameFeature]:
    """Last-hidden-layer vectors for a patch list, eval mode, batched."""
    if not patches:
        return []
    expected = getattr(net, "input_shape", None) or patches[0].tensor.shape
    for p in patches:
        if p.tensor.shape != tuple(expected):
            raise DimensionError(
                f"patch tensor {p.tensor.shape} does not match network input "
                f"{tuple(expected)}")
    x = np.stack([p.tensor for p in patches])
    try:
        feats = np.concatenate([net.forward_features(x[i:i + batch])
                                for i in range(0, len(patches), batch)])
    except DimensionError as exc:
        raise DimensionError(f"patch/net shape mismatch: {exc}") from exc
    return [FrameFeature(part=p.part, pair_index=p.pair_index, vector=feats[i])
            for i, p in enumerate(patches)]


def _canonical(features: list[FrameFeature]) -> list[FrameFeature]:
    # a fixed accumulation order makes fusion exact under input permutation;
    # (part, pair index) identifies a patch within one video
    rank = {p: i for i, p in enumerate(PART_ORDER)}
    return sorted(features, key=lambda f: (rank.get(f.part, len(rank)), f.pair_index))


def fuse_avg(features: list[FrameFeature], subject_label: str,
             condition: str = "normal", video_id: str = "") -> GaitDescriptor:
    """Arithmetic mean over every patch feature, then L2 normalization."""
    if not features:
        raise DataError("cannot fuse an empty feature list")
    mat = np.stack([f.vector for f in _canonical(features)]).astype(np.float64)
    return GaitDescriptor(subject_label=subject_label, condition=condition,
                          fusion="avg", video_id=video_id,
                          vector=l2_normalize(mat.mean(axis=0)))


def fuse_concat(features: list[FrameFeature], subject_label: str,
                condition: str = "normal", video_id: str = "",
                parts=PART_ORDER) -> GaitDescriptor:
    """Per-part temporal means, concatenated in canonical part order, then
    L2 normalization."""
    if not features:
        raise DataError("cannot fuse an empty feature list")
    grouped: dict[str, list[np.ndarray]] = {}
    for f in _canonical(features):
        grouped.setdefault(f.part, []).append(f.vector)
    order = [p for p in PART_ORDER if p in parts]
    means = []
    for part in order:
        if part not in grouped:
            raise DataError(f"no features for part '{part}'")
        means.append(np.stack(grouped[part]).astype(np.float64).mean(axis=0))
    return GaitDescriptor(subject_label=subject_label, condition=condition,
                          fusion="concat", video_id=video_id,
                          vector=l2_normalize(np.concatenate(means)))


def pca_fit(vectors: np.ndarray, k: int) -> PcaModel:
    """Top-k principal axes of the rows of `vectors` via SVD.

    Eigenvalues are the sample-covariance spectrum s^2/(n-1); k is capped by
    the covariance rank bound min(d, n-1).
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected a (n, d) matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise DataError("PCA needs at least two vectors")
    if not 1 <= k <= min(d, n - 1):
        raise DataError(f"k={k} outside [1, min(d={d}, n-1={n - 1})]")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    return PcaModel(mean=mean, components=vt[:k].T.copy(),
                    eigenvalues=(s[:k] ** 2) / (n - 1))


def pca_project(model: PcaModel, desc: GaitDescriptor) -> GaitDescriptor:
    """Center, project, and re-normalize one descriptor."""
    v = np.asarray(desc.vector, dtype=np.float64)
    if v.shape[0] != model.mean.shape[0]:
        raise DimensionError(
            f"descriptor dim {v.shape[0]} != PCA input dim {model.mean.shape[0]}")
    proj = (v - model.mean) @ model.components
    return GaitDescriptor(subject_label=desc.subject_label,
                          condition=desc.condition, fusion=desc.fusion,
                          video_id=desc.video_id,
                          vector=l2_normalize(proj, "projected descriptor"),
                          pca_dim=model.components.shape[1])


def pca_project_all(model: PcaModel, descs: list[GaitDescriptor]) -> list[GaitDescriptor]:
    return [pca_project(model, d) for d in descs]


def _write_str(fh, s: str):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", _read_exact(fh, 2))
    return _read_exact(fh, n).decode("utf-8")


def _read_exact(fh, n: int) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise DataError("descriptor store truncated")
    return raw


def save_descriptors(path, descs: list[GaitDescriptor]) -> None:
    """Binary store: header (magic, version, count) then per-descriptor
    (label, condition, fusion, video-id, pca-dim, dtype, dim, raw vector)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(descs)))
        for d in descs:
            vec = np.ascontiguousarray(d.vector)
            if vec.dtype.newbyteorder("<") not in _DTYPE_CODES:
                vec = vec.astype("<f8")
            _write_str(fh, d.subject_label)
            _write_str(fh, d.condition)
            _write_str(fh, d.fusion)
            _write_str(fh, d.video_id)
            fh.write(struct.pack("<iBI", -1 if d.pca_dim is None else d.pca_dim,
                                 _DTYPE_CODES[vec.dtype.newbyteorder("<")],
                                 vec.shape[0]))
            fh.write(vec.astype(vec.dtype.newbyteorder("<"), copy=False).tobytes())


def load_descriptors(path) -> list[GaitDescriptor]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no descriptor store at {path}")
    with open(path, "rb") as fh:
        if _read_exact(fh, 8) != _MAGIC:
            raise DataError(f"{path}: not a descriptor store (bad magic)")
        version, count = struct.unpack("<II", _read_exact(fh, 8))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported store version {version}")
        out = []
        for _ in range(count):
            label = _read_str(fh)
            condition = _read_str(fh)
            fusion = _read_str(fh)
            video_id = _read_str(fh)
            pca_dim, code, dim = struct.unpack("<iBI", _read_exact(fh, 9))
            if code not in _DTYPES:
                raise DataError(f"{path}: unknown dtype code {code}")
            dtype = _DTYPES[code]
            vec = np.frombuffer(_read_exact(fh, dim * dtype.itemsize),
                                dtype=dtype).copy()
            out.append(GaitDescriptor(
                subject_label=label, condition=condition, fusion=fusion,
                video_id=video_id, vector=vec,
                pca_dim=None if pca_dim < 0 else pca_dim))
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after {count} records")
    return out


def export_csv(path, descs: list[GaitDescriptor]) -> None:
    """Plain-text mirror of the store for eyeballing."""
    if not descs:
        raise DataError("nothing to export")
    dim = descs[0].vector.shape[0]
    lines = ["subject,condition,fusion,video,pca_dim,"
             + ",".join(f"v{i}" for i in range(dim))]
    for d in descs:
        head = f"{d.subject_label},{d.condition},{d.fusion},{d.video_id}," \
               f"{'' if d.pca_dim is None else d.pca_dim},"
        lines.append(head + ",".join(f"{x:.9g}" for x in d.vector))
    Path(path).write_text("\n".join(lines) + "\n")
