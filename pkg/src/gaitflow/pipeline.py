"""Command implementations gluing corpus, flow cache, training, descriptor
extraction, and evaluation together.

Every command is a deterministic function of (config, inputs, seed): flow
maps are cached on disk keyed by the flow-parameter digest, augmentation and
initialization draw from named substreams of the one top-level seed, and
artifact files are written atomically (temp file, then rename).
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .descriptors import (GaitDescriptor, extract_features, fuse_avg,
                          fuse_concat, load_descriptors, pca_fit,
                          pca_project_all, save_descriptors)
from .errors import ConfigError, DataError
from .nets import (ArrayDataset, TrainResult, build_network, load_checkpoint,
                   save_checkpoint, train)
from .optflow import Frame, encode_video_flows, load_frame_dir
from .posepatch import (Patch, center_test_box, crop_resize, read_keypoints,
                        sample_augmented_box, video_patches)
from .recognizer import (EvalReport, Gallery, combine,
                         evaluate_identification, evaluate_verification)
from .rng import substream
from .synthwalk import (bbox_from_mask, load_mask, read_manifest, video_dirs,
                        write_corpus)


@dataclass
class VideoRecord:
    subject: str
    name: str
    condition: str
    directory: Path


@dataclass
class ExtractSummary:
    store_path: Path
    n_videos: int
    n_skipped: int
    skipped: list[str]


@contextmanager
def output_lock(target):
    """Exclusive ownership of an output directory (or file's directory)
    through a lock file; a stale lock must be removed by hand."""
    target = Path(target)
    if target.suffix:
        lock = target.with_suffix(target.suffix + ".lock")
        lock.parent.mkdir(parents=True, exist_ok=True)
    else:
        target.mkdir(parents=True, exist_ok=True)
        lock = target / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(f"{target} is owned by another command; remove "
                        f"{lock} if that run is gone") from None
    os.write(fd, f"{os.getpid()}\n".encode())
    os.close(fd)
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _map_bounded(fn, items, workers: int):
    """Run fn over items with a bounded pool, preserving input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def corpus_records(cfg: PipelineConfig, subjects=None, videos=None,
                   manifest: dict | None = None) -> list[VideoRecord]:
    manifest = manifest or read_manifest(cfg.data.root)
    recs = [VideoRecord(s, n, c, d)
            for s, n, c, d in video_dirs(cfg.data.root, manifest)]
    if subjects is not None:
        want = set(subjects)
        recs = [r for r in recs if r.subject in want]
    if videos is not None:
        want = set(videos)
        recs = [r for r in recs if r.name in want]
    return recs


def _resolve_subjects(explicit: list[str], fallback: list[str],
                      manifest: dict) -> list[str]:
    subjects = list(explicit) or list(fallback)
    missing = set(subjects) - set(manifest["subjects"])
    if missing:
        raise DataError(f"subjects {sorted(missing)} not in corpus manifest")
    return subjects


def resolve_splits(cfg: PipelineConfig, manifest: dict) -> tuple[list[str], list[str]]:
    """Config subject lists when given, otherwise the manifest split.

    Explicit train/eval lists are validated as disjoint by the config; a
    command resolves only the side it consumes, so a config may aim the
    evaluation at training subjects on purpose (smoke runs, sanity checks).
    """
    train = _resolve_subjects(cfg.data.train_subjects,
                              manifest["splits"]["train"], manifest)
    evals = _resolve_subjects(cfg.data.eval_subjects,
                              manifest["splits"]["eval"], manifest)
    return train, evals


def flow_digest(cfg: PipelineConfig) -> str:
    return (f"{cfg.flow.to_flow_config().digest_key()}"
            f"-c{cfg.flow.clip:g}-{cfg.data.mode}")


def _video_frames(cfg: PipelineConfig, directory: Path) -> list[Frame]:
    if cfg.data.mode == "silhouette":
        paths = sorted((directory / "masks").glob("*.pbm"))
        if not paths:
            raise DataError(f"no mask files under {directory / 'masks'}")
        return [Frame(load_mask(p).astype(np.float32)) for p in paths]
    return load_frame_dir(directory / "frames")


def video_flows(cfg: PipelineConfig, directory: Path) -> np.ndarray:
    """Encoded flow tensor (N-1, 3, H, W) for one video, disk-cached."""
    cache = Path(directory) / f"flow-{flow_digest(cfg)}.npy"
    if cache.is_file():
        return np.load(cache)
    frames = _video_frames(cfg, directory)
    flows = encode_video_flows(frames, cfg.flow.to_flow_config(), cfg.flow.clip)
    tmp = cache.with_suffix(".tmp.npy")
    np.save(tmp, flows)
    tmp.replace(cache)
    return flows


def precompute_flows(cfg: PipelineConfig, records: list[VideoRecord]) -> int:
    _map_bounded(lambda r: video_flows(cfg, r.directory), records, cfg.workers)
    return len(records)


def _silhouette_patches(cfg: PipelineConfig, flows: np.ndarray,
                        directory: Path, augment_seed: int | None) -> list[Patch]:
    """Full-body patches boxed by the per-frame mask bounding box."""
    paths = sorted((directory / "masks").glob("*.pbm"))
    n_pairs = flows.shape[0]
    _, _, fh, fw = flows.shape
    out = []
    for i in range(n_pairs):
        spec = bbox_from_mask(load_mask(paths[i]))
        if augment_seed is not None:
            rng = substream(augment_seed, "augment", i, spec.part)
            spec = sample_augmented_box(spec, rng, fw, fh)
        else:
            spec = center_test_box(spec, fw, fh)
        out.append(crop_resize(flows[i], spec, pair_index=i))
    return out


def video_patch_list(cfg: PipelineConfig, rec: VideoRecord, flows: np.ndarray,
                     augment: bool) -> list[Patch]:
    seed = None
    if augment:
        seed = int(substream(cfg.seed, "augment-video",
                             rec.subject, rec.name).integers(0, 2**31 - 1))
    if cfg.data.mode == "silhouette":
        return _silhouette_patches(cfg, flows, rec.directory, seed)
    keypoints = read_keypoints(rec.directory / "keypoints.txt")
    return video_patches(flows, keypoints, parts=cfg.patches.parts,
                         augment_seed=seed,
                         foot_side_frac=cfg.patches.foot_side_frac)


def build_training_data(cfg: PipelineConfig, records: list[VideoRecord]
                        ) -> tuple[ArrayDataset, ArrayDataset, list[str]]:
    """All patches of the given videos, split 90/10 into train/validation."""
    subjects = sorted({r.subject for r in records})
    label = {s: i for i, s in enumerate(subjects)}

    def one(rec: VideoRecord):
        flows = video_flows(cfg, rec.directory)
        patches = video_patch_list(cfg, rec, flows, augment=cfg.patches.augment)
        x = np.stack([p.tensor for p in patches])
        y = np.full(len(patches), label[rec.subject], dtype=np.int64)
        return x, y

    parts = _map_bounded(one, records, cfg.workers)
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    perm = substream(cfg.seed, "valsplit").permutation(len(y))
    n_val = max(1, len(y) // 10)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    return (ArrayDataset(x[train_idx], y[train_idx]),
            ArrayDataset(x[val_idx], y[val_idx]), subjects)


def cmd_synth(cfg: PipelineConfig, force: bool = False) -> dict:
    root = Path(cfg.data.root)
    if root.is_dir() and any(root.iterdir()) and not force:
        raise DataError(f"{root} exists and is not empty; pass --force to "
                        "overwrite")
    return write_corpus(root, cfg.seed, n_subjects=cfg.data.n_subjects,
                        n_frames=cfg.data.n_frames,
                        frame_size=(cfg.data.frame_width, cfg.data.frame_height))


def cmd_flow(cfg: PipelineConfig) -> int:
    return precompute_flows(cfg, corpus_records(cfg))


def cmd_train(cfg: PipelineConfig, out_dir) -> TrainResult:
    out_dir = Path(out_dir)
    manifest = read_manifest(cfg.data.root)
    train_subjects = _resolve_subjects(cfg.data.train_subjects,
                                       manifest["splits"]["train"], manifest)
    if len(train_subjects) < 2:
        raise ConfigError(f"training split needs at least 2 subjects, "
                          f"got {len(train_subjects)}")
    records = corpus_records(cfg, subjects=train_subjects, manifest=manifest)
    if not records:
        raise DataError("no training videos found")
    with output_lock(out_dir):
        precompute_flows(cfg, records)
        train_data, val_data, subjects = build_training_data(cfg, records)
        spec = cfg.model.to_network_spec(class_count=len(subjects))
        net = build_network(spec, cfg.seed, l2_coeff=cfg.train.l2_coeff)
        tcfg = replace(cfg.train, rng_seed=cfg.seed)
        result = train(net, spec, train_data, val_data, tcfg,
                       log_path=out_dir / "train.log")
        save_checkpoint(out_dir / "model", result.net, result.spec,
                        seed=cfg.seed)
        (out_dir / "labels.txt").write_text(
            "".join(f"{i} {s}\n" for i, s in enumerate(subjects)))
    return result


def _fuse(cfg: PipelineConfig, features, rec: VideoRecord) -> GaitDescriptor:
    if cfg.descriptor.fusion == "concat":
        return fuse_concat(features, subject_label=rec.subject,
                           condition=rec.condition, video_id=rec.name,
                           parts=cfg.patches.parts)
    return fuse_avg(features, subject_label=rec.subject,
                    condition=rec.condition, video_id=rec.name)


def cmd_extract(cfg: PipelineConfig, checkpoint_stem, store_path) -> ExtractSummary:
    store_path = Path(store_path)
    net, spec = load_checkpoint(checkpoint_stem)
    if spec.architecture != cfg.model.architecture:
        raise ConfigError(
            f"checkpoint architecture {spec.architecture!r} does not match "
            f"config {cfg.model.architecture!r}")
    manifest = read_manifest(cfg.data.root)
    eval_subjects = _resolve_subjects(cfg.data.eval_subjects,
                                      manifest["splits"]["eval"], manifest)
    wanted = list(cfg.data.gallery_videos) + list(cfg.data.probe_videos)
    records = corpus_records(cfg, subjects=eval_subjects, videos=wanted,
                             manifest=manifest)
    if not records:
        raise DataError("no evaluation videos found")
    trunc = cfg.descriptor.truncation

    def one(rec: VideoRecord):
        flows = video_flows(cfg, rec.directory)
        if trunc is not None:
            if flows.shape[0] + 1 < trunc:
                return rec, None
            flows = flows[:trunc - 1]
        patches = video_patch_list(cfg, rec, flows, augment=False)
        features = extract_features(net, patches)
        return rec, _fuse(cfg, features, rec)

    descs, skipped = [], []
    for rec, desc in _map_bounded(one, records, cfg.workers):
        if desc is None:
            skipped.append(f"{rec.subject}/{rec.name}")
            print(f"warning: {rec.subject}/{rec.name} shorter than "
                  f"truncation {trunc}, skipped", file=sys.stderr)
        else:
            descs.append(desc)
    if not descs:
        raise DataError("every evaluation video was skipped")
    with output_lock(store_path):
        tmp = store_path.with_suffix(store_path.suffix + ".tmp")
        save_descriptors(tmp, descs)
        tmp.replace(store_path)
    return ExtractSummary(store_path, len(descs), len(skipped), skipped)


def cmd_evaluate(cfg: PipelineConfig, store_path, out_dir) -> EvalReport:
    out_dir = Path(out_dir)
    descs = load_descriptors(store_path)
    gallery_ids = set(cfg.data.gallery_videos)
    probe_ids = set(cfg.data.probe_videos)
    gallery = [d for d in descs if d.video_id in gallery_ids]
    probes = [d for d in descs if d.video_id in probe_ids]
    if not gallery:
        raise DataError("descriptor store holds no gallery videos")
    if not probes:
        raise DataError("descriptor store holds no probe videos")
    if cfg.descriptor.pca_dim is not None:
        model = pca_fit(np.stack([d.vector for d in gallery]),
                        cfg.descriptor.pca_dim)
        gallery = pca_project_all(model, gallery)
        probes = pca_project_all(model, probes)
    gal = Gallery.from_descriptors(gallery, cfg.descriptor.metric)
    ident = evaluate_identification(gal, probes)
    aggregate = "min" if cfg.descriptor.min_aggregation else "video"
    verif = evaluate_verification(gallery, probes, cfg.descriptor.metric,
                                  aggregate=aggregate)
    report = combine(ident, verif)
    with output_lock(out_dir):
        report.write(out_dir)
    return report


def cmd_transfer(train_cfg: PipelineConfig, eval_cfg: PipelineConfig,
                 out_dir) -> EvalReport:
    """Train the extractor on corpus A, evaluate descriptors on corpus B
    with no weight updates on B; A = B degenerates to plain evaluation."""
    out_dir = Path(out_dir)
    with output_lock(out_dir):
        cmd_train(train_cfg, out_dir / "train")
        summary = cmd_extract(eval_cfg, out_dir / "train" / "model",
                              out_dir / "descriptors.bin")
        report = cmd_evaluate(eval_cfg, summary.store_path, out_dir / "eval")
    return report
