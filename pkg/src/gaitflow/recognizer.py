"""Nearest-neighbor identification and pairwise verification.

A probe's score against an enrolled subject is the minimum distance over
that subject's gallery entries (ties between subjects break toward the
smaller label).  Verification scores every cross pair of gallery-side and
probe-side videos, sweeps a threshold over all distinct scores to trace
FAR/FRR, and interpolates the equal error rate at the FAR = FRR crossing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descriptors import GaitDescriptor
from .errors import DataError, DimensionError

METRICS = ("L1", "L2")


def _pairwise_distance(metric: str, mat: np.ndarray, v: np.ndarray) -> np.ndarray:
    if metric == "L1":
        return np.abs(mat - v).sum(axis=1)
    return np.sqrt(((mat - v) ** 2).sum(axis=1))


@dataclass
class Gallery:
    """Enrolled descriptor matrix plus subject labels; immutable after init."""

    vectors: np.ndarray          # (n, d) float64
    labels: list[str]
    metric: str = "L1"

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.metric not in METRICS:
            raise DataError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.labels):
            raise DataError(
                f"{len(self.labels)} labels for matrix {self.vectors.shape}")
        if self.vectors.shape[0] == 0:
            raise DataError("empty gallery")
        self.subjects = sorted(set(self.labels))
        self._rows = {s: np.flatnonzero([l == s for l in self.labels])
                      for s in self.subjects}

    @classmethod
    def from_descriptors(cls, descs: list[GaitDescriptor], metric: str = "L1"):
        if not descs:
            raise DataError("empty gallery")
        return cls(np.stack([d.vector for d in descs]),
                   [d.subject_label for d in descs], metric)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def classify(gallery: Gallery, probe: np.ndarray) -> list[tuple[str, float]]:
    """Subjects ranked by ascending minimum-entry distance to the probe."""
    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (gallery.dim,):
        raise DimensionError(
            f"probe shape {probe.shape} does not match gallery dim {gallery.dim}")
    dists = _pairwise_distance(gallery.metric, gallery.vectors, probe)
    scored = [(s, float(dists[gallery._rows[s]].min())) for s in gallery.subjects]
    return sorted(scored, key=lambda t: (t[1], t[0]))


@dataclass
class EvalReport:
    """Identification (rank/CMC) and verification (ROC/EER) results; either
    half may be absent when only one protocol was run."""

    rank1: float | None = None
    rank5: float | None = None
    cmc: np.ndarray | None = None               # fractions at ranks 1..K
    roc: list[tuple[float, float, float]] | None = None  # (threshold, FAR, FRR)
    eer: float | None = None
    n_probes: int = 0
    n_genuine: int = 0
    n_impostor: int = 0

    def to_text(self) -> str:
        lines = []
        if self.rank1 is not None:
            lines += [f"rank1={self.rank1:.6f}", f"rank5={self.rank5:.6f}",
                      f"n_probes={self.n_probes}",
                      "cmc=" + ",".join(f"{v:.6f}" for v in self.cmc)]
        if self.eer is not None:
            lines += [f"eer={self.eer:.6f}", f"n_genuine={self.n_genuine}",
                      f"n_impostor={self.n_impostor}",
                      f"n_roc_points={len(self.roc)}"]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(self.to_text())
        if self.cmc is not None:
            rows = ["rank,fraction"] + [f"{r + 1},{v:.6f}"
                                        for r, v in enumerate(self.cmc)]
            (out_dir / "cmc.csv").write_text("\n".join(rows) + "\n")
        if self.roc is not None:
            rows = ["threshold,far,frr"] + [f"{t:.9g},{far:.6f},{frr:.6f}"
                                            for t, far, frr in self.roc]
            (out_dir / "roc.csv").write_text("\n".join(rows) + "\n")


def combine(ident: EvalReport | None, verif: EvalReport | None) -> EvalReport:
    out = EvalReport()
    if ident is not None:
        out.rank1, out.rank5, out.cmc = ident.rank1, ident.rank5, ident.cmc
        out.n_probes = ident.n_probes
    if verif is not None:
        out.roc, out.eer = verif.roc, verif.eer
        out.n_genuine, out.n_impostor = verif.n_genuine, verif.n_impostor
    return out


def evaluate_identification(gallery: Gallery,
                            probes: list[GaitDescriptor]) -> EvalReport:
    """CMC over ranks 1..K for closed-set probes (every label enrolled)."""
    if not probes:
        raise DataError("no probes")
    enrolled = set(gallery.subjects)
    k = len(gallery.subjects)
    hits_at = np.zeros(k, dtype=np.int64)
    for p in probes:
        if p.subject_label not in enrolled:
            raise DataError(f"probe subject {p.subject_label!r} not enrolled")
        ranking = [s for s, _ in classify(gallery, p.vector)]
        hits_at[ranking.index(p.subject_label)] += 1
    cmc = np.cumsum(hits_at) / len(probes)
    return EvalReport(rank1=float(cmc[0]), rank5=float(cmc[min(5, k) - 1]),
                      cmc=cmc, n_probes=len(probes))


def roc_from_scores(genuine: np.ndarray, impostor: np.ndarray
                    ) -> tuple[list[tuple[float, float, float]], float]:
    """Threshold sweep over all distinct scores (accept when score <= t).

    Returns ROC points sorted by ascending threshold (FAR non-decreasing,
    FRR non-increasing) and the EER, linearly interpolated between the two
    points bracketing the FAR = FRR crossing; a virtual (FAR=0, FRR=1) point
    below the smallest score anchors the sweep.
    """
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise DataError("need at least one genuine and one impostor pair")
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    far = np.array([(impostor <= t).mean() for t in thresholds])
    frr = np.array([(genuine > t).mean() for t in thresholds])
    roc = [(float(t), float(a), float(r))
           for t, a, r in zip(thresholds, far, frr)]

    diff_prev, far_prev = -1.0, 0.0   # virtual point below min: FAR=0, FRR=1
    eer = None
    for t, a, r in roc:
        diff = a - r
        if diff >= 0.0:
            if diff == 0.0:
                eer = a
            else:
                alpha = -diff_prev / (diff - diff_prev)
                eer = far_prev + alpha * (a - far_prev)
            break
        diff_prev, far_prev = diff, a
    if eer is None:   # never crossed: all thresholds reject everything
        eer = 1.0
    return roc, float(eer)


def evaluate_verification(gallery_descs: list[GaitDescriptor],
                          probe_descs: list[GaitDescriptor],
                          metric: str = "L1",
                          aggregate: str = "video") -> EvalReport:
    """Score all cross pairs and sweep the accept threshold.

    aggregate="video" scores each (gallery video, probe video) pair;
    aggregate="min" collapses a subject's gallery videos to the minimum
    distance per probe, one pair per (probe, enrolled subject).
    """
    if metric not in METRICS:
        raise DataError(f"metric must be one of {METRICS}, got {metric!r}")
    if aggregate not in ("video", "min"):
        raise DataError(f"aggregate must be 'video' or 'min', got {aggregate!r}")
    if not gallery_descs or not probe_descs:
        raise DataError("both sides need at least one descriptor")
    gmat = np.stack([d.vector for d in gallery_descs]).astype(np.float64)
    genuine, impostor = [], []
    if aggregate == "video":
        for p in probe_descs:
            d = _pairwise_distance(metric, gmat, np.asarray(p.vector, np.float64))
            for gi, g in enumerate(gallery_descs):
                (genuine if g.subject_label == p.subject_label
                 else impostor).append(float(d[gi]))
    else:
        subjects = sorted({g.subject_label for g in gallery_descs})
        rows = {s: [i for i, g in enumerate(gallery_descs)
                    if g.subject_label == s] for s in subjects}
        for p in probe_descs:
            d = _pairwise_distance(metric, gmat, np.asarray(p.vector, np.float64))
            for s in subjects:
                score = float(d[rows[s]].min())
                (genuine if s == p.subject_label else impostor).append(score)
    if not genuine or not impostor:
        raise DataError(
            "verification needs both genuine and impostor pairs; "
            f"got {len(genuine)} genuine, {len(impostor)} impostor")
    roc, eer = roc_from_scores(np.array(genuine), np.array(impostor))
    return EvalReport(roc=roc, eer=eer, n_genuine=len(genuine),
                      n_impostor=len(impostor))
