"""Pipeline configuration: a nested dataclass tree with a YAML file format,
environment-variable overrides, and validation.

Scalar keys can be overridden through the environment as
GAITFLOW_<SECTION>_<KEY> (GAITFLOW_SEED and GAITFLOW_WORKERS at top level),
for example GAITFLOW_TRAIN_LEARNING_RATE=0.05 or GAITFLOW_DESCRIPTOR_PCA_DIM=32.
List-valued keys (parts, subject and video lists) are file-only.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .nets import NetworkSpec, TrainConfig
from .optflow import FlowConfig
from .posepatch import PART_ORDER
from .recognizer import METRICS

ENV_PREFIX = "GAITFLOW_"
MODES = ("raw", "silhouette")
FUSIONS = ("avg", "concat")


@dataclass
class DataConfig:
    """Corpus location, capture mode, and the evaluation protocol split."""

    root: str = "data/corpus"
    mode: str = "raw"                 # raw | silhouette
    n_subjects: int = 20
    n_frames: int = 64
    frame_width: int = 64
    frame_height: int = 96
    train_subjects: list[str] = field(default_factory=list)   # [] = manifest split
    eval_subjects: list[str] = field(default_factory=list)
    gallery_videos: list[str] = field(
        default_factory=lambda: ["n00", "n01", "n02", "n03"])
    probe_videos: list[str] = field(
        default_factory=lambda: ["n04", "n05", "a00", "a01", "b00", "b01"])


@dataclass
class ModelConfig:
    """Architecture family plus the size knobs shared with NetworkSpec."""

    architecture: str = "wide-resnet"
    dense_width: int = 1024
    widen_factor: int = 2
    blocks_per_group: int = 1
    base_filters: int | None = 8

    def to_network_spec(self, class_count: int) -> NetworkSpec:
        return NetworkSpec(architecture=self.architecture,
                           class_count=class_count,
                           dense_width=self.dense_width,
                           widen_factor=self.widen_factor,
                           blocks_per_group=self.blocks_per_group,
                           base_filters=self.base_filters)


@dataclass
class FlowSection:
    """Farneback parameters plus the byte-encoding clip."""

    clip: float = 16.0
    levels: int = 3
    pyr_scale: float = 0.5
    winsize: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def to_flow_config(self) -> FlowConfig:
        return FlowConfig(levels=self.levels, pyr_scale=self.pyr_scale,
                          winsize=self.winsize, iterations=self.iterations,
                          poly_n=self.poly_n, poly_sigma=self.poly_sigma)


@dataclass
class PatchConfig:
    parts: list[str] = field(default_factory=lambda: list(PART_ORDER))
    foot_side_frac: float = 0.25
    augment: bool = True


@dataclass
class DescriptorConfig:
    fusion: str = "concat"            # avg | concat
    metric: str = "L1"                # L1 | L2
    pca_dim: int | None = None
    truncation: int | None = None     # use only the first L frames
    min_aggregation: bool = False     # verification: min over a subject's videos


@dataclass
class PipelineConfig:
    seed: int = 0
    workers: int = 1
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    flow: FlowSection = field(default_factory=FlowSection)
    patches: PatchConfig = field(default_factory=PatchConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)

    def validate(self) -> "PipelineConfig":
        d, p, desc = self.data, self.patches, self.descriptor
        if d.mode not in MODES:
            raise ConfigError(f"data.mode must be one of {MODES}, got {d.mode!r}")
        if d.mode == "silhouette":
            # masks carry no joint positions, so only the full-body box exists
            if p.parts == list(PART_ORDER):
                p.parts = ["full-body"]
            elif p.parts != ["full-body"]:
                raise ConfigError(
                    "silhouette mode supports only parts=[full-body], "
                    f"got {p.parts}")
        if not p.parts:
            raise ConfigError("patches.parts must not be empty")
        bad = [x for x in p.parts if x not in PART_ORDER]
        if bad:
            raise ConfigError(f"unknown parts {bad}; valid parts: {list(PART_ORDER)}")
        if len(set(p.parts)) != len(p.parts):
            raise ConfigError(f"duplicate parts in {p.parts}")
        overlap = set(d.train_subjects) & set(d.eval_subjects)
        if overlap:
            raise ConfigError(f"train/eval subject sets overlap: {sorted(overlap)}")
        if not d.gallery_videos or not d.probe_videos:
            raise ConfigError("gallery_videos and probe_videos must be non-empty")
        overlap = set(d.gallery_videos) & set(d.probe_videos)
        if overlap:
            raise ConfigError(f"gallery/probe video sets overlap: {sorted(overlap)}")
        if desc.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}, got {desc.fusion!r}")
        if desc.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {desc.metric!r}")
        if desc.pca_dim is not None and desc.pca_dim < 1:
            raise ConfigError(f"pca_dim must be >= 1 or null, got {desc.pca_dim}")
        if desc.truncation is not None and desc.truncation < 2:
            raise ConfigError(f"truncation must be >= 2 frames, got {desc.truncation}")
        if self.flow.clip <= 0:
            raise ConfigError(f"flow.clip must be positive, got {self.flow.clip}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if min(d.frame_width, d.frame_height) < 16:
            raise ConfigError("frame size must be at least 16 px per side")
        return self


_SECTION_TYPES = {"data": DataConfig, "model": ModelConfig,
                  "train": TrainConfig, "flow": FlowSection,
                  "patches": PatchConfig, "descriptor": DescriptorConfig}


def _coerce(raw: str, current):
    """Parse an override string against the type of the current value."""
    low = raw.strip().lower()
    if low in ("null", "none"):
        return None
    if isinstance(current, bool):
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if current is None:               # nullable ints (pca_dim, truncation)
        return int(raw)
    if isinstance(current, list):
        raise ConfigError("list keys can only be set in the config file")
    return raw


def _build_section(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(data) - set(_SECTION_TYPES) - {"seed", "workers"}
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    kwargs = {name: _build_section(cls, data.get(name, {}), name)
              for name, cls in _SECTION_TYPES.items()}
    return PipelineConfig(seed=int(data.get("seed", 0)),
                          workers=int(data.get("workers", 1)), **kwargs)


def config_to_dict(cfg: PipelineConfig) -> dict:
    return dataclasses.asdict(cfg)


def _sections(cfg: PipelineConfig) -> dict:
    return {name: getattr(cfg, name) for name in _SECTION_TYPES}


def apply_env_overrides(cfg: PipelineConfig, environ=None) -> list[str]:
    """Mutate cfg from GAITFLOW_* variables; returns the applied names."""
    environ = os.environ if environ is None else environ
    applied = []
    sections = _sections(cfg)
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        tail = name[len(ENV_PREFIX):].lower()
        if tail in ("seed", "workers"):
            setattr(cfg, tail, int(raw))
            applied.append(name)
            continue
        section, _, key = tail.partition("_")
        if section not in sections:
            raise ConfigError(f"{name}: unknown config section {section!r}")
        obj = sections[section]
        if not hasattr(obj, key):
            raise ConfigError(f"{name}: section {section!r} has no key {key!r}")
        setattr(obj, key, _coerce(raw, getattr(obj, key)))
        applied.append(name)
    return applied


def apply_set_overrides(cfg: PipelineConfig, pairs: list[str]) -> None:
    """Apply 'section.key=value' strings (or 'seed=3') from the CLI."""
    sections = _sections(cfg)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        if "." not in key:
            if key not in ("seed", "workers"):
                raise ConfigError(f"unknown top-level key {key!r}")
            setattr(cfg, key, int(raw))
            continue
        section, _, leaf = key.partition(".")
        if section not in sections:
            raise ConfigError(f"unknown config section {section!r}")
        obj = sections[section]
        if not hasattr(obj, leaf):
            raise ConfigError(f"section {section!r} has no key {leaf!r}")
        setattr(obj, leaf, _coerce(raw, getattr(obj, leaf)))


def load_config(path, environ=None, overrides=()) -> PipelineConfig:
    """File, then environment, then --set pairs; validation comes last."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    cfg = config_from_dict(data)
    apply_env_overrides(cfg, environ)
    apply_set_overrides(cfg, list(overrides))
    return cfg.validate()


def save_config(path, cfg: PipelineConfig) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=True))
