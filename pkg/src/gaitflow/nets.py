"""The two gait CNN architectures plus the training loop.

The VGG-like net stacks 3x3 conv blocks with 2x2 max pooling and two wide
hidden dense layers; the dense width grows 1024 -> 2048 -> 4096 through
progressive widening when validation accuracy plateaus.  The wide residual
net uses pre-activation blocks in three groups with a global average pool.
Training is Nesterov-momentum SGD with cross-entropy plus an L2 penalty on
dense weights, and a plateau schedule that first widens (VGG only), then
divides the learning rate by the decay factor up to a fixed number of times.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .rng import substream
from .tensornet import LayerSpec, Network, ParamStore, build_layers, softmax

WIDEN_SCHEDULE = (1024, 2048, 4096)


@dataclass
class NetworkSpec:
    """Architecture selector plus the knobs both net families share.

    base_filters scales the conv widths (None picks the full-size default:
    64 for vgg-like, 16 for wide-resnet); miniature variants for gradient
    checking use 8 with one block per group.
    """

    architecture: str                 # "vgg-like" | "wide-resnet"
    class_count: int
    dense_width: int = 1024           # VGG hidden width (widening start)
    widen_factor: int = 4             # WRN channel multiplier
    blocks_per_group: int = 3         # WRN depth per group
    base_filters: int | None = None
    input_shape: tuple = (3, 48, 48)

    def __post_init__(self):
        if self.architecture not in ("vgg-like", "wide-resnet"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.class_count < 2:
            raise ConfigError(f"class count must be >= 2, got {self.class_count}")

    @property
    def feature_width(self) -> int:
        if self.architecture == "vgg-like":
            return self.dense_width
        return 4 * (self.base_filters or 16) * self.widen_factor


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    l2_coeff: float = 5e-4
    batch_size: int = 64
    plateau_patience: int = 5
    lr_decay_factor: float = 10.0
    max_epochs: int = 100
    rng_seed: int = 0
    max_decays: int = 3
    min_improve: float = 0.001        # absolute val-accuracy step that counts
    batches_per_epoch: int | None = None
    widen_enabled: bool = True        # effective on vgg-like only
    max_dense_width: int = 4096

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if self.lr_decay_factor <= 1:
            raise ConfigError(f"decay factor must exceed 1, got {self.lr_decay_factor}")


def build_vgg(spec: NetworkSpec) -> list[LayerSpec]:
    """Conv 64x2 / 128x2 / 256x3 / 512x3 with pooling after each block, then
    two dense+ReLU+dropout(0.5) hidden layers and the classifier."""
    if spec.architecture != "vgg-like":
        raise ConfigError(f"build_vgg got architecture {spec.architecture!r}")
    b = spec.base_filters or 64
    layers = []
    for block, (mult, repeats) in enumerate(((1, 2), (2, 2), (4, 3), (8, 3)), start=1):
        for i in range(repeats):
            layers.append(LayerSpec("conv2d", filters=b * mult,
                                    name=f"conv{block}_{i + 1}"))
            layers.append(LayerSpec("relu", name=f"conv{block}_{i + 1}_relu"))
        layers.append(LayerSpec("maxpool", name=f"pool{block}"))
    layers.append(LayerSpec("flatten", name="flatten"))
    for i in (1, 2):
        layers.append(LayerSpec("dense", units=spec.dense_width, name=f"fc{i}"))
        layers.append(LayerSpec("relu", name=f"fc{i}_relu"))
        layers.append(LayerSpec("dropout", p=0.5, name=f"fc{i}_drop"))
    layers.append(LayerSpec("dense", units=spec.class_count, name="fc3"))
    layers.append(LayerSpec("softmax", name="softmax"))
    return layers


def build_wrn(spec: NetworkSpec) -> list[LayerSpec]:
    """Stem conv+BN, three groups of pre-activation residual blocks (strides
    1/2/2), then BN+ReLU, global average pool, and the classifier."""
    if spec.architecture != "wide-resnet":
        raise ConfigError(f"build_wrn got architecture {spec.architecture!r}")
    b = spec.base_filters or 16
    k = spec.widen_factor
    layers = [LayerSpec("conv2d", filters=b, name="stem"),
              LayerSpec("batchnorm", name="stem_bn")]
    for g, (mult, stride) in enumerate(((1, 1), (2, 2), (4, 2)), start=1):
        for i in range(spec.blocks_per_group):
            layers.append(LayerSpec("residual-block", filters=b * mult * k,
                                    stride=stride if i == 0 else 1,
                                    name=f"g{g}b{i + 1}"))
    layers.append(LayerSpec("batchnorm", name="head_bn"))
    layers.append(LayerSpec("relu", name="head_relu"))
    layers.append(LayerSpec("avgpool", name="features"))
    layers.append(LayerSpec("dense", units=spec.class_count, name="fc"))
    layers.append(LayerSpec("softmax", name="softmax"))
    return layers


def build_network(spec: NetworkSpec, seed: int, l2_coeff: float = 0.0,
                  dtype=np.float32) -> Network:
    if spec.architecture == "vgg-like":
        layer_specs = build_vgg(spec)
        feature_layer = "fc2_relu"
    else:
        layer_specs = build_wrn(spec)
        feature_layer = "features"
    layers = build_layers(layer_specs, spec.input_shape,
                          substream(seed, "init", spec.architecture), dtype)
    net = Network(layers, feature_layer=feature_layer, l2_coeff=l2_coeff)
    net.set_dropout_rng(lambda name: substream(seed, "dropout", name))
    net.input_shape = spec.input_shape
    return net


def widen_dense(net: Network, spec: NetworkSpec, seed: int) -> tuple[Network, NetworkSpec]:
    """Double both hidden dense widths, keeping every existing weight
    bit-identical in the leading block and drawing the rest fresh."""
    if spec.architecture != "vgg-like":
        raise ConfigError("widening applies to the vgg-like dense layers only")
    new_spec = replace(spec, dense_width=2 * spec.dense_width)
    new_net = build_network(new_spec, substream(seed, "widen", new_spec.dense_width)
                            .integers(0, 2**31 - 1), l2_coeff=net.l2_coeff)
    old = {}
    old.update(net.named_params())
    old.update(net.named_buffers())
    new = {}
    new.update(new_net.named_params())
    new.update(new_net.named_buffers())
    w = spec.dense_width
    for name, dst in new.items():
        src = old[name]
        if src.shape == dst.shape:
            np.copyto(dst, src)
        elif name == "fc1.weight":
            dst[:w, :] = src
        elif name == "fc2.weight":
            dst[:w, :w] = src
        elif name in ("fc1.bias", "fc2.bias"):
            dst[:w] = src
        elif name == "fc3.weight":
            dst[:, :w] = src
        else:
            raise DataError(f"unexpected shape change for {name}: "
                            f"{src.shape} -> {dst.shape}")
    return new_net, new_spec


class NesterovMomentum:
    """Classical Nesterov momentum via a lookahead shift.

    begin_step() moves the parameters to the lookahead point theta + mu*v so
    the batch gradient is evaluated there; end_step() then applies
    v <- mu*v - lr*g and writes theta + v back (as theta_shifted - lr*g).
    Between steps the arrays hold the true theta.
    """

    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def begin_step(self):
        for k, p in self.params.items():
            p += self.momentum * self.velocity[k]

    def end_step(self, grads: dict[str, np.ndarray]):
        for k, p in self.params.items():
            g = grads[k].astype(p.dtype, copy=False)
            v = self.velocity[k]
            v *= self.momentum
            v -= self.lr * g
            p -= self.lr * g


@dataclass
class ArrayDataset:
    """Patch tensors plus integer subject labels."""

    x: np.ndarray      # (N, 3, 48, 48) float32
    y: np.ndarray      # (N,) int64

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.shape[0] != self.y.shape[0]:
            raise DataError(f"{self.x.shape[0]} samples but {self.y.shape[0]} labels")
        if self.x.shape[0] == 0:
            raise DataError("empty dataset")

    def __len__(self):
        return self.x.shape[0]


@dataclass
class LogRecord:
    epoch: int
    lr: float
    width: int
    train_loss: float
    train_acc: float
    val_acc: float
    event: str = ""

    def line(self) -> str:
        return (f"epoch={self.epoch} lr={self.lr:g} width={self.width} "
                f"train_loss={self.train_loss:.4f} train_acc={self.train_acc:.4f} "
                f"val_acc={self.val_acc:.4f} event={self.event or '-'}")


@dataclass
class TrainResult:
    net: Network
    spec: NetworkSpec
    store: ParamStore
    log: list[LogRecord]


def predict_classes(net: Network, x: np.ndarray, batch: int = 256) -> np.ndarray:
    out = np.empty(x.shape[0], dtype=np.int64)
    for i in range(0, x.shape[0], batch):
        out[i:i + batch] = np.argmax(net.forward(x[i:i + batch], train=False), axis=1)
    return out


def accuracy(net: Network, data: ArrayDataset, batch: int = 256) -> float:
    return float(np.mean(predict_classes(net, data.x, batch) == data.y))


def _balanced_batches(labels: np.ndarray, batch_size: int, n_batches: int,
                      rng: np.random.Generator):
    """Round-robin over per-class shuffled index queues, so every batch holds
    a near-equal share of each class regardless of class imbalance."""
    classes = np.unique(labels)
    queues = {c: list(rng.permutation(np.flatnonzero(labels == c))) for c in classes}
    cursors = dict.fromkeys(classes, 0)
    order = list(classes)
    batches = []
    pick = 0
    for _ in range(n_batches):
        idx = np.empty(batch_size, dtype=np.int64)
        for i in range(batch_size):
            c = order[pick % len(order)]
            pick += 1
            q = queues[c]
            if cursors[c] >= len(q):
                queues[c] = list(rng.permutation(np.flatnonzero(labels == c)))
                cursors[c] = 0
                q = queues[c]
            idx[i] = q[cursors[c]]
            cursors[c] += 1
        batches.append(idx)
    return batches


def train(net: Network, spec: NetworkSpec, train_data: ArrayDataset,
          val_data: ArrayDataset, cfg: TrainConfig,
          log_path=None) -> TrainResult:
    """Run the full plateau schedule; returns the final network and log.

    A plateau (no val-accuracy gain of min_improve for plateau_patience
    epochs) first widens the dense layers while below max_dense_width on the
    vgg-like path, then divides the LR by lr_decay_factor; training stops at
    the plateau after the final allowed decay, or at max_epochs.
    """
    if train_data.y.min() < 0 or train_data.y.max() >= spec.class_count:
        raise DataError(f"labels outside [0, {spec.class_count})")
    lr = cfg.learning_rate
    opt = NesterovMomentum(net.named_params(), lr, cfg.momentum)
    n_batches = cfg.batches_per_epoch or max(1, len(train_data) // cfg.batch_size)
    best_val = -1.0
    stall = 0
    decays = 0
    log: list[LogRecord] = []
    lines = []
    for epoch in range(cfg.max_epochs):
        batches = _balanced_batches(train_data.y, cfg.batch_size, n_batches,
                                    substream(cfg.rng_seed, "batches", epoch))
        losses = []
        hits = 0
        seen = 0
        for bi, idx in enumerate(batches):
            xb, yb = train_data.x[idx], train_data.y[idx]
            opt.begin_step()
            try:
                loss, probs = net.loss_and_grads(xb, yb, train=True)
            except NumericError as exc:
                raise NumericError(
                    f"{exc} at epoch {epoch} batch {bi} lr {opt.lr:g}; "
                    f"batch mean {xb.mean():.4g} std {xb.std():.4g}") from exc
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {bi} lr {opt.lr:g}; "
                    f"batch mean {xb.mean():.4g} std {xb.std():.4g}")
            opt.end_step(net.named_grads())
            losses.append(loss)
            hits += int((np.argmax(probs, axis=1) == yb).sum())
            seen += len(yb)
        val_acc = accuracy(net, val_data)
        event = ""
        if val_acc >= best_val + cfg.min_improve:
            best_val = val_acc
            stall = 0
        else:
            stall += 1
        stop = False
        if stall >= cfg.plateau_patience:
            stall = 0
            can_widen = (cfg.widen_enabled and spec.architecture == "vgg-like"
                         and spec.dense_width < cfg.max_dense_width)
            if can_widen:
                net, spec = widen_dense(net, spec, cfg.rng_seed)
                opt = NesterovMomentum(net.named_params(), opt.lr, cfg.momentum)
                event = f"widen-to-{spec.dense_width}"
            elif decays < cfg.max_decays:
                opt.lr /= cfg.lr_decay_factor
                decays += 1
                event = f"decay-to-{opt.lr:g}"
            else:
                event = "stop"
                stop = True
        rec = LogRecord(epoch=epoch, lr=lr, width=spec.feature_width,
                        train_loss=float(np.mean(losses)),
                        train_acc=hits / seen, val_acc=val_acc, event=event)
        lr = opt.lr
        log.append(rec)
        lines.append(rec.line())
        if stop:
            break
    if log_path is not None:
        Path(log_path).write_text("\n".join(lines) + "\n")
    return TrainResult(net=net, spec=spec, store=net.param_store(cfg.rng_seed), log=log)


def save_checkpoint(stem, net: Network, spec: NetworkSpec, seed: int = 0) -> None:
    """Write <stem>.params (tensor data) and <stem>.json (architecture)."""
    stem = Path(stem)
    net.param_store(seed).save(stem.with_suffix(".params"))
    manifest = {
        "architecture": spec.architecture,
        "class_count": spec.class_count,
        "dense_width": spec.dense_width,
        "widen_factor": spec.widen_factor,
        "blocks_per_group": spec.blocks_per_group,
        "base_filters": spec.base_filters,
        "input_shape": list(spec.input_shape),
        "l2_coeff": net.l2_coeff,
        "seed": seed,
    }
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(stem) -> tuple[Network, NetworkSpec]:
    stem = Path(stem)
    try:
        manifest = json.loads(stem.with_suffix(".json").read_text())
    except FileNotFoundError as exc:
        raise DataError(f"missing checkpoint manifest {stem.with_suffix('.json')}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt checkpoint manifest: {exc}") from exc
    try:
        spec = NetworkSpec(
            architecture=manifest["architecture"],
            class_count=manifest["class_count"],
            dense_width=manifest["dense_width"],
            widen_factor=manifest["widen_factor"],
            blocks_per_group=manifest["blocks_per_group"],
            base_filters=manifest["base_filters"],
            input_shape=tuple(manifest["input_shape"]))
    except KeyError as exc:
        raise DataError(f"checkpoint manifest missing key {exc}") from exc
    net = build_network(spec, manifest.get("seed", 0),
                        l2_coeff=manifest.get("l2_coeff", 0.0))
    net.load_store(ParamStore.load(stem.with_suffix(".params")))
    return net, spec
