"""Sequential network container: builds layers from LayerSpecs, runs
forward/backward, and exposes parameters as a ParamStore."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import DataError
from .layers import (BatchNorm2d, Conv2d, Dense, Dropout, Flatten,
                     GlobalAvgPool, Layer, LayerSpec, MaxPool2, ReLU,
                     ResidualBlock, SoftmaxCrossEntropy)
from .params import ParamStore


def build_layers(specs, in_shape, rng, dtype=np.float32):
    """Instantiate Layer objects from LayerSpecs, threading shapes through.

    in_shape is (channels, height, width).  A trailing softmax spec marks the
    classifier head and instantiates nothing.  Returns the layer list.
    """
    c, h, w = in_shape
    flat = None
    layers = []
    for spec in specs:
        k = spec.kind
        if k == "conv2d":
            layers.append(Conv2d(c, spec.filters, spec.kernel[0], spec.stride,
                                 spec.pad, spec.bias, rng, dtype, spec.name))
            c = spec.filters
            h = (h + 2 * spec.pad - spec.kernel[0]) // spec.stride + 1
            w = (w + 2 * spec.pad - spec.kernel[1]) // spec.stride + 1
        elif k == "residual-block":
            layers.append(ResidualBlock(c, spec.filters, spec.stride, rng, dtype, spec.name))
            c = spec.filters
            h = (h + 2 - 3) // spec.stride + 1
            w = (w + 2 - 3) // spec.stride + 1
        elif k == "batchnorm":
            layers.append(BatchNorm2d(c, dtype=dtype, name=spec.name))
        elif k == "relu":
            layers.append(ReLU(name=spec.name))
        elif k == "maxpool":
            layers.append(MaxPool2(name=spec.name))
            h, w = h // 2, w // 2
        elif k == "avgpool":
            layers.append(GlobalAvgPool(name=spec.name))
            flat = c
        elif k == "flatten":
            layers.append(Flatten(name=spec.name))
            flat = c * h * w
        elif k == "dense":
            if flat is None:
                raise DataError(f"dense layer {spec.name!r} before flatten/avgpool")
            layers.append(Dense(flat, spec.units, spec.bias, rng, dtype, spec.name))
            flat = spec.units
        elif k == "dropout":
            layers.append(Dropout(spec.p, rng=None, name=spec.name))
        elif k == "softmax":
            pass
        else:
            raise DataError(f"unknown layer kind {spec.kind!r}")
    return layers


class Network:
    """A chain of layers plus a softmax cross-entropy head.

    feature_layer names the layer whose output (in eval mode) is used as the
    descriptor.  dense_l2 weights carry an L2 penalty during training.
    """

    def __init__(self, layers, feature_layer: str, l2_coeff: float = 0.0):
        self.layers = layers
        self.feature_layer = feature_layer
        self.l2_coeff = l2_coeff
        self.criterion = SoftmaxCrossEntropy()
        names = [l.name for l in layers]
        if feature_layer not in names:
            raise DataError(f"feature layer {feature_layer!r} not in network")
        self._feature_idx = names.index(feature_layer)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def forward_features(self, x):
        """Eval-mode forward stopping at the feature layer."""
        for layer in self.layers[:self._feature_idx + 1]:
            x = layer.forward(x, train=False)
        return x

    def backward(self, grad_logits):
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def _dense_layers(self):
        return [l for l in self.layers if isinstance(l, Dense)]

    def l2_penalty(self) -> float:
        if self.l2_coeff == 0.0:
            return 0.0
        return self.l2_coeff * float(sum((l.w.astype(np.float64) ** 2).sum()
                                         for l in self._dense_layers()))

    def loss_and_grads(self, x, labels, train=True):
        """Forward + backward on one batch.

        Returns (total loss including the dense-weight L2 penalty, softmax
        probabilities).  Parameter gradients, penalty included, are left on
        the layers.
        """
        logits = self.forward(x, train)
        ce, probs = self.criterion.forward(logits, labels)
        self.backward(self.criterion.backward())
        if self.l2_coeff > 0.0:
            for l in self._dense_layers():
                l.gw += (2.0 * self.l2_coeff) * l.w
        return ce + self.l2_penalty(), probs

    def set_dropout_rng(self, rng_factory):
        """Assign each Dropout layer its own generator via rng_factory(name)."""
        for l in self.layers:
            if isinstance(l, Dropout):
                l.set_rng(rng_factory(l.name))

    def named_params(self) -> OrderedDict:
        out = OrderedDict()
        for l in self.layers:
            for k, v in l.params().items():
                out[f"{l.name}.{k}"] = v
        return out

    def named_grads(self) -> OrderedDict:
        out = OrderedDict()
        for l in self.layers:
            for k, v in l.grads().items():
                out[f"{l.name}.{k}"] = v
        return out

    def named_buffers(self) -> OrderedDict:
        out = OrderedDict()
        for l in self.layers:
            for k, v in l.buffers().items():
                out[f"{l.name}.{k}"] = v
        return out

    def param_store(self, seed: int = 0) -> ParamStore:
        """Snapshot view (shared arrays) of parameters and buffers."""
        tensors = OrderedDict()
        tensors.update(self.named_params())
        tensors.update(self.named_buffers())
        return ParamStore(tensors, seed)

    def load_store(self, store: ParamStore):
        """Copy a ParamStore into the network; names and shapes must match."""
        own = OrderedDict()
        own.update(self.named_params())
        own.update(self.named_buffers())
        if set(own) != set(store.tensors):
            missing = sorted(set(own) - set(store.tensors))
            extra = sorted(set(store.tensors) - set(own))
            raise DataError(f"parameter name mismatch; missing={missing[:4]} extra={extra[:4]}")
        for name, arr in own.items():
            src = store.tensors[name]
            if src.shape != arr.shape:
                raise DataError(f"tensor {name!r}: shape {src.shape} != expected {arr.shape}")
            np.copyto(arr, src.astype(arr.dtype))
