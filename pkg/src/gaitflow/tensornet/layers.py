"""Layers with explicit forward/backward passes on numpy arrays.

Activations are dense float arrays shaped (batch, channels, height, width)
for convolutional layers and (batch, features) after flattening.  float32 is
the training dtype; every layer also runs in float64 for gradient checking
(dtype follows the parameters).

Each layer caches what its backward pass needs during forward.  backward()
consumes the gradient w.r.t. the layer output and returns the gradient
w.r.t. the input; parameter gradients accumulate on the layer itself and are
read through grads().
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, NumericError


@dataclass
class LayerSpec:
    """Declarative description of one layer in an architecture.

    kind: conv2d | batchnorm | relu | maxpool | avgpool | dense | dropout |
          flatten | residual-block | softmax
    """

    kind: str
    filters: int = 0          # conv / residual-block output channels
    units: int = 0            # dense output width
    kernel: tuple = (3, 3)
    stride: int = 1
    pad: int = 1
    p: float = 0.0            # dropout probability
    bias: bool = True
    name: str = ""


class Layer:
    name = ""

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def params(self):
        """Trainable arrays by local name (live references)."""
        return {}

    def grads(self):
        """Gradient arrays matching params() keys; valid after backward()."""
        return {}

    def buffers(self):
        """Non-trainable state (e.g. batchnorm running statistics)."""
        return {}


def im2col(x, kh, kw, stride, pad):
    """Unfold (B,C,H,W) into (B, OH*OW, C*kh*kw) patch columns."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    b, c, oh, ow = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols), oh, ow


def col2im(gcols, x_shape, kh, kw, stride, pad, oh, ow):
    """Scatter-add column gradients back to the (padded) input layout."""
    b, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    gx = np.zeros((b, c, hp, wp), dtype=gcols.dtype)
    g6 = gcols.reshape(b, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for i in range(kh):
        for j in range(kw):
            gx[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += g6[..., i, j]
    if pad:
        gx = gx[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(gx)


class Conv2d(Layer):
    """2-D convolution via im2col and one BLAS matmul per batch."""

    def __init__(self, in_ch, out_ch, ksize=3, stride=1, pad=1, bias=True,
                 rng=None, dtype=np.float32, name="conv"):
        self.name = name
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kh = self.kw = ksize
        self.stride, self.pad = stride, pad
        rng = rng or np.random.default_rng(0)
        std = np.sqrt(2.0 / (in_ch * self.kh * self.kw))
        self.w = (rng.standard_normal((out_ch, in_ch, self.kh, self.kw)) * std).astype(dtype)
        self.b = np.zeros(out_ch, dtype=dtype) if bias else None
        self.gw = None
        self.gb = None
        self._cache = None

    def forward(self, x, train=False):
        if x.ndim != 4:
            raise DimensionError(f"{self.name}: expected 4-D input, got shape {x.shape}")
        if x.shape[1] != self.in_ch:
            raise DimensionError(
                f"{self.name}: input channel axis is {x.shape[1]}, weights expect {self.in_ch}")
        cols, oh, ow = im2col(x, self.kh, self.kw, self.stride, self.pad)
        wm = self.w.reshape(self.out_ch, -1)
        out = cols @ wm.T
        if self.b is not None:
            out += self.b
        self._cache = (cols, x.shape, oh, ow)
        return np.ascontiguousarray(out.transpose(0, 2, 1).reshape(x.shape[0], self.out_ch, oh, ow))

    def backward(self, grad_out):
        cols, x_shape, oh, ow = self._cache
        b = x_shape[0]
        gm = grad_out.reshape(b, self.out_ch, oh * ow).transpose(0, 2, 1)
        self.gw = np.tensordot(gm, cols, axes=([0, 1], [0, 1])).reshape(self.w.shape)
        if self.b is not None:
            self.gb = grad_out.sum(axis=(0, 2, 3))
        gcols = gm @ self.w.reshape(self.out_ch, -1)
        return col2im(gcols, x_shape, self.kh, self.kw, self.stride, self.pad, oh, ow)

    def params(self):
        p = {"weight": self.w}
        if self.b is not None:
            p["bias"] = self.b
        return p

    def grads(self):
        g = {"weight": self.gw}
        if self.b is not None:
            g["bias"] = self.gb
        return g


class BatchNorm2d(Layer):
    """Per-channel batch normalization with running statistics.

    Train mode normalizes with biased batch statistics and updates the
    running estimates as r <- momentum*r + (1-momentum)*batch.  Eval mode
    uses the running estimates.  Zero-variance batches are handled by eps.
    """

    def __init__(self, ch, eps=1e-5, momentum=0.9, dtype=np.float32, name="bn"):
        self.name = name
        self.ch = ch
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(ch, dtype=dtype)
        self.beta = np.zeros(ch, dtype=dtype)
        self.running_mean = np.zeros(ch, dtype=dtype)
        self.running_var = np.ones(ch, dtype=dtype)
        self.ggamma = None
        self.gbeta = None
        self._cache = None

    def forward(self, x, train=False):
        if x.shape[1] != self.ch:
            raise DimensionError(f"{self.name}: channel axis is {x.shape[1]}, expected {self.ch}")
        if train:
            mu = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = self.momentum
            self.running_mean *= m
            self.running_mean += ((1.0 - m) * mu).astype(self.running_mean.dtype)
            self.running_var *= m
            self.running_var += ((1.0 - m) * var).astype(self.running_var.dtype)
        else:
            mu, var = self.running_mean, self.running_var
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu[None, :, None, None]) * ivar[None, :, None, None]
        self._cache = (xhat, ivar, train, x.shape)
        return self.gamma[None, :, None, None] * xhat + self.beta[None, :, None, None]

    def backward(self, grad_out):
        xhat, ivar, train, x_shape = self._cache
        self.ggamma = (grad_out * xhat).sum(axis=(0, 2, 3))
        self.gbeta = grad_out.sum(axis=(0, 2, 3))
        scale = (self.gamma * ivar)[None, :, None, None]
        if not train:
            return scale * grad_out
        n = x_shape[0] * x_shape[2] * x_shape[3]
        return scale * (grad_out
                        - self.gbeta[None, :, None, None] / n
                        - xhat * self.ggamma[None, :, None, None] / n)

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.ggamma, "beta": self.gbeta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class ReLU(Layer):
    def __init__(self, name="relu"):
        self.name = name
        self._mask = None

    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad_out):
        return grad_out * self._mask


class MaxPool2(Layer):
    """2x2 max pooling with stride 2 (floor semantics on odd extents)."""

    def __init__(self, name="pool"):
        self.name = name
        self._cache = None

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        oh, ow = h // 2, w // 2
        xc = x[:, :, :oh * 2, :ow * 2]
        win = xc.reshape(b, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, 4)
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        self._cache = (x.shape, idx)
        return np.ascontiguousarray(out)

    def backward(self, grad_out):
        x_shape, idx = self._cache
        b, c, h, w = x_shape
        oh, ow = h // 2, w // 2
        gwin = np.zeros((b, c, oh, ow, 4), dtype=grad_out.dtype)
        np.put_along_axis(gwin, idx[..., None], grad_out[..., None], axis=-1)
        gx = np.zeros(x_shape, dtype=grad_out.dtype)
        gx[:, :, :oh * 2, :ow * 2] = (
            gwin.reshape(b, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh * 2, ow * 2))
        return gx


class GlobalAvgPool(Layer):
    """Average over the spatial axes: (B,C,H,W) -> (B,C)."""

    def __init__(self, name="avgpool"):
        self.name = name
        self._shape = None

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, grad_out):
        b, c, h, w = self._shape
        return np.broadcast_to(grad_out[:, :, None, None] / (h * w), self._shape).astype(grad_out.dtype).copy()


class Flatten(Layer):
    def __init__(self, name="flatten"):
        self.name = name
        self._shape = None

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._shape)


class Dense(Layer):
    def __init__(self, in_f, out_f, bias=True, rng=None, dtype=np.float32, name="dense"):
        self.name = name
        self.in_f, self.out_f = in_f, out_f
        rng = rng or np.random.default_rng(0)
        std = np.sqrt(2.0 / in_f)
        self.w = (rng.standard_normal((out_f, in_f)) * std).astype(dtype)
        self.b = np.zeros(out_f, dtype=dtype) if bias else None
        self.gw = None
        self.gb = None
        self._x = None

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_f:
            raise DimensionError(
                f"{self.name}: expected (batch, {self.in_f}) input, got shape {x.shape}")
        self._x = x
        out = x @ self.w.T
        if self.b is not None:
            out += self.b
        return out

    def backward(self, grad_out):
        self.gw = grad_out.T @ self._x
        if self.b is not None:
            self.gb = grad_out.sum(axis=0)
        return grad_out @ self.w

    def params(self):
        p = {"weight": self.w}
        if self.b is not None:
            p["bias"] = self.b
        return p

    def grads(self):
        g = {"weight": self.gw}
        if self.b is not None:
            g["bias"] = self.gb
        return g


class Dropout(Layer):
    """Inverted dropout: active in train mode only, scaling kept units by
    1/(1-p) so eval mode is the identity."""

    def __init__(self, p, rng=None, name="dropout"):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0,1), got {p}")
        self.name = name
        self.p = p
        self.rng = rng or np.random.default_rng(0)
        self._mask = None

    def set_rng(self, rng):
        self.rng = rng

    def forward(self, x, train=False):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.p
        self._mask = (self.rng.random(x.shape) >= self.p).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, grad_out):
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


class ResidualBlock(Layer):
    """Pre-activation residual block: BN-ReLU-conv, BN-ReLU-conv + shortcut.

    The shortcut is the identity when the input and output shapes agree,
    otherwise a 1x1 projection convolution (applied to the pre-activated
    signal) carrying the block's stride.
    """

    def __init__(self, in_ch, out_ch, stride=1, rng=None, dtype=np.float32, name="block"):
        self.name = name
        self.in_ch, self.out_ch, self.stride = in_ch, out_ch, stride
        self.bn1 = BatchNorm2d(in_ch, dtype=dtype, name=f"{name}.bn1")
        self.relu1 = ReLU()
        self.conv1 = Conv2d(in_ch, out_ch, 3, stride, 1, bias=False, rng=rng,
                            dtype=dtype, name=f"{name}.conv1")
        self.bn2 = BatchNorm2d(out_ch, dtype=dtype, name=f"{name}.bn2")
        self.relu2 = ReLU()
        self.conv2 = Conv2d(out_ch, out_ch, 3, 1, 1, bias=False, rng=rng,
                            dtype=dtype, name=f"{name}.conv2")
        self.identity = in_ch == out_ch and stride == 1
        self.proj = None
        if not self.identity:
            self.proj = Conv2d(in_ch, out_ch, 1, stride, 0, bias=False, rng=rng,
                               dtype=dtype, name=f"{name}.proj")

    def forward(self, x, train=False):
        a = self.relu1.forward(self.bn1.forward(x, train), train)
        shortcut = x if self.identity else self.proj.forward(a, train)
        h = self.conv1.forward(a, train)
        h = self.relu2.forward(self.bn2.forward(h, train), train)
        h = self.conv2.forward(h, train)
        return h + shortcut

    def backward(self, grad_out):
        gh = self.conv2.backward(grad_out)
        gh = self.bn2.backward(self.relu2.backward(gh))
        ga = self.conv1.backward(gh)
        if self.identity:
            gx = self.bn1.backward(self.relu1.backward(ga)) + grad_out
        else:
            ga = ga + self.proj.backward(grad_out)
            gx = self.bn1.backward(self.relu1.backward(ga))
        return gx

    def _children(self):
        named = [("bn1", self.bn1), ("conv1", self.conv1), ("bn2", self.bn2),
                 ("conv2", self.conv2)]
        if self.proj is not None:
            named.append(("proj", self.proj))
        return named

    def params(self):
        return {f"{n}.{k}": v for n, c in self._children() for k, v in c.params().items()}

    def grads(self):
        return {f"{n}.{k}": v for n, c in self._children() for k, v in c.grads().items()}

    def buffers(self):
        return {f"{n}.{k}": v for n, c in self._children() for k, v in c.buffers().items()}


def softmax(logits):
    """Row-wise softmax; raises NumericError on non-finite logits."""
    if not np.isfinite(logits).all():
        raise NumericError("softmax received non-finite logits")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class SoftmaxCrossEntropy:
    """Fused softmax + mean cross-entropy over the batch."""

    def __init__(self):
        self._cache = None

    def forward(self, logits, labels):
        if not np.isfinite(logits).all():
            raise NumericError("cross-entropy received non-finite logits")
        # log-softmax form: finite for any finite logits, no underflow in the
        # picked-probability path
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        probs = np.exp(logp)
        n = logits.shape[0]
        loss = float(-logp[np.arange(n), labels].mean())
        self._cache = (probs, labels)
        return loss, probs

    def backward(self):
        probs, labels = self._cache
        n = probs.shape[0]
        g = probs.copy()
        g[np.arange(n), labels] -= 1.0
        return g / n
