"""Central finite-difference gradient checking.

The analytic backward pass of a layer or a whole network is compared to
(f(t+eps) - f(t-eps)) / (2 eps) on a sample of tensor entries, where f is a
fixed random linear functional of the output (or the training loss).  Run in
float64; float32 round-off drowns the comparison.
"""

from __future__ import annotations

import numpy as np


def rel_err(a: float, n: float) -> float:
    """Relative error with a floor so near-zero pairs compare absolutely."""
    return abs(a - n) / max(abs(a), abs(n), 1e-3)


def _sample_indices(arr, rng, k):
    size = arr.size
    k = min(k, size)
    return [np.unravel_index(i, arr.shape)
            for i in rng.choice(size, size=k, replace=False)]


def _fd_entry(f, arr, idx, eps):
    orig = arr[idx]
    arr[idx] = orig + eps
    fp = f()
    arr[idx] = orig - eps
    fm = f()
    arr[idx] = orig
    return (fp - fm) / (2.0 * eps)


def check_function(f, analytic_grads, arrays, rng, eps=1e-4, samples=4):
    """Max relative error between analytic gradients and finite differences.

    f() re-evaluates the scalar under the current contents of `arrays`
    (name -> array, perturbed in place).  analytic_grads maps the same names
    to gradient arrays computed once at the unperturbed point.
    """
    worst = 0.0
    for name, arr in arrays.items():
        g = analytic_grads[name]
        for idx in _sample_indices(arr, rng, samples):
            num = _fd_entry(f, arr, idx, eps)
            worst = max(worst, rel_err(float(g[idx]), num))
    return worst


def check_layer(layer, x, train=False, rng=None, eps=1e-4, samples=4, reset=None):
    """Gradient-check one layer against a random linear functional.

    Checks the gradient w.r.t. the input and w.r.t. every parameter.
    `reset` is called before each forward to pin stochastic layers
    (dropout) to the same mask.
    """
    rng = rng or np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)

    def fwd():
        if reset is not None:
            reset()
        return layer.forward(x, train=train)

    probe = rng.standard_normal(fwd().shape) / np.sqrt(x.size)

    def f():
        return float((fwd() * probe).sum())

    f()  # forward at the base point so backward caches are fresh
    gx = layer.backward(probe.copy())
    arrays = {"__input__": x}
    grads = {"__input__": gx}
    for k, v in layer.params().items():
        arrays[k] = v
    for k, v in layer.grads().items():
        grads[k] = v
    return check_function(f, grads, arrays, rng, eps, samples)


def check_network(net, x, labels, train=True, rng=None, eps=1e-4, samples=2, reset=None):
    """Gradient-check every parameter of a network against the training loss
    (cross-entropy plus any dense-weight L2 penalty)."""
    rng = rng or np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)

    def f():
        if reset is not None:
            reset()
        logits = net.forward(x, train=train)
        ce, _ = net.criterion.forward(logits, labels)
        return ce + net.l2_penalty()

    if reset is not None:
        reset()
    net.loss_and_grads(x, labels, train=train)
    grads = {k: v.copy() for k, v in net.named_grads().items()}
    arrays = net.named_params()
    return check_function(f, grads, arrays, rng, eps, samples)
