"""Central finite differences against backprop, and random small test networks."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .manifolds import Family, ManifoldSpec
from .net import (
    Batch,
    LayerKind,
    LayerSpec,
    Network,
    NetworkSpec,
)


def numeric_gradients(net: Network, batch: Batch, h=1e-5):
    """Central differences of the train-mode loss for every parameter entry."""
    out = {}
    for name, p in net.named_params().items():
        p.value = np.ascontiguousarray(p.value)
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)  # view: edits go straight into the parameter
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = net.forward(batch).loss
            flat[i] = old - h
            down = net.forward(batch).loss
            flat[i] = old
            g.reshape(-1)[i] = (up - down) / (2 * h)
        out[name] = g
    net._pending = None
    return out


def relative_error(a, b, floor=1e-6):
    """``|a - b| / max(|a|, |b|)``; the floor sits above central-difference noise
    so identically-zero gradients (a bias feeding mean-only BN) compare as equal."""
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def gradient_errors(net: Network, batch: Batch, h=1e-5):
    """Relative error of backprop vs central differences, per parameter."""
    _, analytic = net.loss_and_grads(batch)
    numeric = numeric_gradients(net, batch, h)
    return {name: relative_error(analytic[name], numeric[name]) for name in analytic}


def _maybe_family(rng, family, rows, cols):
    """``family`` if it admits a ``rows x cols`` kernel (Stiefel may transpose)."""
    if family == "none":
        return None
    if family == "stiefel":
        rows, cols = max(rows, cols), min(rows, cols)
    try:
        ManifoldSpec(Family(family), rows, cols)
    except ConfigError:
        return None
    return Family(family)


def random_network(rng, max_dim=8, max_layers=3):
    """A random conv/dense net with at most ``max_layers`` weight layers and every
    dimension at most ``max_dim``, plus a batch for it.

    Kernels are put on a random manifold family (or left free); activations are
    smooth (tanh/softplus) and mean-only BN is inserted at random.
    """
    family = rng.choice(["none", "sphere", "oblique", "stiefel"])
    channels = int(rng.integers(1, 3))
    size = int(rng.integers(3, 7))
    n_conv = int(rng.integers(0, min(2, max_layers - 1) + 1))
    layers = []
    c, h, w = channels, size, size
    for _ in range(n_conv):
        k = int(rng.integers(1, min(3, h) + 1))
        out = int(rng.integers(1, 4))
        pad = int(rng.integers(0, 2))
        layers.append(LayerSpec(LayerKind.CONV2D, kernel=(k, k), in_channels=c,
                                out_channels=out, padding=pad,
                                manifold=_maybe_family(rng, family, k, k)))
        if rng.random() < 0.3:
            layers.append(LayerSpec(LayerKind.MEAN_ONLY_BN, channels=out))
        layers.append(LayerSpec(LayerKind.ACTIVATION,
                                activation=str(rng.choice(["tanh", "softplus"]))))
        c, h, w = out, h + 2 * pad - k + 1, w + 2 * pad - k + 1
    layers.append(LayerSpec(LayerKind.FLATTEN))
    dim = c * h * w
    n_dense = int(rng.integers(1, max_layers - n_conv + 1))
    classes = int(rng.integers(2, 5))
    for j in range(n_dense):
        out = classes if j == n_dense - 1 else int(rng.integers(2, max_dim + 1))
        layers.append(LayerSpec(LayerKind.DENSE, in_dim=dim, out_dim=out,
                                manifold=_maybe_family(rng, family, dim, out)))
        if j < n_dense - 1:
            layers.append(LayerSpec(LayerKind.ACTIVATION, activation="tanh"))
        dim = out
    spec = NetworkSpec((channels, size, size), classes, layers)
    net = Network.from_spec(spec, seed=int(rng.integers(1 << 31)))
    # biases and shifts start at zero; perturb so their gradients are generic
    for name, p in net.named_params().items():
        if not name.endswith("weight"):
            p.value = 0.3 * rng.standard_normal(p.value.shape)
    n = int(rng.integers(2, 5))
    batch = Batch(rng.random((n, channels, size, size)), rng.integers(0, classes, n))
    return net, batch
