"""A small from-scratch convolutional network with exact reverse-mode gradients.

Every ``Conv2D`` weight has shape ``(D, C, A, B)`` and each ``(d, c)`` slice is
its own ``A x B`` kernel, so a layer-wide ``ManifoldSpec(family, A, B)`` turns
the weight into a stack of ``D * C`` manifold points. ``Dense`` weights are a
single ``C x D`` kernel (``y = x @ W + b``); when a Stiefel constraint needs
``rows >= cols`` and ``C < D`` the stored kernel is ``W^T`` instead.
Biases and batch-norm shifts are never constrained.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, NumericError, StateError, StructuralError
from .manifolds import Family, ManifoldSpec, random_array, violation_array

logger = logging.getLogger(__name__)

BN_MOMENTUM = 0.9


class LayerKind(str, enum.Enum):
    CONV2D = "conv2d"
    DENSE = "dense"
    ACTIVATION = "activation"
    MEAN_ONLY_BN = "mean_only_bn"
    FLATTEN = "flatten"


class ActivationKind(str, enum.Enum):
    TANH = "tanh"
    SOFTPLUS = "softplus"
    RELU = "relu"


@dataclass
class LayerSpec:
    kind: LayerKind
    kernel: tuple = (3, 3)
    in_channels: int = 1
    out_channels: int = 1
    stride: int = 1
    padding: int = 0
    in_dim: int = 1
    out_dim: int = 1
    activation: ActivationKind = ActivationKind.TANH
    channels: int = 1
    manifold: Family | None = None

    def __post_init__(self):
        self.kind = LayerKind(self.kind)
        self.activation = ActivationKind(self.activation)
        if self.manifold is not None:
            self.manifold = Family.parse(self.manifold)


@dataclass
class NetworkSpec:
    input_shape: tuple
    num_classes: int
    layers: list


@dataclass
class Param:
    value: np.ndarray
    manifold: ManifoldSpec | None = None
    transposed: bool = False
    grad: np.ndarray | None = None


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 4:
            raise StructuralError(f"inputs must be N x C x H x W, got {self.inputs.shape}")
        if self.inputs.shape[0] < 1 or self.labels.shape != (self.inputs.shape[0],):
            raise StructuralError("labels must be a vector with one entry per sample")
        if not np.all(np.isfinite(self.inputs)):
            raise NumericError("batch contains non-finite inputs")

    def __len__(self):
        return self.inputs.shape[0]


# --------------------------------------------------------------------------
# layers


class Conv2D:
    def __init__(self, in_channels, out_channels, kernel, stride=1, padding=0, rng=None):
        self.stride = int(stride)
        self.padding = int(padding)
        a, b = kernel
        rng = rng or np.random.default_rng(0)
        scale = 1.0 / np.sqrt(in_channels * a * b)
        self.params = {
            "weight": Param(scale * rng.standard_normal((out_channels, in_channels, a, b))),
            "bias": Param(np.zeros(out_channels)),
        }
        self._cache = None

    @property
    def kernel_shape(self):
        return self.params["weight"].value.shape[2:]

    def forward(self, x, train=True):
        W = self.params["weight"].value
        if x.shape[1] != W.shape[1]:
            raise StructuralError(f"conv expects {W.shape[1]} channels, got {x.shape[1]}")
        p, s = self.padding, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        if xp.shape[2] < W.shape[2] or xp.shape[3] < W.shape[3]:
            raise StructuralError("kernel larger than padded input")
        win = sliding_window_view(xp, W.shape[2:], axis=(2, 3))[:, :, ::s, ::s]
        out = np.einsum("nchwab,dcab->ndhw", win, W, optimize=True)
        out += self.params["bias"].value[None, :, None, None]
        self._cache = (x.shape, xp.shape, win)
        return out

    def backward(self, g):
        x_shape, xp_shape, win = self._cache
        W = self.params["weight"].value
        self.params["weight"].grad = np.einsum("nchwab,ndhw->dcab", win, g, optimize=True)
        self.params["bias"].grad = g.sum(axis=(0, 2, 3))
        dwin = np.einsum("ndhw,dcab->nchwab", g, W, optimize=True)
        dxp = np.zeros(xp_shape)
        s = self.stride
        ho, wo = g.shape[2:]
        for a in range(W.shape[2]):
            for b in range(W.shape[3]):
                dxp[:, :, a:a + s * (ho - 1) + 1:s, b:b + s * (wo - 1) + 1:s] += dwin[..., a, b]
        p = self.padding
        return dxp[:, :, p:p + x_shape[2], p:p + x_shape[3]] if p else dxp


class Dense:
    def __init__(self, in_dim, out_dim, rng=None):
        rng = rng or np.random.default_rng(0)
        self.params = {
            "weight": Param(rng.standard_normal((in_dim, out_dim)) / np.sqrt(in_dim)),
            "bias": Param(np.zeros(out_dim)),
        }
        self._x = None

    def matrix(self):
        w = self.params["weight"]
        return w.value.T if w.transposed else w.value

    def forward(self, x, train=True):
        W = self.matrix()
        if x.ndim != 2 or x.shape[1] != W.shape[0]:
            raise StructuralError(f"dense expects (N, {W.shape[0]}), got {x.shape}")
        self._x = x
        return x @ W + self.params["bias"].value

    def backward(self, g):
        w = self.params["weight"]
        dW = self._x.T @ g
        w.grad = dW.T if w.transposed else dW
        self.params["bias"].grad = g.sum(axis=0)
        return g @ self.matrix().T


class Activation:
    def __init__(self, kind=ActivationKind.TANH):
        self.kind = ActivationKind(kind)
        self.params = {}
        self._cache = None
        if self.kind is ActivationKind.RELU:
            logger.warning("ReLU is not three times differentiable; "
                           "the smooth-loss convergence assumption does not hold")

    def forward(self, x, train=True):
        if self.kind is ActivationKind.TANH:
            y = np.tanh(x)
            self._cache = y
        elif self.kind is ActivationKind.SOFTPLUS:
            y = np.logaddexp(0.0, x)
            self._cache = x
        else:
            y = np.maximum(x, 0.0)
            self._cache = x
        return y

    def backward(self, g):
        c = self._cache
        if self.kind is ActivationKind.TANH:
            return g * (1.0 - c * c)
        if self.kind is ActivationKind.SOFTPLUS:
            return g * 0.5 * (1.0 + np.tanh(0.5 * c))
        return g * (c > 0)


def mean_only_bn(features, running_mean, mode="train", shift=None, momentum=BN_MOMENTUM):
    """Subtract the per-channel mean (batch mean in train mode, running mean in eval).

    Channels are axis 1; the mean runs over every other axis. Returns
    ``(output, new_running_mean)``; eval mode leaves the running mean as is.
    """
    x = np.asarray(features, dtype=float)
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    running_mean = np.asarray(running_mean, dtype=float)
    if mode == "train":
        mean = x.mean(axis=axes)
        new_running = momentum * running_mean + (1.0 - momentum) * mean
    elif mode == "eval":
        mean = running_mean
        new_running = running_mean
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    out = x - mean.reshape(bshape)
    if shift is not None:
        out = out + np.asarray(shift).reshape(bshape)
    return out, new_running


class MeanOnlyBN:
    def __init__(self, channels):
        self.params = {"shift": Param(np.zeros(channels))}
        self.running_mean = np.zeros(channels)
        self._train = True

    def forward(self, x, train=True):
        out, self.running_mean = mean_only_bn(
            x, self.running_mean, "train" if train else "eval", self.params["shift"].value)
        self._train = train
        self._axes = (0,) + tuple(range(2, x.ndim))
        return out

    def backward(self, g):
        bshape = (1, -1) + (1,) * (g.ndim - 2)
        self.params["shift"].grad = g.sum(axis=self._axes)
        if not self._train:
            return g
        return g - g.mean(axis=self._axes).reshape(bshape)


class Flatten:
    params = {}

    def forward(self, x, train=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)


# --------------------------------------------------------------------------
# network


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardResult:
    logits: np.ndarray
    probs: np.ndarray
    loss: float
    activations: list = field(repr=False, default_factory=list)


class Network:
    def __init__(self, layers, num_classes):
        self.layers = layers
        self.num_classes = num_classes
        self._pending = None

    @classmethod
    def from_spec(cls, spec: NetworkSpec, seed=0):
        rng = np.random.default_rng(seed)
        layers = []
        for ls in spec.layers:
            if ls.kind is LayerKind.CONV2D:
                layers.append(Conv2D(ls.in_channels, ls.out_channels, tuple(ls.kernel),
                                     ls.stride, ls.padding, rng))
            elif ls.kind is LayerKind.DENSE:
                layers.append(Dense(ls.in_dim, ls.out_dim, rng))
            elif ls.kind is LayerKind.ACTIVATION:
                layers.append(Activation(ls.activation))
            elif ls.kind is LayerKind.MEAN_ONLY_BN:
                layers.append(MeanOnlyBN(ls.channels))
            else:
                layers.append(Flatten())
        net = cls(layers, spec.num_classes)
        policy = {i: ls.manifold for i, ls in enumerate(spec.layers) if ls.manifold is not None}
        if policy:
            _assign(net, lambda i, layer: policy.get(i), seed)
        return net

    def named_params(self):
        return {f"{i}.{name}": p
                for i, layer in enumerate(self.layers)
                for name, p in layer.params.items()}

    def kernels(self):
        """Weight parameters of conv and dense layers, keyed by id."""
        return {f"{i}.weight": layer.params["weight"]
                for i, layer in enumerate(self.layers)
                if isinstance(layer, (Conv2D, Dense))}

    def forward(self, batch: Batch, train=True) -> ForwardResult:
        x = batch.inputs
        acts = []
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, train)
            if not np.all(np.isfinite(x)):
                raise NumericError(f"non-finite activation after layer {i} "
                                   f"({type(layer).__name__})")
            acts.append(x)
        if x.ndim != 2 or x.shape[1] != self.num_classes:
            raise StructuralError(f"network output {x.shape} is not (N, {self.num_classes})")
        labels = batch.labels
        if np.any(labels < 0) or np.any(labels >= self.num_classes):
            raise StructuralError("label out of range")
        z = x - x.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(z).sum(axis=1))
        n = len(labels)
        loss = float(np.mean(logsumexp - z[np.arange(n), labels]))
        probs = softmax(x)
        self._pending = (probs, labels)
        return ForwardResult(x, probs, loss, acts)

    def backward(self):
        """Gradients of the last forward loss, keyed like ``named_params``."""
        if self._pending is None:
            raise StateError("backward called before forward")
        probs, labels = self._pending
        self._pending = None
        g = probs.copy()
        g[np.arange(len(labels)), labels] -= 1.0
        g /= len(labels)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return {name: p.grad for name, p in self.named_params().items()}

    def loss_and_grads(self, batch, train=True):
        res = self.forward(batch, train)
        return res.loss, self.backward()

    def predict(self, inputs):
        x = np.asarray(inputs, dtype=float)
        for layer in self.layers:
            x = layer.forward(x, train=False)
        return np.argmax(x, axis=1)

    def accuracy(self, batch):
        return float(np.mean(self.predict(batch.inputs) == batch.labels))

    def max_violation(self):
        worst = 0.0
        for p in self.kernels().values():
            if p.manifold is not None:
                worst = max(worst, float(np.max(violation_array(p.manifold, p.value))))
        return worst


def forward(net: Network, batch: Batch, train=True) -> ForwardResult:
    return net.forward(batch, train)


def backward(net: Network) -> dict:
    return net.backward()


def _layer_spec_for(layer, family):
    if isinstance(layer, Conv2D):
        a, b = layer.kernel_shape
        try:
            return ManifoldSpec(family, a, b), False
        except ConfigError as exc:
            raise ConfigError(f"conv kernel {a}x{b}: {exc}", key="manifold") from None
    c, d = layer.matrix().shape
    transposed = family is Family.STIEFEL and c < d
    if transposed:
        logger.info("dense kernel %dx%d stored transposed for the stiefel constraint", c, d)
        c, d = d, c
    try:
        return ManifoldSpec(family, c, d), transposed
    except ConfigError as exc:
        raise ConfigError(f"dense kernel {c}x{d}: {exc}", key="manifold") from None


def _assign(net, family_for, seed):
    for i, layer in enumerate(net.layers):
        if not isinstance(layer, (Conv2D, Dense)):
            continue
        family = family_for(i, layer)
        w = layer.params["weight"]
        if family is None:
            continue
        family = Family.parse(family)
        spec, transposed = _layer_spec_for(layer, family)
        rng = np.random.default_rng([seed, i])
        batch_shape = w.value.shape[:2] if isinstance(layer, Conv2D) else ()
        w.value = random_array(spec, batch_shape, rng)
        w.manifold = spec
        w.transposed = transposed
        w.grad = None


def assign_manifolds(net: Network, policy, seed=0) -> Network:
    """Constrain every conv/dense kernel according to ``policy`` and re-draw it.

    ``policy`` is a family name (applied to both layer kinds), ``None`` for no
    constraint, or a mapping with keys ``"conv"`` and ``"dense"``.
    """
    if policy is None or isinstance(policy, (str, Family)):
        policy = {"conv": policy, "dense": policy}
    unknown = set(policy) - {"conv", "dense"}
    if unknown:
        raise ConfigError(f"unknown layer kinds {sorted(unknown)}", key="manifold")

    def family_for(i, layer):
        fam = policy.get("conv" if isinstance(layer, Conv2D) else "dense")
        if fam is None or str(getattr(fam, "value", fam)).lower() in ("none", "unconstrained"):
            return None
        return fam

    _assign(net, family_for, seed)
    return net


def small_cnn_spec(input_shape=(1, 8, 8), num_classes=2, channels=(4, 4), kernel=3,
                   activation="tanh", mean_only_bn=False, padding=0):
    """Conv -> act [-> MOBN] repeated per entry of ``channels``, then a dense head."""
    c, h, w = input_shape
    layers = []
    for out in channels:
        layers.append(LayerSpec(LayerKind.CONV2D, kernel=(kernel, kernel), in_channels=c,
                                out_channels=out, padding=padding))
        if mean_only_bn:
            layers.append(LayerSpec(LayerKind.MEAN_ONLY_BN, channels=out))
        layers.append(LayerSpec(LayerKind.ACTIVATION, activation=activation))
        c = out
        h, w = h + 2 * padding - kernel + 1, w + 2 * padding - kernel + 1
        if h < 1 or w < 1:
            raise ConfigError("too many conv layers for the input size", key="network")
    layers.append(LayerSpec(LayerKind.FLATTEN))
    layers.append(LayerSpec(LayerKind.DENSE, in_dim=c * h * w, out_dim=num_classes))
    return NetworkSpec(tuple(input_shape), num_classes, layers)
