"""Layer kinds with forward and analytic backward passes.

Every layer follows the same protocol: ``forward(x, training=False)``
returns the activation and, in training mode only, keeps what
``backward(dout)`` needs. ``backward`` returns the gradient with respect to
the layer input and fills ``grads`` for layers that carry parameters.
All kernels keep the dtype of their input, so a float64 network runs fully
in float64.
"""
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidGeometryError,
    InvalidParameterError,
    InvalidTargetError,
    ShapeMismatchError,
)
from .tensor import col2im, im2col

LAYER_KINDS = ("conv", "maxpool", "relu", "lrn", "dropout", "dense", "flatten", "softmax")
WEIGHT_KINDS = ("conv", "dense")

LRN_DEFAULTS = {"k": 2.0, "n": 5, "alpha": 1e-4, "beta": 0.75}
LOSS_EPS = 1e-12


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer.

    ``kernel`` applies to conv only, ``channels`` to conv and dense (output
    channels / units), ``rate`` to dropout only.
    """

    kind: str
    name: str
    kernel: int = None
    channels: int = None
    rate: float = None
    trainable: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise InvalidParameterError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv" and (self.kernel is None or self.kernel < 1 or self.kernel % 2 == 0):
            raise InvalidParameterError(f"conv kernel must be a positive odd size, got {self.kernel}")
        if self.kind in WEIGHT_KINDS and (self.channels is None or self.channels < 1):
            raise InvalidParameterError(f"{self.kind} needs a positive channel count")
        if self.kind == "dropout" and not (self.rate is not None and 0 <= self.rate < 1):
            raise InvalidParameterError(f"dropout rate must lie in [0, 1), got {self.rate}")

    @property
    def has_weights(self):
        return self.kind in WEIGHT_KINDS


# -- functional forms ---------------------------------------------------------


def conv2d(x, weight, bias):
    """Stride-1 convolution with 'same' padding via im2col + matmul."""
    out, _ = _conv_forward(x, weight, bias)
    return out


def _conv_forward(x, weight, bias):
    if x.ndim != 4:
        raise ShapeMismatchError(f"conv2d expects [N,C,H,W], got {x.shape}")
    c_out, c_in, k, _ = weight.shape
    if x.shape[1] != c_in:
        raise ShapeMismatchError(f"input has {x.shape[1]} channels, kernel expects {c_in}")
    n, _, h, w = x.shape
    cols = im2col(x, k, 1, (k - 1) // 2)
    out = weight.reshape(c_out, -1) @ cols + bias[:, None]
    out = out.reshape(c_out, n, h, w).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out), cols


def maxpool2d(x):
    out, _ = _pool_forward(x)
    return out


def _pool_forward(x):
    if x.ndim != 4:
        raise ShapeMismatchError(f"maxpool2d expects [N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise InvalidGeometryError(f"maxpool2d needs even spatial extents, got {h}x{w}")
    windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    windows = windows.reshape(n, c, h // 2, w // 2, 4)
    # argmax returns the first maximum, which fixes the tie rule
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return out, arg


def relu(x):
    return np.maximum(x, 0)


def _window_sum(sq, n):
    """Sum of ``sq`` over a clipped channel window of width ``n``."""
    half = n // 2
    c = sq.shape[1]
    csum = np.cumsum(sq, axis=1)
    csum = np.concatenate([np.zeros_like(sq[:, :1]), csum], axis=1)
    idx = np.arange(c)
    hi = np.minimum(idx + half + 1, c)
    lo = np.maximum(idx - half, 0)
    return csum[:, hi] - csum[:, lo]


def lrn(x, k=2.0, n=5, alpha=1e-4, beta=0.75):
    """Cross-channel local response normalization.

    out[c] = x[c] / (k + alpha * sum(x[c']**2 for c' near c)) ** beta
    """
    if n % 2 == 0:
        raise InvalidParameterError(f"LRN window must be odd, got {n}")
    scale = k + alpha * _window_sum(x * x, n)
    return x * scale ** -beta


def dropout(x, rate, training=False, seed=0):
    out, _ = _dropout_forward(x, rate, training, np.random.default_rng(seed))
    return out


def _dropout_forward(x, rate, training, rng):
    if not 0 <= rate < 1:
        raise InvalidParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dense(x, weight, bias):
    if x.ndim != 2:
        raise ShapeMismatchError(f"dense expects [N,fan_in], got {x.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeMismatchError(f"fan_in {x.shape[1]} != weight rows {weight.shape[0]}")
    return x @ weight + bias


def softmax(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _labels_from_onehot(targets):
    ok = np.all((targets == 0) | (targets == 1), axis=1) & (targets.sum(axis=1) == 1)
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise InvalidTargetError(f"target row {bad} is not one-hot")
    return targets.argmax(axis=1)


def cross_entropy_loss(probs, targets, eps=LOSS_EPS):
    """Mean categorical cross-entropy of ``probs`` against one-hot ``targets``."""
    if probs.shape != targets.shape:
        raise ShapeMismatchError(f"probs {probs.shape} vs targets {targets.shape}")
    labels = _labels_from_onehot(targets)
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(picked + eps)))


def softmax_cross_entropy_grad(probs, targets):
    """Gradient of the mean loss with respect to the pre-softmax logits."""
    return (probs - targets) / probs.shape[0]


def one_hot(labels, num_classes=2, dtype=np.float32):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out


# -- layer objects ------------------------------------------------------------


class Layer:
    kind = None

    def __init__(self, name=None):
        self.name = name or self.kind
        self.cache = None
        self.grads = {}

    def params(self):
        return {}

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, weight, bias, name=None):
        super().__init__(name)
        self.weight = weight
        self.bias = bias

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False, rng=None):
        out, cols = _conv_forward(x, self.weight, self.bias)
        self.cache = (x.shape, cols) if training else None
        return out

    def backward(self, dout, input_grad=True, param_grads=True):
        x_shape, cols = self.cache
        c_out, _, k, _ = self.weight.shape
        d = dout.transpose(1, 0, 2, 3).reshape(c_out, -1)
        if param_grads:
            self.grads = {
                "weight": (d @ cols.T).reshape(self.weight.shape),
                "bias": d.sum(axis=1),
            }
        if not input_grad:
            return None
        dcols = self.weight.reshape(c_out, -1).T @ d
        return col2im(dcols, x_shape, k, 1, (k - 1) // 2)


class MaxPool2D(Layer):
    kind = "maxpool"

    def forward(self, x, training=False, rng=None):
        out, arg = _pool_forward(x)
        self.cache = (x.shape, arg) if training else None
        return out

    def backward(self, dout):
        (n, c, h, w), arg = self.cache
        routed = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
        np.put_along_axis(routed, arg[..., None], dout[..., None], axis=-1)
        routed = routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return np.ascontiguousarray(routed.reshape(n, c, h, w))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        self.cache = x > 0 if training else None
        return relu(x)

    def backward(self, dout):
        return dout * self.cache


class LRN(Layer):
    kind = "lrn"

    def __init__(self, name=None, k=2.0, n=5, alpha=1e-4, beta=0.75):
        super().__init__(name)
        if n % 2 == 0:
            raise InvalidParameterError(f"LRN window must be odd, got {n}")
        self.k, self.n, self.alpha, self.beta = k, n, alpha, beta

    def forward(self, x, training=False, rng=None):
        scale = self.k + self.alpha * _window_sum(x * x, self.n)
        out = x * scale ** -self.beta
        self.cache = (x, scale) if training else None
        return out

    def backward(self, dout):
        x, scale = self.cache
        # the window is symmetric, so "j in window(c)" == "c in window(j)"
        t = dout * x * scale ** (-self.beta - 1)
        return dout * scale ** -self.beta - 2 * self.alpha * self.beta * x * _window_sum(t, self.n)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate, name=None):
        super().__init__(name)
        if not 0 <= rate < 1:
            raise InvalidParameterError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if training and rng is None:
            rng = np.random.default_rng(0)
        out, mask = _dropout_forward(x, self.rate, training, rng)
        self.cache = mask if training else None
        return out

    def backward(self, dout):
        return dout if self.cache is None else dout * self.cache


class Dense(Layer):
    kind = "dense"

    def __init__(self, weight, bias, name=None):
        super().__init__(name)
        self.weight = weight
        self.bias = bias

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False, rng=None):
        out = dense(x, self.weight, self.bias)
        self.cache = x if training else None
        return out

    def backward(self, dout, input_grad=True, param_grads=True):
        x = self.cache
        if param_grads:
            self.grads = {"weight": x.T @ dout, "bias": dout.sum(axis=0)}
        return dout @ self.weight.T if input_grad else None


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False, rng=None):
        self.cache = x.shape if training else None
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self.cache)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, training=False, rng=None):
        out = softmax(x)
        self.cache = out if training else None
        return out

    def backward(self, dout):
        y = self.cache
        return y * (dout - (dout * y).sum(axis=1, keepdims=True))
