"""ADNet configurations, parameter handling and checkpoint files."""
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import layers as L
from .errors import (
    CorruptCheckpointError,
    InvalidConfigError,
    InvalidParameterError,
    ShapeMismatchError,
)

CONFIG_NAMES = ("A", "A-LRN", "B", "C", "D", "E")
SCALES = ("full", "tiny")

# conv kernel sizes per block, one entry per conv layer
_BLOCKS = {
    "A": [[3], [3], [3, 3], [3, 3], [3, 3]],
    "A-LRN": [[3], [3], [3, 3], [3, 3], [3, 3]],
    "B": [[3, 3], [3, 3], [3, 3], [3, 3], [3, 3]],
    "C": [[3, 3], [3, 3], [3, 3, 1], [3, 3, 1], [3, 3, 1]],
    "D": [[3, 3], [3, 3], [3, 3, 3], [3, 3, 3], [3, 3, 3]],
    "E": [[3, 3], [3, 3], [3, 3, 3, 3], [3, 3, 3, 3], [3, 3, 3, 3]],
}
_WIDTHS = (64, 128, 256, 512, 512)
_SCALE = {
    # input side, channel divisor, head width
    "full": (224, 1, 1024),
    "tiny": (32, 8, 64),
}


class CheckpointMismatchError(CorruptCheckpointError, ShapeMismatchError):
    """Checkpoint tensors do not fit the requested network spec."""


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple
    input_shape: tuple = (3, 224, 224)
    scale: str = "full"

    def weight_layers(self):
        return [spec for spec in self.layers if spec.has_weights]

    @property
    def num_weight_layers(self):
        return len(self.weight_layers())

    def param_shapes(self):
        """Ordered ``{"layer/weight": shape, "layer/bias": shape}`` from a shape walk."""
        shapes = {}
        c, h, w = self.input_shape
        flat = None
        for spec in self.layers:
            if spec.kind == "conv":
                shapes[f"{spec.name}/weight"] = (spec.channels, c, spec.kernel, spec.kernel)
                shapes[f"{spec.name}/bias"] = (spec.channels,)
                c = spec.channels
            elif spec.kind == "maxpool":
                h, w = h // 2, w // 2
            elif spec.kind == "flatten":
                flat = c * h * w
            elif spec.kind == "dense":
                shapes[f"{spec.name}/weight"] = (flat, spec.channels)
                shapes[f"{spec.name}/bias"] = (spec.channels,)
                flat = spec.channels
        return shapes

    def num_params(self):
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    def trainable_layer_names(self):
        return [s.name for s in self.layers if s.has_weights and s.trainable]


def build_config(name, scale="full", dropout_rate=0.5):
    """Build one ADNet configuration column as an ordered layer list.

    ``scale="tiny"`` keeps the exact topology but uses 32x32 inputs, channel
    widths divided by 8 and a 64-unit head, for fast experiments.
    """
    if name not in _BLOCKS:
        raise InvalidConfigError(f"unknown configuration {name!r}; expected one of {CONFIG_NAMES}")
    if scale not in _SCALE:
        raise InvalidConfigError(f"unknown scale {scale!r}; expected one of {SCALES}")
    side, divisor, head = _SCALE[scale]
    specs = []
    for b, kernels in enumerate(_BLOCKS[name], start=1):
        width = _WIDTHS[b - 1] // divisor
        for i, k in enumerate(kernels, start=1):
            specs.append(L.LayerSpec("conv", f"conv{b}_{i}", kernel=k, channels=width))
            specs.append(L.LayerSpec("relu", f"relu{b}_{i}"))
            if name == "A-LRN" and b == 1 and i == 1:
                specs.append(L.LayerSpec("lrn", "lrn1"))
        specs.append(L.LayerSpec("maxpool", f"pool{b}"))
    specs += [
        L.LayerSpec("flatten", "flatten"),
        L.LayerSpec("dense", "fc1", channels=head),
        L.LayerSpec("relu", "fc1_relu"),
        L.LayerSpec("dropout", "drop1", rate=dropout_rate),
        L.LayerSpec("dense", "fc2", channels=head),
        L.LayerSpec("relu", "fc2_relu"),
        L.LayerSpec("dense", "fc3", channels=2),
        L.LayerSpec("softmax", "softmax"),
    ]
    return NetworkSpec(name, tuple(specs), (3, side, side), scale)


def freeze_prefix(spec, n_weight_layers):
    """Mark the first ``n_weight_layers`` conv/dense layers non-trainable."""
    total = spec.num_weight_layers
    if not 0 <= n_weight_layers <= total:
        raise InvalidParameterError(f"freeze depth must lie in [0, {total}], got {n_weight_layers}")
    seen = 0
    out = []
    for s in spec.layers:
        if s.has_weights:
            if seen < n_weight_layers:
                s = replace(s, trainable=False)
            seen += 1
        out.append(s)
    return replace(spec, layers=tuple(out))


@dataclass
class Checkpoint:
    """Network parameters plus training metadata.

    ``params`` and ``optimizer_state`` map ``"layer/weight"``-style names to
    arrays, in network order.
    """

    spec_name: str
    scale: str
    params: dict
    epoch: int = 0
    seed: int = 0
    optimizer_state: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            (self.spec_name, self.scale, self.epoch, self.seed)
            == (other.spec_name, other.scale, other.epoch, other.seed)
            and _same_tensors(self.params, other.params)
            and _same_tensors(self.optimizer_state, other.optimizer_state)
        )

    def spec(self):
        return build_config(self.spec_name, self.scale)


def _same_tensors(a, b):
    if list(a) != list(b):
        return False
    return all(
        a[k].dtype == b[k].dtype and a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes()
        for k in a
    )


def init_params(spec, seed=0, dtype=np.float32):
    """He-uniform weights and zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    params = {}
    for key, shape in spec.param_shapes().items():
        if key.endswith("/bias"):
            params[key] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            limit = np.sqrt(6.0 / fan_in)
            params[key] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return Checkpoint(spec.name, spec.scale, params, epoch=0, seed=seed)


def check_params(spec, params):
    expected = spec.param_shapes()
    if list(expected) != list(params):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise CheckpointMismatchError(
            f"parameters do not match config {spec.name}: missing {missing}, unexpected {extra}"
        )
    for key, shape in expected.items():
        if tuple(params[key].shape) != tuple(shape):
            raise CheckpointMismatchError(
                f"{key}: shape {params[key].shape} does not match config {spec.name} {shape}"
            )


class Network:
    """A live model: spec plus parameter arrays plus per-layer caches.

    Layer objects hold references into ``params``, so in-place optimizer
    updates are visible immediately.
    """

    def __init__(self, spec, params):
        check_params(spec, params)
        self.spec = spec
        self.params = params
        self.layers = [self._make_layer(s) for s in spec.layers]

    @classmethod
    def from_checkpoint(cls, ckpt, spec=None):
        return cls(spec or ckpt.spec(), ckpt.params)

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def _make_layer(self, s):
        if s.kind == "conv":
            return L.Conv2D(self.params[f"{s.name}/weight"], self.params[f"{s.name}/bias"], s.name)
        if s.kind == "dense":
            return L.Dense(self.params[f"{s.name}/weight"], self.params[f"{s.name}/bias"], s.name)
        if s.kind == "dropout":
            return L.Dropout(s.rate, s.name)
        if s.kind == "lrn":
            return L.LRN(s.name, **L.LRN_DEFAULTS)
        cls = {"maxpool": L.MaxPool2D, "relu": L.ReLU, "flatten": L.Flatten, "softmax": L.Softmax}
        return cls[s.kind](s.name)

    def forward(self, x, training=False, rng=None, shapes=None):
        """Class probabilities for a batch ``x`` of shape [N,3,H,W].

        If ``shapes`` is a list, each layer's ``(name, output shape)`` is
        appended to it.
        """
        if tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeMismatchError(
                f"input {x.shape} does not match network input {self.spec.input_shape}"
            )
        x = np.asarray(x, dtype=self.dtype)
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
            if shapes is not None:
                shapes.append((layer.name, x.shape))
        return x

    def loss_and_grads(self, x, targets, rng=None):
        """Training-mode forward and backward for one batch.

        Returns ``(loss, probs, grads)`` where ``grads`` holds entries only
        for trainable layers.
        """
        probs = self.forward(x, training=True, rng=rng)
        loss = L.cross_entropy_loss(probs, targets)
        dout = L.softmax_cross_entropy_grad(probs, targets.astype(probs.dtype))
        trainable = [i for i, s in enumerate(self.spec.layers) if s.has_weights and s.trainable]
        grads = {}
        if not trainable:
            return loss, probs, grads
        first = trainable[0]
        # the last layer is softmax, whose gradient is fused into the loss
        for i in range(len(self.layers) - 2, first - 1, -1):
            layer, s = self.layers[i], self.spec.layers[i]
            if s.has_weights:
                dout_next = layer.backward(dout, input_grad=i > first, param_grads=s.trainable)
                if s.trainable:
                    for k, g in layer.grads.items():
                        grads[f"{s.name}/{k}"] = g
                dout = dout_next
            else:
                dout = layer.backward(dout)
        return loss, probs, grads


# -- checkpoint file ----------------------------------------------------------
#
# little-endian throughout:
#   magic "ADNT" | u32 version
#   str spec_name | str scale | u32 epoch | i64 seed
#   u32 n_params | u32 n_optimizer
#   n_params + n_optimizer tensor records:
#       str name | u8 dtype tag | u32 rank | u32 extents[rank] | raw values
# where str is u32 byte length followed by UTF-8 bytes.

MAGIC = b"ADNT"
VERSION = 1
_DTYPE_TAGS = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


def _pack_str(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _pack_tensor(name, arr):
    dt = np.dtype(arr.dtype).newbyteorder("<")
    if dt not in _DTYPE_TAGS:
        raise InvalidParameterError(f"{name}: unsupported dtype {arr.dtype}")
    head = _pack_str(name) + struct.pack("<BI", _DTYPE_TAGS[dt], arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=dt).tobytes()


def checkpoint_bytes(ckpt):
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        _pack_str(ckpt.spec_name),
        _pack_str(ckpt.scale),
        struct.pack("<Iq", ckpt.epoch, ckpt.seed),
        struct.pack("<II", len(ckpt.params), len(ckpt.optimizer_state)),
    ]
    parts += [_pack_tensor(k, v) for k, v in ckpt.params.items()]
    parts += [_pack_tensor(k, v) for k, v in ckpt.optimizer_state.items()]
    return b"".join(parts)


def save_checkpoint(ckpt, path):
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(ckpt))


class _Reader:
    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self):
        (n,) = self.unpack("<I")
        try:
            return bytes(self.take(n)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptCheckpointError("invalid string in checkpoint") from exc

    def tensor(self):
        name = self.string()
        tag, rank = self.unpack("<BI")
        if tag not in _TAG_DTYPES:
            raise CorruptCheckpointError(f"{name}: unknown dtype tag {tag}")
        dt = _TAG_DTYPES[tag]
        shape = self.unpack(f"<{rank}I")
        count = int(np.prod(shape, dtype=np.int64))
        raw = self.take(count * dt.itemsize)
        arr = np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
        return name, arr


def checkpoint_from_bytes(buf, spec=None):
    r = _Reader(buf)
    if bytes(r.take(4)) != MAGIC:
        raise CorruptCheckpointError("bad magic; not an ADNet checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CorruptCheckpointError(f"unsupported checkpoint version {version}")
    spec_name = r.string()
    scale = r.string()
    epoch, seed = r.unpack("<Iq")
    n_params, n_opt = r.unpack("<II")
    params = dict(r.tensor() for _ in range(n_params))
    opt = dict(r.tensor() for _ in range(n_opt))
    if r.pos != len(r.buf):
        raise CorruptCheckpointError("trailing bytes after checkpoint records")
    if spec is None:
        try:
            spec = build_config(spec_name, scale)
        except InvalidConfigError as exc:
            raise CorruptCheckpointError(str(exc)) from exc
    check_params(spec, params)
    return Checkpoint(spec_name, scale, params, epoch, seed, opt)


def load_checkpoint(path, spec=None):
    """Read a checkpoint, validating its tensors against ``spec``.

    Without ``spec`` the configuration named in the file is used.
    """
    with open(path, "rb") as f:
        return checkpoint_from_bytes(f.read(), spec)
