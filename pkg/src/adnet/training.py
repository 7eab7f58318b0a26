"""Mini-batch SGD training with layer freezing and seeded shuffling."""
import contextlib
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import LABELS
from .eval import predicted_labels
from .errors import EmptyDatasetError, InvalidGradientError, InvalidParameterError
from .layers import one_hot
from .network import Checkpoint, Network, freeze_prefix, init_params


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 50
    freeze_depth: int = 5
    seed: int = 42
    dropout_rate: float = 0.5
    momentum: float = 0.0
    deterministic: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise InvalidParameterError("batch_size must be >= 1")
        if self.epochs < 1:
            raise InvalidParameterError("epochs must be >= 1")
        if self.freeze_depth < 0:
            raise InvalidParameterError("freeze_depth must be >= 0")
        if not 0 <= self.dropout_rate < 1:
            raise InvalidParameterError("dropout_rate must lie in [0, 1)")
        if not 0 <= self.momentum < 1:
            raise InvalidParameterError("momentum must lie in [0, 1)")


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    train_accuracy: float
    seconds: float


@dataclass
class TrainingLog:
    config: dict
    entries: list = field(default_factory=list)
    steps: int = 0

    def to_text(self, with_time=True):
        """Line-oriented log: a config echo, then one line per epoch.

        ``with_time=False`` writes ``-`` for the wall time so that the text
        is reproducible.
        """
        lines = ["#config\t" + "\t".join(f"{k}={v}" for k, v in self.config.items())]
        lines.append("epoch\tmean_loss\ttrain_acc\tseconds")
        for e in self.entries:
            secs = f"{e.seconds:.3f}" if with_time else "-"
            lines.append(f"{e.epoch}\t{e.mean_loss:.6f}\t{e.train_accuracy:.6f}\t{secs}")
        lines.append(f"#steps\t{self.steps}")
        return "\n".join(lines) + "\n"


def sgd_step(params, grads, lr, frozen=(), momentum=0.0, velocity=None):
    """Apply ``w <- w - lr * g`` in place to every parameter with a gradient.

    Parameters belonging to a layer named in ``frozen`` are never touched.
    With ``momentum > 0`` the classical velocity form is used and
    ``velocity`` (a dict, updated in place) must be supplied.
    """
    frozen = set(frozen)
    for key, g in grads.items():
        if key not in params:
            raise InvalidGradientError(f"gradient for unknown parameter {key!r}")
        p = params[key]
        if g.shape != p.shape:
            raise InvalidGradientError(f"{key}: gradient shape {g.shape} != parameter {p.shape}")
        if key.split("/")[0] in frozen:
            continue
        step = p.dtype.type(lr) * g.astype(p.dtype, copy=False)
        if momentum:
            v = velocity.setdefault(key, np.zeros_like(p))
            v *= p.dtype.type(momentum)
            v -= step
            p += v
        else:
            p -= step
    return params


def set_dropout_rate(spec, rate):
    layers = tuple(replace(s, rate=rate) if s.kind == "dropout" else s for s in spec.layers)
    return replace(spec, layers=layers)


def _epoch_rng(seed, epoch):
    return np.random.default_rng([seed, epoch])


def train(spec, manifest, cfg, loader, init=None, dtype=np.float32, on_epoch=None):
    """Train ``spec`` on the manifest's train split.

    ``loader`` maps a :class:`~adnet.dataset.SampleRecord` to its [3,H,W]
    input tensor. Returns ``(checkpoint, log)``. Each epoch reshuffles with
    a generator seeded by ``(cfg.seed, epoch)``; the same generator then
    drives the dropout masks of that epoch.
    """
    records = manifest.split("train")
    if not records:
        raise EmptyDatasetError("the manifest's train split is empty")
    spec = freeze_prefix(set_dropout_rate(spec, cfg.dropout_rate), cfg.freeze_depth)
    frozen = [s.name for s in spec.weight_layers() if not s.trainable]

    if init is None:
        ckpt = init_params(spec, cfg.seed, dtype)
    else:
        ckpt = Checkpoint(
            init.spec_name, init.scale, {k: v.copy() for k, v in init.params.items()},
            init.epoch, cfg.seed, {k: v.copy() for k, v in init.optimizer_state.items()},
        )
    net = Network(spec, ckpt.params)
    velocity = ckpt.optimizer_state

    x_all = np.stack([loader(r) for r in records]).astype(net.dtype, copy=False)
    y_all = np.array([r.label_index for r in records])
    t_all = one_hot(y_all, len(LABELS), net.dtype)
    n = len(records)

    log = TrainingLog(config={"spec": spec.name, "scale": spec.scale, **asdict(cfg)})
    limits = threadpool_limits(1) if cfg.deterministic else contextlib.nullcontext()
    with limits:
        for epoch in range(ckpt.epoch + 1, ckpt.epoch + cfg.epochs + 1):
            start = time.perf_counter()
            rng = _epoch_rng(cfg.seed, epoch)
            order = np.arange(n)
            rng.shuffle(order)
            loss_sum = 0.0
            correct = 0
            for b in range(0, n, cfg.batch_size):
                idx = order[b:b + cfg.batch_size]
                loss, probs, grads = net.loss_and_grads(x_all[idx], t_all[idx], rng)
                sgd_step(net.params, grads, cfg.learning_rate, frozen, cfg.momentum, velocity)
                loss_sum += loss * len(idx)
                correct += int(np.sum(predicted_labels(probs) == y_all[idx]))
                log.steps += 1
            mean_loss = loss_sum / n
            if not np.isfinite(mean_loss):
                raise FloatingPointError(f"loss diverged at epoch {epoch}")
            stats = EpochStats(epoch, mean_loss, correct / n, time.perf_counter() - start)
            log.entries.append(stats)
            if on_epoch is not None:
                on_epoch(stats)
    ckpt.epoch += cfg.epochs
    ckpt.optimizer_state = velocity
    return ckpt, log
