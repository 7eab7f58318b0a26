"""
Training and evaluating a small network
=======================================

Train the tiny version of configuration E on synthetic frames where a
bright block on the left marks a billboard, then score it and save a
checkpoint.
"""
import tempfile
from pathlib import Path

import numpy as np

from adnet import (
    DatasetManifest,
    Network,
    SampleRecord,
    TrainingConfig,
    build_config,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

rng = np.random.default_rng(1)
frames, records = {}, []
for i in range(24):
    label = i % 2
    img = rng.random((3, 32, 32)).astype(np.float32) * 0.3
    img[:, 8:24, (2 if label else 18):(14 if label else 30)] += 0.7
    key = f"frame{i:02d}"
    frames[key] = img
    split = "train" if i < 16 else "test"
    records.append(SampleRecord(key, "synthetic", ("no-billboard", "billboard")[label],
                                split, 0.25 if label else 0.0))
manifest = DatasetManifest(records, seed=1, split_fraction=16 / 24)


def loader(record):
    return frames[record.image_id]


# %%
# The paper-scale defaults are lr=1e-4, batch 16 and 50 epochs with the
# first five weight layers frozen. From random weights a larger step
# converges much faster.
spec = build_config("E", "tiny")
cfg = TrainingConfig(learning_rate=0.01, batch_size=4, epochs=40, seed=1)
ckpt, log = train(spec, manifest, cfg, loader)
print(log.to_text().splitlines()[-3:])

# %%
net = Network(spec, ckpt.params)
for split in ("train", "test"):
    report = evaluate(net, manifest, split, loader)
    print(report.to_text())

# %%
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "tiny_e.adnt"
    save_checkpoint(ckpt, path)
    print("checkpoint bytes:", path.stat().st_size, "round trip:", load_checkpoint(path) == ckpt)
