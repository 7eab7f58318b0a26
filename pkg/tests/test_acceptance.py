"""Exit criteria, one test per criterion.

A PASS/FAIL line per criterion is printed in the pytest terminal summary.
"""
import time

import numpy as np
from PIL import Image

from adnet import layers as L
from adnet.cli import main
from adnet.dataset import AnnotatedImage, build_manifest, classify_sample
from adnet.eval import ConfusionMatrix, accuracy, evaluate
from adnet.network import CONFIG_NAMES, Network, build_config, freeze_prefix, init_params
from adnet.tensor import col2im, im2col
from adnet.training import TrainingConfig, sgd_step, train

from conftest import separable_images
from oracles import brute_force_accuracy, naive_conv2d, numeric_grad, rel_error

WEIGHT_LAYERS = {"A": 11, "A-LRN": 11, "B": 13, "C": 16, "D": 16, "E": 19}
HEAD = [("dense", 1024, None), ("dropout", None, 0.5), ("dense", 1024, None), ("dense", 2, None)]


def test_criterion_01_table1_fidelity():
    start = time.perf_counter()
    for name in CONFIG_NAMES:
        spec = build_config(name)
        assert spec.num_weight_layers == WEIGHT_LAYERS[name], name
        assert sum(s.kind == "maxpool" for s in spec.layers) == 5
        head = [(s.kind, s.channels, s.rate) for s in spec.layers
                if s.kind in ("dense", "dropout")]
        assert head == HEAD
        assert spec.layers[-1].kind == "softmax"
        n_1x1 = sum(s.kind == "conv" and s.kernel == 1 for s in spec.layers)
        assert n_1x1 == (3 if name == "C" else 0)
    assert time.perf_counter() - start < 1.0


def test_criterion_02_shape_audit():
    start = time.perf_counter()
    spec = build_config("E", "full")
    net = Network(spec, init_params(spec, 0).params)
    shapes = []
    out = net.forward(np.zeros((1, 3, 224, 224), dtype=np.float32), shapes=shapes)
    trace = [s[2] for name, s in shapes if name.startswith("relu1_1")]
    trace += [s[2] for name, s in shapes if name.startswith("pool")]
    assert trace == [224, 112, 56, 28, 14, 7]
    assert dict(shapes)["flatten"] == (1, 25088)
    assert [dict(shapes)[k][1] for k in ("fc1", "fc2", "fc3")] == [1024, 1024, 2]
    assert out.shape == (1, 2)
    assert abs(float(out.astype(np.float64).sum()) - 1.0) <= 1e-12
    assert time.perf_counter() - start < 60


def _layer_grad_error(layer, x, params=()):
    rng = np.random.default_rng(0)
    g = rng.standard_normal(layer.forward(x, training=True, rng=np.random.default_rng(1)).shape)

    def f():
        return float(np.sum(layer.forward(x, training=True, rng=np.random.default_rng(1)) * g))

    layer.forward(x, training=True, rng=np.random.default_rng(1))
    errors = [rel_error(layer.backward(g), numeric_grad(f, x))]
    grads = dict(layer.grads)
    errors += [rel_error(grads[p], numeric_grad(f, getattr(layer, p))) for p in params]
    return max(errors)


def test_criterion_03_gradient_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    img = rng.standard_normal((2, 3, 6, 6))
    vec = rng.standard_normal((3, 5))
    cases = {
        "conv3": (L.Conv2D(rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)), img,
                  ("weight", "bias")),
        "conv1": (L.Conv2D(rng.standard_normal((4, 3, 1, 1)), rng.standard_normal(4)), img,
                  ("weight", "bias")),
        "maxpool": (L.MaxPool2D(), img, ()),
        "relu": (L.ReLU(), np.sign(img) * (np.abs(img) + 0.05), ()),
        "lrn": (L.LRN(alpha=0.5), rng.standard_normal((2, 7, 3, 3)), ()),
        "dropout": (L.Dropout(0.5), vec, ()),
        "dense": (L.Dense(rng.standard_normal((5, 4)), rng.standard_normal(4)), vec,
                  ("weight", "bias")),
        "flatten": (L.Flatten(), img, ()),
        "softmax": (L.Softmax(), vec, ()),
    }
    for kind, (layer, x, params) in cases.items():
        assert _layer_grad_error(layer, x.copy(), params) < 1e-4, kind

    logits = rng.standard_normal((4, 2))
    t = L.one_hot([0, 1, 1, 0], 2, np.float64)
    fused = L.softmax_cross_entropy_grad(L.softmax(logits), t)
    numeric = numeric_grad(lambda: L.cross_entropy_loss(L.softmax(logits), t), logits)
    assert rel_error(fused, numeric) < 1e-4

    spec = build_config("A", "tiny")
    net = Network(spec, init_params(spec, 1, np.float64).params)
    x = rng.random((4, 3, 32, 32))

    def loss():
        return net.loss_and_grads(x, t, np.random.default_rng(5))[0]

    _, _, grads = net.loss_and_grads(x, t, np.random.default_rng(5))
    keys = list(net.params)
    for _ in range(20):
        key = keys[rng.integers(len(keys))]
        p = net.params[key]
        i = tuple(int(rng.integers(s)) for s in p.shape)
        old = p[i]
        p[i] = old + 1e-5
        lp = loss()
        p[i] = old - 1e-5
        lm = loss()
        p[i] = old
        assert rel_error(grads[key][i], (lp - lm) / 2e-5) < 1e-3, key
    assert time.perf_counter() - start < 120


def test_criterion_04_convolution_oracle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n, c, c_out = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 5)
        h, w = rng.integers(2, 9, size=2)
        k = int(rng.choice([1, 3]))
        x = rng.standard_normal((n, c, h, w))
        weight = rng.standard_normal((c_out, c, k, k))
        bias = rng.standard_normal(c_out)
        ref = naive_conv2d(x, weight, bias, (k - 1) // 2)
        got = L.conv2d(x, weight, bias)
        assert got.shape == ref.shape
        assert rel_error(got, ref, floor=1e-12) < 1e-5

        pad = (k - 1) // 2
        cols = im2col(x, k, 1, pad)
        g = rng.standard_normal(cols.shape)
        lhs, rhs = np.sum(cols * g), np.sum(x * col2im(g, x.shape, k, 1, pad))
        assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), abs(rhs), 1.0)


def test_criterion_05_overfit_capacity():
    start = time.perf_counter()
    images, manifest = separable_images(16, seed=0)

    def loader(r):
        return images[r.image_id]

    cfg = TrainingConfig(learning_rate=0.01, batch_size=4, epochs=200, seed=0)
    spec = build_config("E", "tiny")
    ckpt, log = train(spec, manifest, cfg, loader)
    assert len(log.entries) <= 200
    report = evaluate(Network(spec, ckpt.params), manifest, "train", loader)
    assert report.accuracy == 1.0
    again, _ = train(spec, manifest, cfg, loader)
    assert again == ckpt
    assert time.perf_counter() - start < 180


def test_criterion_06_freeze_semantics():
    images, manifest = separable_images(8, seed=1)
    spec = build_config("E", "tiny")
    first5 = [s.name for s in spec.weight_layers()[:5]]
    init = init_params(spec, 3)
    before = {k: v.copy() for k, v in init.params.items()}

    cfg = TrainingConfig(learning_rate=0.01, batch_size=4, epochs=3, freeze_depth=5, seed=3)
    ckpt, _ = train(spec, manifest, cfg, lambda r: images[r.image_id], init=init)
    for key, value in ckpt.params.items():
        if key.split("/")[0] in first5:
            assert value.tobytes() == before[key].tobytes(), key
    assert ckpt.params["conv3_2/weight"].tobytes() != before["conv3_2/weight"].tobytes()

    frozen_all = freeze_prefix(spec, spec.num_weight_layers)
    frozen_names = [s.name for s in frozen_all.weight_layers() if not s.trainable]
    params = {k: v.copy() for k, v in before.items()}
    grads = {k: np.ones_like(v) for k, v in params.items()}
    sgd_step(params, grads, 0.5, frozen=frozen_names)
    assert all(params[k].tobytes() == before[k].tobytes() for k in params)
    cfg_all = TrainingConfig(learning_rate=0.01, batch_size=4, epochs=2, freeze_depth=19, seed=3)
    ckpt_all, _ = train(spec, manifest, cfg_all, lambda r: images[r.image_id], init=init)
    assert all(ckpt_all.params[k].tobytes() == before[k].tobytes() for k in before)


def _random_annotation(rng, i):
    w, h = int(rng.integers(20, 200)), int(rng.integers(20, 200))
    rects = []
    for _ in range(int(rng.integers(0, 4))):
        x0, y0 = int(rng.integers(-5, w // 2)), int(rng.integers(-5, h // 2))
        x1 = x0 + int(rng.integers(1, w // 2 + 5))
        y1 = y0 + int(rng.integers(1, h // 2 + 5))
        rects.append((x0, y0, x1, y1))
    if i % 50 == 0:
        # exactly 10% of the frame, on screen
        rects = [(0, 0, w, h // 10)] if h % 10 == 0 else [(0, 0, w // 10, h)] if w % 10 == 0 else []
    polys = [[(a, b), (c, b), (c, d), (a, d)] for a, b, c, d in rects]
    return AnnotatedImage(f"img{i:04d}", w, h, "mapillary" if i % 3 else "coco", polys), rects


def test_criterion_07_dataset_rules():
    rng = np.random.default_rng(7)
    pairs = [_random_annotation(rng, i) for i in range(1000)]
    verdicts = {"positive": 0, "negative": 0, "exclude": 0}
    for img, rects in pairs:
        area = sum((c - a) * (d - b) for a, b, c, d in rects)
        inside = all(a >= 0 and b >= 0 and c <= img.width and d <= img.height for a, b, c, d in rects)
        if not rects:
            expected = "negative"
        elif inside and area / (img.width * img.height) > 0.10:
            expected = "positive"
        else:
            expected = "exclude"
        got = classify_sample(img)
        assert got == expected, img
        verdicts[got] += 1
    assert min(verdicts.values()) >= 100, verdicts

    images = [img for img, _ in pairs]
    a = build_manifest(images, 0.7, seed=11)
    b = build_manifest(images, 0.7, seed=11)
    assert a.to_text().encode() == b.to_text().encode()
    assert len(a.records) + len(a.excluded) == len(images)
    assert len({r.image_id for r in a.records} | set(a.excluded)) == len(images)
    for label in ("billboard", "no-billboard"):
        n = sum(r.label == label for r in a.records)
        n_train = sum(r.label == label and r.split == "train" for r in a.records)
        assert abs(n_train - 0.7 * n) <= 1


def test_criterion_08_accuracy_oracle():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(1, 500))
        y, p = rng.integers(0, 2, n), rng.integers(0, 2, n)
        cm = ConfusionMatrix.from_labels(y, p)
        assert cm.total == n
        assert accuracy(cm) == brute_force_accuracy(y, p)
    assert f"{accuracy(ConfusionMatrix(tp=47, tn=47, fp=3, fn=3)):.6f}" == "0.940000"


def test_criterion_09_dropout_statistics():
    x = np.ones(10**6, dtype=np.float32)
    out = L.dropout(x, 0.5, training=True, seed=9)
    assert abs(np.mean(out == 0) - 0.5) <= 0.002
    np.testing.assert_array_equal(L.dropout(x, 0.5, training=False, seed=9), x)
    again = L.dropout(x, 0.5, training=True, seed=9)
    assert out.tobytes() == again.tobytes()


def test_criterion_10_cli_determinism(tmp_path):
    rng = np.random.default_rng(10)
    lines = []
    for i in range(10):
        img = (rng.random((32, 32, 3)) * 60).astype(np.uint8)
        img[:, :16 if i % 2 else 32] += 150
        Image.fromarray(img).save(tmp_path / f"f{i}.png")
        poly = "\t0,0 16,0 16,32 0,32" if i % 2 else ""
        lines.append(f"f{i}.png\t32\t32\tsynthetic{poly}")
    (tmp_path / "ann.tsv").write_text("\n".join(lines) + "\n")
    assert main(["build-dataset", "--annotations", str(tmp_path / "ann.tsv"),
                 "--out", str(tmp_path / "m.tsv"), "--seed", "5"]) == 0
    outputs = []
    for run in ("a", "b"):
        ckpt = tmp_path / f"{run}.adnt"
        assert main(["train", "--manifest", str(tmp_path / "m.tsv"), "--config", "B",
                     "--scale", "tiny", "--epochs", "3", "--batch-size", "4", "--lr", "0.01",
                     "--seed", "5", "--deterministic", "--out", str(ckpt)]) == 0
        outputs.append((ckpt.read_bytes(), (tmp_path / f"{run}.adnt.log").read_bytes()))
    assert outputs[0] == outputs[1]
