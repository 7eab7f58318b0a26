"""Command-line entry point: ``adnet {build-dataset,train,evaluate,predict}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .dataset import (
    LABELS,
    SPLITS,
    DatasetManifest,
    ImageDecodeError,
    ImageFolderLoader,
    build_manifest,
    load_annotations,
    load_input,
)
from .errors import ADNetError, InvalidConfigError
from .eval import evaluate, predict
from .network import CONFIG_NAMES, SCALES, Network, build_config, load_checkpoint, save_checkpoint
from .training import TrainingConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp", ".ppm"}

log = logging.getLogger("adnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _existing(path, what):
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def table2_summary(manifest):
    """Counts laid out as split rows x (label, source) columns."""
    counts = manifest.counts()
    sources = sorted({src for _, _, src in counts})
    cols = [(label, src) for label in reversed(LABELS) for src in sources]
    header = ["set"] + [f"{label}/{src}" for label, src in cols] + ["total"]
    rows = [header]
    for split in SPLITS + ("total",):
        splits = SPLITS if split == "total" else (split,)
        cells = [sum(counts[(s, label, src)] for s in splits) for label, src in cols]
        rows.append([split] + [str(c) for c in cells] + [str(sum(cells))])
    rows.append(["excluded", *([""] * len(cols)), str(len(manifest.excluded))])
    return "\n".join("\t".join(r) for r in rows)


def cmd_build_dataset(args):
    images = load_annotations(_existing(args.annotations, "annotation file"))
    manifest = build_manifest(images, args.split_fraction, args.seed, overlap=args.overlap)
    manifest.save(args.out)
    print(f"seed={args.seed} split_fraction={args.split_fraction} manifest={args.out}")
    print(table2_summary(manifest))
    return EXIT_OK


def _training_config(args):
    return TrainingConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        freeze_depth=args.freeze_depth,
        seed=args.seed,
        dropout_rate=args.dropout,
        momentum=args.momentum,
        deterministic=args.deterministic,
    )


def cmd_train(args):
    manifest_path = _existing(args.manifest, "manifest")
    root = Path(args.images_root) if args.images_root else manifest_path.parent
    _existing(root, "image root")
    try:
        spec = build_config(args.config, args.scale)
    except InvalidConfigError as exc:
        raise UsageError(str(exc)) from exc
    cfg = _training_config(args)
    print(
        f"config={spec.name} scale={spec.scale} lr={cfg.learning_rate} batch={cfg.batch_size} "
        f"epochs={cfg.epochs} freeze_depth={cfg.freeze_depth} dropout={cfg.dropout_rate} "
        f"momentum={cfg.momentum} seed={cfg.seed} deterministic={cfg.deterministic}"
    )
    manifest = DatasetManifest.load(manifest_path)
    loader = ImageFolderLoader(root, spec.input_shape)

    def echo(e):
        print(f"epoch {e.epoch}\tloss {e.mean_loss:.6f}\tacc {e.train_accuracy:.6f}\t{e.seconds:.2f}s")

    ckpt, train_log = train(spec, manifest, cfg, loader, on_epoch=echo)
    save_checkpoint(ckpt, args.out)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".log")
    log_path.write_text(train_log.to_text(with_time=not cfg.deterministic), encoding="utf-8")
    print(f"checkpoint={args.out} log={log_path} steps={train_log.steps}")
    return EXIT_OK


def cmd_evaluate(args):
    manifest_path = _existing(args.manifest, "manifest")
    ckpt = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    root = Path(args.images_root) if args.images_root else manifest_path.parent
    net = Network.from_checkpoint(ckpt)
    manifest = DatasetManifest.load(manifest_path)
    report = evaluate(net, manifest, args.split, ImageFolderLoader(root, net.spec.input_shape))
    text = f"checkpoint\t{args.checkpoint}\nconfig\t{ckpt.spec_name}\tseed\t{ckpt.seed}\n"
    text += report.to_text()
    print(text, end="")
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_predict(args):
    frames_dir = _existing(args.frames, "frames directory")
    ckpt = load_checkpoint(_existing(args.checkpoint, "checkpoint"))
    net = Network.from_checkpoint(ckpt)
    frames = sorted(
        p for p in frames_dir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )
    lines, times, skipped = [], [], 0
    counts = dict.fromkeys(LABELS, 0)
    for path in frames:
        try:
            x = load_input(path, net.spec.input_shape)
        except ImageDecodeError as exc:
            log.warning("skipping %s: %s", path.name, exc)
            skipped += 1
            continue
        start = time.perf_counter()
        labels, probs = predict(net, x[None])
        times.append((time.perf_counter() - start) * 1e3)
        label = LABELS[int(labels[0])]
        counts[label] += 1
        lines.append(f"{path.name}\t{label}\t{probs[0, 1]:.6f}")
    if not lines:
        print(f"error: no decodable frames in {frames_dir}", file=sys.stderr)
        return EXIT_DATA
    summary = (
        f"#summary\tframes={len(lines)}\tbillboard={counts['billboard']}"
        f"\tno-billboard={counts['no-billboard']}\tskipped={skipped}"
        f"\tmean_ms={float(np.mean(times)):.3f}"
    )
    text = "\n".join(lines + [summary]) + "\n"
    Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="adnet", description="Billboard detection in video frames.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-dataset", help="label and split an annotation file")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True, help="manifest path to write")
    p.add_argument("--split-fraction", type=float, default=0.7)
    p.add_argument("--overlap", choices=["sum", "union"], default="sum")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="train a network on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images-root", help="defaults to the manifest's directory")
    p.add_argument("--config", default="E", help=f"one of {', '.join(CONFIG_NAMES)}")
    p.add_argument("--scale", choices=SCALES, default="full")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--freeze-depth", type=int, default=5)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded kernels; log omits wall times")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--log", help="training log path (default: <out>.log)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--images-root")
    p.add_argument("--report")
    p.add_argument("--seed", type=int, default=42, help="recorded only; evaluation is deterministic")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify every frame in a directory")
    p.add_argument("--frames", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42, help="recorded only; inference is deterministic")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ADNetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
