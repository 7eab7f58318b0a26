"""Composite billboard dataset: annotation rules, seeded split, preprocessing.

Annotation file grammar (UTF-8 text, one image per line)::

    # comment lines and blank lines are ignored
    image_id <TAB> width <TAB> height <TAB> source [<TAB> polygon]...
    polygon := x0,y0 x1,y1 x2,y2 ...        (at least three vertices)

``image_id`` doubles as the image path relative to the image root. A line
with no polygon fields describes an image without billboards.
"""
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    ADNetError,
    AnnotationParseError,
    DegeneratePolygonError,
    EmptyDatasetError,
    InvalidParameterError,
)

POSITIVE = "billboard"
NEGATIVE = "no-billboard"
LABELS = (NEGATIVE, POSITIVE)  # index 0 / index 1 of the network output
AREA_THRESHOLD = 0.10
SPLITS = ("train", "test")


class ImageDecodeError(ADNetError, OSError):
    pass


@dataclass
class AnnotatedImage:
    image_id: str
    width: int
    height: int
    source: str
    billboard_polygons: list = field(default_factory=list)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidParameterError(f"{self.image_id}: image extents must be >= 1")
        for poly in self.billboard_polygons:
            if not all(math.isfinite(v) for xy in poly for v in xy):
                raise InvalidParameterError(f"{self.image_id}: non-finite polygon vertex")


def polygon_area(vertices):
    """Absolute shoelace area of a simple polygon, in square pixels."""
    if len(vertices) < 3:
        raise DegeneratePolygonError(f"polygon needs >= 3 vertices, got {len(vertices)}")
    xy = np.asarray(vertices, dtype=np.float64)
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _union_area(polygons):
    from shapely.geometry import Polygon
    from shapely.ops import unary_union

    shapes = []
    for poly in polygons:
        if len(poly) < 3:
            raise DegeneratePolygonError(f"polygon needs >= 3 vertices, got {len(poly)}")
        p = Polygon(poly)
        shapes.append(p if p.is_valid else p.buffer(0))
    return unary_union(shapes).area


def area_fraction(img, overlap="sum"):
    """Billboard area over image area, clamped to [0, 1].

    ``overlap="sum"`` adds polygon areas independently, so overlapping
    polygons are counted twice. ``overlap="union"`` measures the area of
    their union instead.
    """
    if not img.billboard_polygons:
        return 0.0
    if overlap == "sum":
        covered = sum(polygon_area(p) for p in img.billboard_polygons)
    elif overlap == "union":
        covered = _union_area(img.billboard_polygons)
    else:
        raise InvalidParameterError(f"unknown overlap mode {overlap!r}")
    return min(1.0, max(0.0, covered / (img.width * img.height)))


def is_off_screen(img):
    """True if any billboard vertex lies strictly outside the image frame."""
    return any(
        x < 0 or y < 0 or x > img.width or y > img.height
        for poly in img.billboard_polygons
        for x, y in poly
    )


def classify_sample(img, threshold=AREA_THRESHOLD, overlap="sum"):
    """Return ``"positive"``, ``"negative"`` or ``"exclude"`` for one image."""
    if not img.billboard_polygons:
        return "negative"
    if is_off_screen(img):
        return "exclude"
    if area_fraction(img, overlap) > threshold:
        return "positive"
    return "exclude"


@dataclass(frozen=True)
class SampleRecord:
    image_id: str
    source: str
    label: str
    split: str
    area_fraction: float

    def __post_init__(self):
        if self.label not in LABELS:
            raise InvalidParameterError(f"unknown label {self.label!r}")
        if self.split not in SPLITS:
            raise InvalidParameterError(f"unknown split {self.split!r}")
        if self.label == POSITIVE and not self.area_fraction > AREA_THRESHOLD:
            raise InvalidParameterError(
                f"{self.image_id}: positive sample with area fraction {self.area_fraction}"
            )

    @property
    def label_index(self):
        return LABELS.index(self.label)


@dataclass
class DatasetManifest:
    records: list
    seed: int
    split_fraction: float
    excluded: list = field(default_factory=list)

    def counts(self):
        """Record counts keyed by ``(split, label, source)``."""
        return Counter((r.split, r.label, r.source) for r in self.records)

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def to_text(self):
        counts = self.counts()
        head = [
            "#adnet-manifest",
            f"seed={self.seed}",
            f"split_fraction={self.split_fraction:.6f}",
            f"records={len(self.records)}",
            f"excluded={len(self.excluded)}",
        ]
        head += [f"{s}/{l}/{src}={n}" for (s, l, src), n in sorted(counts.items())]
        lines = ["\t".join(head)]
        lines += [
            f"{r.image_id}\t{r.source}\t{r.label}\t{r.split}\t{r.area_fraction:.6f}"
            for r in self.records
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("#adnet-manifest"):
            raise AnnotationParseError(1, "missing manifest header")
        meta = dict(f.split("=", 1) for f in lines[0].split("\t")[1:])
        try:
            seed = int(meta["seed"])
            fraction = float(meta["split_fraction"])
        except (KeyError, ValueError) as exc:
            raise AnnotationParseError(1, f"bad manifest header: {exc}") from exc
        records = []
        for lineno, line in enumerate(lines[1:], start=2):
            fields = line.split("\t")
            if len(fields) != 5:
                raise AnnotationParseError(lineno, f"expected 5 fields, got {len(fields)}")
            try:
                records.append(SampleRecord(*fields[:4], float(fields[4])))
            except ValueError as exc:
                raise AnnotationParseError(lineno, str(exc)) from exc
        return cls(records, seed, fraction)

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def build_manifest(images, split_fraction=0.7, seed=42, threshold=AREA_THRESHOLD, overlap="sum"):
    """Label, filter and split annotated images into a seeded manifest.

    Each label stratum is shuffled with a seeded generator and cut at
    ``round(split_fraction * n)``, so both splits carry the same
    positive/negative ratio up to one sample per stratum.
    """
    if not 0 < split_fraction < 1:
        raise InvalidParameterError(f"split fraction must lie in (0, 1), got {split_fraction}")
    images = list(images)
    if not images:
        raise EmptyDatasetError("no annotated images given")
    seen = set()
    strata = {POSITIVE: [], NEGATIVE: []}
    excluded = []
    for img in images:
        if img.image_id in seen:
            raise InvalidParameterError(f"duplicate image_id {img.image_id!r}")
        seen.add(img.image_id)
        verdict = classify_sample(img, threshold, overlap)
        if verdict == "exclude":
            excluded.append(img.image_id)
            continue
        label = POSITIVE if verdict == "positive" else NEGATIVE
        strata[label].append((img, area_fraction(img, overlap)))

    rng = np.random.default_rng(seed)
    records = []
    for label in (POSITIVE, NEGATIVE):
        members = strata[label]
        order = rng.permutation(len(members))
        n_train = int(math.floor(split_fraction * len(members) + 0.5))
        for rank, idx in enumerate(order):
            img, frac = members[idx]
            split = "train" if rank < n_train else "test"
            records.append(SampleRecord(img.image_id, img.source, label, split, round(frac, 6)))
    records.sort(key=lambda r: (SPLITS.index(r.split), r.image_id))
    return DatasetManifest(records, seed, split_fraction, excluded)


def parse_polygon(text):
    vertices = []
    for pair in text.split():
        x, y = pair.split(",")
        vx, vy = float(x), float(y)
        if not (math.isfinite(vx) and math.isfinite(vy)):
            raise ValueError(f"non-finite vertex {pair!r}")
        vertices.append((vx, vy))
    if len(vertices) < 3:
        raise DegeneratePolygonError(f"polygon needs >= 3 vertices, got {len(vertices)}")
    return vertices


def parse_annotations(text):
    """Parse annotation text; errors carry the offending 1-based line number."""
    images = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) < 4:
            raise AnnotationParseError(lineno, "expected image_id, width, height, source")
        image_id, width, height, source = fields[:4]
        try:
            w, h = int(width), int(height)
        except ValueError:
            raise AnnotationParseError(lineno, f"bad image size {width!r} x {height!r}") from None
        try:
            polygons = [parse_polygon(f) for f in fields[4:] if f.strip()]
        except ValueError as exc:
            raise AnnotationParseError(lineno, f"malformed polygon: {exc}") from None
        try:
            images.append(AnnotatedImage(image_id, w, h, source, polygons))
        except ValueError as exc:
            raise AnnotationParseError(lineno, str(exc)) from None
    return images


def format_annotations(images):
    lines = []
    for img in images:
        polys = [" ".join(f"{x:g},{y:g}" for x, y in p) for p in img.billboard_polygons]
        lines.append("\t".join([img.image_id, str(img.width), str(img.height), img.source, *polys]))
    return "\n".join(lines) + "\n"


def load_annotations(path):
    return parse_annotations(Path(path).read_text(encoding="utf-8"))


def load_input(image, target=(3, 224, 224), mean=None, std=None, dtype=np.float32):
    """Decode, resize (bilinear) and scale an RGB image to a [3,H,W] tensor.

    ``image`` may be a path, a PIL image or an HxWx3 uint8 array. Values are
    scaled to [0, 1]; ``mean``/``std`` (per channel) are applied afterwards
    when given.
    """
    if isinstance(image, (str, Path)):
        try:
            with Image.open(image) as im:
                im = im.convert("RGB")
        except (UnidentifiedImageError, OSError) as exc:
            raise ImageDecodeError(f"cannot decode image {image}: {exc}") from exc
    elif isinstance(image, Image.Image):
        im = image.convert("RGB")
    else:
        arr = np.asarray(image)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ImageDecodeError(f"expected an HxWx3 array, got shape {arr.shape}")
        im = Image.fromarray(arr.astype(np.uint8), "RGB")
    _, h, w = target
    if im.size != (w, h):
        im = im.resize((w, h), Image.BILINEAR)
    x = np.asarray(im, dtype=np.float64).transpose(2, 0, 1) / 255.0
    if mean is not None:
        x = x - np.asarray(mean, dtype=np.float64)[:, None, None]
    if std is not None:
        x = x / np.asarray(std, dtype=np.float64)[:, None, None]
    return np.ascontiguousarray(x, dtype=dtype)


class ImageFolderLoader:
    """Maps a :class:`SampleRecord` to its preprocessed input tensor.

    Decoded tensors are cached in memory, keyed by ``image_id``.
    """

    def __init__(self, root, target=(3, 224, 224), cache=True, **preprocess):
        self.root = Path(root)
        self.target = tuple(target)
        self.preprocess = preprocess
        self._cache = {} if cache else None

    def __call__(self, record):
        key = record.image_id
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        x = load_input(self.root / key, self.target, **self.preprocess)
        if self._cache is not None:
            self._cache[key] = x
        return x
