"""
Building a labelled dataset from polygon annotations
====================================================

An image is a positive sample when its billboard polygons cover more than
10% of the frame and none of them leaves the frame. Images without
billboards are negatives; everything else is dropped.
"""
import numpy as np

from adnet.cli import table2_summary
from adnet.dataset import build_manifest, classify_sample, parse_annotations

annotations = """\
# image_id	width	height	source	polygons...
street/001.jpg	1000	800	mapillary	0,0 300,0 300,300 0,300
street/002.jpg	1000	800	mapillary	10,10 60,10 60,60 10,60
street/003.jpg	1000	800	mapillary	-20,0 400,0 400,500 -20,500
street/004.jpg	640	480	mapillary
coco/005.jpg	640	480	coco
coco/006.jpg	640	480	coco
"""
images = parse_annotations(annotations)
for img in images:
    print(f"{img.image_id:16s} {classify_sample(img)}")

# %%
# A larger random corpus, split 70/30 per label with a fixed seed.
rng = np.random.default_rng(0)
lines = []
for i in range(200):
    if i % 2:
        x0, y0 = rng.integers(0, 300, size=2)
        size = rng.integers(50, 400)
        poly = f"{x0},{y0} {x0 + size},{y0} {x0 + size},{y0 + size} {x0},{y0 + size}"
        lines.append(f"m{i:03d}.jpg\t800\t600\tmapillary\t{poly}")
    else:
        lines.append(f"c{i:03d}.jpg\t640\t480\tcoco")
manifest = build_manifest(parse_annotations("\n".join(lines)), 0.7, seed=42)
print(table2_summary(manifest))
print(manifest.to_text().splitlines()[1])
