#!/usr/bin/env python3
"""The selection rules, applied to a small hand-written manifest.

Nodules need a diameter of at least 3 mm and at least 3 readers; the
median malignancy rating labels them (below 3 benign, above 3
malignant) and median-3 cases are dropped as too uncertain.
"""

import tempfile
from pathlib import Path

import numpy as np

from noduleforge.dataset import consensus_filter, parse_annotations
from noduleforge.imgproc import write_grayscale

rows = [
    ("n01", 5.0, "1;2;2"),     # median 2      -> benign
    ("n02", 10.0, "4;5;4;5"),  # median 4.5    -> malignant
    ("n03", 6.0, "3;4;3"),     # median 3      -> excluded
    ("n04", 6.0, "2;4"),       # two readers   -> excluded
    ("n05", 2.5, "1;1;1"),     # under 3 mm    -> excluded
    ("n06", 9.0, "3;4;4"),     # median 4      -> malignant
]

workdir = Path(tempfile.mkdtemp())
(workdir / "patches").mkdir()
rng = np.random.default_rng(0)
with open(workdir / "manifest.csv", "w") as f:
    f.write("nodule_id,patch_path,diameter_mm,ratings\n")
    for nodule_id, diameter, ratings in rows:
        write_grayscale(workdir / "patches" / f"{nodule_id}.png",
                        rng.integers(0, 256, (16, 16), dtype=np.uint8))
        f.write(f"{nodule_id},patches/{nodule_id}.png,{diameter},{ratings}\n")

parsed = parse_annotations(workdir / "manifest.csv")
print(parsed.summary())

result = consensus_filter(parsed.annotations)
print("\nkept:")
for n in result.kept:
    print(f"  {n.nodule_id}: ratings {list(n.ratings)} -> median "
          f"{n.consensus_rating:g} -> {n.label}")
print("excluded:")
for e in result.excluded:
    print(f"  {e.annotation.nodule_id}: {'; '.join(e.reasons)}")
