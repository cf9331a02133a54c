"""Seeded synthetic two-class dataset for smoke runs and demos.

Benign stands in as a bright Gaussian blob, malignant as a ring, both on
a dark noisy background at the 56x56 patch geometry.  The classes are
visually separable, which is what a training smoke run needs.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .dataset import ImagePatch
from .imgproc import PATCH_SIZE, denormalize, write_grayscale

# manifest ratings chosen to pass the selection rules
BENIGN_RATINGS = ("1;2;2", "1;1;2", "2;2;2;1")
MALIGNANT_RATINGS = ("4;5;4;5", "5;4;4", "4;4;5")


def _radius_grid(size, cy, cx):
    yy, xx = np.mgrid[0:size, 0:size]
    return np.hypot(yy - cy, xx - cx)


def make_synthetic_patches(n_per_class: int = 512, seed: int = 0,
                           size: int = PATCH_SIZE) -> list[ImagePatch]:
    """Blob (benign) and ring (malignant) patches, provenance 'real'."""
    rng = np.random.default_rng(seed)
    patches: list[ImagePatch] = []
    for i in range(n_per_class):
        patches.append(ImagePatch(_blob(rng, size), "real", f"blob-{i:04d}",
                                  label="benign", seed=seed))
    for i in range(n_per_class):
        patches.append(ImagePatch(_ring(rng, size), "real", f"ring-{i:04d}",
                                  label="malignant", seed=seed))
    return patches


def _background(rng, size):
    return -1.0 + rng.normal(0.0, 0.04, size=(size, size)) + 0.08


def _blob(rng, size):
    cy, cx = size / 2 + rng.uniform(-6, 6, size=2)
    sigma = rng.uniform(4.0, 8.0)
    amp = rng.uniform(1.3, 1.8)
    r = _radius_grid(size, cy, cx)
    img = _background(rng, size) + amp * np.exp(-(r ** 2) / (2 * sigma ** 2))
    return np.clip(img, -1.0, 1.0)


def _ring(rng, size):
    cy, cx = size / 2 + rng.uniform(-6, 6, size=2)
    r0 = rng.uniform(8.0, 14.0)
    sigma = rng.uniform(1.5, 3.0)
    amp = rng.uniform(1.3, 1.8)
    r = _radius_grid(size, cy, cx)
    img = _background(rng, size) + amp * np.exp(-((r - r0) ** 2) / (2 * sigma ** 2))
    return np.clip(img, -1.0, 1.0)


def write_synthetic_dataset(out_dir, n_per_class: int = 512, seed: int = 0) -> Path:
    """Write PNG patches plus a manifest CSV; returns the manifest path.

    Ratings and diameters are chosen so every row survives the selection
    rules with the intended label.
    """
    out_dir = Path(out_dir)
    (out_dir / "patches").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    patches = make_synthetic_patches(n_per_class, seed)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["nodule_id", "patch_path", "diameter_mm", "ratings"])
        for p in patches:
            rel = f"patches/{p.source_id}.png"
            write_grayscale(out_dir / rel, denormalize(p.pixels))
            ratings = (BENIGN_RATINGS if p.label == "benign"
                       else MALIGNANT_RATINGS)[rng.integers(len(BENIGN_RATINGS))]
            diameter = round(float(rng.uniform(4.0, 22.0)), 1)
            writer.writerow([p.source_id, rel, diameter, ratings])
    return manifest
