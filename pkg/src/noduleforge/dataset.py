"""Nodule ingestion and the selection rules that build training pools.

The pipeline consumes pre-extracted 2-D patches listed in a CSV manifest
(columns: nodule_id, patch_path, diameter_mm, ratings) rather than raw
DICOM.  Each nodule carries one integer malignancy rating in [1, 5] per
annotating radiologist.  Selection keeps nodules at least 3 mm across
with at least 3 readers, aggregates the ratings by median, drops the
uncertain median-3 cases, and labels the rest benign (< 3) or
malignant (> 3).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgproc

PATCH_SIZE = imgproc.PATCH_SIZE

MIN_DIAMETER_MM = 3.0
MIN_READERS = 3
EXCLUDED_MEDIAN = 3.0

PROVENANCES = ("real", "generated")
LABELS = ("benign", "malignant")


@dataclass(frozen=True)
class ImagePatch:
    """One 56x56 grayscale sample in [-1, 1] with provenance."""

    pixels: np.ndarray
    provenance: str
    source_id: str
    label: str | None = None
    seed: int | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (PATCH_SIZE, PATCH_SIZE):
            raise ValueError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}, got {px.shape}")
        if px.size and (px.min() < -1.0 or px.max() > 1.0):
            raise ValueError(f"patch values outside [-1, 1]: "
                             f"min {px.min():.4f}, max {px.max():.4f}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}, "
                             f"got {self.provenance!r}")
        if self.label is not None and self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class NoduleAnnotation:
    nodule_id: str
    patch_path: Path
    diameter_mm: float
    ratings: tuple[int, ...]

    def __post_init__(self):
        if self.diameter_mm <= 0:
            raise ValueError(f"diameter_mm must be > 0, got {self.diameter_mm}")
        for r in self.ratings:
            if not 1 <= r <= 5:
                raise ValueError(f"rating {r} outside [1, 5]")


@dataclass(frozen=True)
class LabeledNodule:
    nodule_id: str
    patch: ImagePatch
    label: str
    consensus_rating: float
    ratings: tuple[int, ...]


@dataclass
class RowError:
    line: int
    field: str
    message: str

    def __str__(self):
        return f"line {self.line}: {self.field}: {self.message}"


@dataclass
class ParseResult:
    annotations: list[NoduleAnnotation]
    errors: list[RowError]

    def summary(self) -> str:
        return (f"{len(self.annotations)} annotations parsed, "
                f"{len(self.errors)} malformed rows")


MANIFEST_COLUMNS = ("nodule_id", "patch_path", "diameter_mm", "ratings")


def parse_annotations(manifest_path) -> ParseResult:
    """Read a manifest CSV; malformed rows become per-row errors.

    Patch paths are resolved relative to the manifest's directory and
    must exist.  Duplicate nodule_ids are rejected row by row.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    annotations: list[NoduleAnnotation] = []
    errors: list[RowError] = []
    seen: set[str] = set()

    with open(manifest_path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            return ParseResult(annotations, errors)
        missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"manifest missing columns: {', '.join(missing)}")
        for row in reader:
            line = reader.line_num
            nodule_id = (row.get("nodule_id") or "").strip()
            if not nodule_id:
                errors.append(RowError(line, "nodule_id", "empty"))
                continue
            if nodule_id in seen:
                errors.append(RowError(line, "nodule_id", f"duplicate {nodule_id!r}"))
                continue

            patch_path = base / (row.get("patch_path") or "").strip()
            if not patch_path.is_file():
                errors.append(RowError(line, "patch_path",
                                       f"missing patch file {patch_path}"))
                continue

            try:
                diameter = float(row.get("diameter_mm") or "")
            except ValueError:
                errors.append(RowError(line, "diameter_mm",
                                       f"not a number: {row.get('diameter_mm')!r}"))
                continue
            if diameter <= 0:
                errors.append(RowError(line, "diameter_mm",
                                       f"must be > 0, got {diameter}"))
                continue

            raw = (row.get("ratings") or "").strip()
            try:
                ratings = tuple(int(tok) for tok in raw.split(";") if tok.strip())
            except ValueError:
                errors.append(RowError(line, "ratings", f"not integers: {raw!r}"))
                continue
            if not ratings:
                errors.append(RowError(line, "ratings", "empty"))
                continue
            bad = [r for r in ratings if not 1 <= r <= 5]
            if bad:
                errors.append(RowError(line, "ratings",
                                       f"rating {bad[0]} outside [1, 5]"))
                continue

            seen.add(nodule_id)
            annotations.append(NoduleAnnotation(nodule_id, patch_path,
                                                diameter, ratings))
    return ParseResult(annotations, errors)


def consensus_rating(ratings) -> float:
    """Median rating; for an even reader count, the mean of the middle two."""
    return float(np.median(np.asarray(ratings, dtype=np.float64)))


@dataclass
class Exclusion:
    annotation: NoduleAnnotation
    reasons: tuple[str, ...]


@dataclass
class FilterResult:
    kept: list[LabeledNodule]
    excluded: list[Exclusion]

    def exclusion_report(self) -> list[dict]:
        return [{"nodule_id": e.annotation.nodule_id, "reasons": list(e.reasons)}
                for e in self.excluded]


def default_patch_loader(ann: NoduleAnnotation,
                         diffusion: imgproc.DiffusionConfig | None = None) -> ImagePatch:
    pixels = imgproc.load_patch_pixels(ann.patch_path, diffusion=diffusion)
    return ImagePatch(pixels, provenance="real", source_id=ann.nodule_id)


def consensus_filter(annotations, patch_loader=default_patch_loader) -> FilterResult:
    """Apply the selection rules and label the survivors.

    Keep iff diameter >= 3 mm AND at least 3 readers AND median rating
    != 3; benign below 3, malignant above.  Order-independent: the kept
    set is the same for any permutation of the input.
    """
    kept: list[LabeledNodule] = []
    excluded: list[Exclusion] = []
    for ann in annotations:
        reasons = []
        if ann.diameter_mm < MIN_DIAMETER_MM:
            reasons.append(f"diameter below {MIN_DIAMETER_MM:g} mm")
        if len(ann.ratings) < MIN_READERS:
            reasons.append(f"fewer than {MIN_READERS} readers")
        consensus = consensus_rating(ann.ratings)
        if consensus == EXCLUDED_MEDIAN:
            reasons.append("median rating is 3")
        if reasons:
            excluded.append(Exclusion(ann, tuple(reasons)))
            continue
        label = "benign" if consensus < EXCLUDED_MEDIAN else "malignant"
        patch = patch_loader(ann)
        patch = ImagePatch(patch.pixels, provenance=patch.provenance,
                           source_id=patch.source_id, label=label, seed=patch.seed)
        kept.append(LabeledNodule(ann.nodule_id, patch, label, consensus, ann.ratings))
    return FilterResult(kept, excluded)


def write_pool(result: FilterResult, out_dir) -> Path:
    """Persist a filtered training pool: metadata JSON + patch array.

    Layout: pool.json (per-nodule metadata, row-aligned with patches.npy),
    patches.npy (N x 56 x 56 float64 in [-1, 1]) and exclusions.json.
    """
    import json

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [{
        "nodule_id": n.nodule_id,
        "label": n.label,
        "consensus_rating": n.consensus_rating,
        "ratings": list(n.ratings),
    } for n in result.kept]
    (out_dir / "pool.json").write_text(json.dumps(rows, indent=2))
    (out_dir / "exclusions.json").write_text(
        json.dumps(result.exclusion_report(), indent=2))
    if result.kept:
        np.save(out_dir / "patches.npy",
                np.stack([n.patch.pixels for n in result.kept]))
    else:
        np.save(out_dir / "patches.npy",
                np.zeros((0, PATCH_SIZE, PATCH_SIZE)))
    return out_dir


def load_pool(pool_dir) -> list[ImagePatch]:
    """Load a pool written by write_pool back into labeled patches."""
    import json

    pool_dir = Path(pool_dir)
    rows = json.loads((pool_dir / "pool.json").read_text())
    patches = np.load(pool_dir / "patches.npy")
    if len(rows) != patches.shape[0]:
        raise ValueError(f"pool metadata ({len(rows)} rows) does not match "
                         f"patch array ({patches.shape[0]})")
    return [
        ImagePatch(patches[i], provenance="real", source_id=row["nodule_id"],
                   label=row["label"])
        for i, row in enumerate(rows)
    ]


def class_subset(pool, mode: str, seed: int | None = None) -> list:
    """Filter a pool of labeled items by class mode and seed-shuffle it.

    mode 'mixed' keeps everything; 'benign'/'malignant' keep matching
    labels.  Items must expose a .label attribute.
    """
    if mode not in ("benign", "malignant", "mixed"):
        raise ValueError(f"mode must be benign, malignant or mixed, got {mode!r}")
    items = list(pool)
    if mode == "mixed":
        subset = items
    else:
        subset = [it for it in items if it.label == mode]
    if not subset:
        counts = {lab: sum(1 for it in items if it.label == lab) for lab in LABELS}
        raise ValueError(f"no items for mode {mode!r}; pool has "
                         f"{counts['benign']} benign, {counts['malignant']} malignant")
    if seed is not None:
        rng = np.random.default_rng(seed)
        subset = [subset[i] for i in rng.permutation(len(subset))]
    return subset
