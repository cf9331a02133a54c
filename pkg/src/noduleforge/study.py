"""The 18-experiment blinded rating protocol and its scoring.

Experiments group into six consecutive triples.  Triples 1 and 6 draw
from both nodule classes, triples 2 and 5 from benign only, triples 3
and 4 from malignant only.  Within each triple the first grid is all
generated, the middle grid (indices 2, 5, 8, 11, 14, 17) is all real,
and the third is an 18/18 mixture.  Every grid holds 36 distinct
patches arranged 6x6 in a seed-shuffled order.

Scoring: FRR is the percentage of generated cells a rater called
generated (undefined on all-real grids); TRR is the percentage of real
cells called real (undefined on all-generated grids).  Inter-observer
agreement is the percentage of cells two raters labeled identically,
over realness calls everywhere and over benign/malignant calls in the
class-agreement experiment window.  Reported percentages are rounded
half-up to two decimals; means are taken over the unrounded
per-experiment rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .dataset import ImagePatch

N_EXPERIMENTS = 18
GRID_ROWS = 6
GRID_COLS = 6
CELLS_PER_GRID = GRID_ROWS * GRID_COLS
MIXED_SPLIT = CELLS_PER_GRID // 2

ALL_REAL_INDICES = frozenset({2, 5, 8, 11, 14, 17})
# experiments whose questionnaire also asks benign/malignant per cell
CLASS_CALL_INDICES = frozenset(range(4, 16))
# window over which benign/malignant inter-observer agreement is computed
CLASS_AGREEMENT_INDICES = frozenset(range(4, 10)) | frozenset(range(13, 19))

COMPOSITIONS = ("all_generated", "all_real", "mixed")


def class_condition(index: int) -> str:
    """Nodule-class pool an experiment draws from."""
    if index in (1, 2, 3, 16, 17, 18):
        return "mixed"
    if index in (4, 5, 6, 13, 14, 15):
        return "benign"
    if 7 <= index <= 12:
        return "malignant"
    raise ValueError(f"experiment index must be 1..18, got {index}")


def composition(index: int) -> str:
    """Grid make-up by position in its triple: generated, real, mixed."""
    if not 1 <= index <= N_EXPERIMENTS:
        raise ValueError(f"experiment index must be 1..18, got {index}")
    return COMPOSITIONS[(index - 1) % 3]


@dataclass(frozen=True)
class GridCell:
    cell_id: str
    patch_id: str
    truth_provenance: str
    truth_label: str | None


@dataclass
class ExperimentGrid:
    experiment_index: int
    cells: list[GridCell]

    def __post_init__(self):
        if len(self.cells) != CELLS_PER_GRID:
            raise ValueError(f"experiment {self.experiment_index} has "
                             f"{len(self.cells)} cells, need {CELLS_PER_GRID}")
        refs = {c.patch_id for c in self.cells}
        if len(refs) != CELLS_PER_GRID:
            raise ValueError(f"experiment {self.experiment_index} reuses a patch "
                             f"within the grid")

    @property
    def cell_ids(self):
        return [c.cell_id for c in self.cells]


@dataclass
class StudyPlan:
    seed: int
    experiments: list[ExperimentGrid]
    reuse_across_experiments: bool = False

    def __post_init__(self):
        if len(self.experiments) != N_EXPERIMENTS:
            raise ValueError(f"plan has {len(self.experiments)} experiments, "
                             f"need {N_EXPERIMENTS}")

    def grid(self, index: int) -> ExperimentGrid:
        for g in self.experiments:
            if g.experiment_index == index:
                return g
        raise KeyError(f"no experiment {index}")


@dataclass(frozen=True)
class RaterResponse:
    session_id: str
    experiment_index: int
    cell_id: str
    realness: str
    class_call: str | None = None
    timestamp: float | None = None

    def __post_init__(self):
        if self.realness not in ("real", "generated"):
            raise ValueError(f"realness must be 'real' or 'generated', "
                             f"got {self.realness!r}")
        if self.class_call is not None and self.class_call not in ("benign", "malignant"):
            raise ValueError(f"class_call must be 'benign' or 'malignant', "
                             f"got {self.class_call!r}")


# --------------------------------------------------------------------------
# composition


class _PoolDrawer:
    """Seed-shuffled sampling that avoids cross-experiment reuse while the
    pool lasts, then reshuffles (flagging reuse); draws within one call are
    always distinct."""

    def __init__(self, name, items, rng):
        self.name = name
        self.items = list(items)
        self.rng = rng
        self.queue = [self.items[i] for i in rng.permutation(len(self.items))] \
            if self.items else []
        self.reused = False

    def draw(self, k):
        if len(self.items) < k:
            raise ValueError(
                f"pool {self.name!r} too small: a grid needs {k} distinct patches, "
                f"pool holds {len(self.items)} (short {k - len(self.items)})")
        if len(self.queue) < k:
            self.queue = [self.items[i] for i in self.rng.permutation(len(self.items))]
            self.reused = True
        out = self.queue[:k]
        del self.queue[:k]
        return out


def compose_study(real_pool, generated_pools, seed: int):
    """Build the 18-grid plan; returns (StudyPlan, {patch_id: ImagePatch}).

    real_pool: ImagePatches with provenance 'real' and benign/malignant
    labels.  generated_pools: dict with 'benign', 'malignant' and 'mixed'
    lists of generated patches.  Deterministic in (pools, seed).
    """
    rng = np.random.default_rng(seed)
    real_pool = list(real_pool)
    for p in real_pool:
        if p.provenance != "real":
            raise ValueError(f"real pool contains {p.provenance!r} patch {p.source_id}")
    for key in ("benign", "malignant", "mixed"):
        if key not in generated_pools:
            raise ValueError(f"generated_pools missing {key!r}")
        for p in generated_pools[key]:
            if p.provenance != "generated":
                raise ValueError(f"generated pool {key!r} contains "
                                 f"{p.provenance!r} patch {p.source_id}")

    drawers = {
        ("real", "benign"): _PoolDrawer(
            "real benign", [p for p in real_pool if p.label == "benign"], rng),
        ("real", "malignant"): _PoolDrawer(
            "real malignant", [p for p in real_pool if p.label == "malignant"], rng),
        ("real", "mixed"): _PoolDrawer("real (all classes)", real_pool, rng),
        ("generated", "benign"): _PoolDrawer(
            "generated benign", generated_pools["benign"], rng),
        ("generated", "malignant"): _PoolDrawer(
            "generated malignant", generated_pools["malignant"], rng),
        ("generated", "mixed"): _PoolDrawer(
            "generated mixed", generated_pools["mixed"], rng),
    }

    patch_table: dict[str, ImagePatch] = {}
    id_by_obj: dict[int, str] = {}

    def opaque_id(patch):
        # stable per patch object so cross-experiment reuse keeps one image
        key = id(patch)
        if key not in id_by_obj:
            pid = rng.bytes(8).hex()
            while pid in patch_table:
                pid = rng.bytes(8).hex()
            id_by_obj[key] = pid
            patch_table[pid] = patch
        return id_by_obj[key]

    experiments = []
    for index in range(1, N_EXPERIMENTS + 1):
        cond = class_condition(index)
        comp = composition(index)
        if comp == "all_real":
            chosen = drawers[("real", cond)].draw(CELLS_PER_GRID)
        elif comp == "all_generated":
            chosen = drawers[("generated", cond)].draw(CELLS_PER_GRID)
        else:
            chosen = (drawers[("real", cond)].draw(MIXED_SPLIT)
                      + drawers[("generated", cond)].draw(MIXED_SPLIT))
        order = rng.permutation(CELLS_PER_GRID)
        cells = []
        for pos, src in enumerate(order):
            patch = chosen[src]
            cells.append(GridCell(
                cell_id=f"c{pos + 1:02d}",
                patch_id=opaque_id(patch),
                truth_provenance=patch.provenance,
                truth_label=patch.label,
            ))
        experiments.append(ExperimentGrid(index, cells))

    reused = any(d.reused for d in drawers.values())
    return StudyPlan(seed, experiments, reused), patch_table


def plan_to_dict(plan: StudyPlan) -> dict:
    return {
        "seed": plan.seed,
        "reuse_across_experiments": plan.reuse_across_experiments,
        "experiments": [
            {
                "index": g.experiment_index,
                "class_condition": class_condition(g.experiment_index),
                "composition": composition(g.experiment_index),
                "rows": GRID_ROWS,
                "cols": GRID_COLS,
                "cells": [
                    {
                        "cell_id": c.cell_id,
                        "patch_id": c.patch_id,
                        "truth": {"provenance": c.truth_provenance,
                                  "label": c.truth_label},
                    }
                    for c in g.cells
                ],
            }
            for g in plan.experiments
        ],
    }


def plan_from_dict(d: dict) -> StudyPlan:
    experiments = [
        ExperimentGrid(e["index"], [
            GridCell(c["cell_id"], c["patch_id"], c["truth"]["provenance"],
                     c["truth"]["label"])
            for c in e["cells"]
        ])
        for e in d["experiments"]
    ]
    return StudyPlan(d["seed"], experiments, d["reuse_across_experiments"])


# --------------------------------------------------------------------------
# scoring


def _percentage(hits: int, total: int) -> float | None:
    if total == 0:
        return None
    return 100.0 * hits / total


def _require_complete(calls: dict, grid: ExperimentGrid):
    missing = [c.cell_id for c in grid.cells if c.cell_id not in calls]
    if missing:
        raise ValueError(f"experiment {grid.experiment_index} incomplete; "
                         f"missing cells: {', '.join(missing)}")


def frr(calls: dict[str, str], grid: ExperimentGrid) -> float | None:
    """Percent of generated cells called generated; None if none are generated.

    calls maps cell_id to the rater's realness call and must cover the grid.
    """
    _require_complete(calls, grid)
    gen_cells = [c for c in grid.cells if c.truth_provenance == "generated"]
    hits = sum(1 for c in gen_cells if calls[c.cell_id] == "generated")
    return _percentage(hits, len(gen_cells))


def trr(calls: dict[str, str], grid: ExperimentGrid) -> float | None:
    """Percent of real cells called real; None if none are real."""
    _require_complete(calls, grid)
    real_cells = [c for c in grid.cells if c.truth_provenance == "real"]
    hits = sum(1 for c in real_cells if calls[c.cell_id] == "real")
    return _percentage(hits, len(real_cells))


@dataclass
class SessionRecord:
    """One rater's locked session: experiment -> cell -> (realness, class_call)."""

    session_id: str
    rater_id: str
    responses: dict[int, dict[str, tuple[str, str | None]]] = field(default_factory=dict)

    def realness_calls(self, index: int) -> dict[str, str]:
        return {cell: pair[0] for cell, pair in self.responses[index].items()}

    def completed(self):
        return sorted(self.responses)


def interobserver_agreement(responses_a, responses_b, dimension: str,
                            experiments=None) -> float | None:
    """Percent of cells two raters labeled the same way.

    responses_a/b are SessionRecord.responses mappings.  For 'realness'
    every completed cell counts; for 'class_call' only the class-agreement
    experiment window counts, over cells where both raters gave a call.
    Raters must have completed the same grids.
    """
    if dimension not in ("realness", "class_call"):
        raise ValueError(f"dimension must be 'realness' or 'class_call', "
                         f"got {dimension!r}")
    cover_a, cover_b = set(responses_a), set(responses_b)
    if cover_a != cover_b:
        raise ValueError(f"mismatched grid coverage: {sorted(cover_a)} vs "
                         f"{sorted(cover_b)}")
    indices = cover_a if experiments is None else (cover_a & set(experiments))
    if dimension == "class_call":
        indices = indices & CLASS_AGREEMENT_INDICES
    same = 0
    total = 0
    for index in sorted(indices):
        cells_a, cells_b = responses_a[index], responses_b[index]
        if set(cells_a) != set(cells_b):
            raise ValueError(f"experiment {index}: raters answered different cells")
        for cell in cells_a:
            pick = 0 if dimension == "realness" else 1
            va, vb = cells_a[cell][pick], cells_b[cell][pick]
            if dimension == "class_call" and (va is None or vb is None):
                continue
            total += 1
            same += va == vb
    return _percentage(same, total)


def round2(pct: float | None) -> float | None:
    """Half-up rounding to two decimals, the report's output precision."""
    if pct is None:
        return None
    return float(Decimal(repr(pct)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass
class ScoreReport:
    per_rater: dict
    agreement_realness: float | None
    agreement_class: float | None
    agreement_pairs: dict

    def to_dict(self) -> dict:
        return {
            "raters": self.per_rater,
            "agreement": {
                "realness": self.agreement_realness,
                "class_call": self.agreement_class,
                "pairs": self.agreement_pairs,
            },
        }


def summarize(plan: StudyPlan, sessions: list[SessionRecord]) -> ScoreReport:
    """Score all locked sessions against the plan's hidden truth.

    Per-experiment FRR/TRR are computed over each rater's completed grids
    only; means are unweighted over the experiments where the rate is
    defined.  Agreement pools cells across every pair of raters that
    completed the same grids.
    """
    if not sessions:
        raise ValueError("no sessions to score")
    seen = set()
    for s in sessions:
        if s.rater_id in seen:
            raise ValueError(f"multiple sessions for rater {s.rater_id!r}")
        seen.add(s.rater_id)

    per_rater = {}
    for s in sorted(sessions, key=lambda s: s.rater_id):
        per_exp = {}
        frr_values, trr_values = [], []
        for index in s.completed():
            grid = plan.grid(index)
            calls = s.realness_calls(index)
            f = frr(calls, grid)
            t = trr(calls, grid)
            per_exp[str(index)] = {"frr": round2(f), "trr": round2(t)}
            if f is not None:
                frr_values.append(f)
            if t is not None:
                trr_values.append(t)
        per_rater[s.rater_id] = {
            "session_id": s.session_id,
            "completed_experiments": s.completed(),
            "per_experiment": per_exp,
            "mean_frr": round2(float(np.mean(frr_values)) if frr_values else None),
            "mean_trr": round2(float(np.mean(trr_values)) if trr_values else None),
        }

    pairs = {}
    realness_vals, class_vals = [], []
    ordered = sorted(sessions, key=lambda s: s.rater_id)
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            a, b = ordered[i], ordered[j]
            if set(a.responses) != set(b.responses):
                continue  # raters with different coverage are not comparable
            ar = interobserver_agreement(a.responses, b.responses, "realness")
            ac = interobserver_agreement(a.responses, b.responses, "class_call")
            pairs[f"{a.rater_id}|{b.rater_id}"] = {
                "realness": round2(ar), "class_call": round2(ac),
            }
            if ar is not None:
                realness_vals.append(ar)
            if ac is not None:
                class_vals.append(ac)

    return ScoreReport(
        per_rater=per_rater,
        agreement_realness=round2(float(np.mean(realness_vals))
                                  if realness_vals else None),
        agreement_class=round2(float(np.mean(class_vals)) if class_vals else None),
        agreement_pairs=pairs,
    )
