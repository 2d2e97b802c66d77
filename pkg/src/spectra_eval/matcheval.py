"""Greedy IoU matching of detections to ground truth and stratified
precision/recall/F1 reporting.

Matching is confidence-greedy: detections at or above the confidence
threshold are visited in descending confidence order (ties broken by input
order) and each claims the unmatched ground-truth box of highest IoU if that
IoU clears the threshold; a claimed box is retired from further matching.
Reports pool true/false counts across scenes (micro-averaging) and stratify
them by building size and scene density. False positives carry the size
category of their own box area; those below the 25 m² ground-truth minimum
count toward overall precision but are excluded from the per-size strata.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .annotate import (
    ANALYSIS_SIZE_CATEGORIES,
    Annotation,
    BBox,
    DensityCategory,
    SceneRecord,
    SizeCategory,
    size_category,
)
from .errors import DuplicateScene, InputError, SceneMismatch

DEFAULT_IOU_THRESHOLDS = (0.2, 0.3, 0.4, 0.5)
DEFAULT_CONF_THRESHOLDS = (0.2, 0.5, 0.75)


@dataclass(frozen=True)
class Detection:
    """A scored candidate box emitted by some detector."""

    scene_id: str
    bbox: BBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")


@dataclass(frozen=True)
class MatchOutcome:
    """Classification of one scene's detections against its ground truth.

    ``true_positives`` holds (detection index, gt index, iou) triples;
    ``false_positives`` holds (detection index, size category of the
    detection's own box); ``false_negatives`` holds unmatched gt indices.
    Indices refer to the input lists.
    """

    true_positives: tuple[tuple[int, int, float], ...]
    false_positives: tuple[tuple[int, SizeCategory], ...]
    false_negatives: tuple[int, ...]


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    """Pooled metrics overall and per size/density stratum.

    ``counts`` mirrors the strata with raw tp/fp/fn numbers, including the
    below-minimum false positives that the per-size metrics exclude.
    ``grid`` maps (iou threshold, confidence threshold) to overall F1 when a
    threshold sweep was run.
    """

    iou_thresh: float
    conf_thresh: float
    overall: Metrics
    by_size: dict[SizeCategory, Metrics]
    by_density: dict[DensityCategory, Metrics]
    counts: dict
    grid: dict[tuple[float, float], float] | None = None


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    inter = a.intersection_area(b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def match(
    gt: Sequence[Annotation],
    dets: Sequence[Detection],
    iou_thresh: float = 0.5,
    conf_thresh: float = 0.5,
) -> MatchOutcome:
    """Greedily assign detections to ground truth for one scene."""
    if not 0.0 <= iou_thresh <= 1.0 or not 0.0 <= conf_thresh <= 1.0:
        raise InputError("thresholds must be in [0,1]")
    scene_ids = {a.scene_id for a in gt} | {d.scene_id for d in dets}
    if len(scene_ids) > 1:
        raise SceneMismatch(f"mixed scene ids: {sorted(scene_ids)}")

    survivors = [i for i, d in enumerate(dets) if d.confidence >= conf_thresh]
    survivors.sort(key=lambda i: (-dets[i].confidence, i))

    unmatched = set(range(len(gt)))
    tps: list[tuple[int, int, float]] = []
    fps: list[tuple[int, SizeCategory]] = []
    for det_idx in survivors:
        box = dets[det_idx].bbox
        best_gt = -1
        best_iou = -1.0
        for gt_idx in sorted(unmatched):
            overlap = iou(box, gt[gt_idx].bbox)
            if overlap > best_iou:
                best_iou = overlap
                best_gt = gt_idx
        if best_gt >= 0 and best_iou >= iou_thresh:
            tps.append((det_idx, best_gt, best_iou))
            unmatched.discard(best_gt)
        else:
            fps.append((det_idx, size_category(box.area)))
    return MatchOutcome(tuple(tps), tuple(fps), tuple(sorted(unmatched)))


def _prf(tp: int, fp: int, fn: int) -> Metrics:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return Metrics(precision, recall, f1)


@dataclass
class _Tally:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn}


def _match_scene(args) -> tuple[str, MatchOutcome]:
    scene, dets, iou_thresh, conf_thresh = args
    return scene.scene_id, match(scene.gt, dets, iou_thresh, conf_thresh)


def report(
    scenes: Sequence[tuple[SceneRecord, Sequence[Detection]]],
    iou_thresh: float = 0.5,
    conf_thresh: float = 0.5,
    *,
    jobs: int = 1,
) -> EvalReport:
    """Match every scene and pool counts into a stratified report.

    Scenes are matched independently (in ``jobs`` processes when > 1) and
    folded in scene-id order, so the result does not depend on scheduling.
    """
    ids = [scene.scene_id for scene, _ in scenes]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateScene(f"duplicate scene ids: {dupes[:5]}")

    work = [(scene, tuple(dets), iou_thresh, conf_thresh) for scene, dets in scenes]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = dict(pool.map(_match_scene, work, chunksize=16))
    else:
        outcomes = dict(map(_match_scene, work))

    by_scene = {scene.scene_id: (scene, outcomes[scene.scene_id]) for scene, _ in scenes}
    overall = _Tally()
    size_tally = {cat: _Tally() for cat in SizeCategory}
    density_tally = {cat: _Tally() for cat in DensityCategory}
    for scene_id in sorted(by_scene):
        scene, outcome = by_scene[scene_id]
        tp, fp, fn = len(outcome.true_positives), len(outcome.false_positives), len(outcome.false_negatives)
        overall.tp += tp
        overall.fp += fp
        overall.fn += fn
        dens = density_tally[scene.density_category]
        dens.tp += tp
        dens.fp += fp
        dens.fn += fn
        for _, gt_idx, _ in outcome.true_positives:
            size_tally[scene.gt[gt_idx].size_category].tp += 1
        for gt_idx in outcome.false_negatives:
            size_tally[scene.gt[gt_idx].size_category].fn += 1
        for _, cat in outcome.false_positives:
            size_tally[cat].fp += 1

    return EvalReport(
        iou_thresh=iou_thresh,
        conf_thresh=conf_thresh,
        overall=_prf(overall.tp, overall.fp, overall.fn),
        by_size={
            cat: _prf(t.tp, t.fp, t.fn)
            for cat, t in size_tally.items()
            if cat in ANALYSIS_SIZE_CATEGORIES
        },
        by_density={cat: _prf(t.tp, t.fp, t.fn) for cat, t in density_tally.items()},
        counts={
            "overall": overall.as_dict(),
            "by_size": {cat.value: t.as_dict() for cat, t in size_tally.items()},
            "by_density": {cat.value: t.as_dict() for cat, t in density_tally.items()},
        },
    )


def f1_grid(
    scenes: Sequence[tuple[SceneRecord, Sequence[Detection]]],
    iou_set: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    conf_set: Sequence[float] = DEFAULT_CONF_THRESHOLDS,
    *,
    jobs: int = 1,
) -> dict[tuple[float, float], EvalReport]:
    """Run a full report at every (iou, conf) threshold combination."""
    if not iou_set or not conf_set:
        raise InputError("threshold sets must be non-empty")
    grid = {}
    for iou_thresh in iou_set:
        for conf_thresh in conf_set:
            grid[(iou_thresh, conf_thresh)] = report(
                scenes, iou_thresh, conf_thresh, jobs=jobs
            )
    f1s = {key: rep.overall.f1 for key, rep in grid.items()}
    for rep in grid.values():
        rep.grid = f1s
    return grid


# ---------------------------------------------------------------------------
# File formats

def read_detections_jsonl(path: str | Path) -> dict[str, list[Detection]]:
    """Read detections grouped by scene from JSON Lines."""
    grouped: dict[str, list[Detection]] = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            det = Detection(doc["scene_id"], BBox(*doc["bbox"]), doc["confidence"])
            grouped.setdefault(det.scene_id, []).append(det)
    return grouped


def write_detections_jsonl(dets: Iterable[Detection], path: str | Path) -> None:
    with open(path, "w") as f:
        for d in dets:
            doc = {
                "scene_id": d.scene_id,
                "bbox": list(d.bbox.as_tuple()),
                "confidence": d.confidence,
            }
            f.write(json.dumps(doc) + "\n")


def _metrics_dict(m: Metrics) -> dict:
    return {"precision": m.precision, "recall": m.recall, "f1": m.f1}


def report_to_dict(rep: EvalReport) -> dict:
    doc = {
        "iou_thresh": rep.iou_thresh,
        "conf_thresh": rep.conf_thresh,
        "overall": _metrics_dict(rep.overall),
        "by_size": {cat.value: _metrics_dict(m) for cat, m in rep.by_size.items()},
        "by_density": {cat.value: _metrics_dict(m) for cat, m in rep.by_density.items()},
        "counts": rep.counts,
    }
    if rep.grid is not None:
        doc["grid"] = [
            {"iou": i, "conf": c, "f1": f} for (i, c), f in sorted(rep.grid.items())
        ]
    return doc


def write_report_json(
    reports: EvalReport | dict[tuple[float, float], EvalReport],
    path: str | Path,
) -> None:
    if isinstance(reports, EvalReport):
        doc = report_to_dict(reports)
    else:
        doc = {"grid": [report_to_dict(rep) for _, rep in sorted(reports.items())]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def _fmt(x: float) -> str:
    return repr(round(x, 4))


def _csv_rows(rep: EvalReport):
    counts = rep.counts
    o = counts["overall"]
    yield ["overall", "all", rep.iou_thresh, rep.conf_thresh, o["tp"], o["fp"], o["fn"],
           _fmt(rep.overall.precision), _fmt(rep.overall.recall), _fmt(rep.overall.f1)]
    for cat in ANALYSIS_SIZE_CATEGORIES:
        c = counts["by_size"][cat.value]
        m = rep.by_size[cat]
        yield ["size", cat.value, rep.iou_thresh, rep.conf_thresh, c["tp"], c["fp"], c["fn"],
               _fmt(m.precision), _fmt(m.recall), _fmt(m.f1)]
    for cat in DensityCategory:
        c = counts["by_density"][cat.value]
        m = rep.by_density[cat]
        yield ["density", cat.value, rep.iou_thresh, rep.conf_thresh, c["tp"], c["fp"], c["fn"],
               _fmt(m.precision), _fmt(m.recall), _fmt(m.f1)]


def write_report_csv(
    reports: EvalReport | dict[tuple[float, float], EvalReport],
    path: str | Path,
) -> None:
    """One row per stratum and threshold combination."""
    if isinstance(reports, EvalReport):
        reports = {(reports.iou_thresh, reports.conf_thresh): reports}
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["stratum_kind", "stratum", "iou", "conf",
                         "tp", "fp", "fn", "precision", "recall", "f1"])
        for _, rep in sorted(reports.items()):
            writer.writerows(_csv_rows(rep))
