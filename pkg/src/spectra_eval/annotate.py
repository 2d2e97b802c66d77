"""Footprint annotations: bounding boxes, size and density bins, splits,
and classifier patch extraction.

Coordinates are scene-local meters with the origin at the top-left corner
and y growing downward. Building size bins follow the dataset's histogram
edges {25, 75, 118, 168, 250} m² and scene density bins the edges {40, 90}
buildings per scene; all bins are half-open and lower-inclusive. Boxes
smaller than 25 m² are discarded before analysis, and survivors receive
context padding that never changes their size category.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateFootprint,
    EmptyInput,
    InputError,
    InvalidArea,
    NegativeSamplingExhausted,
)
from .raster import MultibandImage

DEFAULT_MIN_AREA_M2 = 25.0
DEFAULT_PAD_M = 6.0

SIZE_BIN_EDGES = (25.0, 75.0, 118.0, 168.0, 250.0)
DENSITY_BIN_EDGES = (40, 90)


class SizeCategory(str, Enum):
    BELOW_MINIMUM = "below_minimum"
    VERY_SMALL = "very_small"
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"
    VERY_LARGE = "very_large"


# The five analysis bins; below_minimum boxes are discarded from ground truth.
ANALYSIS_SIZE_CATEGORIES = (
    SizeCategory.VERY_SMALL,
    SizeCategory.SMALL,
    SizeCategory.MEDIUM,
    SizeCategory.LARGE,
    SizeCategory.VERY_LARGE,
)


class DensityCategory(str, Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in scene-local meters (origin top-left, y down)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def intersection_area(self, other: "BBox") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h


@dataclass(frozen=True)
class Annotation:
    """One ground-truth building box.

    ``area_m2`` is the pre-padding footprint bbox area, which is what size
    categorization uses; after padding it therefore differs from the stored
    bbox's own area.
    """

    scene_id: str
    bbox: BBox
    area_m2: float
    size_category: SizeCategory

    def __post_init__(self):
        if self.area_m2 <= 0:
            raise ValueError(f"annotation area must be positive, got {self.area_m2}")
        if size_category(self.area_m2) is not self.size_category:
            raise ValueError(
                f"category {self.size_category.value} inconsistent with area {self.area_m2}"
            )


@dataclass(frozen=True)
class SceneRecord:
    """A scene's extent, its ground truth, and the derived density bin."""

    scene_id: str
    extent: BBox
    gt: tuple[Annotation, ...]
    density_category: DensityCategory

    def __post_init__(self):
        object.__setattr__(self, "gt", tuple(self.gt))
        if density_category(len(self.gt)) is not self.density_category:
            raise ValueError(
                f"density {self.density_category.value} inconsistent with {len(self.gt)} boxes"
            )


def make_scene_record(scene_id: str, extent: BBox, gt: Iterable[Annotation]) -> SceneRecord:
    gt = tuple(gt)
    return SceneRecord(scene_id, extent, gt, density_category(len(gt)))


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint scene-id folds covering the full scene list."""

    seed: int
    folds: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "folds", tuple(tuple(f) for f in self.folds))
        seen: set[str] = set()
        for fold in self.folds:
            overlap = seen.intersection(fold)
            if overlap:
                raise ValueError(f"scene ids in more than one fold: {sorted(overlap)[:3]}")
            seen.update(fold)

    @property
    def k(self) -> int:
        return len(self.folds)


def annotation_from_area(scene_id: str, bbox: BBox, area_m2: float) -> Annotation:
    return Annotation(scene_id, bbox, area_m2, size_category(area_m2))


def footprint_to_bbox(polygon: Sequence[tuple[float, float]]) -> BBox:
    """Tight axis-aligned box around a footprint polygon's vertices."""
    if len(polygon) < 3:
        raise DegenerateFootprint(f"polygon needs at least 3 vertices, got {len(polygon)}")
    xs = [p[0] for p in polygon]
    ys = [p[1] for p in polygon]
    if not all(np.isfinite(xs + ys)):
        raise DegenerateFootprint("polygon has non-finite coordinates")
    if min(xs) == max(xs) or min(ys) == max(ys):
        raise DegenerateFootprint("polygon has zero width or height")
    return BBox(min(xs), min(ys), max(xs), max(ys))


def size_category(area_m2: float) -> SizeCategory:
    """Bin a building area; bins are half-open and lower-inclusive."""
    if area_m2 < 0:
        raise InvalidArea(f"negative area {area_m2}")
    if area_m2 < SIZE_BIN_EDGES[0]:
        return SizeCategory.BELOW_MINIMUM
    if area_m2 < SIZE_BIN_EDGES[1]:
        return SizeCategory.VERY_SMALL
    if area_m2 < SIZE_BIN_EDGES[2]:
        return SizeCategory.SMALL
    if area_m2 < SIZE_BIN_EDGES[3]:
        return SizeCategory.MEDIUM
    if area_m2 < SIZE_BIN_EDGES[4]:
        return SizeCategory.LARGE
    return SizeCategory.VERY_LARGE


def density_category(count: int) -> DensityCategory:
    """Bin a per-scene building count: low < 40 <= moderate < 90 <= high."""
    if count < 0:
        raise InvalidArea(f"negative count {count}")
    if count < DENSITY_BIN_EDGES[0]:
        return DensityCategory.LOW
    if count < DENSITY_BIN_EDGES[1]:
        return DensityCategory.MODERATE
    return DensityCategory.HIGH


def filter_and_pad(
    gt: Iterable[Annotation],
    extent: BBox,
    *,
    min_area: float = DEFAULT_MIN_AREA_M2,
    pad: float = DEFAULT_PAD_M,
    pad_mode: str = "per_side",
) -> list[Annotation]:
    """Drop too-small boxes, then expand the survivors with context padding.

    Padding is applied to each of the four sides (``per_side``) or split as
    half the amount per side (``total``), then clipped to the scene extent.
    Size categories are recomputed from the pre-padding area, so padding
    never moves a box between bins.
    """
    if min_area < 0 or pad < 0:
        raise InvalidArea("min_area and pad must be non-negative")
    if pad_mode == "per_side":
        per_side = pad
    elif pad_mode == "total":
        per_side = pad / 2.0
    else:
        raise ValueError(f"unknown pad_mode {pad_mode!r}")

    out = []
    for ann in gt:
        if ann.area_m2 < min_area:
            continue
        b = ann.bbox
        padded = BBox(
            max(b.x_min - per_side, extent.x_min),
            max(b.y_min - per_side, extent.y_min),
            min(b.x_max + per_side, extent.x_max),
            min(b.y_max + per_side, extent.y_max),
        )
        out.append(Annotation(ann.scene_id, padded, ann.area_m2, size_category(ann.area_m2)))
    return out


def make_splits(
    scene_ids: Sequence[str],
    *,
    mode: str,
    seed: int,
    ratio: float = 0.8,
    k: int = 5,
) -> SplitPlan:
    """Deterministically split scene ids for holdout or k-fold evaluation.

    ``holdout`` yields two folds of sizes round(N*ratio) and the remainder;
    ``kfold`` yields k folds whose sizes differ by at most one.
    """
    ids = list(scene_ids)
    if not ids:
        raise EmptyInput("no scene ids to split")
    if len(set(ids)) != len(ids):
        raise InputError("scene ids must be unique")
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    if mode == "holdout":
        if len(ids) < 2:
            raise EmptyInput("holdout needs at least 2 scenes")
        if not 0 < ratio < 1:
            raise InputError(f"holdout ratio must be in (0,1), got {ratio}")
        n_first = int(round(len(ids) * ratio))
        n_first = min(max(n_first, 1), len(ids) - 1)
        folds = (tuple(shuffled[:n_first]), tuple(shuffled[n_first:]))
    elif mode == "kfold":
        if k < 2:
            raise InputError(f"kfold needs k >= 2, got {k}")
        if len(ids) < k:
            raise EmptyInput(f"{len(ids)} scenes cannot fill {k} folds")
        folds = tuple(tuple(part) for part in np.array_split(np.array(shuffled, dtype=object), k))
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    return SplitPlan(seed, folds)


def extract_patches(
    scene: SceneRecord,
    img: MultibandImage,
    seed: int,
    *,
    max_attempts: int = 1000,
) -> list[tuple[MultibandImage, str]]:
    """Cut one positive patch per building plus as many building-free ones.

    Positives crop each (already padded) ground-truth box. Negatives are
    rejection-sampled: candidate boxes reuse sizes drawn from the scene's
    positive boxes, are placed uniformly inside the extent, and are accepted
    only when they overlap no ground-truth box at all. Raises
    :class:`NegativeSamplingExhausted` after ``max_attempts`` failures per
    needed negative, with the patches collected so far attached.
    """
    patches: list[tuple[MultibandImage, str]] = []
    for ann in scene.gt:
        patches.append((_crop(img, ann.bbox), "building"))
    n_needed = len(scene.gt)
    if n_needed == 0:
        return patches

    rng = np.random.default_rng(seed)
    sizes = [(a.bbox.width, a.bbox.height) for a in scene.gt]
    extent = scene.extent
    for _ in range(n_needed):
        box = None
        for _attempt in range(max_attempts):
            w, h = sizes[int(rng.integers(len(sizes)))]
            if w >= extent.width or h >= extent.height:
                continue
            x0 = extent.x_min + float(rng.uniform(0.0, extent.width - w))
            y0 = extent.y_min + float(rng.uniform(0.0, extent.height - h))
            candidate = BBox(x0, y0, x0 + w, y0 + h)
            if all(candidate.intersection_area(a.bbox) == 0.0 for a in scene.gt):
                box = candidate
                break
        if box is None:
            raise NegativeSamplingExhausted(patches, n_needed)
        patches.append((_crop(img, box), "not_building"))
    return patches


def _crop(img: MultibandImage, box: BBox) -> MultibandImage:
    x0 = max(int(np.floor(box.x_min / img.gsd_x)), 0)
    y0 = max(int(np.floor(box.y_min / img.gsd_y)), 0)
    x1 = min(int(np.ceil(box.x_max / img.gsd_x)), img.width)
    y1 = min(int(np.ceil(box.y_max / img.gsd_y)), img.height)
    if x1 <= x0 or y1 <= y0:
        raise InputError(f"box {box.as_tuple()} lies outside the image")
    return MultibandImage(
        img.pixels[:, y0:y1, x0:x1].copy(),
        img.bands,
        img.bit_depth,
        img.gsd_x,
        img.gsd_y,
    )


# ---------------------------------------------------------------------------
# File formats

def read_footprints(
    path: str | Path,
    *,
    gsd: float | tuple[float, float] = 1.0,
) -> tuple[list[BBox], BBox | None]:
    """Read a GeoJSON FeatureCollection of building footprint polygons.

    Coordinates are scene-local meters unless the top-level ``crs_mode`` key
    is ``"pixels"``, in which case they are scaled by the ground sample
    distance. Returns the footprint boxes and the file's optional declared
    extent.
    """
    doc = json.loads(Path(path).read_text())
    if doc.get("type") != "FeatureCollection":
        raise InputError(f"{path}: expected a GeoJSON FeatureCollection")
    crs_mode = doc.get("crs_mode", "local_meters")
    if crs_mode not in ("local_meters", "pixels"):
        raise InputError(f"{path}: unknown crs_mode {crs_mode!r}")
    gx, gy = gsd if isinstance(gsd, tuple) else (gsd, gsd)

    def to_meters(pt):
        if crs_mode == "pixels":
            return (pt[0] * gx, pt[1] * gy)
        return (pt[0], pt[1])

    boxes = []
    for feature in doc.get("features", []):
        geom = feature.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise InputError(f"{path}: only Polygon features are supported")
        exterior = geom["coordinates"][0]
        boxes.append(footprint_to_bbox([to_meters(p) for p in exterior]))

    extent = None
    if "extent" in doc:
        e = doc["extent"]
        coords = [to_meters((e[0], e[1])), to_meters((e[2], e[3]))]
        extent = BBox(coords[0][0], coords[0][1], coords[1][0], coords[1][1])
    return boxes, extent


def scene_to_dict(scene: SceneRecord) -> dict:
    return {
        "scene_id": scene.scene_id,
        "extent": list(scene.extent.as_tuple()),
        "gt": [
            {
                "bbox": list(a.bbox.as_tuple()),
                "area_m2": a.area_m2,
                "size_category": a.size_category.value,
            }
            for a in scene.gt
        ],
    }


def scene_from_dict(doc: dict) -> SceneRecord:
    scene_id = doc["scene_id"]
    gt = [
        Annotation(
            scene_id,
            BBox(*entry["bbox"]),
            entry["area_m2"],
            SizeCategory(entry["size_category"]),
        )
        for entry in doc["gt"]
    ]
    return make_scene_record(scene_id, BBox(*doc["extent"]), gt)


def write_scenes_jsonl(scenes: Iterable[SceneRecord], path: str | Path) -> None:
    """Write scene records as JSON Lines, one scene per line."""
    with open(path, "w") as f:
        for scene in scenes:
            f.write(json.dumps(scene_to_dict(scene)) + "\n")


def read_scenes_jsonl(path: str | Path) -> list[SceneRecord]:
    scenes = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                scenes.append(scene_from_dict(json.loads(line)))
    return scenes


def write_split_plan(plan: SplitPlan, path: str | Path) -> None:
    doc = {"seed": plan.seed, "k": plan.k, "folds": [list(f) for f in plan.folds]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_split_plan(path: str | Path) -> SplitPlan:
    doc = json.loads(Path(path).read_text())
    plan = SplitPlan(doc["seed"], tuple(tuple(f) for f in doc["folds"]))
    if plan.k != doc["k"]:
        raise InputError(f"{path}: k={doc['k']} but {plan.k} folds present")
    return plan
