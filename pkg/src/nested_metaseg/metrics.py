"""Segment-wise feature vectors and dataset-level correlation reporting.

Every segment with a non-empty interior yields one record of 42 + C named
features: five aggregates per heat map (whole / boundary / interior means,
and the whole / interior means scaled by the matching relative size), five
size features, the geometric center, and the mean class probabilities under
the pyramid's mean distribution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .crop_pyramid import CropPyramid
from .dispersion import HEATMAP_NAMES
from .errors import DegenerateError, ValidationError
from .segmentation import IoUResult, SegmentMap, compute_iou

#: Aggregate suffixes per heat map, in catalog order. The empty suffix is the
#: whole-segment mean; "_rel" variants multiply by size/size_bd (whole) and
#: size_in/size_bd (interior).
AGGREGATES = ("", "_bd", "_in", "_rel", "_rel_in")

SIZE_FEATURES = ("size", "size_in", "size_bd", "size_rel", "size_rel_in")
CENTER_FEATURES = ("center_row", "center_col")


def feature_catalog(classes: int) -> list[str]:
    """Canonical ordered names of all 42 + classes features.

    Order: for each heat map in HEATMAP_NAMES order, its five aggregates;
    then the five size features; the geometric center (row, col); and one
    mean-probability feature per class. This ordering is fixed and used by
    every file and report.
    """
    if classes < 2:
        raise ValidationError(f"need at least 2 classes, got {classes}")
    names = [f"{m}{suffix}" for m in HEATMAP_NAMES for suffix in AGGREGATES]
    names.extend(SIZE_FEATURES)
    names.extend(CENTER_FEATURES)
    names.extend(f"class_prob_{y}" for y in range(classes))
    return names


def named_feature_sets(classes: int) -> dict[str, list[str]]:
    """Predefined feature subsets usable by name in reports and the CLI."""
    cat = feature_catalog(classes)
    variances = tuple(f"{m}_var" for m in ("entropy", "margin", "varratio"))
    return {
        "all": list(cat),
        "all-no-var": [f for f in cat if not f.startswith(variances)],
        "entropy-baseline": ["entropy_mean"],
        "entropy": [f for f in cat if f.startswith(("entropy_mean", "entropy_var"))],
        "entropy-mean": [f for f in cat if f.startswith("entropy_mean")],
        "margin": [f for f in cat if f.startswith(("margin_mean", "margin_var"))],
        "margin-mean": [f for f in cat if f.startswith("margin_mean")],
        "varratio": [f for f in cat if f.startswith(("varratio_mean", "varratio_var"))],
        "varratio-mean": [f for f in cat if f.startswith("varratio_mean")],
        "kl": [f for f in cat if f.startswith("kl")],
        "sizes": list(SIZE_FEATURES),
        "sizes-center": [*SIZE_FEATURES, *CENTER_FEATURES],
        "class-probs": [f for f in cat if f.startswith("class_prob_")],
    }


@dataclass(frozen=True, eq=False)
class SegmentRecord:
    image_id: str
    segment_id: int
    predicted_class: int
    features: np.ndarray = field(repr=False)  # aligned with feature_catalog
    has_ground_truth: bool = False
    iou: float = 0.0
    iou_adj: float = 0.0


def extract_records(
    pyramid: CropPyramid,
    segments: SegmentMap,
    heatmaps: Mapping[str, np.ndarray],
    gt_labels: np.ndarray | None = None,
    image_id: str = "img",
    iou_result: IoUResult | None = None,
) -> list[SegmentRecord]:
    """One record per segment with non-empty interior.

    ``heatmaps`` must carry all names from HEATMAP_NAMES at frame shape.
    IoU targets are attached when ``gt_labels`` is given, except for segments
    without usable ground truth. A precomputed ``iou_result`` for the same
    (segments, gt_labels) pair skips the recomputation.
    """
    shape = segments.shape
    if pyramid.shape[:2] != shape:
        raise ValidationError(f"pyramid frame {pyramid.shape[:2]} != segment map {shape}")
    missing = [m for m in HEATMAP_NAMES if m not in heatmaps]
    if missing:
        raise ValidationError(f"missing heat maps: {missing}")
    for name in HEATMAP_NAMES:
        if np.asarray(heatmaps[name]).shape != shape:
            raise ValidationError(f"heat map {name!r} shape {np.asarray(heatmaps[name]).shape} != {shape}")

    n = segments.n_segments
    flat_ids = segments.ids.ravel() - 1
    interior_flat = segments.interior.ravel()
    size = segments.size.astype(np.float64)
    size_in = segments.size_in.astype(np.float64)
    size_bd = segments.size_bd.astype(np.float64)  # >= 1 for every segment
    rel = size / size_bd
    rel_in = size_in / size_bd

    columns: list[np.ndarray] = []
    with np.errstate(invalid="ignore"):
        for name in HEATMAP_NAMES:
            hm = np.asarray(heatmaps[name], dtype=np.float64).ravel()
            mean_all = np.bincount(flat_ids, weights=hm, minlength=n) / size
            mean_bd = np.bincount(flat_ids[~interior_flat], weights=hm[~interior_flat], minlength=n) / size_bd
            mean_in = np.bincount(flat_ids[interior_flat], weights=hm[interior_flat], minlength=n)
            mean_in = np.divide(mean_in, size_in, out=np.full(n, np.nan), where=size_in > 0)
            columns.extend([mean_all, mean_bd, mean_in, mean_all * rel, mean_in * rel_in])
    columns.extend([size, size_in, size_bd, rel, rel_in])
    columns.append(segments.center[:, 0])
    columns.append(segments.center[:, 1])
    mean_probs = np.asarray(pyramid.mean, dtype=np.float64)
    for y in range(pyramid.classes):
        columns.append(np.bincount(flat_ids, weights=mean_probs[:, :, y].ravel(), minlength=n) / size)
    matrix = np.column_stack(columns)

    scores = iou_result
    if scores is None and gt_labels is not None:
        scores = compute_iou(segments, gt_labels)

    records = []
    for idx in range(n):
        if segments.size_in[idx] < 1:
            continue
        has_gt = bool(scores.has_ground_truth[idx]) if scores is not None else False
        records.append(
            SegmentRecord(
                image_id=image_id,
                segment_id=idx + 1,
                predicted_class=int(segments.class_label[idx]),
                features=matrix[idx],
                has_ground_truth=has_gt,
                iou=float(scores.iou[idx]) if has_gt else 0.0,
                iou_adj=float(scores.iou_adj[idx]) if has_gt else 0.0,
            )
        )
    return records


_META_COLUMNS = ("image_id", "segment_id", "predicted_class")
_TARGET_COLUMNS = ("has_ground_truth", "iou", "iou_adj")


@dataclass(eq=False)
class MetricsTable:
    """Columnar table of segment records plus provenance."""

    feature_names: list[str]
    image_ids: list[str]
    segment_ids: np.ndarray
    predicted_class: np.ndarray
    features: np.ndarray          # (n, len(feature_names))
    has_ground_truth: np.ndarray  # bool
    iou: np.ndarray
    iou_adj: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.image_ids)

    @classmethod
    def from_records(cls, records: Sequence[SegmentRecord], feature_names: Sequence[str], provenance=None):
        names = list(feature_names)
        keys = {(r.image_id, r.segment_id) for r in records}
        if len(keys) != len(records):
            raise ValidationError("duplicate (image id, segment id) keys")
        for r in records:
            if r.features.shape != (len(names),):
                raise ValidationError(f"record has {r.features.shape[0]} features, expected {len(names)}")
        n = len(records)
        return cls(
            feature_names=names,
            image_ids=[r.image_id for r in records],
            segment_ids=np.array([r.segment_id for r in records], dtype=np.int64),
            predicted_class=np.array([r.predicted_class for r in records], dtype=np.int64),
            features=(
                np.vstack([r.features for r in records]) if n else np.empty((0, len(names)))
            ),
            has_ground_truth=np.array([r.has_ground_truth for r in records], dtype=bool),
            iou=np.array([r.iou for r in records], dtype=np.float64),
            iou_adj=np.array([r.iou_adj for r in records], dtype=np.float64),
            provenance=dict(provenance or {}),
        )

    def labeled_mask(self) -> np.ndarray:
        return self.has_ground_truth & np.isfinite(self.features).all(axis=1)

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None
        return self.features[:, j]

    def columns(self, names: Iterable[str]) -> np.ndarray:
        idx = []
        for name in names:
            if name not in self.feature_names:
                raise ValidationError(f"unknown feature {name!r}")
            idx.append(self.feature_names.index(name))
        return self.features[:, idx]

    def to_csv(self, path) -> None:
        """Write the table; floats use shortest round-trip formatting."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*_META_COLUMNS, *self.feature_names, *_TARGET_COLUMNS])
            for i in range(len(self)):
                row = [self.image_ids[i], str(int(self.segment_ids[i])), str(int(self.predicted_class[i]))]
                row.extend(repr(float(v)) for v in self.features[i])
                if self.has_ground_truth[i]:
                    row.extend(["1", repr(float(self.iou[i])), repr(float(self.iou_adj[i]))])
                else:
                    row.extend(["0", "", ""])
                writer.writerow(row)

    @classmethod
    def read_csv(cls, path, provenance=None):
        path = Path(path)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty metrics file") from None
            if header[:3] != list(_META_COLUMNS) or header[-3:] != list(_TARGET_COLUMNS):
                raise ValidationError(f"{path}: unexpected metrics header")
            names = header[3:-3]
            image_ids, seg_ids, classes, feats, has_gt, ious, adjs = [], [], [], [], [], [], []
            for row in reader:
                if len(row) != len(header):
                    raise ValidationError(f"{path}: ragged row of {len(row)} cells")
                image_ids.append(row[0])
                seg_ids.append(int(row[1]))
                classes.append(int(row[2]))
                feats.append([float(v) for v in row[3:-3]])
                labeled = row[-3] == "1"
                has_gt.append(labeled)
                ious.append(float(row[-2]) if labeled else 0.0)
                adjs.append(float(row[-1]) if labeled else 0.0)
        table = cls(
            feature_names=names,
            image_ids=image_ids,
            segment_ids=np.array(seg_ids, dtype=np.int64),
            predicted_class=np.array(classes, dtype=np.int64),
            features=np.array(feats, dtype=np.float64).reshape(len(image_ids), len(names)),
            has_ground_truth=np.array(has_gt, dtype=bool),
            iou=np.array(ious, dtype=np.float64),
            iou_adj=np.array(adjs, dtype=np.float64),
            provenance=dict(provenance or {}),
        )
        keys = set(zip(table.image_ids, table.segment_ids.tolist()))
        if len(keys) != len(table):
            raise ValidationError(f"{path}: duplicate (image id, segment id) keys")
        return table


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Pearson r, or None when either side has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm = x - x.mean()
    ym = y - y.mean()
    vx = float(xm @ xm)
    vy = float(ym @ ym)
    if vx <= 0.0 or vy <= 0.0:
        return None
    return float((xm @ ym) / math.sqrt(vx * vy))


def pearson_correlations(table: MetricsTable) -> dict[str, float | None]:
    """Per-feature Pearson r against the adjusted IoU over labeled records.

    Features (or a target) without variance are reported as None, never 0.
    """
    mask = table.labeled_mask()
    if mask.sum() < 2:
        raise DegenerateError(f"need at least 2 labeled records, have {int(mask.sum())}")
    target = table.iou_adj[mask]
    feats = table.features[mask]
    return {name: pearson(feats[:, j], target) for j, name in enumerate(table.feature_names)}
