"""Predicted labels, 8-connected segments and IoU / adjusted IoU scoring.

Connected components use a two-pass union-find over row runs: the first pass
collects maximal same-label runs per row (vectorized), the second unions runs
of consecutive rows whose column intervals touch under 8-connectivity. A
pixel is interior when all eight neighbours carry its segment id; pixels on
the image border are always boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crop_pyramid import CropPyramid
from .errors import ValidationError
from .tensor_io import IGNORE


def predict_labels(pyramid: CropPyramid, source: str = "mean") -> np.ndarray:
    """Per-pixel argmax labels from the pyramid.

    ``source`` selects the distribution: "mean" (the average over all levels,
    default) or "merged" (the deepest recursive merge). Ties break toward the
    lowest class index.
    """
    if source == "mean":
        probs = pyramid.mean
    elif source == "merged":
        probs = pyramid.levels[-1]
    else:
        raise ValidationError(f"prediction source must be 'mean' or 'merged', got {source!r}")
    return probs.argmax(axis=2).astype(np.int32)


@dataclass(frozen=True, eq=False)
class SegmentMap:
    """Segments of a label map with per-segment geometry.

    ``ids`` assigns every pixel a segment id in 1..n_segments, numbered by
    first row-major occurrence. Table arrays are indexed by id - 1.
    """

    ids: np.ndarray = field(repr=False)
    class_label: np.ndarray
    size: np.ndarray
    size_in: np.ndarray
    size_bd: np.ndarray
    bbox: np.ndarray          # (n, 4): row0, col0, row1, col1 inclusive
    center: np.ndarray        # (n, 2): mean (row, col), zero-based
    interior: np.ndarray = field(repr=False)  # (rows, cols) bool

    @property
    def n_segments(self) -> int:
        return len(self.class_label)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ids.shape


class _UnionFind:
    __slots__ = ("parent", "rank")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:  # path compression
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def _row_runs(labels: np.ndarray):
    """Maximal same-label runs in row-major order."""
    h, w = labels.shape
    flat = labels.ravel()
    new_run = np.empty(h * w, dtype=bool)
    new_run[0] = True
    np.not_equal(flat[1:], flat[:-1], out=new_run[1:])
    new_run[w::w] = True  # rows never share a run
    run_of_pixel = np.cumsum(new_run) - 1
    starts = np.flatnonzero(new_run)
    ends = np.empty(starts.size, dtype=np.intp)
    ends[:-1] = starts[1:] - 1
    ends[-1] = h * w - 1
    row = starts // w
    return run_of_pixel, row, starts - row * w, ends - row * w, flat[starts]


def connected_components(labels: np.ndarray) -> SegmentMap:
    """8-connected components of equal-label pixels with interior/boundary split."""
    lab = np.asarray(labels)
    if lab.ndim != 2 or lab.size == 0:
        raise ValidationError(f"label map must be non-empty 2-d, got shape {lab.shape}")
    h, w = lab.shape
    run_of_pixel, run_row, run_c0, run_c1, run_label = _row_runs(lab)
    n_runs = run_row.size
    uf = _UnionFind(n_runs)
    row_first = np.searchsorted(run_row, np.arange(h + 1))
    c0 = run_c0.tolist()
    c1 = run_c1.tolist()
    rlab = run_label.tolist()
    for y in range(h - 1):
        a_lo, a_hi = int(row_first[y]), int(row_first[y + 1])
        b_hi = int(row_first[y + 2])
        ia = a_lo
        for ib in range(a_hi, b_hi):
            bs, be, bl = c0[ib], c1[ib], rlab[ib]
            while ia < a_hi and c1[ia] < bs - 1:
                ia += 1
            j = ia
            while j < a_hi and c0[j] <= be + 1:
                if rlab[j] == bl:
                    uf.union(j, ib)
                j += 1

    comp_of_run = np.empty(n_runs, dtype=np.int64)
    next_id = 0
    root_to_id: dict[int, int] = {}
    for r in range(n_runs):
        root = uf.find(r)
        cid = root_to_id.get(root)
        if cid is None:
            next_id += 1
            cid = next_id
            root_to_id[root] = cid
        comp_of_run[r] = cid
    ids = comp_of_run[run_of_pixel].reshape(h, w).astype(np.int32)
    n = next_id

    size = np.bincount(ids.ravel() - 1, minlength=n).astype(np.int64)
    class_label = np.empty(n, dtype=lab.dtype)
    class_label[comp_of_run - 1] = run_label

    padded = np.zeros((h + 2, w + 2), dtype=ids.dtype)
    padded[1:-1, 1:-1] = ids
    interior = np.ones((h, w), dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            interior &= padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] == ids
    size_in = np.bincount(ids[interior] - 1, minlength=n).astype(np.int64)
    size_bd = size - size_in

    rows_of = np.repeat(np.arange(h, dtype=np.float64), w)
    cols_of = np.tile(np.arange(w, dtype=np.float64), h)
    flat_ids = ids.ravel() - 1
    center = np.empty((n, 2), dtype=np.float64)
    center[:, 0] = np.bincount(flat_ids, weights=rows_of, minlength=n) / size
    center[:, 1] = np.bincount(flat_ids, weights=cols_of, minlength=n) / size

    order = np.argsort(flat_ids, kind="stable")
    bounds = np.searchsorted(flat_ids[order], np.arange(n))
    sorted_rows = rows_of[order]
    sorted_cols = cols_of[order]
    bbox = np.empty((n, 4), dtype=np.int64)
    bbox[:, 0] = np.minimum.reduceat(sorted_rows, bounds)
    bbox[:, 1] = np.minimum.reduceat(sorted_cols, bounds)
    bbox[:, 2] = np.maximum.reduceat(sorted_rows, bounds)
    bbox[:, 3] = np.maximum.reduceat(sorted_cols, bounds)

    return SegmentMap(
        ids=ids,
        class_label=class_label,
        size=size,
        size_in=size_in,
        size_bd=size_bd,
        bbox=bbox,
        center=center,
        interior=interior,
    )


@dataclass(frozen=True, eq=False)
class IoUResult:
    """Per predicted segment: IoU / adjusted IoU against ground truth.

    Segments whose pixels all fall on IGNORE ground truth carry
    ``has_ground_truth`` False (scores fixed at 0) and are excluded from
    training and evaluation downstream.
    """

    iou: np.ndarray
    iou_adj: np.ndarray
    has_ground_truth: np.ndarray


def compute_iou(segments: SegmentMap, gt_labels: np.ndarray) -> IoUResult:
    """Score every predicted segment against the ground-truth components.

    For a predicted segment k of class c, the matched ground truth K' is the
    union of 8-connected ground-truth components of class c that intersect k.
    IoU is |k & K'| / |k | K'|. The adjusted variant shrinks the denominator
    by the ground-truth pixels claimed by *other* predicted segments of the
    same class that also intersect K', so a segment is not penalized for
    ground truth its same-class neighbours cover:

        iou_adj = |k & K'| / |k | (K' - Q)|,
        Q = union of predicted segments q != k, class(q) = c, q & K' != 0.

    IGNORE pixels are removed from k and never enter K' before any set
    arithmetic.
    """
    gt = np.asarray(gt_labels)
    if gt.shape != segments.shape:
        raise ValidationError(f"ground truth shape {gt.shape} != segment map shape {segments.shape}")
    gt_comp = connected_components(gt)
    n_pred = segments.n_segments
    n_gt = gt_comp.n_segments

    valid = gt != IGNORE
    pred_flat = segments.ids.ravel() - 1
    gt_flat = gt_comp.ids.ravel() - 1
    valid_flat = valid.ravel()

    ignore_count = np.bincount(pred_flat[~valid_flat], minlength=n_pred).astype(np.int64)
    effective = segments.size - ignore_count

    # sparse intersection counts between predicted segments and gt components
    keys = pred_flat[valid_flat] * np.int64(n_gt) + gt_flat[valid_flat]
    pair_keys, pair_counts = np.unique(keys, return_counts=True)
    pair_pred = pair_keys // n_gt
    pair_gt = pair_keys % n_gt
    pred_slices = np.searchsorted(pair_pred, np.arange(n_pred + 1))

    # pixels of each gt component predicted as that component's own class
    agree = valid_flat & (gt.ravel() == _pred_class_per_pixel(segments))
    claimed = np.bincount(gt_flat[agree], minlength=n_gt).astype(np.int64)

    gt_cls = gt_comp.class_label.astype(np.int64)
    gt_size = gt_comp.size

    iou = np.zeros(n_pred, dtype=np.float64)
    iou_adj = np.zeros(n_pred, dtype=np.float64)
    has_gt = effective > 0
    pred_cls = segments.class_label.astype(np.int64)
    for p in range(n_pred):
        if not has_gt[p]:
            continue
        lo, hi = pred_slices[p], pred_slices[p + 1]
        cands = pair_gt[lo:hi]
        match = gt_cls[cands] == pred_cls[p]
        cands = cands[match]
        inter = int(pair_counts[lo:hi][match].sum())
        k_size = int(effective[p])
        matched_size = int(gt_size[cands].sum())
        iou[p] = inter / (k_size + matched_size - inter)
        missed = matched_size - int(claimed[cands].sum())
        iou_adj[p] = inter / (k_size + missed)
    return IoUResult(iou=iou, iou_adj=iou_adj, has_ground_truth=has_gt)


def _pred_class_per_pixel(segments: SegmentMap) -> np.ndarray:
    return segments.class_label[segments.ids.ravel() - 1].astype(np.int64)
