"""Shared fixtures and independent reference implementations (oracles).

Every oracle here is deliberately written against the definitions, not the
library code paths: scalar loops, explicit pixel sets, textbook solvers.
"""

import numpy as np
import pytest

from nested_metaseg.tensor_io import IGNORE


def random_simplex_field(rng, rows, cols, classes, dtype=np.float32):
    """Random valid probability field (entries positive, pixel sums ~1)."""
    raw = -np.log(rng.random((rows, cols, classes)))
    field = raw / raw.sum(axis=2, keepdims=True)
    return field.astype(dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


# ---------------------------------------------------------------------------
# bilinear reference: scalar half-pixel-center sampling
# ---------------------------------------------------------------------------

def bilinear_reference(src, target):
    """Loop-based half-pixel-center bilinear resample of a 2-d array."""
    src = np.asarray(src, dtype=np.float64)
    h, w = src.shape
    th, tw = target
    out = np.empty((th, tw))
    for y in range(th):
        r = min(max((y + 0.5) * h / th - 0.5, 0.0), h - 1.0)
        r0 = int(np.floor(r))
        r1 = min(r0 + 1, h - 1)
        fr = r - r0
        for x in range(tw):
            c = min(max((x + 0.5) * w / tw - 0.5, 0.0), w - 1.0)
            c0 = int(np.floor(c))
            c1 = min(c0 + 1, w - 1)
            fc = c - c0
            top = src[r0, c0] * (1 - fc) + src[r0, c1] * fc
            bot = src[r1, c0] * (1 - fc) + src[r1, c1] * fc
            out[y, x] = top * (1 - fr) + bot * fr
    return out


# ---------------------------------------------------------------------------
# connected components: explicit flood fill
# ---------------------------------------------------------------------------

_NEIGHBORS8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def flood_fill_components(labels):
    """8-connected components by stack-based flood fill, ids in scan order."""
    labels = np.asarray(labels)
    h, w = labels.shape
    comp = np.zeros((h, w), dtype=np.int32)
    next_id = 0
    for i in range(h):
        for j in range(w):
            if comp[i, j]:
                continue
            next_id += 1
            value = labels[i, j]
            stack = [(i, j)]
            comp[i, j] = next_id
            while stack:
                r, c = stack.pop()
                for dr, dc in _NEIGHBORS8:
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and not comp[rr, cc] and labels[rr, cc] == value:
                        comp[rr, cc] = next_id
                        stack.append((rr, cc))
    return comp


def interior_reference(comp):
    """Pixels whose eight neighbours exist and share the component id."""
    h, w = comp.shape
    interior = np.zeros((h, w), dtype=bool)
    for i in range(h):
        for j in range(w):
            ok = True
            for dr, dc in _NEIGHBORS8:
                rr, cc = i + dr, j + dc
                if not (0 <= rr < h and 0 <= cc < w) or comp[rr, cc] != comp[i, j]:
                    ok = False
                    break
            interior[i, j] = ok
    return interior


# ---------------------------------------------------------------------------
# IoU oracle: literal pixel-set arithmetic
# ---------------------------------------------------------------------------

def iou_reference(pred_labels, gt_labels):
    """Brute-force IoU / adjusted IoU per predicted component.

    Materializes k, K' and Q as explicit pixel sets. Returns three lists
    aligned with scan-order component ids: iou, iou_adj, has_ground_truth.
    """
    pred_labels = np.asarray(pred_labels)
    gt_labels = np.asarray(gt_labels)
    pred_comp = flood_fill_components(pred_labels)
    gt_comp = flood_fill_components(gt_labels)
    n_pred = pred_comp.max()
    n_gt = gt_comp.max()

    pred_pixels = {k: set(zip(*np.nonzero(pred_comp == k))) for k in range(1, n_pred + 1)}
    gt_pixels = {g: set(zip(*np.nonzero(gt_comp == g))) for g in range(1, n_gt + 1)}
    gt_class = {g: gt_labels[next(iter(gt_pixels[g]))] for g in gt_pixels}
    pred_class = {k: pred_labels[next(iter(pred_pixels[k]))] for k in pred_pixels}
    ignore = set(zip(*np.nonzero(gt_labels == IGNORE)))

    iou, iou_adj, has_gt = [], [], []
    for k in range(1, n_pred + 1):
        k_eff = pred_pixels[k] - ignore
        if not k_eff:
            iou.append(0.0)
            iou_adj.append(0.0)
            has_gt.append(False)
            continue
        c = pred_class[k]
        matched = set()
        for g in range(1, n_gt + 1):
            if gt_class[g] == c and gt_pixels[g] & k_eff:
                matched |= gt_pixels[g]
        inter = len(k_eff & matched)
        union = len(k_eff | matched)
        iou.append(inter / union)
        claim = set()
        for q in range(1, n_pred + 1):
            if q != k and pred_class[q] == c and (pred_pixels[q] - ignore) & matched:
                claim |= pred_pixels[q] - ignore
        den = k_eff | (matched - claim)
        iou_adj.append(inter / len(den))
        has_gt.append(True)
    return iou, iou_adj, has_gt


# ---------------------------------------------------------------------------
# model oracles
# ---------------------------------------------------------------------------

def auroc_pairs(scores, labels):
    """(#concordant + 0.5 #ties) / (positives * negatives)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def qr_least_squares(Z, y):
    """Least squares through a QR factorization."""
    q, r = np.linalg.qr(np.asarray(Z, dtype=np.float64))
    return np.linalg.solve(r, q.T @ np.asarray(y, dtype=np.float64))


def newton_logistic(Z, y, iters=200, tol=1e-12):
    """Logistic MLE by damped Newton iterations (independent solver)."""
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = Z.shape
    theta = np.zeros(d)
    for _ in range(iters):
        z = Z @ theta
        p = 1.0 / (1.0 + np.exp(-z))
        grad = Z.T @ (p - y) / n
        if np.abs(grad).max() < tol:
            break
        w = np.maximum(p * (1.0 - p), 1e-12)
        hess = (Z * w[:, None]).T @ Z / n + 1e-12 * np.eye(d)
        theta = theta - np.linalg.solve(hess, grad)
    return theta


def pearson_reference(x, y):
    """Scalar-loop Pearson correlation."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / (sxx**0.5 * syy**0.5)
