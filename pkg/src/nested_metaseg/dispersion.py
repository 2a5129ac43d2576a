"""Pixel-wise dispersion heat maps and their statistics over crop levels.

Three per-field measures (normalized entropy, probability margin, variation
ratio), their mean and variance across the pyramid levels, and a symmetrized
KL map comparing the pyramid mean against the unmerged base field.
Single-field maps keep the field's floating dtype; the cross-level mean and
variance accumulate in float64 regardless, so tiny variances resolve
exactly. Persisted files are float32 via tensor_io.
"""

from __future__ import annotations

import numpy as np

from .crop_pyramid import CropPyramid
from .errors import ValidationError

#: Dispersion measures defined on a single probability field.
MEASURES = ("entropy", "margin", "varratio")

#: Canonical heat-map family produced from one pyramid, in catalog order:
#: crop means first, then crop variances, then the KL map.
HEATMAP_NAMES = (
    "entropy_mean",
    "margin_mean",
    "varratio_mean",
    "entropy_var",
    "margin_var",
    "varratio_var",
    "kl",
)

#: Probabilities are clamped here before any logarithm.
LOG_EPS = 1e-10


def _as_float(field: np.ndarray) -> np.ndarray:
    arr = np.asarray(field)
    if arr.ndim != 3 or arr.shape[2] < 2:
        raise ValidationError(f"expected (rows, cols, classes>=2), got {arr.shape}")
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


def entropy_map(field: np.ndarray) -> np.ndarray:
    """Shannon entropy per pixel, normalized by log(classes) into [0, 1]."""
    p = _as_float(field)
    safe = np.where(p > 0.0, p, p.dtype.type(1.0))  # 0*log(0) := 0
    ent = -(p * np.log(safe)).sum(axis=2) / p.dtype.type(np.log(p.shape[2]))
    return np.clip(ent, 0.0, 1.0)


def _top_two(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = p.shape[2]
    part = np.partition(p, c - 2, axis=2)
    return part[:, :, c - 1], part[:, :, c - 2]


def margin_map(field: np.ndarray) -> np.ndarray:
    """1 - (largest probability) + (second largest), in [0, 1]."""
    p1, p2 = _top_two(_as_float(field))
    return np.clip(1.0 - p1 + p2, 0.0, 1.0)


def variation_ratio_map(field: np.ndarray) -> np.ndarray:
    """1 - (largest probability), in [0, 1 - 1/classes]."""
    p = _as_float(field)
    return np.clip(1.0 - p.max(axis=2), 0.0, 1.0 - 1.0 / p.shape[2])


_MEASURE_FN = {
    "entropy": entropy_map,
    "margin": margin_map,
    "varratio": variation_ratio_map,
}


def crop_mean_var(pyramid: CropPyramid, measure: str) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population variance of one measure across all pyramid levels.

    Divides by the number of levels (n_crop + 1); the variance is clamped at
    zero against floating-point negativity.
    """
    if measure not in _MEASURE_FN:
        raise ValidationError(f"unknown measure {measure!r}, expected one of {MEASURES}")
    fn = _MEASURE_FN[measure]
    n = len(pyramid.levels)
    # accumulate in float64: the variance formula cancels catastrophically
    # in float32 and must resolve values below 1e-12
    s1 = np.zeros(pyramid.shape[:2], dtype=np.float64)
    s2 = np.zeros_like(s1)
    for lv in pyramid.levels:
        u = fn(lv).astype(np.float64, copy=False)  # square in float64
        s1 += u
        s2 += u * u
    mean = s1 / n
    var = np.maximum(s2 / n - mean * mean, 0.0)
    return mean, var


def kl_map(pyramid: CropPyramid) -> np.ndarray:
    """Symmetrized KL divergence between the pyramid mean and the base field.

    Computed as sum_y (a_y - b_y) * log(a_y / b_y) with both distributions
    clamped at LOG_EPS, scaled by 1/(2*classes). The pairing of same-sign
    factors keeps every term non-negative and makes identical inputs yield
    an exact zero map.
    """
    a = np.maximum(_as_float(pyramid.mean), LOG_EPS)
    b = np.maximum(_as_float(pyramid.levels[0]), LOG_EPS)
    terms = (a - b) * np.log(a / b)
    return np.maximum(terms.sum(axis=2) / a.dtype.type(2.0 * pyramid.classes), 0.0)


def compute_heatmaps(pyramid: CropPyramid) -> dict[str, np.ndarray]:
    """All seven canonical heat maps for one pyramid, keyed by HEATMAP_NAMES.

    Single pass over the levels: the class-axis partition is shared between
    the margin and variation-ratio measures.
    """
    n = len(pyramid.levels)
    shape = pyramid.shape[:2]
    s1 = {m: np.zeros(shape, dtype=np.float64) for m in MEASURES}
    s2 = {m: np.zeros(shape, dtype=np.float64) for m in MEASURES}
    vr_cap = 1.0 - 1.0 / pyramid.classes
    for lv in pyramid.levels:
        p = _as_float(lv)
        safe = np.where(p > 0.0, p, p.dtype.type(1.0))
        ent = np.clip(-(p * np.log(safe)).sum(axis=2) / p.dtype.type(np.log(p.shape[2])), 0.0, 1.0)
        p1, p2 = _top_two(p)
        mar = np.clip(1.0 - p1 + p2, 0.0, 1.0)
        var_ratio = np.clip(1.0 - p1, 0.0, vr_cap)
        for m, u in (("entropy", ent), ("margin", mar), ("varratio", var_ratio)):
            u = u.astype(np.float64, copy=False)  # square in float64
            s1[m] += u
            s2[m] += u * u
    maps: dict[str, np.ndarray] = {}
    for m in MEASURES:
        mean = s1[m] / n
        maps[f"{m}_mean"] = mean
        maps[f"{m}_var"] = np.maximum(s2[m] / n - mean * mean, 0.0)
    maps["kl"] = kl_map(pyramid)
    return {name: maps[name] for name in HEATMAP_NAMES}
