"""Nested centered crops and their blended merge.

Crop level i removes ``i*c_l`` rows from the top and bottom of the frame and
``2*i*c_l`` columns from the left and right, so every crop keeps the frame's
aspect and center. Per-crop probability fields are brought back to their
footprint inside the full frame and faded into the merge of all larger crops
with a linear-ramp kernel, giving one merged field per level plus their mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ValidationError
from .tensor_io import validate_probability_field


def crop_margins(i: int, c_l: int) -> tuple[int, int]:
    """(row, column) margin stripped on each side by crop level ``i``."""
    return i * c_l, 2 * i * c_l


def crop_shape(i: int, base: tuple[int, int], c_l: int) -> tuple[int, int]:
    """Shape of crop level ``i`` for a ``base`` = (rows, cols) frame."""
    if i < 0:
        raise GeometryError(f"crop index must be >= 0, got {i}")
    if c_l < 1:
        raise GeometryError(f"crop distance must be >= 1, got {c_l}")
    mr, mc = crop_margins(i, c_l)
    rows = base[0] - 2 * mr
    cols = base[1] - 2 * mc
    if rows < 1 or cols < 1:
        raise GeometryError(
            f"crop {i} with c_l={c_l} leaves a {rows}x{cols} window of a {base[0]}x{base[1]} frame"
        )
    return rows, cols


def restrict(arr: np.ndarray, i: int, c_l: int) -> np.ndarray:
    """Centered sub-window of a (rows, cols[, channels]) array at crop level ``i``."""
    a = np.asarray(arr)
    rows, cols = crop_shape(i, (a.shape[0], a.shape[1]), c_l)
    mr, mc = crop_margins(i, c_l)
    return a[mr : mr + rows, mc : mc + cols]


def _axis_samples(src: int, dst: int):
    # half-pixel centers: output x reads source coordinate (x + 0.5) * src/dst - 0.5
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    pos = np.clip(pos, 0.0, src - 1.0)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, src - 1)
    return lo, hi, pos - lo


def bilinear_resize(arr: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear resample with half-pixel-center sampling and edge clamping.

    Accepts (rows, cols) or (rows, cols, channels); channels are interpolated
    independently. Resizing to the source shape returns an identical copy.
    """
    a = np.asarray(arr)
    flat = a.ndim == 2
    if flat:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValidationError(f"expected 2-d or 3-d array, got {a.ndim}-d")
    src_r, src_c = a.shape[0], a.shape[1]
    dst_r, dst_c = int(target[0]), int(target[1])
    if min(src_r, src_c, dst_r, dst_c) < 1:
        raise GeometryError(f"resize {src_r}x{src_c} -> {dst_r}x{dst_c}")
    if (dst_r, dst_c) == (src_r, src_c):
        out = a.copy()
        return out[:, :, 0] if flat else out
    ct = a.dtype if a.dtype in (np.float32, np.float64) else np.float64
    r0, r1, wr = _axis_samples(src_r, dst_r)
    c0, c1, wc = _axis_samples(src_c, dst_c)
    wr = wr.astype(ct)[:, None, None]
    wc = wc.astype(ct)[None, :, None]
    a = a.astype(ct, copy=False)
    rows = a[r0] * (1.0 - wr) + a[r1] * wr
    out = rows[:, c0] * (1.0 - wc) + rows[:, c1] * wc
    return out[:, :, 0] if flat else out


def kernel(i: int, base: tuple[int, int], c_l: int) -> np.ndarray:
    """Blend weights for crop level ``i`` on the full frame.

    Zero outside the crop's support, one on the region the next nested crop
    would occupy, and a linear ramp across the band between them (width c_l in
    rows, 2*c_l in columns). The row and column ramps combine by minimum, so
    the plateaus are exact. Level i uses the band widths a crop i+1 would
    induce whether or not that crop exists; the notional crop i+1 must still
    fit inside the frame, otherwise the one-plateau would be empty.
    """
    rows, cols = base
    crop_shape(i, base, c_l)
    crop_shape(i + 1, base, c_l)  # ramp band must enclose a non-empty plateau
    mr, mc = crop_margins(i, c_l)
    rr = np.arange(rows, dtype=np.float64)
    cc = np.arange(cols, dtype=np.float64)
    ramp_r = np.clip(np.minimum(rr - mr, (rows - 1 - mr) - rr) / c_l, 0.0, 1.0)
    ramp_c = np.clip(np.minimum(cc - mc, (cols - 1 - mc) - cc) / (2 * c_l), 0.0, 1.0)
    return np.minimum(ramp_r[:, None], ramp_c[None, :])


def _renormalized(field: np.ndarray) -> np.ndarray:
    sums = field.sum(axis=2, keepdims=True)
    np.maximum(sums, np.finfo(field.dtype).tiny, out=sums)
    return field / sums


@dataclass(frozen=True, eq=False)
class CropPyramid:
    """The family of merged full-frame probability fields plus their mean.

    ``levels[0]`` is the untouched base field; ``levels[i]`` is the recursive
    blend of crop i into ``levels[i-1]``. ``mean`` averages all levels.
    """

    c_l: int
    levels: tuple[np.ndarray, ...]
    mean: np.ndarray = field(repr=False)

    @property
    def n_crop(self) -> int:
        return len(self.levels) - 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.levels[0].shape

    @property
    def classes(self) -> int:
        return self.levels[0].shape[2]


def build_pyramid(crop_fields, c_l: int) -> CropPyramid:
    """Merge per-crop probability fields into the recursive pyramid.

    ``crop_fields[i]`` is the probability field for crop level i, either at
    the crop's own shape (used directly) or at full frame shape (a network
    output for the re-scaled crop; it is resampled back to the crop's
    footprint first). Each placed field is renormalized per pixel after
    resampling, embedded at its centered offset and blended::

        merged[0] = crop_fields[0]
        merged[i] = kernel_i * placed_i + (1 - kernel_i) * merged[i-1]

    The blend is convex, so every level is a valid probability field, and
    levels are bitwise identical to their predecessor wherever the kernel
    is zero.
    """
    fields = [np.asarray(f) for f in crop_fields]
    if not fields:
        raise ValidationError("need at least the base field")
    base = fields[0]
    validate_probability_field(base)
    frame = (base.shape[0], base.shape[1])
    classes = base.shape[2]
    n_crop = len(fields) - 1
    if n_crop > 0:
        crop_shape(n_crop, frame, c_l)

    levels = [base]
    prev = base
    dtype = base.dtype if base.dtype in (np.float32, np.float64) else np.float64
    for i in range(1, n_crop + 1):
        f = fields[i]
        tgt = crop_shape(i, frame, c_l)
        if f.ndim != 3 or f.shape[2] != classes:
            raise GeometryError(f"crop {i}: field shape {f.shape} does not share {classes} classes")
        # values are the caller's contract (loaders validate files); the
        # renormalization below re-establishes the simplex after resampling
        if f.shape[:2] == (frame[0], frame[1]):
            placed = bilinear_resize(f.astype(dtype, copy=False), tgt)
        elif f.shape[:2] == tgt:
            placed = f.astype(dtype, copy=False)
        else:
            raise GeometryError(
                f"crop {i}: field shape {f.shape[:2]} is neither the frame {frame} nor the crop window {tgt}"
            )
        placed = _renormalized(placed)
        mr, mc = crop_margins(i, c_l)
        k = kernel(i, frame, c_l).astype(dtype)
        # outside the crop support the kernel is zero and the level equals
        # its predecessor bitwise; blend only the supported window
        merged = prev.copy()
        window = (slice(mr, mr + tgt[0]), slice(mc, mc + tgt[1]))
        ksub = k[window][:, :, None]
        merged[window] = ksub * placed + (1.0 - ksub) * prev[window]
        prev = merged
        levels.append(prev)

    acc = np.zeros(base.shape, dtype=np.float64)
    for lv in levels:
        acc += lv
    mean = (acc / len(levels)).astype(dtype)
    return CropPyramid(c_l=c_l, levels=tuple(levels), mean=mean)


def simulate_crop_fields(base_field: np.ndarray, c_l: int, n_crop: int) -> list[np.ndarray]:
    """Derive per-crop fields from a single full-frame field (testing mode).

    Each crop restricts the base probabilities to its window and re-scales
    them to the full frame, emulating a network that sees every crop at input
    size; the merge then resamples them back down, reproducing the blur a
    real crop pipeline would exhibit.
    """
    base = np.asarray(base_field)
    validate_probability_field(base)
    frame = (base.shape[0], base.shape[1])
    fields = [base]
    for i in range(1, n_crop + 1):
        window = restrict(base, i, c_l)
        up = bilinear_resize(window, frame)
        fields.append(_renormalized(up))
    return fields
