"""Image and figure outputs.

Heat maps render to binary PGM (P5) and per-segment quality overlays to
binary PPM (P6); both are codec-free and byte-reproducible, which the golden
tests rely on. Report-style figures (correlation bars, selection
trajectories, protocol summaries) render through matplotlib's Agg backend
next to their delimited outputs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError
from .segmentation import SegmentMap


def _plt():
    # matplotlib is imported on first figure use; map rendering stays import-free
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _to_bytes(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        raise ValidationError(f"scale needs min < max, got ({lo}, {hi})")
    unit = np.clip((values - lo) / (hi - lo), 0.0, 1.0)
    return np.floor(unit * 255.0 + 0.5).astype(np.uint8)  # round half up


def render_heatmap(heat: np.ndarray, path, scale="auto") -> None:
    """Write a heat map as grayscale PGM (P5, maxval 255).

    ``scale`` is "auto" (map min/max; a constant map renders black) or a
    (min, max) pair; values outside a fixed scale clamp. A ``.png`` path
    selects PNG output with the same pixel values.
    """
    arr = np.asarray(heat, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"heat map must be 2-d, got {arr.ndim}-d")
    if scale == "auto":
        lo, hi = float(arr.min()), float(arr.max())
        if hi <= lo:
            hi = lo + 1.0
    else:
        lo, hi = float(scale[0]), float(scale[1])
    data = _to_bytes(arr, lo, hi)
    if str(path).lower().endswith(".png"):
        _write_png_gray(data, path)
        return
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def render_segment_quality(segments: SegmentMap, values, path, missing=None) -> None:
    """Write a per-segment quality overlay as binary PPM (P6).

    Each pixel takes its segment's value v in [0, 1], colored linearly from
    red (0) to green (1). Segments listed in ``missing`` (or with a
    non-finite value) render white, marking absent ground truth.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.shape != (segments.n_segments,):
        raise ValidationError(f"need one value per segment, got {vals.shape}")
    miss = np.zeros(segments.n_segments, dtype=bool)
    if missing is not None:
        miss |= np.asarray(missing, dtype=bool)
    miss |= ~np.isfinite(vals)
    v = np.clip(np.where(miss, 0.0, vals), 0.0, 1.0)
    red = np.floor((1.0 - v) * 255.0 + 0.5)
    green = np.floor(v * 255.0 + 0.5)
    palette = np.stack([red, green, np.zeros_like(red)], axis=1).astype(np.uint8)
    palette[miss] = 255
    pixels = palette[segments.ids - 1]
    if str(path).lower().endswith(".png"):
        _write_png_rgb(pixels, path)
        return
    h, w = segments.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def _write_png_gray(data: np.ndarray, path) -> None:
    plt = _plt()
    plt.imsave(path, data, cmap="gray", vmin=0, vmax=255)


def _write_png_rgb(pixels: np.ndarray, path) -> None:
    plt = _plt()
    plt.imsave(path, pixels)


# ---------------------------------------------------------------------------
# report figures
# ---------------------------------------------------------------------------

def save_correlation_figure(correlations: dict, path) -> None:
    """Horizontal bars of per-feature Pearson r (undefined features skipped)."""
    plt = _plt()
    items = [(k, v) for k, v in correlations.items() if v is not None]
    items.sort(key=lambda kv: kv[1])
    names = [k for k, _ in items]
    vals = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.17 * len(items) + 1)))
    colors = ["#b2182b" if v < 0 else "#2166ac" for v in vals]
    ax.barh(range(len(items)), vals, color=colors)
    ax.set_yticks(range(len(items)))
    ax.set_yticklabels(names, fontsize=6)
    ax.axvline(0.0, color="black", lw=0.8)
    ax.set_xlabel("Pearson r vs adjusted IoU")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trajectory_figure(trajectories: dict[str, list[dict]], path) -> None:
    """Selection-score curves per criterion as a function of the step count."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, steps in trajectories.items():
        ax.plot(range(1, len(steps) + 1), [s["score"] for s in steps], marker="o", ms=3, label=label)
    ax.set_xlabel("number of metrics")
    ax.set_ylabel("validation score")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_report_figure(report, path) -> None:
    """Validation metrics (mean with std bars) per model/feature-set entry."""
    plt = _plt()
    entries = report.entries
    metrics = sorted({m for e in entries for m in e["val_mean"]})
    fig, axes = plt.subplots(1, len(metrics), figsize=(4.2 * len(metrics), 3.6), squeeze=False)
    labels = [f"{e['kind']}\n{e['feature_set']}" for e in entries]
    for ax, metric in zip(axes[0], metrics):
        means = [e["val_mean"].get(metric, np.nan) for e in entries]
        stds = [e["val_std"].get(metric, 0.0) for e in entries]
        ax.bar(range(len(entries)), means, yerr=stds, capsize=3, color="#7fbf7b")
        ax.set_xticks(range(len(entries)))
        ax.set_xticklabels(labels, fontsize=6, rotation=30, ha="right")
        ax.set_title(f"validation {metric}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_correlation_csv(correlations: dict, path) -> None:
    """Two-column CSV: feature, r (empty cell when undefined)."""
    lines = ["feature,pearson_r"]
    for name, value in correlations.items():
        lines.append(f"{name},{'' if value is None else repr(float(value))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_trajectory_csv(trajectory: list[dict], path) -> None:
    lines = ["step,feature,score"]
    for i, step in enumerate(trajectory, start=1):
        lines.append(f"{i},{step['feature']},{repr(float(step['score']))}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
