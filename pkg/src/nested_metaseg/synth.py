"""Synthetic scenes with known ground truth and controllable noise.

A scene is a background plus random rectangles/ellipses, each carrying a
class. Labels live on a supersampled latent grid; per-pixel label noise and
a boundary box blur corrupt the latent one-hot logits before softmaxing, so
dispersion concentrates at shape boundaries and noisy regions. Per-crop
fields re-scale the latent crop window to the frame before softmaxing,
which reproduces the resolution effect of a real crop pipeline: deeper crops
see the scene center at higher effective resolution, so crop fields
genuinely differ.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .crop_pyramid import bilinear_resize, crop_margins, crop_shape, _renormalized
from .errors import ValidationError
from .rng import rng_for
from .tensor_io import DatasetManifest, ManifestEntry, save_label_map, save_manifest, save_probability_field


@dataclass(frozen=True)
class SynthConfig:
    rows: int = 128
    cols: int = 256
    classes: int = 6
    n_shapes: int = 8
    beta: float = 12.0        # softmax sharpness of the latent logits
    blur_radius: int = 2      # box-blur half width on the latent grid
    noise_rate: float = 0.0   # per-latent-pixel label corruption probability
    c_l: int = 4
    n_crop: int = 4
    supersample: int = 2      # latent grid resolution multiplier
    min_extent: float = 5.0   # smallest shape half extent, in frame pixels
    max_extent: float = 28.0
    snap_to_grid: bool = False  # rectangles with integer edges only (exactness tests)
    seed: int = 0

    def validate(self) -> None:
        if self.rows < 4 or self.cols < 4:
            raise ValidationError(f"frame too small: {self.rows}x{self.cols}")
        if not 2 <= self.classes <= 254:
            raise ValidationError(f"classes must be in [2, 254], got {self.classes}")
        if self.n_shapes < 0:
            raise ValidationError("n_shapes must be >= 0")
        if self.beta <= 0:
            raise ValidationError("beta must be > 0")
        if self.blur_radius < 0:
            raise ValidationError("blur_radius must be >= 0")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValidationError(f"noise_rate must be in [0, 1), got {self.noise_rate}")
        if self.supersample < 1:
            raise ValidationError("supersample must be >= 1")
        if self.c_l < 1 or self.n_crop < 0:
            raise ValidationError(f"bad crop parameters c_l={self.c_l}, n_crop={self.n_crop}")
        if not 1.0 <= self.min_extent <= self.max_extent:
            raise ValidationError("need 1 <= min_extent <= max_extent")
        # the blend kernel needs the notional next crop to fit as well
        crop_shape(self.n_crop + 1, (self.rows, self.cols), self.c_l)


def _rasterize(shapes, rows: int, cols: int, scale: float) -> np.ndarray:
    """Paint shapes over background class 0 at pixel centers of a scaled grid."""
    labels = np.zeros((rows, cols), dtype=np.int32)
    rr = (np.arange(rows, dtype=np.float64) + 0.5) / scale
    cc = (np.arange(cols, dtype=np.float64) + 0.5) / scale
    for kind, cls, cy, cx, ey, ex in shapes:
        if kind == 0:  # rectangle
            mask_r = (rr >= cy - ey) & (rr <= cy + ey)
            mask_c = (cc >= cx - ex) & (cc <= cx + ex)
            labels[np.ix_(mask_r, mask_c)] = cls
        else:  # ellipse
            dist = ((rr[:, None] - cy) / ey) ** 2 + ((cc[None, :] - cx) / ex) ** 2
            labels[dist <= 1.0] = cls
    return labels


def _paint_ellipse(labels: np.ndarray, cls: int, cy, cx, ey, ex, scale: float) -> None:
    """Paint one ellipse (frame-unit geometry) into a label grid, in place."""
    h, w = labels.shape
    r0 = max(int((cy - ey) * scale) - 1, 0)
    r1 = min(int((cy + ey) * scale) + 2, h)
    c0 = max(int((cx - ex) * scale) - 1, 0)
    c1 = min(int((cx + ex) * scale) + 2, w)
    rr = (np.arange(r0, r1, dtype=np.float64) + 0.5) / scale
    cc = (np.arange(c0, c1, dtype=np.float64) + 0.5) / scale
    dist = ((rr[:, None] - cy) / ey) ** 2 + ((cc[None, :] - cx) / ex) ** 2
    patch = labels[r0:r1, c0:c1]
    patch[dist <= 1.0] = cls


def _box_blur(arr: np.ndarray, radius: int) -> np.ndarray:
    """Separable box blur with truncated windows at the border."""
    if radius == 0:
        return arr
    out = arr
    for axis in (0, 1):
        n = out.shape[axis]
        csum = np.cumsum(np.moveaxis(out, axis, 0), axis=0, dtype=np.float64)
        csum = np.concatenate([np.zeros_like(csum[:1]), csum], axis=0)
        idx = np.arange(n)
        lo = np.maximum(idx - radius, 0)
        hi = np.minimum(idx + radius + 1, n)
        window = (csum[hi] - csum[lo]) / (hi - lo).reshape((-1,) + (1,) * (out.ndim - 1))
        out = np.moveaxis(window, 0, axis)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=2, keepdims=True)
    e = np.exp(z, dtype=np.float64)
    return (e / e.sum(axis=2, keepdims=True)).astype(np.float32)


def generate_scene(config: SynthConfig) -> tuple[list[np.ndarray], np.ndarray]:
    """(per-crop full-frame probability fields, ground-truth label map).

    Deterministic given the seed: geometry, classes and noise draw from
    separate Philox streams keyed on it.
    """
    config.validate()
    s = config.supersample
    rows, cols = config.rows, config.cols
    hr, wc = rows * s, cols * s

    geo = rng_for(config.seed, stream=1)
    shapes = []
    for _ in range(config.n_shapes):
        cls = int(geo.integers(1, config.classes))
        if config.snap_to_grid:
            # integer-edged rectangles rasterize identically on the frame and
            # latent grids, keeping the noiseless pipeline free of ties
            hh = int(geo.integers(int(config.min_extent), int(config.max_extent) + 1))
            ww = int(geo.integers(int(config.min_extent), int(config.max_extent) + 1))
            hh = min(hh, rows // 2 - 1)
            ww = min(ww, cols // 2 - 1)
            r0 = int(geo.integers(0, rows - 2 * hh + 1))
            c0 = int(geo.integers(0, cols - 2 * ww + 1))
            shapes.append((0, cls, float(r0 + hh), float(c0 + ww), float(hh), float(ww)))
        else:
            kind = int(geo.integers(0, 2))
            ey = float(geo.uniform(config.min_extent, config.max_extent))
            ex = float(geo.uniform(config.min_extent, config.max_extent))
            cy = float(geo.uniform(ey, rows - ey)) if rows > 2 * ey else rows / 2.0
            cx = float(geo.uniform(ex, cols - ex)) if cols > 2 * ex else cols / 2.0
            shapes.append((kind, cls, cy, cx, ey, ex))

    gt = _rasterize(shapes, rows, cols, scale=1.0)
    latent = _rasterize(shapes, hr, wc, scale=float(s))

    if config.noise_rate > 0.0:
        noise = rng_for(config.seed, stream=2)
        # corruption is uneven across shapes: some regions are hit far harder
        # than others, so quality varies segment by segment within one scene
        weights = noise.uniform(0.2, 1.8, size=config.n_shapes + 1)
        region = _rasterize(
            [(k, j + 1, cy, cx, ey, ex) for j, (k, _, cy, cx, ey, ex) in enumerate(shapes)],
            hr, wc, scale=float(s),
        )
        rate = np.minimum(config.noise_rate * weights[region], 0.9)
        flip = noise.random((hr, wc)) < rate
        offset = noise.integers(1, config.classes, size=(hr, wc), dtype=np.int64)
        latent = np.where(flip, (latent + offset) % config.classes, latent).astype(np.int32)
        # clustered corruption: wrong-class blobs survive the resampling and
        # yield hallucinated segments (adjusted IoU of zero), which per-pixel
        # flips alone rarely produce
        for _ in range(int(noise.poisson(10.0 * config.noise_rate))):
            cls = int(noise.integers(1, config.classes))
            ey = float(noise.uniform(2.0, 5.0))
            ex = float(noise.uniform(2.0, 5.0))
            cy = float(noise.uniform(ey, rows - ey))
            cx = float(noise.uniform(ex, cols - ex))
            _paint_ellipse(latent, cls, cy, cx, ey, ex, scale=float(s))

    onehot = np.zeros((hr, wc, config.classes), dtype=np.float64)
    lat_flat = latent.ravel()
    onehot.reshape(-1, config.classes)[np.arange(lat_flat.size), lat_flat] = 1.0
    # classes differ in sharpness, so the link between dispersion and quality
    # is class-conditional (an interaction linear meta models cannot express)
    sharpness = config.beta * np.linspace(0.65, 1.35, config.classes)
    logits = _box_blur(onehot, config.blur_radius) * sharpness

    fields = []
    for i in range(config.n_crop + 1):
        mr, mc = crop_margins(i, config.c_l)
        window = logits[mr * s : hr - mr * s, mc * s : wc - mc * s]
        up = bilinear_resize(window, (rows, cols))
        fields.append(_renormalized(_softmax(up)))
    return fields, gt


def write_dataset(
    base_config: SynthConfig,
    n_scenes: int,
    out_dir,
    emit: str = "crops",
    noise_rates=None,
    with_labels: bool = True,
) -> Path:
    """Generate scenes to NPY files plus a manifest; returns the manifest path.

    ``emit`` = "crops" stores one full-frame field per crop level; "base"
    stores only the uncropped field (for pipelines that simulate crops).
    ``noise_rates``, when given, cycles over the scenes. Scene i reuses the
    base config with seed ``base_config.seed + i``.
    """
    if emit not in ("crops", "base"):
        raise ValidationError(f"emit must be 'crops' or 'base', got {emit!r}")
    if n_scenes < 1:
        raise ValidationError("need at least one scene")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for idx in range(n_scenes):
        cfg = replace(base_config, seed=base_config.seed + idx)
        if noise_rates is not None:
            cfg = replace(cfg, noise_rate=float(noise_rates[idx % len(noise_rates)]))
        fields, gt = generate_scene(cfg)
        image_id = f"scene{idx:04d}"
        labels_path = None
        if with_labels:
            labels_path = out / f"{image_id}_labels.npy"
            save_label_map(gt, labels_path, classes=cfg.classes)
        if emit == "crops":
            crop_paths = []
            for i, f in enumerate(fields):
                p = out / f"{image_id}_crop{i}.npy"
                save_probability_field(f, p)
                crop_paths.append(p)
            entries.append(ManifestEntry(image_id=image_id, probs_crops=tuple(crop_paths), labels=labels_path))
        else:
            p = out / f"{image_id}_probs.npy"
            save_probability_field(fields[0], p)
            entries.append(ManifestEntry(image_id=image_id, probs=p, labels=labels_path))
    manifest = DatasetManifest(
        classes=base_config.classes,
        c_l=base_config.c_l,
        n_crop=base_config.n_crop,
        images=tuple(entries),
    )
    manifest_path = out / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
