"""Bit-exact NPY v1.0 persistence for probability fields, label maps and heat maps.

File conventions (language neutral, producible by any exporter):

* probability field: NPY v1.0, ``<f4``, C order, shape (rows, cols, classes)
* label map:         NPY v1.0, ``<i4``, C order, shape (rows, cols)
* heat map:          NPY v1.0, ``<f4``, C order, shape (rows, cols)
* dataset manifest:  UTF-8 JSON, schema documented in the README

The reader/writer is hand-rolled rather than delegated so that structural
defects are rejected with distinct :class:`FormatError` categories and so the
payload round-trips byte for byte.
"""

from __future__ import annotations

import ast
import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

#: Reserved label for pixels without ground truth. Never a valid class index.
IGNORE = 255

#: Per-pixel sum tolerance of a valid probability field.
SUM_TOL = 1e-5

#: Worst per-pixel sum deviation the loader will repair by renormalizing.
RENORM_TOL = 1e-3

_MAGIC = b"\x93NUMPY"
_FIELD_DESCR = "<f4"
_LABEL_DESCR = "<i4"


# ---------------------------------------------------------------------------
# raw NPY v1.0
# ---------------------------------------------------------------------------

def _write_npy(path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array)
    header = "{'descr': '%s', 'fortran_order': False, 'shape': %s, }" % (
        arr.dtype.str,
        str(tuple(int(s) for s in arr.shape)),
    )
    # pad so magic+version+len+header is a multiple of 64, newline terminated
    unpadded = len(_MAGIC) + 2 + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(b"\x01\x00")
        fh.write(struct.pack("<H", len(header)))
        fh.write(header.encode("latin1"))
        fh.write(arr.tobytes(order="C"))


def _read_npy(path, descr: str, ndim: int) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}", category="io") from exc
    if len(raw) < 10 or raw[:6] != _MAGIC:
        raise FormatError(f"{path}: not an NPY file (bad magic)", category="magic")
    if raw[6:8] != b"\x01\x00":
        raise FormatError(f"{path}: unsupported NPY version {raw[6]}.{raw[7]}", category="version")
    (hlen,) = struct.unpack("<H", raw[8:10])
    if 10 + hlen > len(raw):
        raise FormatError(f"{path}: truncated header", category="header")
    try:
        meta = ast.literal_eval(raw[10 : 10 + hlen].decode("latin1"))
        if not isinstance(meta, dict):
            raise ValueError("header is not a dict")
        file_descr = meta["descr"]
        fortran = meta["fortran_order"]
        shape = tuple(int(s) for s in meta["shape"])
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed NPY header ({exc})", category="header") from exc
    if file_descr != descr:
        raise FormatError(f"{path}: dtype {file_descr!r}, expected {descr!r}", category="dtype")
    if fortran is not False:
        raise FormatError(f"{path}: fortran_order must be False", category="order")
    if len(shape) != ndim:
        raise FormatError(f"{path}: {len(shape)}-d payload, expected {ndim}-d", category="ndim")
    dtype = np.dtype(descr)
    count = int(np.prod(shape)) if shape else 1
    payload = raw[10 + hlen :]
    if len(payload) != count * dtype.itemsize:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {count * dtype.itemsize}",
            category="payload",
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    arr.setflags(write=False)  # loaded objects are immutable, safe to share
    return arr


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_probability_field(field: np.ndarray, tol: float = SUM_TOL) -> None:
    """Raise :class:`ValidationError` unless ``field`` is a valid probability field."""
    arr = np.asarray(field)
    if arr.ndim != 3:
        raise ValidationError(f"probability field must be 3-d, got {arr.ndim}-d")
    rows, cols, classes = arr.shape
    if rows < 1 or cols < 1:
        raise ValidationError(f"empty frame {rows}x{cols}")
    if classes < 2:
        raise ValidationError(f"need at least 2 classes, got {classes}")
    if not np.isfinite(arr).all():
        raise ValidationError("probability field contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError("probability entries must lie in [0, 1]")
    dev = np.abs(arr.sum(axis=2, dtype=np.float64) - 1.0).max()
    if dev > tol:
        raise ValidationError(f"per-pixel sums deviate from 1 by up to {dev:.3g} (tol {tol:g})")


def validate_label_map(labels: np.ndarray, classes: int | None = None) -> None:
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValidationError(f"label map must be 2-d, got {arr.ndim}-d")
    if arr.size == 0:
        raise ValidationError("empty label map")
    if arr.min() < 0:
        raise ValidationError("negative label values")
    if classes is not None:
        if not 2 <= classes <= IGNORE:
            raise ValidationError(f"class count must be in [2, {IGNORE}], got {classes}")
        bad = (arr >= classes) & (arr != IGNORE)
        if bad.any():
            v = int(arr[bad][0])
            raise ValidationError(f"label value {v} outside 0..{classes - 1} and not IGNORE({IGNORE})")


# ---------------------------------------------------------------------------
# typed load/save
# ---------------------------------------------------------------------------

def load_probability_field(path) -> np.ndarray:
    """Load and validate a probability field.

    Per-pixel sums deviating from 1 by more than ``RENORM_TOL`` are rejected;
    deviations in (SUM_TOL, RENORM_TOL] are repaired by renormalizing (with a
    warning); anything within SUM_TOL is returned untouched.
    """
    arr = _read_npy(path, _FIELD_DESCR, ndim=3)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{path}: empty frame {arr.shape[0]}x{arr.shape[1]}")
    if arr.shape[2] < 2:
        raise ValidationError(f"{path}: need at least 2 classes, got {arr.shape[2]}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{path}: non-finite probability values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValidationError(f"{path}: probability entries outside [0, 1]")
    sums = arr.sum(axis=2, dtype=np.float64)
    dev = np.abs(sums - 1.0).max()
    if dev > RENORM_TOL:
        raise ValidationError(f"{path}: per-pixel sums deviate by up to {dev:.3g} (> {RENORM_TOL:g})")
    if dev > SUM_TOL:
        warnings.warn(f"{path}: renormalizing pixels (worst sum deviation {dev:.3g})", stacklevel=2)
        arr = (arr / sums[:, :, None]).astype(np.float32)
        arr.setflags(write=False)
    return arr


def save_probability_field(field: np.ndarray, path) -> None:
    arr = np.asarray(field, dtype=np.float32)
    validate_probability_field(arr)
    _write_npy(path, arr)


def load_label_map(path, classes: int | None = None) -> np.ndarray:
    arr = _read_npy(path, _LABEL_DESCR, ndim=2)
    validate_label_map(arr, classes)
    return arr


def save_label_map(labels: np.ndarray, path, classes: int | None = None) -> None:
    arr = np.asarray(labels, dtype=np.int32)
    validate_label_map(arr, classes)
    _write_npy(path, arr)


def load_heat_map(path) -> np.ndarray:
    arr = _read_npy(path, _FIELD_DESCR, ndim=2)
    if not np.isfinite(arr).all():
        raise ValidationError(f"{path}: non-finite heat map values")
    return arr


def save_heat_map(heat: np.ndarray, path) -> None:
    arr = np.asarray(heat, dtype=np.float32)
    if arr.ndim != 2:
        raise ValidationError(f"heat map must be 2-d, got {arr.ndim}-d")
    if not np.isfinite(arr).all():
        raise ValidationError("non-finite heat map values")
    _write_npy(path, arr)


def save_segment_ids(ids: np.ndarray, path) -> None:
    """Persist a segment-id map (same container as label maps, no range rule)."""
    arr = np.asarray(ids, dtype=np.int32)
    if arr.ndim != 2:
        raise ValidationError(f"segment map must be 2-d, got {arr.ndim}-d")
    _write_npy(path, arr)


def load_segment_ids(path) -> np.ndarray:
    return _read_npy(path, _LABEL_DESCR, ndim=2)


# ---------------------------------------------------------------------------
# dataset manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    probs: Path | None = None                  # single full-frame field
    probs_crops: tuple[Path, ...] | None = None  # one full-frame field per crop level
    labels: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    classes: int
    c_l: int
    n_crop: int
    images: tuple[ManifestEntry, ...]
    class_names: tuple[str, ...] | None = None

    def entry(self, image_id: str) -> ManifestEntry:
        for e in self.images:
            if e.image_id == image_id:
                return e
        raise ValidationError(f"image id {image_id!r} not in manifest")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}", category="io") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})", category="json") from exc
    try:
        classes = int(data["classes"])
        c_l = int(data["c_l"])
        n_crop = int(data["n_crop"])
        raw_images = data["images"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: manifest missing field ({exc})", category="schema") from exc
    if not 2 <= classes <= IGNORE:
        raise ValidationError(f"{path}: classes must be in [2, {IGNORE}], got {classes}")
    if c_l < 1:
        raise ValidationError(f"{path}: c_l must be >= 1, got {c_l}")
    if n_crop < 0:
        raise ValidationError(f"{path}: n_crop must be >= 0, got {n_crop}")
    base = path.parent
    entries = []
    seen: set[str] = set()
    for item in raw_images:
        image_id = str(item["id"])
        if image_id in seen:
            raise ValidationError(f"{path}: duplicate image id {image_id!r}")
        seen.add(image_id)
        probs = item.get("probs")
        crops = item.get("probs_crops")
        if (probs is None) == (crops is None):
            raise ValidationError(f"{path}: image {image_id!r} needs exactly one of probs / probs_crops")
        labels = item.get("labels")
        entry = ManifestEntry(
            image_id=image_id,
            probs=(base / probs) if probs is not None else None,
            probs_crops=tuple(base / p for p in crops) if crops is not None else None,
            labels=(base / labels) if labels is not None else None,
        )
        if crops is not None and len(entry.probs_crops) != n_crop + 1:
            raise ValidationError(
                f"{path}: image {image_id!r} has {len(entry.probs_crops)} crop fields, expected {n_crop + 1}"
            )
        for p in _entry_paths(entry):
            if not p.is_file():
                raise ValidationError(f"{path}: referenced file missing: {p}")
        entries.append(entry)
    names = data.get("class_names")
    if names is not None:
        names = tuple(str(n) for n in names)
        if len(names) != classes:
            raise ValidationError(f"{path}: {len(names)} class names for {classes} classes")
    return DatasetManifest(classes=classes, c_l=c_l, n_crop=n_crop, images=tuple(entries), class_names=names)


def _entry_paths(entry: ManifestEntry) -> list[Path]:
    paths = []
    if entry.probs is not None:
        paths.append(entry.probs)
    if entry.probs_crops is not None:
        paths.extend(entry.probs_crops)
    if entry.labels is not None:
        paths.append(entry.labels)
    return paths


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write a manifest with paths stored relative to the manifest directory."""
    path = Path(path)
    base = path.parent

    def rel(p: Path) -> str:
        try:
            return p.relative_to(base).as_posix()
        except ValueError:
            return str(p)

    images = []
    for e in manifest.images:
        item: dict = {"id": e.image_id}
        if e.probs is not None:
            item["probs"] = rel(e.probs)
        if e.probs_crops is not None:
            item["probs_crops"] = [rel(p) for p in e.probs_crops]
        if e.labels is not None:
            item["labels"] = rel(e.labels)
        images.append(item)
    data: dict = {
        "classes": manifest.classes,
        "c_l": manifest.c_l,
        "n_crop": manifest.n_crop,
        "images": images,
    }
    if manifest.class_names is not None:
        data["class_names"] = list(manifest.class_names)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
