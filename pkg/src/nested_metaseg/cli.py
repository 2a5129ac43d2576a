"""Command-line pipeline over stored probability tensors.

Subcommands cover dataset synthesis, crop merging, heat maps, segment
extraction, metric aggregation, correlation reports, meta model training,
greedy metric selection, rendering, and the full pipeline. Every command is
deterministic given ``--seed``; per-image work fans out over a thread pool
and results merge in image-id order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import meta, render, synth, tensor_io
from .crop_pyramid import build_pyramid, simulate_crop_fields
from .dispersion import HEATMAP_NAMES, compute_heatmaps
from .errors import DegenerateError, FormatError, GeometryError, NestedMetasegError, ValidationError
from .metrics import MetricsTable, extract_records, feature_catalog, named_feature_sets, pearson_correlations
from .segmentation import compute_iou, connected_components, predict_labels

EXIT_CODES = {
    FormatError: 2,
    GeometryError: 3,
    ValidationError: 4,
    DegenerateError: 5,
}

THREADS_ENV = "NESTED_METASEG_THREADS"


def _resolve_threads(value) -> int:
    if value is not None:
        n = int(value)
    elif os.environ.get(THREADS_ENV):
        n = int(os.environ[THREADS_ENV])
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise ValidationError(f"thread count must be >= 1, got {n}")
    return n


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill unset CLI options from the JSON config file, if any."""
    if getattr(args, "config", None) is None:
        return
    path = Path(args.config)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}", category="io") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})", category="json") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path}: config must be a JSON object", category="schema")
    for key, value in data.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, value)


def _mapflag(args, name, default):
    value = getattr(args, name, None)
    return default if value is None else value


# ---------------------------------------------------------------------------
# per-image processing
# ---------------------------------------------------------------------------

def _pyramid_for_entry(entry, manifest, c_l: int, n_crop: int, simulate: bool):
    if entry.probs_crops is not None:
        if n_crop + 1 > len(entry.probs_crops):
            raise ValidationError(
                f"image {entry.image_id!r}: {len(entry.probs_crops)} crop fields cannot serve n_crop={n_crop}"
            )
        fields = [tensor_io.load_probability_field(p) for p in entry.probs_crops[: n_crop + 1]]
    else:
        base = tensor_io.load_probability_field(entry.probs)
        if n_crop > 0 and not simulate:
            raise ValidationError(
                f"image {entry.image_id!r} has a single field; use --simulate-crops for n_crop={n_crop}"
            )
        fields = simulate_crop_fields(base, c_l, n_crop) if n_crop > 0 else [base]
    return build_pyramid(fields, c_l)


def _process_image(entry, manifest, c_l, n_crop, simulate, predict_from):
    pyramid = _pyramid_for_entry(entry, manifest, c_l, n_crop, simulate)
    maps = compute_heatmaps(pyramid)
    labels = predict_labels(pyramid, source=predict_from)
    segments = connected_components(labels)
    gt = tensor_io.load_label_map(entry.labels, manifest.classes) if entry.labels is not None else None
    iou_result = compute_iou(segments, gt) if gt is not None else None
    records = extract_records(
        pyramid, segments, maps, gt_labels=gt, image_id=entry.image_id, iou_result=iou_result
    )
    return {
        "entry": entry,
        "pyramid": pyramid,
        "maps": maps,
        "segments": segments,
        "gt": gt,
        "iou": iou_result,
        "records": records,
    }


def _sorted_entries(manifest, only=None):
    entries = sorted(manifest.images, key=lambda e: e.image_id)
    if only:
        wanted = set(only)
        entries = [e for e in entries if e.image_id in wanted]
        missing = wanted - {e.image_id for e in entries}
        if missing:
            raise ValidationError(f"image ids not in manifest: {sorted(missing)}")
    return entries


def _map_images(fn, entries, threads: int):
    # the flag is an upper bound; oversubscribing CPU-bound numpy work past
    # the core count only adds contention
    workers = min(threads, os.cpu_count() or 1, len(entries))
    if workers <= 1:
        return [fn(e) for e in entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, entries))


def _write_segment_csv(segments, iou_result, path) -> None:
    lines = [
        "segment_id,predicted_class,size,size_in,size_bd,center_row,center_col,"
        "bbox_row0,bbox_col0,bbox_row1,bbox_col1,has_ground_truth,iou,iou_adj"
    ]
    for i in range(segments.n_segments):
        cells = [
            str(i + 1),
            str(int(segments.class_label[i])),
            str(int(segments.size[i])),
            str(int(segments.size_in[i])),
            str(int(segments.size_bd[i])),
            repr(float(segments.center[i, 0])),
            repr(float(segments.center[i, 1])),
            *(str(int(v)) for v in segments.bbox[i]),
        ]
        if iou_result is not None and iou_result.has_ground_truth[i]:
            cells.extend(["1", repr(float(iou_result.iou[i])), repr(float(iou_result.iou_adj[i]))])
        else:
            cells.extend(["0", "", ""])
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _provenance(manifest, args_ns, c_l, n_crop, predict_from, seed) -> dict:
    return {
        "classes": manifest.classes,
        "c_l": c_l,
        "n_crop": n_crop,
        "prediction_source": predict_from,
        "seed": seed,
        "images": len(manifest.images),
        "simulate_crops": bool(getattr(args_ns, "simulate_crops", False)),
        "feature_names": feature_catalog(manifest.classes),
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    rates = None
    if args.noise is not None:
        rates = [float(v) for v in str(args.noise).split(",") if v != ""]
    config = synth.SynthConfig(
        rows=_mapflag(args, "rows", 128),
        cols=_mapflag(args, "cols", 256),
        classes=_mapflag(args, "classes", 6),
        n_shapes=_mapflag(args, "shapes", 8),
        beta=_mapflag(args, "beta", 12.0),
        blur_radius=_mapflag(args, "blur", 2),
        noise_rate=rates[0] if rates else 0.0,
        c_l=_mapflag(args, "c_l", 4),
        n_crop=_mapflag(args, "n_crop", 4),
        snap_to_grid=bool(args.snap_to_grid),
        seed=_mapflag(args, "seed", 0),
    )
    manifest_path = synth.write_dataset(
        config,
        n_scenes=_mapflag(args, "scenes", 10),
        out_dir=args.out,
        emit=args.emit,
        noise_rates=rates,
        with_labels=not args.no_labels,
    )
    print(manifest_path)
    return 0


def _common_pipeline_settings(args, manifest):
    c_l = _mapflag(args, "c_l", manifest.c_l)
    n_crop = _mapflag(args, "n_crop", manifest.n_crop)
    predict_from = _mapflag(args, "predict_from", "mean")
    seed = _mapflag(args, "seed", 0)
    threads = _resolve_threads(args.threads)
    return c_l, n_crop, predict_from, seed, threads


def cmd_merge_crops(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    c_l, n_crop, _, _, threads = _common_pipeline_settings(args, manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = _sorted_entries(manifest, args.image)

    def work(entry):
        pyramid = _pyramid_for_entry(entry, manifest, c_l, n_crop, args.simulate_crops)
        for i, level in enumerate(pyramid.levels):
            tensor_io.save_probability_field(level, out / f"{entry.image_id}_level{i}.npy")
        tensor_io.save_probability_field(pyramid.mean, out / f"{entry.image_id}_mean.npy")
        return entry.image_id

    for image_id in _map_images(work, entries, threads):
        print(image_id)
    return 0


def cmd_heatmaps(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    c_l, n_crop, _, _, threads = _common_pipeline_settings(args, manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = _sorted_entries(manifest, args.image)

    def work(entry):
        pyramid = _pyramid_for_entry(entry, manifest, c_l, n_crop, args.simulate_crops)
        maps = compute_heatmaps(pyramid)
        for name in HEATMAP_NAMES:
            tensor_io.save_heat_map(maps[name], out / f"{entry.image_id}_{name}.npy")
        return entry.image_id

    for image_id in _map_images(work, entries, threads):
        print(image_id)
    return 0


def cmd_segments(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    c_l, n_crop, predict_from, _, threads = _common_pipeline_settings(args, manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = _sorted_entries(manifest, args.image)

    def work(entry):
        pyramid = _pyramid_for_entry(entry, manifest, c_l, n_crop, args.simulate_crops)
        labels = predict_labels(pyramid, source=predict_from)
        segments = connected_components(labels)
        iou_result = None
        if entry.labels is not None:
            gt = tensor_io.load_label_map(entry.labels, manifest.classes)
            iou_result = compute_iou(segments, gt)
        tensor_io.save_segment_ids(segments.ids, out / f"{entry.image_id}_segments.npy")
        tensor_io.save_label_map(labels, out / f"{entry.image_id}_predicted.npy", classes=manifest.classes)
        _write_segment_csv(segments, iou_result, out / f"{entry.image_id}_segments.csv")
        return entry.image_id

    for image_id in _map_images(work, entries, threads):
        print(image_id)
    return 0


def cmd_extract_metrics(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    c_l, n_crop, predict_from, seed, threads = _common_pipeline_settings(args, manifest)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    entries = _sorted_entries(manifest, args.image)
    per_image = _map_images(
        lambda e: _process_image(e, manifest, c_l, n_crop, args.simulate_crops, predict_from)["records"],
        entries,
        threads,
    )
    records = [r for image_records in per_image for r in image_records]
    table = MetricsTable.from_records(
        records,
        feature_catalog(manifest.classes),
        provenance=_provenance(manifest, args, c_l, n_crop, predict_from, seed),
    )
    table.to_csv(out)
    sidecar = out.with_suffix(".json")
    sidecar.write_text(json.dumps(table.provenance, indent=2) + "\n", encoding="utf-8")
    print(out)
    return 0


def cmd_correlate(args) -> int:
    table = MetricsTable.read_csv(args.metrics)
    corr = pearson_correlations(table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    render.write_correlation_csv(corr, out / "correlations.csv")
    (out / "correlations.json").write_text(json.dumps(corr, indent=2) + "\n", encoding="utf-8")
    render.save_correlation_figure(corr, out / "correlations.png")
    print(out / "correlations.csv")
    return 0


def _feature_sets_from_args(names, table) -> dict[str, list[str]]:
    classes = sum(1 for n in table.feature_names if n.startswith("class_prob_"))
    known = named_feature_sets(classes) if classes >= 2 else {}
    known["all"] = list(table.feature_names)  # works for any table, catalog-shaped or not
    sets = {}
    for requested in names:
        if requested in known:
            sets[requested] = known[requested]
        else:
            feats = [f for f in requested.split(",") if f]
            for f in feats:
                if f not in table.feature_names:
                    raise ValidationError(f"unknown feature or set {f!r}")
            sets[requested] = feats
    return sets


def cmd_train_meta(args) -> int:
    table = MetricsTable.read_csv(args.metrics)
    runs = _mapflag(args, "runs", 10)
    seed = _mapflag(args, "seed", 0)
    kinds = args.model or ["logistic", "linear"]
    feature_sets = _feature_sets_from_args(args.features or ["all"], table)
    logistic_cfg = None
    if getattr(args, "solver_max_iter", None) is not None:
        logistic_cfg = meta.LogisticConfig(max_iter=args.solver_max_iter)
    report = meta.run_protocol(table, kinds, feature_sets, runs=runs, seed=seed,
                               logistic_config=logistic_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    (out / "report.txt").write_text(report.format_text(), encoding="utf-8")
    render.save_report_figure(report, out / "report.png")
    # persist one model per combination, fit on the first split's training half
    mask = table.labeled_mask()
    split = meta.split_resample(int(mask.sum()), 1, seed)[0]
    for kind in kinds:
        task = "classify" if kind in meta.CLASSIFIER_KINDS else "regress"
        y = (table.iou_adj[mask] > 0.0).astype(float) if task == "classify" else table.iou_adj[mask]
        for set_name, names in feature_sets.items():
            X = table.columns(names)[mask]
            model = meta.fit_model(kind, X[split[0]], y[split[0]], names)
            model.save(out / f"model_{kind}_{set_name.replace(',', '+')}.json")
    print(out / "report.json")
    return 0


def cmd_select_greedy(args) -> int:
    table = MetricsTable.read_csv(args.metrics)
    criterion = args.criterion
    seed = _mapflag(args, "seed", 0)
    max_features = _mapflag(args, "max", 12)
    trajectory = meta.greedy_select(table, criterion, max_features, seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"trajectory_{criterion}"
    (out / f"{stem}.json").write_text(json.dumps(trajectory, indent=2) + "\n", encoding="utf-8")
    render.write_trajectory_csv(trajectory, out / f"{stem}.csv")
    render.save_trajectory_figure({criterion: trajectory}, out / f"{stem}.png")
    print(out / f"{stem}.json")
    return 0


def cmd_render(args) -> int:
    if args.heatmap is not None:
        heat = tensor_io.load_heat_map(args.heatmap)
        scale = "auto"
        if args.scale_min is not None or args.scale_max is not None:
            if args.scale_min is None or args.scale_max is None:
                raise ValidationError("fixed scaling needs both --scale-min and --scale-max")
            scale = (args.scale_min, args.scale_max)
        render.render_heatmap(heat, args.out, scale=scale)
    elif args.segments is not None:
        ids = tensor_io.load_segment_ids(args.segments)
        segments = connected_components(ids)  # re-derive per-segment geometry from the id map
        values, missing = _read_segment_values(args.values, args.column, segments.n_segments)
        render.render_segment_quality(segments, values, args.out, missing=missing)
    else:
        raise ValidationError("render needs --heatmap or --segments")
    print(args.out)
    return 0


def _read_segment_values(path, column, n_segments):
    if path is None:
        raise ValidationError("--segments rendering needs --values CSV")
    values = np.zeros(n_segments)
    missing = np.ones(n_segments, dtype=bool)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        try:
            sid_col = header.index("segment_id")
            val_col = header.index(column)
        except ValueError:
            raise ValidationError(f"values CSV needs columns segment_id and {column!r}") from None
        for line in fh:
            cells = line.rstrip("\n").split(",")
            sid = int(cells[sid_col])
            raw = cells[val_col]
            if raw != "" and 1 <= sid <= n_segments:
                values[sid - 1] = float(raw)
                missing[sid - 1] = False
    return values, missing


def cmd_pipeline(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    c_l, n_crop, predict_from, seed, threads = _common_pipeline_settings(args, manifest)
    runs = _mapflag(args, "runs", 10)
    render_images = _mapflag(args, "render_images", 1)
    out = Path(args.out)
    for sub in ("heatmaps", "segments", "reports", "models", "renders"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    entries = _sorted_entries(manifest, args.image)

    # the first entries (id order) keep their heavy arrays for rendering;
    # the rest return records only so memory stays flat across the dataset
    def work(indexed):
        index, entry = indexed
        result = _process_image(entry, manifest, c_l, n_crop, args.simulate_crops, predict_from)
        for name in HEATMAP_NAMES:
            tensor_io.save_heat_map(result["maps"][name], out / "heatmaps" / f"{entry.image_id}_{name}.npy")
        tensor_io.save_segment_ids(result["segments"].ids, out / "segments" / f"{entry.image_id}_segments.npy")
        _write_segment_csv(result["segments"], result["iou"], out / "segments" / f"{entry.image_id}_segments.csv")
        if index >= render_images:
            result = {"entry": entry, "records": result["records"]}
        return entry.image_id, result

    outputs = _map_images(work, list(enumerate(entries)), threads)
    records = []
    kept: dict[str, dict] = {}
    for image_id, result in outputs:
        records.extend(result["records"])
        if "maps" in result:
            kept[image_id] = result

    table = MetricsTable.from_records(
        records,
        feature_catalog(manifest.classes),
        provenance=_provenance(manifest, args, c_l, n_crop, predict_from, seed),
    )
    table.to_csv(out / "metrics.csv")
    (out / "metrics.json").write_text(json.dumps(table.provenance, indent=2) + "\n", encoding="utf-8")

    labeled = int(table.labeled_mask().sum())
    report = None
    if labeled >= 4:
        corr = pearson_correlations(table)
        render.write_correlation_csv(corr, out / "reports" / "correlations.csv")
        (out / "reports" / "correlations.json").write_text(json.dumps(corr, indent=2) + "\n", encoding="utf-8")
        render.save_correlation_figure(corr, out / "reports" / "correlations.png")

        kinds = args.model or ["logistic", "linear"]
        mask = table.labeled_mask()
        has_both_classes = np.unique(table.iou_adj[mask] > 0.0).size == 2
        if not has_both_classes:
            dropped = [k for k in kinds if k in meta.CLASSIFIER_KINDS]
            kinds = [k for k in kinds if k not in meta.CLASSIFIER_KINDS]
            if dropped:
                print(f"note: single-class targets, skipping {dropped}", file=sys.stderr)
        feature_sets = _feature_sets_from_args(args.features or ["all", "entropy-baseline"], table)
        # near-separable data legitimately runs the logistic solver to its
        # iteration cap; the pipeline bounds that budget (overridable)
        solver_iters = _mapflag(args, "solver_max_iter", 1500)
        logistic_cfg = meta.LogisticConfig(max_iter=solver_iters)
        report = (
            meta.run_protocol(table, kinds, feature_sets, runs=runs, seed=seed,
                              logistic_config=logistic_cfg)
            if kinds else None
        )
        if report is not None:
            report.save(out / "reports" / "report.json")
            (out / "reports" / "report.txt").write_text(report.format_text(), encoding="utf-8")
            render.save_report_figure(report, out / "reports" / "report.png")

        if args.greedy_max:
            trajectories = {}
            criteria = ("acc", "r2") if has_both_classes else ("r2",)
            for criterion in criteria:
                trajectory = meta.greedy_select(
                    table,
                    criterion,
                    args.greedy_max,
                    seed=seed,
                    logistic_config=meta.LogisticConfig(max_iter=300, tol=1e-6),
                )
                trajectories[criterion] = trajectory
                stem = f"trajectory_{criterion}"
                (out / "reports" / f"{stem}.json").write_text(
                    json.dumps(trajectory, indent=2) + "\n", encoding="utf-8"
                )
                render.write_trajectory_csv(trajectory, out / "reports" / f"{stem}.csv")
            render.save_trajectory_figure(trajectories, out / "reports" / "trajectory.png")

    # quality renders for the first images in id order
    predictor = None
    if labeled >= 4:
        mask = table.labeled_mask()
        split = meta.split_resample(labeled, 1, seed)[0]
        names = feature_catalog(manifest.classes)
        X = table.features[mask]
        y = table.iou_adj[mask]
        predictor = meta.fit_linear(X[split[0]], y[split[0]], names)
        predictor.save(out / "models" / "model_linear_all.json")
    for image_id, result in kept.items():
        segments = result["segments"]
        render.render_heatmap(
            result["maps"]["margin_mean"], out / "renders" / f"{image_id}_margin_mean.pgm", scale=(0.0, 1.0)
        )
        if result["iou"] is not None:
            render.render_segment_quality(
                segments,
                result["iou"].iou_adj,
                out / "renders" / f"{image_id}_quality_true.ppm",
                missing=~result["iou"].has_ground_truth,
            )
        if predictor is not None:
            values = np.zeros(segments.n_segments)
            missing = np.ones(segments.n_segments, dtype=bool)
            for rec in result["records"]:
                values[rec.segment_id - 1] = float(predictor.scores(rec.features[None, :])[0])
                missing[rec.segment_id - 1] = False
            render.render_segment_quality(
                segments, values, out / "renders" / f"{image_id}_quality_pred.ppm", missing=missing
            )
    print(out / "metrics.csv")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(parser, *, manifest=True):
    if manifest:
        parser.add_argument("--manifest", required=True, help="dataset manifest JSON")
        parser.add_argument("--image", action="append", help="restrict to an image id (repeatable)")
        parser.add_argument("--simulate-crops", action="store_true",
                            help="derive crop fields from a single full-frame field")
        parser.add_argument("--c-l", dest="c_l", type=int, default=None, help="crop distance override")
        parser.add_argument("--n-crop", dest="n_crop", type=int, default=None, help="crop count override")
    parser.add_argument("--config", default=None, help="JSON config file; explicit flags win")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or logical cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nested-metaseg",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="exit codes: 2 format error, 3 geometry error, 4 validation error, 5 degenerate input",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--shapes", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--blur", type=int, default=None)
    p.add_argument("--noise", default=None, help="noise rate, or comma list cycled over scenes")
    p.add_argument("--c-l", dest="c_l", type=int, default=None)
    p.add_argument("--n-crop", dest="n_crop", type=int, default=None)
    p.add_argument("--snap-to-grid", action="store_true")
    p.add_argument("--emit", choices=("crops", "base"), default="crops")
    p.add_argument("--no-labels", action="store_true")
    _add_common(p, manifest=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("merge-crops", help="write merged per-level fields and their mean")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_merge_crops)

    p = sub.add_parser("heatmaps", help="write the seven dispersion heat maps per image")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_heatmaps)

    p = sub.add_parser("segments", help="write segment maps and IoU tables")
    p.add_argument("--out", required=True)
    p.add_argument("--predict-from", dest="predict_from", choices=("mean", "merged"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_segments)

    p = sub.add_parser("extract-metrics", help="aggregate segment-wise metrics to CSV")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--predict-from", dest="predict_from", choices=("mean", "merged"), default=None)
    _add_common(p)
    p.set_defaults(func=cmd_extract_metrics)

    p = sub.add_parser("correlate", help="per-feature Pearson correlation report")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, manifest=False)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("train-meta", help="train and evaluate meta models")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", action="append", choices=meta.MODEL_KINDS,
                   help="model kind (repeatable; default logistic + linear)")
    p.add_argument("--features", action="append",
                   help="feature set name or comma list of features (repeatable; default 'all')")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--solver-max-iter", dest="solver_max_iter", type=int, default=None,
                   help="iteration cap for the logistic solver (default: library default)")
    _add_common(p, manifest=False)
    p.set_defaults(func=cmd_train_meta)

    p = sub.add_parser("select-greedy", help="greedy forward metric selection")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--criterion", choices=("acc", "r2"), required=True)
    p.add_argument("--max", type=int, default=None, help="trajectory length (default 12)")
    _add_common(p, manifest=False)
    p.set_defaults(func=cmd_select_greedy)

    p = sub.add_parser("render", help="render a heat map (PGM) or segment quality (PPM)")
    p.add_argument("--heatmap", default=None, help="heat map NPY")
    p.add_argument("--segments", default=None, help="segment id NPY")
    p.add_argument("--values", default=None, help="per-segment CSV (from the segments command)")
    p.add_argument("--column", default="iou_adj", help="CSV column to color by")
    p.add_argument("--scale-min", dest="scale_min", type=float, default=None)
    p.add_argument("--scale-max", dest="scale_max", type=float, default=None)
    p.add_argument("--out", required=True)
    _add_common(p, manifest=False)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("pipeline", help="full pipeline: merge, maps, segments, metrics, reports")
    p.add_argument("--out", required=True)
    p.add_argument("--predict-from", dest="predict_from", choices=("mean", "merged"), default=None)
    p.add_argument("--model", action="append", choices=meta.MODEL_KINDS)
    p.add_argument("--features", action="append")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--solver-max-iter", dest="solver_max_iter", type=int, default=None,
                   help="iteration cap for the logistic solver (pipeline default 1500)")
    p.add_argument("--greedy-max", dest="greedy_max", type=int, default=None)
    p.add_argument("--render-images", dest="render_images", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return args.func(args)
    except NestedMetasegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for klass, code in EXIT_CODES.items():
            if isinstance(exc, klass):
                return code
        return 1


if __name__ == "__main__":
    sys.exit(main())
