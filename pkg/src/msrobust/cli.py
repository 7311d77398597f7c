"""Command-line pipeline: ingest, split, poison, corrupt, eval, report, pipeline.

Every stage reads and writes manifests; re-running an identical command over
identical inputs reproduces byte-identical outputs. Per-tile randomness always
flows through core.derive_seed(master, tile_id, stage), so the worker count
only changes wall-clock, never bytes. Structured JSON logs on stderr record
every derived seed.
"""

from __future__ import annotations

import configparser
import csv
import glob
import json
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import click
import numpy as np

from msrobust import corrupt as corrupt_mod
from msrobust import metrics as metrics_mod
from msrobust import poison as poison_mod
from msrobust import tiffio
from msrobust.core import (
    SplitManifest,
    default_class_map,
    derive_seed,
    re_index_labels,
    read_class_map,
    read_manifest,
    write_manifest,
)
from msrobust.errors import ConfigError, MissingInputError, MsRobustError
from msrobust.ingest import IngestConfig, convert_image_16to8, select_bands, tile_pair
from msrobust.splits import SplitPlan, apply_assignment, assign_splits

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING_INPUT = 3
EXIT_STAGE_FAILURE = 4

_log_lock = threading.Lock()


def log_event(event, **fields):
    record = {"event": event, **fields}
    with _log_lock:
        print(json.dumps(record), file=sys.stderr)


def _fail(exc):
    log_event("error", kind=type(exc).__name__, message=str(exc))
    if isinstance(exc, ConfigError):
        raise SystemExit(EXIT_CONFIG)
    if isinstance(exc, MissingInputError):
        raise SystemExit(EXIT_MISSING_INPUT)
    raise SystemExit(EXIT_STAGE_FAILURE)


def _pool(threads):
    workers = threads if threads and threads > 0 else (os.cpu_count() or 1)
    return ThreadPoolExecutor(max_workers=workers)


def _parse_fractions(text):
    parts = [float(p) for p in str(text).split(",")]
    if len(parts) != 3:
        raise ConfigError(f"fractions must be three comma-separated values, got {text!r}")
    return tuple(parts)


def _tile_paths(tile_id):
    """Manifest-relative image/label paths for one tile."""
    return (
        os.path.join("tiles", f"{tile_id}.tif"),
        os.path.join("tiles", f"{tile_id}.labels.tif"),
    )


def _abspath(manifest_path, rel):
    return os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(manifest_path)), rel))


def _load_tile(manifest_path, record, bands):
    image = tiffio.read_image(_abspath(manifest_path, record.image_path), bands=bands)
    labels = tiffio.read_label_mask(_abspath(manifest_path, record.label_path), indexed=True)
    return image, labels


def _copy_tile(manifest_path, record, out_dir, bands):
    """Re-emit a tile unchanged into a new dataset directory."""
    image, labels = _load_tile(manifest_path, record, bands)
    img_rel, lbl_rel = _tile_paths(record.tile_id)
    tiffio.write_image(os.path.join(out_dir, img_rel), image)
    tiffio.write_label_mask(os.path.join(out_dir, lbl_rel), labels)
    return replace(record, image_path=img_rel, label_path=lbl_rel)


# ---------------------------------------------------------------- ingest


def _discover_parents(input_dir):
    pairs = []
    for img in sorted(glob.glob(os.path.join(input_dir, "*.tif"))):
        if img.endswith(".labels.tif"):
            continue
        pid = os.path.splitext(os.path.basename(img))[0]
        lbl = os.path.join(input_dir, f"{pid}.labels.tif")
        if not os.path.exists(lbl):
            raise MissingInputError(f"no label file for parent {pid!r}: {lbl}")
        pairs.append((pid, img, lbl))
    if not pairs:
        raise MissingInputError(f"no parent .tif files under {input_dir}")
    return pairs


def _read_parent_meta(input_dir):
    path = os.path.join(input_dir, "parents.csv")
    meta = {}
    if os.path.exists(path):
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                try:
                    meta[row["parent_id"]] = {
                        "location": row.get("location", ""),
                        "view_angle": float(row.get("view_angle") or 0.0),
                        "azimuth": float(row.get("azimuth") or 0.0),
                    }
                except (KeyError, ValueError) as exc:
                    raise ConfigError(f"{path}: malformed row {row!r} ({exc})") from exc
    return meta


def run_ingest(input_dir, out_dir, config, bands_in, classmap_path, seed, fractions, threads):
    class_map = read_class_map(classmap_path) if classmap_path else default_class_map()
    parents = _discover_parents(input_dir)
    meta = _read_parent_meta(input_dir)
    os.makedirs(out_dir, exist_ok=True)

    def process(parent):
        pid, img_path, lbl_path = parent
        image = tiffio.read_image(img_path, bands=bands_in)
        labels = tiffio.read_label_mask(lbl_path, indexed=False)
        converted = select_bands(convert_image_16to8(image, config), config.bands_out)
        indexed = re_index_labels(labels, class_map)
        m = meta.get(pid, {})
        tiles = tile_pair(
            converted,
            indexed,
            config,
            pid,
            location=m.get("location", ""),
            view_angle=m.get("view_angle", 0.0),
            azimuth=m.get("azimuth", 0.0),
        )
        out_records = []
        for rec, tile_img, tile_lbl in tiles:
            img_rel, lbl_rel = _tile_paths(rec.tile_id)
            tiffio.write_image(os.path.join(out_dir, img_rel), tile_img)
            tiffio.write_label_mask(os.path.join(out_dir, lbl_rel), tile_lbl)
            out_records.append(replace(rec, image_path=img_rel, label_path=lbl_rel))
        log_event("ingest_parent", parent_id=pid, tiles=len(out_records))
        return out_records

    with _pool(threads) as pool:
        chunks = list(pool.map(process, parents))
    records = [rec for chunk in chunks for rec in chunk]
    manifest = SplitManifest(
        records=tuple(records),
        fractions=fractions,
        class_map=class_map,
        seed=seed,
        bands=config.bands_out,
    )
    path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(path, manifest)
    log_event("ingest_done", tiles=len(records), manifest=path)
    return path


# ---------------------------------------------------------------- split


def run_split(manifest_path, plan, out_path):
    manifest = read_manifest(manifest_path)
    groups = {}
    for rec in manifest.records:
        info = groups.setdefault(
            rec.parent_id,
            {"count": 0, "location": rec.location, "view_angle": rec.view_angle, "azimuth": rec.azimuth},
        )
        info["count"] += 1
    parents = [
        (pid, info["count"], {k: info[k] for k in ("location", "view_angle", "azimuth")})
        for pid, info in sorted(groups.items())
    ]
    assignment = assign_splits(parents, plan)
    # The manifest keeps the dataset master seed; the plan seed is logged.
    out = apply_assignment(replace(manifest, fractions=plan.fractions), assignment)
    write_manifest(out_path, out)
    counts = {s: len(out.tiles_in_split(s)) for s in ("train", "val", "test")}
    log_event("split_done", seed=plan.seed, assignment_counts=counts, manifest=out_path)
    return out_path


# ---------------------------------------------------------------- poison


def _bbox(region):
    rows = np.flatnonzero(region.any(axis=1))
    cols = np.flatnonzero(region.any(axis=0))
    return [int(rows[0]), int(cols[0]), int(rows[-1] - rows[0] + 1), int(cols[-1] - cols[0] + 1)]


def run_poison(manifest_path, out_dir, spec, stage, threads):
    manifest = read_manifest(manifest_path)
    bands = manifest.bands or None
    os.makedirs(out_dir, exist_ok=True)
    texture = None
    if spec.kind == "texture":
        texture = tiffio.read_image(spec.texture_path, bands=bands)

    if stage == "train":
        selected = set(
            poison_mod.select_poison_subset(
                manifest, spec, lambda rec: _load_tile(manifest_path, rec, bands)[1]
            )
        )
        log_event("poison_selected", count=len(selected), tile_ids=sorted(selected))
    else:
        selected = {rec.tile_id for rec in manifest.tiles_in_split("test")}
        if not selected:
            raise MissingInputError("manifest has no test tiles to attack")

    stage_tag = f"poison-{stage}"

    def process(record):
        if record.tile_id not in selected:
            return _copy_tile(manifest_path, record, out_dir, bands)
        image, labels = _load_tile(manifest_path, record, bands)
        seed = derive_seed(spec.seed, record.tile_id, stage_tag)
        log_event("derive_seed", tile_id=record.tile_id, stage=stage_tag, seed=seed)
        prov = {"stage": stage_tag, "spec": spec.to_json_dict(), "seed": seed}
        if stage == "train":
            if spec.kind == "texture":
                image = poison_mod.apply_texture_poison_train(image, labels, texture, spec, seed)
            else:
                image, labels = poison_mod.apply_fine_grained_trigger(image, labels, spec, seed)
        else:
            if spec.kind == "texture":
                image, region = poison_mod.insert_texture_eval(image, texture, spec, seed)
                prov["region"] = _bbox(region)
            else:
                # Trigger only; evaluation keeps clean labels as ground truth.
                image, _ = poison_mod.apply_fine_grained_trigger(image, labels, spec, seed)
        img_rel, lbl_rel = _tile_paths(record.tile_id)
        tiffio.write_image(os.path.join(out_dir, img_rel), image)
        tiffio.write_label_mask(os.path.join(out_dir, lbl_rel), labels)
        return replace(record, image_path=img_rel, label_path=lbl_rel).with_provenance(prov)

    with _pool(threads) as pool:
        records = list(pool.map(process, manifest.records))
    out = manifest.with_records(records)
    path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(path, out)
    log_event("poison_done", stage=stage, poisoned=len(selected), manifest=path)
    return path


# ---------------------------------------------------------------- corrupt


def run_corrupt(manifest_path, out_root, spec_template, severities, threads):
    manifest = read_manifest(manifest_path)
    bands = manifest.bands or None
    test_records = manifest.tiles_in_split("test")
    if not test_records:
        raise MissingInputError("manifest has no test tiles to corrupt")
    out_paths = []
    for severity in severities:
        sev_spec = replace(spec_template, severity=severity)
        out_dir = os.path.join(out_root, sev_spec.kind, str(severity))
        os.makedirs(out_dir, exist_ok=True)
        stage_tag = f"{sev_spec.kind}-sev{severity}"

        def process(record, sev_spec=sev_spec, stage_tag=stage_tag, out_dir=out_dir):
            image, labels = _load_tile(manifest_path, record, bands)
            seed = derive_seed(sev_spec.seed, record.tile_id, stage_tag)
            log_event("derive_seed", tile_id=record.tile_id, stage=stage_tag, seed=seed)
            tile_spec = replace(sev_spec, seed=seed)
            image = corrupt_mod.apply_corruption(image, tile_spec)
            img_rel, lbl_rel = _tile_paths(record.tile_id)
            tiffio.write_image(os.path.join(out_dir, img_rel), image)
            tiffio.write_label_mask(os.path.join(out_dir, lbl_rel), labels)
            prov = {"stage": stage_tag, "spec": sev_spec.to_json_dict(), "seed": seed}
            return replace(record, image_path=img_rel, label_path=lbl_rel).with_provenance(prov)

        with _pool(threads) as pool:
            new_test = list(pool.map(process, test_records))
        out = manifest.with_records(new_test)  # corrupted sets carry test tiles only
        path = os.path.join(out_dir, "manifest.jsonl")
        write_manifest(path, out)
        log_event("corrupt_done", kind=sev_spec.kind, severity=severity, manifest=path)
        out_paths.append(path)
    return out_paths


# ---------------------------------------------------------------- eval


def _poison_provenance(record):
    for entry in reversed(record.provenance):
        if str(entry.get("stage", "")).startswith("poison-eval"):
            return entry
    return None


def run_eval(manifest_path, pred_dirs, mode, out_dir, gt_dir=None, poison_meta=None, severity=None):
    manifest = read_manifest(manifest_path)
    meta = read_manifest(poison_meta) if poison_meta else manifest
    meta_by_id = {rec.tile_id: rec for rec in meta.records}
    records = manifest.tiles_in_split("test")
    if not records:
        raise MissingInputError("manifest has no test tiles to evaluate")
    os.makedirs(out_dir, exist_ok=True)
    unclass = manifest.class_map.unclassified

    report_paths = []
    table_reports = []
    for model_id, pred_dir in pred_dirs:
        counts = metrics_mod.ConfusionCounts.zeros()
        asr_hits = 0
        asr_size = 0
        for rec in records:
            if gt_dir:
                gt_path = os.path.join(gt_dir, f"{rec.tile_id}.labels.tif")
                if not os.path.exists(gt_path):
                    gt_path = os.path.join(gt_dir, f"{rec.tile_id}.tif")
            else:
                gt_path = _abspath(manifest_path, rec.label_path)
            gt = tiffio.read_label_mask(gt_path, indexed=True)
            if pred_dir == "@gt":  # self-evaluation: predictions equal ground truth
                pred = gt
            else:
                pred_path = os.path.join(pred_dir, f"{rec.tile_id}.tif")
                pred = tiffio.read_label_mask(pred_path, indexed=True)
            counts = counts + metrics_mod.confusion_counts(pred, gt)

            if mode == "attacked":
                prov = _poison_provenance(meta_by_id.get(rec.tile_id, rec))
                if prov is None:
                    continue
                spec = prov["spec"]
                if spec["kind"] == "texture":
                    r0, c0, h, w = prov["region"]
                    region = np.zeros(gt.values.shape, dtype=bool)
                    region[r0 : r0 + h, c0 : c0 + w] = True
                    hits, size = metrics_mod.asr_region_counts_texture(
                        pred, region, spec["source_class"]
                    )
                else:
                    hits, size = metrics_mod.asr_region_counts_targeted(
                        pred, gt, spec["source_class"], spec["target_class"]
                    )
                asr_hits += hits
                asr_size += size

        asr = None
        if mode == "attacked":
            asr = (asr_hits / asr_size) if asr_size else 0.0
        variants = {}
        for variant, exclude in (("exclude_unclassified", unclass), ("all_classes", frozenset())):
            mpa, miou = metrics_mod.micro_metrics(counts, exclude)
            report = metrics_mod.MetricsReport(
                mode=mode,
                model_id=model_id,
                mPA=mpa,
                mIoU=miou,
                per_class_iou=metrics_mod.per_class_iou(counts),
                asr=asr,
                severity=severity,
                notes={
                    "exclusion": sorted(exclude),
                    "tiles": len(records),
                    "pixels": counts.pixel_total,
                },
            )
            variants[variant] = report
        table_reports.append(variants["exclude_unclassified"])
        doc = {
            "model_id": model_id,
            "mode": mode,
            "severity": severity,
            "variants": {k: v.to_json_dict() for k, v in variants.items()},
        }
        path = os.path.join(out_dir, f"report_{model_id}_{mode}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        report_paths.append(path)
        log_event("eval_model", model_id=model_id, mode=mode, mPA=variants["exclude_unclassified"].mPA)

    table_text, _ = metrics_mod.build_report_table(table_reports)
    table_path = os.path.join(out_dir, "comparison_table.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(table_text)
    log_event("eval_done", reports=report_paths, table=table_path)
    return report_paths, table_path


def _load_report_file(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return {
        variant: metrics_mod.MetricsReport.from_json_dict(body)
        for variant, body in doc["variants"].items()
    }


def run_report(report_files, out_path, aggregate=False, variant="exclude_unclassified"):
    reports = []
    for path in report_files:
        variants = _load_report_file(path)
        if variant not in variants:
            raise ConfigError(f"{path} has no variant {variant!r}")
        reports.append(variants[variant])
    if aggregate:
        by_key = {}
        for rep in reports:
            by_key.setdefault((rep.model_id, rep.mode), []).append(rep)
        reports = [metrics_mod.aggregate_severities(group) for group in by_key.values()]
    table_text, rows = metrics_mod.build_report_table(reports)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(table_text)
    rows_path = os.path.splitext(out_path)[0] + ".json"
    with open(rows_path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
    log_event("report_done", rows=len(rows), table=out_path, rows_file=rows_path)
    return table_text


# ---------------------------------------------------------------- pipeline config


def _get(cfg, section, key, fallback=None):
    try:
        return cfg.get(section, key)
    except (configparser.NoSectionError, configparser.NoOptionError):
        return fallback


def run_pipeline(config_path, threads_override=None):
    cfg = configparser.ConfigParser()
    read = cfg.read(config_path)
    if not read:
        raise MissingInputError(f"config not found: {config_path}")

    workspace = os.environ.get("MSROBUST_WORKSPACE") or _get(cfg, "pipeline", "workspace", "")
    if not workspace:
        workspace = os.path.dirname(os.path.abspath(config_path))
    master_seed = int(_get(cfg, "pipeline", "master_seed", "0"))
    threads = threads_override or int(_get(cfg, "pipeline", "threads", "0"))

    def wpath(rel):
        return os.path.join(workspace, rel)

    # ingest
    ingest_cfg = IngestConfig(
        gamma=float(_get(cfg, "ingest", "gamma", "2.2")),
        clip_low_fraction=float(_get(cfg, "ingest", "clip_low_fraction", "0.01")),
        tile_size=int(_get(cfg, "ingest", "tile_size", "1024")),
        bands_out=tuple(_get(cfg, "ingest", "bands_out", "R,G,B,NIR2").split(",")),
    )
    bands_in = _get(cfg, "ingest", "bands_in")
    bands_in = tuple(bands_in.split(",")) if bands_in else None
    fractions = _parse_fractions(_get(cfg, "split", "fractions", "0.8,0.08,0.12"))
    manifest = run_ingest(
        input_dir=wpath(_get(cfg, "ingest", "input_dir", "inputs")),
        out_dir=wpath("out/clean"),
        config=ingest_cfg,
        bands_in=bands_in,
        classmap_path=wpath(_get(cfg, "ingest", "classmap")) if _get(cfg, "ingest", "classmap") else None,
        seed=master_seed,
        fractions=fractions,
        threads=threads,
    )

    # split
    plan = SplitPlan(
        fractions=fractions,
        strat_keys=tuple(k for k in _get(cfg, "split", "strat_keys", "location").split(",") if k),
        angle_bin_width=float(_get(cfg, "split", "angle_bin_width", "10")),
        seed=derive_seed(master_seed, "*", "split"),
        tolerance=float(_get(cfg, "split", "tolerance", "0.02")),
    )
    run_split(manifest, plan, manifest)

    class_map = read_manifest(manifest).class_map
    artifacts = {"manifest": manifest}

    # poison (train + eval sets)
    if cfg.has_section("poison"):
        kind = _get(cfg, "poison", "kind", "square")
        spec = poison_mod.PoisonSpec(
            kind=kind,
            source_class=class_map.index_of(_get(cfg, "poison", "source", "foliage")),
            target_class=class_map.index_of(_get(cfg, "poison", "target", "building"))
            if kind != "texture"
            else -1,
            fraction=float(_get(cfg, "poison", "fraction", "0.1")),
            square_side=int(_get(cfg, "poison", "square_side", "50")),
            line_thickness=int(_get(cfg, "poison", "line_thickness", "5")),
            trigger_nir_value=int(_get(cfg, "poison", "trigger_nir_value", "0")),
            texture_path=wpath(_get(cfg, "poison", "texture", "")) if _get(cfg, "poison", "texture") else "",
            min_source_pixels=int(_get(cfg, "poison", "min_source_pixels", "1")),
            seed=derive_seed(master_seed, "*", "poison"),
        )
        artifacts["poison_train"] = run_poison(manifest, wpath("out/poison/train"), spec, "train", threads)
        artifacts["poison_eval"] = run_poison(manifest, wpath("out/poison/eval"), spec, "eval", threads)

    # corrupt
    if cfg.has_section("corrupt"):
        sev_text = _get(cfg, "corrupt", "severities", "all")
        severities = (1, 2, 3, 4, 5) if sev_text == "all" else tuple(int(s) for s in sev_text.split(","))
        params_path = _get(cfg, "corrupt", "params")
        spec = corrupt_mod.CorruptionSpec(
            kind=_get(cfg, "corrupt", "kind", "snow"),
            severity=severities[0],
            nir_mode=_get(cfg, "corrupt", "nir_mode", "realistic"),
            seed=derive_seed(master_seed, "*", "corrupt"),
            params=corrupt_mod.load_severity_params(wpath(params_path) if params_path else None),
        )
        artifacts["corrupt"] = run_corrupt(manifest, wpath("out/corrupt"), spec, severities, threads)

    # eval (self-eval smoke by default; external prediction dirs when given)
    if cfg.has_section("eval"):
        mode = _get(cfg, "eval", "mode", "benign")
        pred_dirs = []
        if _get(cfg, "eval", "self_eval", "false").lower() in ("1", "true", "yes"):
            pred_dirs.append(("self", "@gt"))
        raw = _get(cfg, "eval", "pred_dirs", "")
        for item in filter(None, (p.strip() for p in raw.split(","))):
            model_id, _, path = item.partition("=")
            pred_dirs.append((model_id, wpath(path)))
        if pred_dirs:
            reports, table = run_eval(manifest, pred_dirs, mode, wpath("out/reports"))
            artifacts["reports"] = reports
            artifacts["table"] = table

    log_event("pipeline_done", artifacts={k: v for k, v in artifacts.items()})
    return artifacts


# ---------------------------------------------------------------- click wiring


@click.group()
def main():
    """Build poisoned/corrupted multispectral segmentation datasets and score
    prediction masks with robustness metrics."""


def _wrap(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except MsRobustError as exc:
        _fail(exc)
    except FileNotFoundError as exc:
        _fail(MissingInputError(str(exc)))


@main.command()
@click.option("--input-dir", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--classmap", type=click.Path(), default=None, help="class-map JSON (default: built-in placeholder map)")
@click.option("--gamma", default=2.2, show_default=True)
@click.option("--clip-low-fraction", default=0.01, show_default=True)
@click.option("--tile-size", default=1024, show_default=True)
@click.option("--bands-in", default=None, help="comma-separated band names of the input files")
@click.option("--bands-out", default="R,G,B,NIR2", show_default=True)
@click.option("--fractions", default="0.8,0.08,0.12", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--threads", default=0, show_default=True, help="0 = one worker per CPU")
def ingest(input_dir, out_dir, classmap, gamma, clip_low_fraction, tile_size, bands_in, bands_out, fractions, seed, threads):
    """Convert 16-bit parents to 8-bit band stacks and cut them into tiles."""
    config = _wrap(
        IngestConfig,
        gamma=gamma,
        clip_low_fraction=clip_low_fraction,
        tile_size=tile_size,
        bands_out=tuple(bands_out.split(",")),
    )
    _wrap(
        run_ingest,
        input_dir,
        out_dir,
        config,
        tuple(bands_in.split(",")) if bands_in else None,
        classmap,
        seed,
        _wrap(_parse_fractions, fractions),
        threads,
    )


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--fractions", default="0.8,0.08,0.12", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--strat-keys", default="location,view_angle_bin,azimuth_bin", show_default=True)
@click.option("--angle-bin-width", default=10.0, show_default=True)
@click.option("--tolerance", default=0.02, show_default=True)
@click.option("--out", "out_path", default=None, help="output manifest (default: in place)")
def split(manifest_path, fractions, seed, strat_keys, angle_bin_width, tolerance, out_path):
    """Assign parents (and so their tiles) to train/val/test."""
    plan = _wrap(
        SplitPlan,
        fractions=_wrap(_parse_fractions, fractions),
        strat_keys=tuple(k for k in strat_keys.split(",") if k),
        angle_bin_width=angle_bin_width,
        seed=seed,
        tolerance=tolerance,
    )
    _wrap(run_split, manifest_path, plan, out_path or manifest_path)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--kind", type=click.Choice(["line", "square", "texture"]), required=True)
@click.option("--source", required=True, help="source class (name or index)")
@click.option("--target", default=None, help="target class (line/square only)")
@click.option("--fraction", default=0.10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--texture", "texture_path", type=click.Path(), default="")
@click.option("--square-side", default=50, show_default=True)
@click.option("--line-thickness", default=5, show_default=True)
@click.option("--trigger-nir-value", default=0, show_default=True)
@click.option("--min-source-pixels", default=1, show_default=True)
@click.option("--patch-min", default=100, show_default=True)
@click.option("--patch-max", default=300, show_default=True)
@click.option("--stage", type=click.Choice(["train", "eval"]), default="train", show_default=True)
@click.option("--threads", default=0, show_default=True)
def poison(manifest_path, out_dir, kind, source, target, fraction, seed, texture_path, square_side, line_thickness, trigger_nir_value, min_source_pixels, patch_min, patch_max, stage, threads):
    """Poison the train split, or build the attacked evaluation set."""

    def build():
        manifest = read_manifest(manifest_path)
        cm = manifest.class_map
        return poison_mod.PoisonSpec(
            kind=kind,
            source_class=cm.index_of(source),
            target_class=cm.index_of(target) if target is not None else -1,
            fraction=fraction,
            square_side=square_side,
            line_thickness=line_thickness,
            trigger_nir_value=trigger_nir_value,
            texture_path=texture_path,
            patch_range=(patch_min, patch_max),
            min_source_pixels=min_source_pixels,
            seed=seed,
        )

    spec = _wrap(build)
    _wrap(run_poison, manifest_path, out_dir, spec, stage, threads)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", "out_root", required=True, type=click.Path())
@click.option("--kind", type=click.Choice(["snow", "fog"]), required=True)
@click.option("--severity", type=click.IntRange(1, 5), default=None)
@click.option("--all-severities", is_flag=True, default=False)
@click.option("--nir-mode", type=click.Choice(["realistic", "unrealistic", "none"]), default="realistic", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--params", "params_path", type=click.Path(), default=None, help="severity-table JSON override")
@click.option("--threads", default=0, show_default=True)
def corrupt(manifest_path, out_root, kind, severity, all_severities, nir_mode, seed, params_path, threads):
    """Write corrupted copies of the test split at one or all severities."""
    if not all_severities and severity is None:
        _fail(ConfigError("pass --severity N or --all-severities"))
    severities = (1, 2, 3, 4, 5) if all_severities else (severity,)
    spec = _wrap(
        lambda: corrupt_mod.CorruptionSpec(
            kind=kind,
            severity=severities[0],
            nir_mode=nir_mode,
            seed=seed,
            params=corrupt_mod.load_severity_params(params_path),
        )
    )
    _wrap(run_corrupt, manifest_path, out_root, spec, severities, threads)


@main.command(name="eval")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--pred-dir", "pred_dirs", multiple=True, help="model_id=path, repeatable; path @gt self-evaluates")
@click.option("--gt-dir", default=None, type=click.Path(), help="override ground-truth mask directory")
@click.option("--mode", type=click.Choice(["benign", "attacked"]), default="benign", show_default=True)
@click.option("--poison-meta", default=None, type=click.Path(), help="manifest carrying poison provenance (default: --manifest)")
@click.option("--severity", type=click.IntRange(1, 5), default=None, help="tag reports with a corruption severity")
@click.option("--out", "out_dir", required=True, type=click.Path())
def eval_cmd(manifest_path, pred_dirs, gt_dir, mode, poison_meta, severity, out_dir):
    """Score prediction masks against a manifest's ground truth."""
    if not pred_dirs:
        _fail(ConfigError("at least one --pred-dir model_id=path is required"))
    parsed = []
    for item in pred_dirs:
        model_id, sep, path = item.partition("=")
        if not sep or not model_id:
            _fail(ConfigError(f"--pred-dir must be model_id=path, got {item!r}"))
        parsed.append((model_id, path))
    _wrap(run_eval, manifest_path, parsed, mode, out_dir, gt_dir, poison_meta, severity)


@main.command()
@click.argument("report_files", nargs=-1, required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--aggregate-severities", is_flag=True, default=False)
@click.option("--variant", default="exclude_unclassified", show_default=True)
def report(report_files, out_path, aggregate_severities, variant):
    """Render a comparison table from eval report files."""
    text = _wrap(run_report, report_files, out_path, aggregate_severities, variant)
    click.echo(text, nl=False)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--threads", default=None, type=int, help="override [pipeline] threads")
def pipeline(config_path, threads):
    """Run ingest -> split -> poison -> corrupt -> eval from one config file."""
    _wrap(run_pipeline, config_path, threads)


if __name__ == "__main__":
    main()
