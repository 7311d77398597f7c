"""Confusion-matrix robustness metrics: micro mPA/mIoU, per-class IoU, ASR.

Counts are exact integer tallies and compose additively across images, so
dataset-level scores are computed once from the summed matrix (global micro
averaging). "Benign" vs "attacked" is not a different formula, only a record
of which evaluation set produced the counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from msrobust.core import NUM_CLASSES, confusion_from_masks
from msrobust.errors import (
    ConfigError,
    DimensionMismatch,
    EmptyAfterExclusion,
    EmptySourceRegion,
    MixedModels,
    UnindexedMask,
)


@dataclass(frozen=True, eq=False)
class ConfusionCounts:
    """matrix[g][p] = number of pixels with ground truth g predicted as p."""

    matrix: np.ndarray
    num_classes: int = NUM_CLASSES

    def __eq__(self, other):
        if not isinstance(other, ConfusionCounts):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(self.matrix, other.matrix)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.int64)
        if m.shape != (self.num_classes, self.num_classes):
            raise ConfigError(f"matrix shape {m.shape} != ({self.num_classes},)*2")
        if (m < 0).any():
            raise ConfigError("negative confusion counts")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def pixel_total(self):
        return int(self.matrix.sum())

    @classmethod
    def zeros(cls, num_classes=NUM_CLASSES):
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64), num_classes)

    def __add__(self, other):
        if self.num_classes != other.num_classes:
            raise ConfigError("cannot add counts with different class counts")
        return ConfusionCounts(self.matrix + other.matrix, self.num_classes)


@dataclass(frozen=True)
class MetricsReport:
    mode: str  # benign | attacked
    model_id: str
    mPA: float
    mIoU: float
    per_class_iou: dict[int, float]
    asr: float | None = None
    severity: int | None = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("benign", "attacked"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if (self.asr is not None) != (self.mode == "attacked"):
            raise ConfigError("asr must be present exactly when mode='attacked'")
        for name, score in (("mPA", self.mPA), ("mIoU", self.mIoU), ("asr", self.asr)):
            if score is not None and not 0.0 <= score <= 1.0:
                raise ConfigError(f"{name}={score} outside [0, 1]")

    def to_json_dict(self):
        return {
            "mode": self.mode,
            "model_id": self.model_id,
            "mPA": self.mPA,
            "mIoU": self.mIoU,
            "per_class_iou": {str(k): v for k, v in sorted(self.per_class_iou.items())},
            "asr": self.asr,
            "severity": self.severity,
            "notes": self.notes,
        }

    @classmethod
    def from_json_dict(cls, doc):
        return cls(
            mode=doc["mode"],
            model_id=doc["model_id"],
            mPA=doc["mPA"],
            mIoU=doc["mIoU"],
            per_class_iou={int(k): float(v) for k, v in doc["per_class_iou"].items()},
            asr=doc["asr"],
            severity=doc["severity"],
            notes=doc.get("notes", {}),
        )


def confusion_counts(pred, gt, num_classes=NUM_CLASSES) -> ConfusionCounts:
    """Exact per-pixel tally; unclassified pixels are retained at this stage."""
    if not (pred.indexed and gt.indexed):
        raise UnindexedMask("confusion counts require indexed masks")
    if pred.values.shape != gt.values.shape:
        raise DimensionMismatch(f"pred {pred.values.shape} vs gt {gt.values.shape}")
    return ConfusionCounts(confusion_from_masks(gt.values, pred.values, num_classes), num_classes)


def micro_metrics(counts: ConfusionCounts, exclude=frozenset()):
    """Global micro (mPA, mIoU) restricted to ground-truth classes not excluded.

    mPA is correct/total over included-gt pixels. mIoU is the micro Jaccard
    sum(TP_c) / sum(TP_c + FP_c + FN_c) over included classes, with FP counted
    only from included-ground-truth pixels.
    """
    exclude = frozenset(exclude)
    if not exclude <= set(range(counts.num_classes)):
        raise ConfigError(f"exclude {sorted(exclude)} outside class range")
    included = [c for c in range(counts.num_classes) if c not in exclude]
    m = counts.matrix
    total = int(m[included, :].sum())
    if total == 0:
        raise EmptyAfterExclusion("no ground-truth pixels left after exclusion")
    tp = int(m[included, included].sum())
    # FP into included classes, from included-gt pixels only.
    fp = int(m[np.ix_(included, included)].sum()) - tp
    mpa = tp / total
    miou = tp / (total + fp)
    return mpa, miou


def per_class_iou(counts: ConfusionCounts) -> dict[int, float]:
    """IoU per class; classes absent from both pred and gt are omitted."""
    m = counts.matrix
    out = {}
    for c in range(counts.num_classes):
        tp = int(m[c, c])
        union = int(m[c, :].sum()) + int(m[:, c].sum()) - tp
        if union > 0:
            out[c] = tp / union
    return out


def asr_targeted(pred, clean_gt, source, target, trigger_present) -> float:
    """Fine-grained attack success: fraction of source-gt pixels predicted target.

    Misclassification to any class other than the target does not count.
    """
    if not trigger_present:
        raise ConfigError("asr_targeted is defined only for attacked inputs")
    if pred.values.shape != clean_gt.values.shape:
        raise DimensionMismatch("pred vs clean_gt shape")
    hits, size = asr_region_counts_targeted(pred, clean_gt, source, target)
    if size == 0:
        raise EmptySourceRegion(f"no pixels of class {source} in clean ground truth")
    return hits / size


def asr_region_counts_targeted(pred, clean_gt, source, target):
    """(hits, region size) so callers can micro-aggregate across tiles."""
    region = clean_gt.values == source
    size = int(region.sum())
    hits = int((pred.values[region] == target).sum()) if size else 0
    return hits, size


def asr_texture(pred, region, source) -> float:
    """Texture attack success: fraction of pasted-region pixels predicted source."""
    hits, size = asr_region_counts_texture(pred, region, source)
    if size == 0:
        raise EmptySourceRegion("texture region is empty")
    return hits / size


def asr_region_counts_texture(pred, region, source):
    region = np.asarray(region, dtype=bool)
    if pred.values.shape != region.shape:
        raise DimensionMismatch("pred vs region shape")
    size = int(region.sum())
    hits = int((pred.values[region] == source).sum()) if size else 0
    return hits, size


def aggregate_severities(reports) -> MetricsReport:
    """Arithmetic mean of a severity sweep's scores for one model and mode.

    Per-class IoU averages over the reports where the class is defined
    (undefined entries would otherwise drag severity averages toward zero).
    """
    reports = list(reports)
    if not reports:
        raise ConfigError("no reports to aggregate")
    first = reports[0]
    for rep in reports:
        if rep.model_id != first.model_id or rep.mode != first.mode:
            raise MixedModels(
                f"({rep.model_id}, {rep.mode}) vs ({first.model_id}, {first.mode})"
            )
    classes = sorted({c for rep in reports for c in rep.per_class_iou})
    per_class = {}
    for c in classes:
        vals = [rep.per_class_iou[c] for rep in reports if c in rep.per_class_iou]
        per_class[c] = float(np.mean(vals))
    asr = None
    if first.mode == "attacked":
        asr = float(np.mean([rep.asr for rep in reports]))
    return MetricsReport(
        mode=first.mode,
        model_id=first.model_id,
        mPA=float(np.mean([rep.mPA for rep in reports])),
        mIoU=float(np.mean([rep.mIoU for rep in reports])),
        per_class_iou=per_class,
        asr=asr,
        severity=None,
        notes={"aggregated_from": len(reports), "severities": [rep.severity for rep in reports]},
    )


def build_report_table(reports):
    """Plain-text comparison table plus a machine-readable row list.

    Columns follow the standard layout (mIOU-B, mPA-B, mIOU-A, mPA-A, ASR);
    the highest and lowest ASR rows are flagged.
    """
    reports = list(reports)
    if not reports:
        raise ConfigError("no reports")
    rows = []
    for rep in sorted(reports, key=lambda r: (r.model_id, r.mode, r.severity or 0)):
        rows.append(
            {
                "model_id": rep.model_id,
                "mIOU-B": rep.mIoU if rep.mode == "benign" else None,
                "mPA-B": rep.mPA if rep.mode == "benign" else None,
                "mIOU-A": rep.mIoU if rep.mode == "attacked" else None,
                "mPA-A": rep.mPA if rep.mode == "attacked" else None,
                "ASR": rep.asr,
                "severity": rep.severity,
                "flag": "",
            }
        )
    # Merge benign+attacked rows for the same model/severity.
    merged = {}
    for row in rows:
        key = (row["model_id"], row["severity"])
        tgt = merged.setdefault(key, row)
        if tgt is not row:
            for col in ("mIOU-B", "mPA-B", "mIOU-A", "mPA-A", "ASR"):
                if row[col] is not None:
                    tgt[col] = row[col]
    rows = [merged[k] for k in sorted(merged, key=lambda k: (k[0], k[1] or 0))]

    with_asr = [r for r in rows if r["ASR"] is not None]
    if with_asr:
        hi = max(r["ASR"] for r in with_asr)
        lo = min(r["ASR"] for r in with_asr)
        for row in with_asr:
            if row["ASR"] == hi:
                row["flag"] = "max-asr"
            if row["ASR"] == lo:
                row["flag"] = "min-asr" if row["flag"] == "" else "max+min-asr"

    def fmt(v):
        return "  -  " if v is None else f"{v:.3f}"

    header = f"{'model':<16} {'mIOU-B':>7} {'mPA-B':>7} {'mIOU-A':>7} {'mPA-A':>7} {'ASR':>7}  flag"
    lines = [header, "-" * len(header)]
    for row in rows:
        name = row["model_id"] if row["severity"] is None else f"{row['model_id']}@s{row['severity']}"
        lines.append(
            f"{name:<16} {fmt(row['mIOU-B']):>7} {fmt(row['mPA-B']):>7} "
            f"{fmt(row['mIOU-A']):>7} {fmt(row['mPA-A']):>7} {fmt(row['ASR']):>7}  {row['flag']}"
        )
    return "\n".join(lines) + "\n", rows
