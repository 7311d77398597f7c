"""Shared domain types, label re-indexing, seed derivation, and the manifest.

All types are immutable values after construction (frozen dataclasses; the
backing numpy arrays are marked read-only), so they are safe to share across
worker threads. Operations are pure functions returning new values.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from msrobust import kernels
from msrobust.errors import ConfigError, DimensionMismatch, UnmappedLabel

NUM_CLASSES = 7
SPLITS = ("train", "val", "test", "unassigned")

# WorldView-2/3 multispectral band order, used when an input file does not
# come with explicit band names.
WORLDVIEW_BANDS = ("COASTAL", "B", "G", "Y", "R", "REDEDGE", "NIR1", "NIR2")

MANIFEST_FORMAT = "msrobust-manifest"
MANIFEST_VERSION = 1


def _readonly(arr):
    out = np.asarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Multiband pixel buffer: data is (bands, height, width), u16 or u8."""

    bands: tuple[str, ...]
    data: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return (
            self.bands == other.bands
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ConfigError(f"image data must be (bands, h, w), got {data.shape}")
        if data.dtype not in (np.dtype(np.uint16), np.dtype(np.uint8)):
            raise ConfigError(f"image dtype must be uint16 or uint8, got {data.dtype}")
        if len(self.bands) != data.shape[0]:
            raise ConfigError(
                f"{len(self.bands)} band names for {data.shape[0]} band planes"
            )
        if len(set(self.bands)) != len(self.bands):
            raise ConfigError(f"duplicate band names: {self.bands}")
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "data", _readonly(data))

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def depth(self):
        return "u16" if self.data.dtype == np.uint16 else "u8"

    def band(self, name):
        try:
            idx = self.bands.index(name)
        except ValueError:
            from msrobust.errors import MissingBand

            raise MissingBand(name) from None
        return self.data[idx]

    def with_data(self, data):
        return RasterImage(self.bands, data)


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Per-pixel class indices; raw 8-bit labels until re-indexed to 0..6."""

    values: np.ndarray
    indexed: bool

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.indexed == other.indexed and np.array_equal(self.values, other.values)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.uint8)
        if values.ndim != 2:
            raise ConfigError(f"label mask must be 2-d, got shape {values.shape}")
        if self.indexed and values.size and values.max() >= NUM_CLASSES:
            raise ConfigError("indexed mask contains values outside 0..6")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class ClassMap:
    """Raw label byte -> class index 0..6, plus display names.

    `unclassified` lists the class indices excluded from cross-class averages
    (two such classes for the default map).
    """

    entries: dict[int, int]
    names: dict[int, str]
    unclassified: frozenset[int]

    def __post_init__(self):
        indices = sorted(self.entries.values())
        if len(set(self.entries)) != len(self.entries):
            raise ConfigError("duplicate raw values in class map")
        if len(set(indices)) != len(indices):
            raise ConfigError("class map is not injective")
        if indices != list(range(NUM_CLASSES)):
            raise ConfigError(f"class map must define exactly indices 0..6, got {indices}")
        if not all(0 <= raw <= 255 for raw in self.entries):
            raise ConfigError("raw label values must be in 0..255")
        if set(self.names) != set(range(NUM_CLASSES)):
            raise ConfigError("names must cover exactly indices 0..6")
        if not set(self.unclassified) <= set(range(NUM_CLASSES)):
            raise ConfigError("unclassified indices must be defined class indices")
        object.__setattr__(self, "unclassified", frozenset(self.unclassified))

    def index_of(self, name_or_index):
        """Resolve a class given either its display name or its index."""
        if isinstance(name_or_index, int) or str(name_or_index).isdigit():
            idx = int(name_or_index)
            if idx not in self.names:
                raise ConfigError(f"class index {idx} not defined")
            return idx
        for idx, name in self.names.items():
            if name == name_or_index:
                return idx
        raise ConfigError(f"unknown class name {name_or_index!r}")

    def inverse_entries(self):
        return {idx: raw for raw, idx in self.entries.items()}

    def to_json_dict(self):
        return {
            "entries": {str(raw): idx for raw, idx in sorted(self.entries.items())},
            "names": {str(idx): self.names[idx] for idx in sorted(self.names)},
            "unclassified": sorted(self.unclassified),
        }

    @classmethod
    def from_json_dict(cls, doc):
        try:
            return cls(
                entries={int(k): int(v) for k, v in doc["entries"].items()},
                names={int(k): str(v) for k, v in doc["names"].items()},
                unclassified=frozenset(int(v) for v in doc["unclassified"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed class map document: {exc}") from exc


def default_class_map():
    """Placeholder raw->index map (LAS-style codes); edit to match real label files."""
    return ClassMap(
        entries={2: 0, 5: 1, 6: 2, 9: 3, 17: 4, 65: 5, 0: 6},
        names={
            0: "ground",
            1: "foliage",
            2: "building",
            3: "water",
            4: "elevated-road",
            5: "unclassified",
            6: "unclassified-2",
        },
        unclassified=frozenset({5, 6}),
    )


def read_class_map(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return ClassMap.from_json_dict(doc)


def write_class_map(path, class_map):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(class_map.to_json_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class TileRecord:
    """One tile's catalog entry. Provenance is append-only."""

    tile_id: str
    parent_id: str
    location: str = ""
    view_angle: float = 0.0
    azimuth: float = 0.0
    split: str = "unassigned"
    image_path: str = ""
    label_path: str = ""
    provenance: tuple = ()

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r}")
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def with_provenance(self, entry):
        """Return a copy with `entry` appended; history is never rewritten."""
        return replace(self, provenance=self.provenance + (dict(entry),))

    def to_json_dict(self):
        return {
            "tile_id": self.tile_id,
            "parent_id": self.parent_id,
            "location": self.location,
            "view_angle": self.view_angle,
            "azimuth": self.azimuth,
            "split": self.split,
            "image_path": self.image_path,
            "label_path": self.label_path,
            "provenance": [dict(p) for p in self.provenance],
        }

    @classmethod
    def from_json_dict(cls, doc):
        return cls(
            tile_id=doc["tile_id"],
            parent_id=doc["parent_id"],
            location=doc["location"],
            view_angle=float(doc["view_angle"]),
            azimuth=float(doc["azimuth"]),
            split=doc["split"],
            image_path=doc["image_path"],
            label_path=doc["label_path"],
            provenance=tuple(doc["provenance"]),
        )


@dataclass(frozen=True)
class SplitManifest:
    """Dataset catalog: tile records plus split targets and the master seed."""

    records: tuple[TileRecord, ...]
    fractions: tuple[float, float, float] = (0.80, 0.08, 0.12)
    class_map: ClassMap = field(default_factory=default_class_map)
    seed: int = 0
    bands: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "bands", tuple(self.bands))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if len(self.fractions) != 3:
            raise ConfigError("fractions must be (train, val, test)")
        if any(not 0.0 <= f <= 1.0 for f in self.fractions):
            raise ConfigError("fractions must each lie in [0, 1]")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"fractions must sum to 1.0, got {sum(self.fractions)}")
        ids = [r.tile_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate tile_id in manifest")
        by_parent = {}
        for rec in self.records:
            prev = by_parent.setdefault(rec.parent_id, rec.split)
            if prev != rec.split:
                raise ConfigError(
                    f"parent {rec.parent_id!r} straddles splits ({prev} vs {rec.split})"
                )

    def with_records(self, records):
        return replace(self, records=tuple(records))

    def tiles_in_split(self, split):
        return [r for r in self.records if r.split == split]


def re_index_labels(raw: LabelMask, class_map: ClassMap) -> LabelMask:
    """Map raw byte labels onto class indices 0..6.

    Raises UnmappedLabel (with the first offending pixel) when the mask
    contains a value absent from the map, which signals a corrupt label file
    or the wrong class map.
    """
    if raw.indexed:
        raise ConfigError("mask is already indexed")
    lut = np.full(256, 255, dtype=np.uint8)
    for raw_value, idx in class_map.entries.items():
        lut[raw_value] = idx
    out = lut[raw.values]
    bad = out == 255
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise UnmappedLabel(int(raw.values[y, x]), (int(y), int(x)))
    return LabelMask(out, indexed=True)


def derive_seed(master_seed: int, tile_id: str, stage_tag: str) -> int:
    """Derive a per-tile, per-stage 64-bit seed from the master seed.

    Pure hash mixing (keyed blake2b), so results do not depend on tile
    iteration order or thread count. Distinct (tile_id, stage_tag) pairs
    collide only with ~2^-64 probability.
    """
    if not stage_tag:
        raise ConfigError("stage_tag must be non-empty")
    key = int(master_seed).to_bytes(8, "little", signed=False)
    payload = f"{tile_id}\x1f{stage_tag}".encode()
    digest = hashlib.blake2b(payload, digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


def _header_dict(manifest):
    return {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "seed": manifest.seed,
        "fractions": {
            "train": manifest.fractions[0],
            "val": manifest.fractions[1],
            "test": manifest.fractions[2],
        },
        "bands": list(manifest.bands),
        "class_map": manifest.class_map.to_json_dict(),
    }


def serialize_manifest(manifest: SplitManifest) -> str:
    """Render the manifest as line-delimited JSON: header line, one tile per line.

    Field order is fixed (golden-file tested); records are sorted by tile_id
    so output never depends on processing order.
    """
    lines = [json.dumps(_header_dict(manifest), separators=(", ", ": "))]
    for rec in sorted(manifest.records, key=lambda r: r.tile_id):
        lines.append(json.dumps(rec.to_json_dict(), separators=(", ", ": ")))
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> SplitManifest:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest header: {exc}") from exc
    if header.get("format") != MANIFEST_FORMAT:
        raise ConfigError("not an msrobust manifest (bad format field)")
    records = []
    for ln in lines[1:]:
        try:
            records.append(TileRecord.from_json_dict(json.loads(ln)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"malformed tile record: {exc}") from exc
    fr = header["fractions"]
    return SplitManifest(
        records=tuple(records),
        fractions=(fr["train"], fr["val"], fr["test"]),
        class_map=ClassMap.from_json_dict(header["class_map"]),
        seed=int(header["seed"]),
        bands=tuple(header.get("bands", ())),
    )


def write_manifest(path, manifest):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_manifest(manifest))


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def confusion_from_masks(gt_values, pred_values, num_classes=NUM_CLASSES):
    """Shared tally entry point so every caller hits the selected kernel."""
    return kernels.confusion_tally(gt_values, pred_values, num_classes)


def check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")
