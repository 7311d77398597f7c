"""Backdoor data-poisoning attacks: line/square triggers and the texture attack.

Fine-grained attacks (line, square) stamp a black trigger into the image and
re-label every source-class pixel as the target class across the whole tile.
The texture attack replaces source-class pixels with a randomly augmented
texture and leaves labels untouched; at evaluation time the texture is pasted
at a random location instead.

Every randomized step consumes a numpy Generator seeded from a caller-supplied
64-bit seed (normally core.derive_seed output), so per-tile results never
depend on processing order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from msrobust import kernels
from msrobust.core import LabelMask, RasterImage
from msrobust.errors import (
    BandMismatch,
    ConfigError,
    NoEligibleTiles,
    NoSourcePixelsWarning,
    PatchDoesNotFit,
    TriggerDoesNotFit,
)


@dataclass(frozen=True)
class AugmentSpec:
    """Randomized texture augmentation: crop, resize, rotate/flip, color jitter."""

    crop_area_range: tuple[float, float] = (0.5, 1.0)
    aspect_jitter: float = 0.25
    rotations: tuple[int, ...] = (0, 90, 180, 270)
    flips: tuple[str, ...] = ("h", "v")
    gain_range: tuple[float, float] = (0.8, 1.2)
    offset_range: tuple[float, float] = (-10.0, 10.0)

    def __post_init__(self):
        for name in ("crop_area_range", "gain_range", "offset_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} is not well-ordered: {(lo, hi)}")
        if self.gain_range[0] <= 0:
            raise ConfigError("gains must be > 0")
        if not 0.0 < self.crop_area_range[0] or self.crop_area_range[1] > 1.0:
            raise ConfigError("crop_area_range must lie in (0, 1]")
        for f in self.flips:
            if f not in ("h", "v"):
                raise ConfigError(f"unknown flip {f!r}")
        object.__setattr__(self, "rotations", tuple(int(r) for r in self.rotations))
        object.__setattr__(self, "flips", tuple(self.flips))

    def to_json_dict(self):
        return {
            "crop_area_range": list(self.crop_area_range),
            "aspect_jitter": self.aspect_jitter,
            "rotations": list(self.rotations),
            "flips": list(self.flips),
            "gain_range": list(self.gain_range),
            "offset_range": list(self.offset_range),
        }


@dataclass(frozen=True)
class PoisonSpec:
    """Fully-seeded description of one poisoning run."""

    kind: str
    source_class: int
    target_class: int = -1
    fraction: float = 0.10
    square_side: int = 50
    line_thickness: int = 5
    trigger_nir_value: int = 0
    texture_path: str = ""
    patch_range: tuple[int, int] = (100, 300)
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    min_source_pixels: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("line", "square", "texture"):
            raise ConfigError(f"unknown poison kind {self.kind!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError("fraction must be in (0, 1]")
        if self.kind in ("line", "square"):
            if self.target_class < 0:
                raise ConfigError(f"{self.kind} attack requires a target class")
            if self.source_class == self.target_class:
                raise ConfigError("source and target classes must differ")
        if self.kind == "texture" and not self.texture_path:
            raise ConfigError("texture attack requires texture_path")
        if self.patch_range[0] > self.patch_range[1] or self.patch_range[0] < 1:
            raise ConfigError(f"bad patch_range {self.patch_range}")

    def to_json_dict(self):
        return {
            "kind": self.kind,
            "source_class": self.source_class,
            "target_class": self.target_class,
            "fraction": self.fraction,
            "square_side": self.square_side,
            "line_thickness": self.line_thickness,
            "trigger_nir_value": self.trigger_nir_value,
            "texture_path": self.texture_path,
            "patch_range": list(self.patch_range),
            "augment": self.augment.to_json_dict(),
            "min_source_pixels": self.min_source_pixels,
            "seed": self.seed,
        }


def select_poison_subset(manifest, spec: PoisonSpec, load_labels) -> list[str]:
    """Pick the train tiles to poison: floor(fraction x eligible), seeded.

    A tile is eligible when its label mask holds at least min_source_pixels of
    the source class. `load_labels(record) -> LabelMask` keeps file I/O out of
    the selection logic. Returns tile_ids sorted for manifest stability.
    """
    eligible = []
    for rec in sorted(manifest.tiles_in_split("train"), key=lambda r: r.tile_id):
        labels = load_labels(rec)
        if int(np.count_nonzero(labels.values == spec.source_class)) >= spec.min_source_pixels:
            eligible.append(rec.tile_id)
    if not eligible:
        raise NoEligibleTiles(
            f"no train tile has >= {spec.min_source_pixels} pixels of class {spec.source_class}"
        )
    n = max(1, int(np.floor(spec.fraction * len(eligible))))
    rng = np.random.default_rng(spec.seed)
    picked = rng.permutation(len(eligible))[:n]
    return sorted(eligible[i] for i in picked)


def _is_nir(band_name):
    return band_name.upper().startswith("NIR")


def apply_fine_grained_trigger(image, labels, spec: PoisonSpec, seed):
    """Stamp a black trigger and re-label source->target across the tile.

    The trigger is drawn at intensity 0 in every band (a physically black
    object is dark at NIR too; trigger_nir_value overrides the NIR planes).
    Line: full-width horizontal bar at a seeded row. Square: square_side^2
    block at a seeded position fully inside the tile. Nothing else changes.
    """
    if spec.kind not in ("line", "square"):
        raise ConfigError(f"not a fine-grained attack kind: {spec.kind}")
    if not labels.indexed:
        raise ConfigError("labels must be indexed")
    h, w = image.height, image.width
    rng = np.random.default_rng(seed)

    if spec.kind == "line":
        if spec.line_thickness > h:
            raise TriggerDoesNotFit(f"line thickness {spec.line_thickness} > height {h}")
        r0 = int(rng.integers(0, h - spec.line_thickness + 1))
        window = np.s_[r0 : r0 + spec.line_thickness, 0:w]
    else:
        side = spec.square_side
        if side > h or side > w:
            raise TriggerDoesNotFit(f"square side {side} exceeds tile {h}x{w}")
        r0 = int(rng.integers(0, h - side + 1))
        c0 = int(rng.integers(0, w - side + 1))
        window = np.s_[r0 : r0 + side, c0 : c0 + side]

    data = image.data.copy()
    for b, name in enumerate(image.bands):
        data[b][window] = spec.trigger_nir_value if _is_nir(name) else 0

    values = labels.values.copy()
    values[labels.values == spec.source_class] = spec.target_class
    return image.with_data(data), LabelMask(values, indexed=True)


def _nearest_resize(data, out_h, out_w):
    """Nearest-neighbor resize of (bands, h, w) via center-of-pixel mapping."""
    h, w = data.shape[1], data.shape[2]
    rows = np.minimum((np.arange(out_h) + 0.5) * h / out_h, h - 1).astype(np.intp)
    cols = np.minimum((np.arange(out_w) + 0.5) * w / out_w, w - 1).astype(np.intp)
    return data[:, rows[:, None], cols[None, :]]


def augment_texture(texture, out_w, out_h, spec: AugmentSpec, seed) -> RasterImage:
    """Seeded crop -> nearest resize -> rotation/flip -> per-band jitter.

    Draw order is fixed (area, aspect, top, left, transform, gains, offsets)
    so a seed pins the output exactly.
    """
    rng = np.random.default_rng(seed)
    h, w = texture.height, texture.width

    area_frac = rng.uniform(*spec.crop_area_range)
    aspect = (w / h) * rng.uniform(1.0 - spec.aspect_jitter, 1.0 + spec.aspect_jitter)
    crop_area = area_frac * w * h
    cw = int(np.clip(np.round(np.sqrt(crop_area * aspect)), 1, w))
    ch = int(np.clip(np.round(crop_area / cw), 1, h))
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    crop = texture.data[:, top : top + ch, left : left + cw]

    ops = [("rot", d) for d in spec.rotations] + [("flip", f) for f in spec.flips]
    if not ops:
        raise ConfigError("rotation/flip set is empty")
    op_kind, op_arg = ops[int(rng.integers(len(ops)))]

    # A 90/270 rotation swaps axes; resize to the pre-rotation dims so the
    # output still lands exactly on (out_h, out_w).
    swaps = op_kind == "rot" and op_arg % 180 == 90
    mid = _nearest_resize(crop, out_w if swaps else out_h, out_h if swaps else out_w)
    if op_kind == "rot":
        mid = np.rot90(mid, k=(op_arg // 90) % 4, axes=(1, 2))
    elif op_arg == "h":
        mid = mid[:, :, ::-1]
    else:
        mid = mid[:, ::-1, :]

    gains = rng.uniform(spec.gain_range[0], spec.gain_range[1], size=len(texture.bands))
    offsets = rng.uniform(spec.offset_range[0], spec.offset_range[1], size=len(texture.bands))
    jittered = mid.astype(np.float64) * gains[:, None, None] + offsets[:, None, None]
    out = np.clip(np.floor(jittered + 0.5), 0, 255).astype(np.uint8)
    return RasterImage(texture.bands, out)


def _check_bands(image, texture):
    if image.bands != texture.bands:
        raise BandMismatch(f"image bands {image.bands} vs texture bands {texture.bands}")


def apply_texture_poison_train(image, labels, texture, spec: PoisonSpec, seed) -> RasterImage:
    """Replace every source-class pixel with the co-located augmented texture pixel.

    Labels are deliberately not returned: the texture attack never modifies
    them, callers keep the originals.
    """
    if spec.kind != "texture":
        raise ConfigError("apply_texture_poison_train requires kind='texture'")
    if not labels.indexed:
        raise ConfigError("labels must be indexed")
    _check_bands(image, texture)
    mask = labels.values == spec.source_class
    if not mask.any():
        warnings.warn(
            "tile has no source-class pixels; image unchanged",
            NoSourcePixelsWarning,
            stacklevel=2,
        )
        return image
    aug = augment_texture(texture, image.width, image.height, spec.augment, seed)
    out = kernels.masked_replace(image.data, mask, aug.data)
    return image.with_data(out)


def insert_texture_eval(image, texture, spec: PoisonSpec, seed):
    """Paste one augmented texture patch at a seeded size and position.

    Returns (image, region) where region is the boolean mask of exactly the
    pasted pixels; everything outside is bit-identical to the input.
    """
    if spec.kind != "texture":
        raise ConfigError("insert_texture_eval requires kind='texture'")
    _check_bands(image, texture)
    h, w = image.height, image.width
    lo, hi = spec.patch_range
    rng = np.random.default_rng(seed)
    pw = int(rng.integers(lo, hi + 1))
    ph = int(rng.integers(lo, hi + 1))
    if pw > w or ph > h:
        raise PatchDoesNotFit(f"patch {ph}x{pw} exceeds tile {h}x{w}")
    r0 = int(rng.integers(0, h - ph + 1))
    c0 = int(rng.integers(0, w - pw + 1))
    aug_seed = int(rng.integers(0, 2**63))
    patch = augment_texture(texture, pw, ph, spec.augment, aug_seed)

    data = image.data.copy()
    data[:, r0 : r0 + ph, c0 : c0 + pw] = patch.data
    region = np.zeros((h, w), dtype=bool)
    region[r0 : r0 + ph, c0 : c0 + pw] = True
    return image.with_data(data), region
