"""Thin TIFF layer: multiband images as (bands, h, w), labels as (h, w).

Reading accepts stripped or tiled layouts and both planar and interleaved
band arrangements (the band axis is disambiguated by size). Writing always
produces planar uint8/uint16 TIFFs through tifffile, which is byte-
deterministic for identical arrays, a property the pipeline's reproducibility
contract depends on.
"""

from __future__ import annotations

import os

import numpy as np
import tifffile

from msrobust.core import LabelMask, RasterImage, WORLDVIEW_BANDS
from msrobust.errors import ConfigError, MissingInputError

MAX_BANDS = 16


def default_band_names(count):
    """Band names for files that do not declare any: WorldView order for 8,
    RGB(+NIR2) for 3/4, generic band<N> otherwise."""
    if count == 8:
        return WORLDVIEW_BANDS
    if count == 4:
        return ("R", "G", "B", "NIR2")
    if count == 3:
        return ("R", "G", "B")
    if count == 1:
        return ("PAN",)
    return tuple(f"band{i}" for i in range(count))


def _to_planar(arr, path):
    if arr.ndim == 2:
        return arr[None, :, :]
    if arr.ndim != 3:
        raise ConfigError(f"{path}: unsupported TIFF shape {arr.shape}")
    if arr.shape[0] <= MAX_BANDS < arr.shape[2]:
        return arr
    if arr.shape[2] <= MAX_BANDS < arr.shape[0]:
        return np.moveaxis(arr, 2, 0)
    if arr.shape[0] <= arr.shape[2]:
        return arr
    return np.moveaxis(arr, 2, 0)


def read_image(path, bands=None) -> RasterImage:
    if not os.path.exists(path):
        raise MissingInputError(f"image not found: {path}")
    arr = tifffile.imread(path)
    if arr.dtype not in (np.uint8, np.uint16):
        raise ConfigError(f"{path}: expected uint8/uint16 samples, got {arr.dtype}")
    planar = np.ascontiguousarray(_to_planar(arr, path))
    names = tuple(bands) if bands else default_band_names(planar.shape[0])
    if len(names) != planar.shape[0]:
        raise ConfigError(f"{path}: {len(names)} band names for {planar.shape[0]} bands")
    return RasterImage(names, planar)


def write_image(path, image: RasterImage):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tifffile.imwrite(path, np.asarray(image.data), photometric="minisblack")


def read_label_mask(path, indexed=True) -> LabelMask:
    if not os.path.exists(path):
        raise MissingInputError(f"label mask not found: {path}")
    arr = tifffile.imread(path)
    if arr.ndim == 3 and 1 in arr.shape:
        arr = arr.reshape([s for s in arr.shape if s != 1][:2])
    if arr.ndim != 2:
        raise ConfigError(f"{path}: label mask must be single-band, got {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.dtype == np.uint16 and (arr <= 255).all():
            arr = arr.astype(np.uint8)
        else:
            raise ConfigError(f"{path}: label mask must be 8-bit")
    return LabelMask(arr, indexed=indexed)


def write_label_mask(path, mask: LabelMask):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tifffile.imwrite(path, np.asarray(mask.values), photometric="minisblack")
