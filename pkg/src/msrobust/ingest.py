"""16-bit to 8-bit channel conversion and non-overlapping tiling.

The conversion order is locked: rescale to [0,1], gamma-correct (1/gamma
exponent), clip below the low-CDF quantile, then stretch min->0 / max->255
with round-half-up. The whole map is monotone in the input value, so it is
built once as a 65536-entry LUT and applied through the kernel backend.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from msrobust import kernels
from msrobust.core import LabelMask, RasterImage, TileRecord
from msrobust.errors import ConfigError, DegenerateChannelWarning, DimensionMismatch, UnindexedMask


@dataclass(frozen=True)
class IngestConfig:
    gamma: float = 2.2
    clip_low_fraction: float = 0.01
    tile_size: int = 1024
    bands_out: tuple[str, ...] = ("R", "G", "B", "NIR2")

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        if not 0.0 <= self.clip_low_fraction < 0.5:
            raise ConfigError("clip_low_fraction must be in [0, 0.5)")
        if self.tile_size < 1:
            raise ConfigError("tile_size must be >= 1")
        object.__setattr__(self, "bands_out", tuple(self.bands_out))


def _round_half_up_u8(values):
    return np.minimum(np.floor(values + 0.5), 255.0).astype(np.uint8)


def build_conversion_lut(channel, config):
    """Build the per-channel u16->u8 LUT for the locked conversion order.

    The low clip threshold is the nearest-rank quantile taken on the 65536-bin
    histogram of the raw samples: the smallest raw value whose cumulative count
    reaches ceil(clip_low_fraction * n).
    """
    flat = channel.ravel()
    hist = np.bincount(flat, minlength=65536)
    scaled = (np.arange(65536, dtype=np.float64) / 65535.0) ** (1.0 / config.gamma)

    if config.clip_low_fraction > 0.0:
        rank = int(np.ceil(config.clip_low_fraction * flat.size))
        rank = max(rank, 1)
        clip_raw = int(np.searchsorted(np.cumsum(hist), rank))
        scaled = np.maximum(scaled, scaled[clip_raw])

    observed = np.flatnonzero(hist)
    lo = scaled[observed[0]]
    hi = scaled[observed[-1]]
    if hi == lo:
        return None
    return _round_half_up_u8((scaled - lo) / (hi - lo) * 255.0)


def convert_channel_16to8(channel, config: IngestConfig):
    """Convert one u16 channel to u8: rescale, gamma, low clip, min-max stretch.

    Non-constant channels always span 0..255 on output. A channel that is
    constant after clipping degenerates to all zeros with a
    DegenerateChannelWarning rather than failing (blank ocean tiles exist).
    """
    channel = np.asarray(channel, dtype=np.uint16)
    if channel.size == 0:
        raise ConfigError("empty channel")
    lut = build_conversion_lut(channel, config)
    if lut is None:
        warnings.warn(
            "channel is constant after clipping; emitting zeros",
            DegenerateChannelWarning,
            stacklevel=2,
        )
        return np.zeros(channel.shape, dtype=np.uint8)
    return kernels.lut_apply_u16(channel, lut)


def convert_image_16to8(image: RasterImage, config: IngestConfig) -> RasterImage:
    """convert_channel_16to8 applied per band, preserving band names."""
    out = np.stack([convert_channel_16to8(plane, config) for plane in image.data])
    return RasterImage(image.bands, out)


def select_bands(image: RasterImage, bands) -> RasterImage:
    """Return only the requested bands, in the requested order, bit-identical."""
    planes = [image.band(name) for name in bands]
    return RasterImage(tuple(bands), np.stack(planes))


def tile_pair(
    image: RasterImage,
    labels: LabelMask,
    config: IngestConfig,
    parent_id: str,
    location: str = "",
    view_angle: float = 0.0,
    azimuth: float = 0.0,
):
    """Cut an image/label pair into non-overlapping tile_size^2 windows.

    Partial edge windows are dropped (whole tiles only; padding would skew
    label statistics). Returns [(TileRecord, RasterImage, LabelMask)] in grid
    row-major order; records carry `<parent>_r<row>_c<col>` ids and empty
    paths (the CLI fills paths when it writes files).
    """
    if (image.height, image.width) != (labels.height, labels.width):
        raise DimensionMismatch(
            f"image {image.height}x{image.width} vs labels {labels.height}x{labels.width}"
        )
    if not labels.indexed:
        raise UnindexedMask("tile_pair requires re-indexed labels")
    ts = config.tile_size
    rows = image.height // ts
    cols = image.width // ts
    if rows == 0 or cols == 0:
        warnings.warn(
            f"{parent_id}: image {image.height}x{image.width} smaller than tile size {ts}",
            UserWarning,
            stacklevel=2,
        )
        return []
    out = []
    for r in range(rows):
        for c in range(cols):
            win = np.s_[r * ts : (r + 1) * ts, c * ts : (c + 1) * ts]
            rec = TileRecord(
                tile_id=f"{parent_id}_r{r}_c{c}",
                parent_id=parent_id,
                location=location,
                view_angle=view_angle,
                azimuth=azimuth,
            )
            tile_img = RasterImage(image.bands, image.data[:, win[0], win[1]].copy())
            tile_lbl = LabelMask(labels.values[win].copy(), indexed=True)
            out.append((rec, tile_img, tile_lbl))
    return out
