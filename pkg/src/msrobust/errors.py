"""Exception and warning types shared across the toolkit.

Every error raised by library code derives from MsRobustError so the CLI can
map failures onto stable exit codes (see cli.EXIT_CODES).
"""


class MsRobustError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(MsRobustError):
    """A config file, spec, or flag combination could not be parsed/validated."""


class MissingInputError(MsRobustError):
    """A referenced file, directory, or band does not exist."""


class UnmappedLabel(MsRobustError):
    """A raw label value has no class-map entry (corrupt labels or wrong map)."""

    def __init__(self, value, pixel):
        self.value = value
        self.pixel = pixel
        super().__init__(f"raw label {value} at pixel {pixel} has no class-map entry")


class MissingBand(MissingInputError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"band {name!r} not present in image")


class DimensionMismatch(MsRobustError):
    """Paired rasters do not share dimensions."""


class UnindexedMask(MsRobustError):
    """An operation requiring re-indexed labels received a raw mask."""


class InfeasibleTolerance(MsRobustError):
    """A parent image is too large to fit any split within tolerance."""

    def __init__(self, parent_id, tile_count):
        self.parent_id = parent_id
        self.tile_count = tile_count
        super().__init__(
            f"parent {parent_id!r} ({tile_count} tiles) exceeds every "
            "split's target+tolerance share"
        )


class NoEligibleTiles(MsRobustError):
    """No train tile satisfies the poison eligibility threshold."""


class TriggerDoesNotFit(MsRobustError):
    """Trigger geometry exceeds the tile dimensions."""


class PatchDoesNotFit(MsRobustError):
    """Texture patch exceeds the tile dimensions."""


class BandMismatch(MsRobustError):
    """Texture and target imagery carry different band sets."""


class NotPowerOfTwo(MsRobustError):
    """Plasma-fractal map size must be a power of two."""


class MissingVisibleBands(MsRobustError):
    """Corruption requires R, G, and B bands to be present."""


class EmptyAfterExclusion(MsRobustError):
    """All ground-truth pixels fell in the excluded class set."""


class EmptySourceRegion(MsRobustError):
    """ASR region contains no pixels."""


class MixedModels(MsRobustError):
    """Severity aggregation received reports from different models or modes."""


class DegenerateChannelWarning(UserWarning):
    """Channel collapsed to a constant after clipping; emitted all zeros."""


class NoSourcePixelsWarning(UserWarning):
    """Texture poisoning found no source-class pixels; image left unchanged."""


class ToleranceWarning(UserWarning):
    """Greedy split assignment could not reach the requested tolerance."""
