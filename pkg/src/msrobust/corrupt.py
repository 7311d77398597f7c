"""Physically-consistent snow and fog/haze corruptions for RGB+NIR imagery.

Both corruptions follow the widely used common-corruptions formulations for
the visible bands. The NIR band gets a physics-aware variant: fresh snow
reflects only ~0.6 of its visible brightness at NIR wavelengths, and NIR
light penetrates haze more easily, so in `realistic` mode the additive snow
term and the fog intensity are scaled down by the respective factors.
`unrealistic` mode treats NIR exactly like a visible band (the naive
extension); `none` leaves NIR untouched.

Per-severity constants live in severity_params.json next to this module so
they are reviewable data, not code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import ndimage

from msrobust.core import RasterImage
from msrobust.errors import ConfigError, MissingVisibleBands, NotPowerOfTwo

VISIBLE = ("R", "G", "B")
# Rec.601 luma; the whitening step models diffuse veiling glare in visible light.
LUMA_WEIGHTS = {"R": 0.299, "G": 0.587, "B": 0.114}

SNOW_FIELDS = ("noise_loc", "noise_scale", "zoom", "threshold", "blur_radius", "blur_sigma", "blend")
FOG_FIELDS = ("intensity", "decay")


def load_severity_params(path=None):
    """Load the per-severity constant table (packaged default, or a user file)."""
    if path is None:
        text = resources.files("msrobust").joinpath("severity_params.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    try:
        table = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"severity params: {exc}") from exc
    for kind, fields in (("snow", SNOW_FIELDS), ("fog", FOG_FIELDS)):
        for sev in "12345":
            entry = table.get(kind, {}).get(sev)
            if entry is None or any(f not in entry for f in fields):
                raise ConfigError(f"severity params missing {kind}/{sev} ({fields})")
    return table


@dataclass(frozen=True)
class CorruptionSpec:
    """Fully-seeded description of one corruption run."""

    kind: str
    severity: int
    nir_mode: str = "realistic"
    nir_snow_scale: float = 0.6
    nir_fog_scale: float = 0.6
    nir_whitening: bool = False
    seed: int = 0
    params: dict = field(default_factory=load_severity_params)

    def __post_init__(self):
        if self.kind not in ("snow", "fog"):
            raise ConfigError(f"unknown corruption kind {self.kind!r}")
        if self.severity not in (1, 2, 3, 4, 5):
            raise ConfigError("severity must be 1..5")
        if self.nir_mode not in ("realistic", "unrealistic", "none"):
            raise ConfigError(f"unknown nir_mode {self.nir_mode!r}")
        for scale in (self.nir_snow_scale, self.nir_fog_scale):
            if not 0.0 < scale <= 1.0:
                raise ConfigError("NIR scales must lie in (0, 1]")

    def level(self):
        return self.params[self.kind][str(self.severity)]

    def to_json_dict(self):
        return {
            "kind": self.kind,
            "severity": self.severity,
            "nir_mode": self.nir_mode,
            "nir_snow_scale": self.nir_snow_scale,
            "nir_fog_scale": self.nir_fog_scale,
            "nir_whitening": self.nir_whitening,
            "seed": self.seed,
            "level": dict(self.level()),
        }


def _is_pow2(n):
    return n >= 2 and (n & (n - 1)) == 0


def next_power_of_two(n):
    p = 2
    while p < n:
        p *= 2
    return p


def plasma_fractal(map_size, wibble_decay, seed):
    """Diamond-square midpoint-displacement heightmap, normalized to [0, 1].

    The grid is periodic (neighbors wrap), corners start at the maximum
    amplitude, and the noise amplitude shrinks by 1/wibble_decay after each
    square+diamond level. Noise is drawn per pass as whole row-major arrays so
    a naive loop re-implementation can reproduce the field draw-for-draw.
    """
    if not _is_pow2(map_size):
        raise NotPowerOfTwo(f"map_size {map_size} is not a power of two >= 2")
    n = map_size
    rng = np.random.default_rng(seed)
    grid = np.zeros((n, n), dtype=np.float64)
    grid[0, 0] = 1.0  # single corner lattice point of the periodic grid
    step = n
    amp = 1.0
    while step >= 2:
        half = step // 2
        # Square pass: centers get the mean of their 4 square corners + noise.
        corners = grid[0:n:step, 0:n:step]
        csum = corners + np.roll(corners, -1, axis=0)
        csum = csum + np.roll(csum, -1, axis=1)
        noise = rng.uniform(-amp, amp, csum.shape)
        grid[half:n:step, half:n:step] = csum / 4.0 + noise

        # Diamond pass: the two edge-midpoint sub-lattices, each averaging its
        # 4 diamond neighbors (wrapping), with an independent noise array.
        centers = grid[half:n:step, half:n:step]
        corners = grid[0:n:step, 0:n:step]
        up_down = centers + np.roll(centers, 1, axis=0)
        left_right = corners + np.roll(corners, -1, axis=1)
        noise = rng.uniform(-amp, amp, centers.shape)
        grid[0:n:step, half:n:step] = (up_down + left_right) / 4.0 + noise

        up_down2 = corners + np.roll(corners, -1, axis=0)
        left_right2 = centers + np.roll(centers, 1, axis=1)
        noise = rng.uniform(-amp, amp, centers.shape)
        grid[half:n:step, 0:n:step] = (up_down2 + left_right2) / 4.0 + noise

        step = half
        amp /= wibble_decay

    grid -= grid.min()
    peak = grid.max()
    if peak == 0.0:
        return grid
    return grid / peak


def _clipped_zoom(field, zoom):
    """Zoom into the center 1/zoom window and crop back to the original size."""
    h, w = field.shape
    ch = int(np.ceil(h / zoom))
    cw = int(np.ceil(w / zoom))
    top = (h - ch) // 2
    left = (w - cw) // 2
    zoomed = ndimage.zoom(field[top : top + ch, left : left + cw], zoom, order=1)
    t2 = (zoomed.shape[0] - h) // 2
    l2 = (zoomed.shape[1] - w) // 2
    return zoomed[t2 : t2 + h, l2 : l2 + w]


def _shift_replicate(field, dy, dx):
    """Integer shift with edge replication."""
    h, w = field.shape
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return field[ys[:, None], xs[None, :]]


def _motion_blur(field, radius, sigma, angle_deg):
    """One-sided directional blur: a Gaussian-weighted streak of radius+1 taps."""
    taps = np.arange(int(radius) + 1, dtype=np.float64)
    weights = np.exp(-(taps**2) / (2.0 * sigma**2))
    weights /= weights.sum()
    theta = np.deg2rad(angle_deg)
    out = np.zeros_like(field)
    for i, wgt in enumerate(weights):
        dy = int(np.round(i * np.sin(theta)))
        dx = int(np.round(i * np.cos(theta)))
        out += wgt * _shift_replicate(field, dy, dx)
    return out


def generate_snow_layer(width, height, severity, seed, params=None):
    """Monochrome snow layer in [0, 1]: noise -> zoom -> threshold -> streaks.

    Gaussian noise at the severity's loc/scale is zoomed into (bigger flakes),
    thresholded (sparse chunks), and smeared by a directional motion blur with
    a seeded angle in [-135, -45] degrees.
    """
    level = (params or load_severity_params())["snow"][str(severity)]
    rng = np.random.default_rng(seed)
    noise = rng.normal(level["noise_loc"], level["noise_scale"], size=(height, width))
    layer = _clipped_zoom(noise, level["zoom"])
    layer[layer < level["threshold"]] = 0.0
    angle = rng.uniform(-135.0, -45.0)
    layer = _motion_blur(layer, level["blur_radius"], level["blur_sigma"], angle)
    return np.clip(layer, 0.0, 1.0)


def _quantize_u8(values):
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _band_roles(image):
    """Split band indices into visible-treated and NIR groups."""
    if image.depth != "u8":
        raise ConfigError("corruptions operate on 8-bit imagery; run ingest first")
    missing = [b for b in VISIBLE if b not in image.bands]
    if missing:
        raise MissingVisibleBands(f"corruptions require R,G,B; missing {missing}")
    nir = [i for i, b in enumerate(image.bands) if b.upper().startswith("NIR")]
    vis = [i for i in range(len(image.bands)) if i not in nir]
    return vis, nir


def _luma(image, planes):
    gray = np.zeros((image.height, image.width), dtype=np.float64)
    for name, wgt in LUMA_WEIGHTS.items():
        gray += wgt * planes[image.bands.index(name)]
    return gray


def snow_additive_layer(image, spec: CorruptionSpec):
    """The combined additive snow term L + rot180(L) used by apply_snow."""
    layer = generate_snow_layer(image.width, image.height, spec.severity, spec.seed, spec.params)
    return layer + np.rot90(layer, k=2)


def _whiten(plane, gray, blend):
    return blend * plane + (1.0 - blend) * np.maximum(plane, gray * 1.5 + 0.5)


def apply_snow(image, spec: CorruptionSpec) -> RasterImage:
    """Whiten the scene and add directional snow; NIR treated per nir_mode.

    Visible bands: x' = blend*x + (1-blend)*max(x, luma*1.5 + 0.5), then
    out = clip(x' + L + rot180(L)). Realistic NIR adds nir_snow_scale times
    the same snow term with no whitening (fresh-snow NIR reflectance ~0.6);
    unrealistic NIR is processed exactly like a visible band; none leaves the
    NIR samples bit-identical.
    """
    if spec.kind != "snow":
        raise ConfigError("apply_snow requires kind='snow'")
    vis, nir = _band_roles(image)
    blend = spec.level()["blend"]
    planes = image.data.astype(np.float64) / 255.0
    snow = snow_additive_layer(image, spec)
    gray = _luma(image, planes)

    out = image.data.copy()
    for i in vis:
        out[i] = _quantize_u8(_whiten(planes[i], gray, blend) + snow)
    for i in nir:
        if spec.nir_mode == "none":
            continue
        if spec.nir_mode == "unrealistic":
            out[i] = _quantize_u8(_whiten(planes[i], gray, blend) + snow)
        else:
            base = _whiten(planes[i], gray, blend) if spec.nir_whitening else planes[i]
            out[i] = _quantize_u8(base + spec.nir_snow_scale * snow)
    return image.with_data(out)


def fog_field(image, spec: CorruptionSpec):
    """The shared plasma-fractal haze field, cropped to the image size."""
    side = next_power_of_two(max(image.width, image.height))
    fractal = plasma_fractal(side, spec.level()["decay"], spec.seed)
    return fractal[: image.height, : image.width]


def apply_fog(image, spec: CorruptionSpec) -> RasterImage:
    """Blend a plasma-fractal haze field into the image, band max preserved.

    Per band: out = clip((x + c*P) * max(x) / (max(x) + c)) with the
    severity's intensity c. Realistic NIR substitutes nir_fog_scale*c (NIR
    penetrates haze); unrealistic uses the full c; none leaves NIR untouched.
    The haze field P is generated once per tile and shared across bands.
    """
    if spec.kind != "fog":
        raise ConfigError("apply_fog requires kind='fog'")
    vis, nir = _band_roles(image)
    intensity = spec.level()["intensity"]
    fractal = fog_field(image, spec)
    planes = image.data.astype(np.float64) / 255.0

    def foggy(plane, c):
        peak = plane.max()
        if peak + c == 0.0:
            return _quantize_u8(plane)
        return _quantize_u8((plane + c * fractal) * peak / (peak + c))

    out = image.data.copy()
    for i in vis:
        out[i] = foggy(planes[i], intensity)
    for i in nir:
        if spec.nir_mode == "none":
            continue
        c = intensity if spec.nir_mode == "unrealistic" else spec.nir_fog_scale * intensity
        out[i] = foggy(planes[i], c)
    return image.with_data(out)


def apply_corruption(image, spec: CorruptionSpec) -> RasterImage:
    return apply_snow(image, spec) if spec.kind == "snow" else apply_fog(image, spec)
