"""Synthetic two-parent fixture: tiny 16-bit 4-band inputs plus a pipeline config.

Used by the test suite and the README walkthrough. Everything is seeded, so
two fixture trees generated with the same seed are identical.

Run `python -m msrobust.fixture OUTDIR` to materialize one.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from msrobust.core import default_class_map, write_class_map
from msrobust.errors import ConfigError
from msrobust.tiffio import write_image, write_label_mask
from msrobust.core import LabelMask, RasterImage

FIXTURE_BANDS = ("R", "G", "B", "NIR2")
RAW_CLASSES = (2, 5, 6, 9, 17, 65, 0)  # default class-map raw values

PARENTS = (
    # parent_id, (height, width), location, view_angle, azimuth
    ("atl01", (192, 128), "atlanta", 12.0, 80.0),
    ("jax07", (128, 192), "jacksonville", 28.0, 200.0),
)

PIPELINE_INI = """\
[pipeline]
master_seed = 20260810
threads = 1

[ingest]
input_dir = inputs
classmap = inputs/classmap.json
gamma = 2.2
clip_low_fraction = 0.01
tile_size = 64
bands_in = R,G,B,NIR2
bands_out = R,G,B,NIR2

# Two parents can only populate two splits (parent atomicity), so the fixture
# targets train and test and leaves val empty.
[split]
fractions = 0.5,0.0,0.5
strat_keys = location
tolerance = 0.1

[poison]
kind = square
source = foliage
target = building
fraction = 0.5
square_side = 16
min_source_pixels = 1

[corrupt]
kind = snow
severities = 1,3
nir_mode = realistic

[eval]
mode = benign
self_eval = true
"""


def make_parent(seed, shape, bands=FIXTURE_BANDS):
    """One synthetic 16-bit parent image and a blobby raw label mask."""
    h, w = shape
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    planes = []
    for b in range(len(bands)):
        ramp = (xx + yy * (b + 1)) / (h + w)
        waves = 0.25 * np.sin(xx / (6.0 + b)) * np.cos(yy / (9.0 + b))
        noise = rng.normal(0.0, 0.02, size=(h, w))
        plane = np.clip(0.08 + 0.8 * ramp / ramp.max() + waves * 0.2 + noise, 0, 1)
        planes.append((plane * 65535).astype(np.uint16))
    image = RasterImage(tuple(bands), np.stack(planes))

    # Voronoi-ish blobs so every raw class shows up in most tiles.
    n_sites = 24
    sy = rng.integers(0, h, n_sites)
    sx = rng.integers(0, w, n_sites)
    site_class = rng.integers(0, len(RAW_CLASSES), n_sites)
    dist = (yy[None] - sy[:, None, None]) ** 2 + (xx[None] - sx[:, None, None]) ** 2
    raw = np.array(RAW_CLASSES, dtype=np.uint8)[site_class[np.argmin(dist, axis=0)]]
    labels = LabelMask(raw, indexed=False)
    return image, labels


def make_fixture(outdir, seed=0):
    """Write the full fixture tree: inputs/, metadata csv, classmap, pipeline.ini."""
    inputs = os.path.join(outdir, "inputs")
    os.makedirs(inputs, exist_ok=True)
    rows = []
    for i, (pid, shape, location, view, azimuth) in enumerate(PARENTS):
        image, labels = make_parent(seed + i, shape)
        write_image(os.path.join(inputs, f"{pid}.tif"), image)
        write_label_mask(os.path.join(inputs, f"{pid}.labels.tif"), labels)
        rows.append({"parent_id": pid, "location": location, "view_angle": view, "azimuth": azimuth})
    with open(os.path.join(inputs, "parents.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["parent_id", "location", "view_angle", "azimuth"])
        writer.writeheader()
        writer.writerows(rows)
    write_class_map(os.path.join(inputs, "classmap.json"), default_class_map())
    with open(os.path.join(outdir, "pipeline.ini"), "w", encoding="utf-8") as fh:
        fh.write(PIPELINE_INI)
    return outdir


def main(argv=None):
    import sys

    args = list(sys.argv[1:] if argv is None else argv)
    if len(args) not in (1, 2):
        raise ConfigError("usage: python -m msrobust.fixture OUTDIR [SEED]")
    make_fixture(args[0], seed=int(args[1]) if len(args) == 2 else 0)
    print(f"fixture written to {args[0]}")


if __name__ == "__main__":
    main()
