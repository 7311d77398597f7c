import numpy as np
import pytest

from msrobust.core import LabelMask, RasterImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_image(bands=("R", "G", "B", "NIR2"), h=32, w=32, seed=0, dtype=np.uint8):
    gen = np.random.default_rng(seed)
    high = 256 if dtype == np.uint8 else 65536
    data = gen.integers(0, high, size=(len(bands), h, w)).astype(dtype)
    return RasterImage(tuple(bands), data)


def make_labels(h=32, w=32, seed=0, classes=7):
    gen = np.random.default_rng(seed)
    return LabelMask(gen.integers(0, classes, size=(h, w)).astype(np.uint8), indexed=True)
