"""Pure-numpy reference implementations of the hot per-pixel kernels.

Semantics here are the contract; the compiled twin in _fast.pyx must agree
bit-for-bit (enforced by tests/test_kernels.py).
"""

import numpy as np

BACKEND = "pure"


def confusion_tally(gt, pred, num_classes):
    """Tally an num_classes x num_classes matrix, counts[g][p], as int64."""
    gt = np.ascontiguousarray(gt, dtype=np.int64).ravel()
    pred = np.ascontiguousarray(pred, dtype=np.int64).ravel()
    flat = np.bincount(gt * num_classes + pred, minlength=num_classes * num_classes)
    return flat.reshape(num_classes, num_classes).astype(np.int64)


def lut_apply_u16(values, lut):
    """Map u16 samples through a 65536-entry u8 lookup table."""
    return lut[values]


def masked_replace(image, mask, replacement):
    """Replace image[:, y, x] with replacement[:, y, x] wherever mask is set.

    image/replacement are (bands, h, w) u8; mask is (h, w) bool. Returns a new
    array; inputs are untouched.
    """
    out = image.copy()
    out[:, mask] = replacement[:, mask]
    return out
