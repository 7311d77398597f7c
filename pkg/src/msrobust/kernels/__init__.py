"""Kernel backend selection.

The compiled Cython extension is preferred when it imported cleanly; the
pure-numpy module is the fallback and the behavioural reference. Set
MSROBUST_PURE_KERNELS=1 to force the fallback (used by the benchmark and by
tests that compare the two).
"""

import os

from msrobust.kernels import pure

if os.environ.get("MSROBUST_PURE_KERNELS") == "1":
    _impl = pure
else:
    try:
        from msrobust.kernels import _fast as _impl
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND
confusion_tally = _impl.confusion_tally
lut_apply_u16 = _impl.lut_apply_u16
masked_replace = _impl.masked_replace
