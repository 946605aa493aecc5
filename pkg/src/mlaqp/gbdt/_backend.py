"""Kernel backend selection.

The compiled kernels are used when importable; ``MLAQP_PURE_PYTHON=1``
forces the NumPy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("MLAQP_PURE_PYTHON") != "1":
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        kernels = _ckernels
        BACKEND = "cython"

predict_one = _pykernels.predict_one
