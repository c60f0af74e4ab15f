"""Backend selection for the hot loops.

The compiled extension is preferred; set ``RCC_PURE_PYTHON=1`` to force the
numpy fallback. ``BACKEND`` names whichever was loaded.
"""

import os

from . import _kernels_py

if os.environ.get("RCC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels_c as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

neighbor_sum = _impl.neighbor_sum
gibbs_chain = _impl.gibbs_chain

AGG_CODES = {"sum": 0, "proportion": 1, "mode": 2}
CLF_CODES = {"sigmoid": 0, "softmax": 1}

__all__ = ["BACKEND", "neighbor_sum", "gibbs_chain", "AGG_CODES", "CLF_CODES"]
