"""Kernel backend selection.

Hot layer kernels come in two flavors: numba-compiled loops (fast path)
and pure numpy (fallback). The environment variable TANGENTGAN_KERNELS
picks one:

    TANGENTGAN_KERNELS=numba   force the compiled path (error if unavailable)
    TANGENTGAN_KERNELS=numpy   force the pure-numpy path

Unset, the compiled path is used when numba imports cleanly. The choice is
made once at import; benchmarks/bench_kernels.py compares the two.
"""

import os
import warnings

from . import kernels as _numpy_kernels

_FLAG = os.environ.get("TANGENTGAN_KERNELS", "").strip().lower()

if _FLAG == "numpy":
    K = _numpy_kernels
    BACKEND = "numpy"
elif _FLAG == "numba":
    from . import kernels_numba as K

    BACKEND = "numba"
elif _FLAG == "":
    try:
        from . import kernels_numba as K

        BACKEND = "numba"
    except ImportError:
        warnings.warn("numba unavailable, falling back to pure-numpy kernels")
        K = _numpy_kernels
        BACKEND = "numpy"
else:
    raise RuntimeError(
        f"TANGENTGAN_KERNELS={_FLAG!r} not understood (use 'numba' or 'numpy')"
    )


def backend_name():
    return BACKEND
