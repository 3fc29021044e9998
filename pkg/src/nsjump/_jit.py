"""JIT toggle.

Numba compilation of the hot kernels can be switched off with the environment
variable NSJUMP_PURE_NUMPY=1, which routes every kernel through its plain
numpy/scipy implementation. Useful for debugging and as a safety net on
platforms where numba is unavailable.
"""

import os

JIT_ENABLED = os.environ.get("NSJUMP_PURE_NUMPY", "0").lower() not in ("1", "true", "yes")

if JIT_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        JIT_ENABLED = False

if not JIT_ENABLED:
    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f
        return wrapper
