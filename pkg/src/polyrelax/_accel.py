"""Select between numba-compiled kernels and the pure-numpy fallback.

Set ``POLYRELAX_DISABLE_NUMBA=1`` to force the numpy path (also used
automatically when numba cannot be imported).
"""
import os

_DISABLED = os.environ.get("POLYRELAX_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled by environment")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or a no-op decorator."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _njit(*args, **kwargs)


def use_numba():
    return HAVE_NUMBA
