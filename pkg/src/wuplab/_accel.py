"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible subset of Python and
decorated with :func:`njit`. When numba is missing, or the environment
variable ``WUPLAB_NO_NUMBA`` is set to a truthy value, callers dispatch to
the pure numpy / Python fallbacks instead.
"""

import os

_FLAG = "WUPLAB_NO_NUMBA"


def _env_disabled() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is an optional extra
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator.

    Compilation is lazy, so merely decorating costs nothing when the
    fallback path is selected.
    """
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
