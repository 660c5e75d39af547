"""Optional numba acceleration.

Hot kernels (trajectory simulation, simplex pivoting) are written once in a
numba-compatible subset of numpy and compiled on import when numba is
available.  Setting ``PDMPLP_DISABLE_NUMBA=1`` (or a failed numba import)
selects the interpreted / vectorized-numpy fallback path instead.  Both paths
are exercised by the test suite and compared in ``benchmarks/``.
"""

import os

DISABLED = os.environ.get("PDMPLP_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on",
)

try:
    if DISABLED:
        raise ImportError("numba disabled via PDMPLP_DISABLE_NUMBA")
    import numba

    HAVE_NUMBA = True

    _threads = os.environ.get("PDMP_LP_THREADS", "").strip()
    if _threads.isdigit() and int(_threads) > 0:
        try:
            numba.set_num_threads(int(_threads))
        except ValueError:
            pass

    def maybe_njit(func=None, signature=None, **kwargs):
        """Compile with ``numba.njit(cache=True)``; identity when disabled.

        ``signature`` (a numba signature string) pins argument types — RNG
        helpers need uint64 pinned so lazy typing never locks them to int64.
        """
        kwargs.setdefault("cache", True)

        def wrap(f):
            if signature is not None:
                return numba.njit(signature, **kwargs)(f)
            return numba.njit(**kwargs)(f)

        if func is None:
            return wrap
        return wrap(func)

except ImportError:
    HAVE_NUMBA = False

    def maybe_njit(func=None, signature=None, **kwargs):
        """Numba unavailable or disabled: return the function unchanged."""
        if func is None:
            return lambda f: f
        return func


def python_impl(func):
    """Return the uncompiled implementation of a possibly-jitted function."""
    return getattr(func, "py_func", func)
