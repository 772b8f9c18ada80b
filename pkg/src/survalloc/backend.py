"""Kernel backend selection.

The hot numeric loops live in ``survalloc.kernels`` and exist twice: a
numba ``@njit`` implementation and a pure-numpy fallback. The active
backend is chosen once at import time from the ``SURVALLOC_BACKEND``
environment variable:

* ``SURVALLOC_BACKEND=numba`` -- require numba, fail if unavailable.
* ``SURVALLOC_BACKEND=numpy`` -- force the pure-numpy path.
* unset -- use numba when importable, numpy otherwise.

Both backends implement identical contracts; results agree to floating
point roundoff. Reports are byte-reproducible within a fixed backend.
"""

from __future__ import annotations

import os

_ENV_VAR = "SURVALLOC_BACKEND"


def _resolve() -> str:
    requested = os.environ.get(_ENV_VAR, "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(
            f"{_ENV_VAR} must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND: str = _resolve()
USE_NUMBA: bool = BACKEND == "numba"
