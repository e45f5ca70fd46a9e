"""Stepping kernels: compiled extension with a pure-numpy fallback.

The compiled backend is used when the extension built successfully; set
``NASHFLOW_PURE=1`` in the environment to force the pure-numpy twin.  Both
implement the identical contract, so results agree to rounding.
"""

from __future__ import annotations

import os

from . import _euler_py
from ._euler_py import (  # noqa: F401
    KIND_BALL,
    KIND_BOX,
    KIND_SIMPLEX,
    KIND_WHOLE,
    REASON_CONVERGED,
    REASON_TMAX,
)

if os.environ.get("NASHFLOW_PURE", "0") not in ("", "0"):
    _impl = _euler_py
    BACKEND = "pure-python"
else:
    try:
        from . import _euler_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _euler_py
        BACKEND = "pure-python"

run_affine_euler = _impl.run_affine_euler


def available_backends() -> dict:
    """Name -> kernel entry point, for every backend importable here."""
    out = {"pure-python": _euler_py.run_affine_euler}
    try:
        from . import _euler_cy  # type: ignore[attr-defined]

        out["cython"] = _euler_cy.run_affine_euler
    except ImportError:
        pass
    return out
