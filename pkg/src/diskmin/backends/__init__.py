"""Stepper kernel backends.

The compiled extension is preferred when importable; the pure numpy
implementation of the identical contract is the fallback.  Set
``DISKMIN_BACKEND=pure`` to force the fallback (used by the benchmark and
by backend-parity tests).
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("DISKMIN_BACKEND", "").lower() == "pure":
    _impl = _pure
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

BACKEND_NAME: str = _impl.BACKEND_NAME
dp54_try_step = _impl.dp54_try_step
dp54_dense_eval = _impl.dp54_dense_eval
compiled_rhs = _impl.compiled_rhs

# the compiled RHS signals a vanishing control denominator with this class
KernelSingularControl = getattr(_impl, "KernelSingularControl", ArithmeticError)


def active_backend() -> str:
    return BACKEND_NAME
