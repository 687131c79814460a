"""Pure numpy implementation of the stepper kernels.

This is the fallback selected when the compiled extension is unavailable;
it implements exactly the same contract (same tableau, same error norm).
"""

from __future__ import annotations

import numpy as np

from ._tableau import A, B, C, E, P

BACKEND_NAME = "pure"


def dp54_try_step(f, t, y, h, rtol, atol, K, y_out):
    """Attempt one embedded 5(4) step of size h from (t, y).

    ``K`` is a (7, n) stage buffer whose row 0 must already hold f(t, y)
    (FSAL); the remaining rows are filled here.  The 5th-order result is
    written to ``y_out`` and the scaled RMS error norm is returned
    (accept when <= 1).
    """
    for s in range(1, 6):
        y_stage = y + h * (K[:s].T @ A[s, :s])
        K[s] = f(t + C[s] * h, y_stage)
    y5 = y + h * (K[:6].T @ B[:6])
    K[6] = f(t + h, y5)
    err = h * (K.T @ E)
    y_out[:] = y5
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def dp54_dense_eval(y0, h, K, theta):
    """Evaluate the quartic interpolant of one step at fraction theta."""
    tv = np.array([theta, theta**2, theta**3, theta**4])
    return y0 + h * (K.T @ (P @ tv))


def compiled_rhs(kernel_id, direction=1.0, frozen_u=None, rho_floor=0.0):
    """No compiled fast paths in the pure backend."""
    return None
