# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepper kernels.

Same contract as the pure backend: an embedded Dormand-Prince 5(4) step
with quartic dense output.  Right-hand sides may be plain Python callables
(generic systems) or instances of :class:`CompiledRHS`, in which case the
whole step runs without touching the interpreter.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport hypot, sqrt

cnp.import_array()

BACKEND_NAME = "native"


# ---------------------------------------------------------------------------
# Dormand-Prince coefficients (identical to backends/_tableau.py)
# ---------------------------------------------------------------------------

cdef double[7] C_NODES
C_NODES[0] = 0.0
C_NODES[1] = 1.0 / 5.0
C_NODES[2] = 3.0 / 10.0
C_NODES[3] = 4.0 / 5.0
C_NODES[4] = 8.0 / 9.0
C_NODES[5] = 1.0
C_NODES[6] = 1.0

cdef double[7][7] A_TAB
cdef int _i, _j
for _i in range(7):
    for _j in range(7):
        A_TAB[_i][_j] = 0.0
A_TAB[1][0] = 1.0 / 5.0
A_TAB[2][0] = 3.0 / 40.0
A_TAB[2][1] = 9.0 / 40.0
A_TAB[3][0] = 44.0 / 45.0
A_TAB[3][1] = -56.0 / 15.0
A_TAB[3][2] = 32.0 / 9.0
A_TAB[4][0] = 19372.0 / 6561.0
A_TAB[4][1] = -25360.0 / 2187.0
A_TAB[4][2] = 64448.0 / 6561.0
A_TAB[4][3] = -212.0 / 729.0
A_TAB[5][0] = 9017.0 / 3168.0
A_TAB[5][1] = -355.0 / 33.0
A_TAB[5][2] = 46732.0 / 5247.0
A_TAB[5][3] = 49.0 / 176.0
A_TAB[5][4] = -5103.0 / 18656.0
A_TAB[6][0] = 35.0 / 384.0
A_TAB[6][1] = 0.0
A_TAB[6][2] = 500.0 / 1113.0
A_TAB[6][3] = 125.0 / 192.0
A_TAB[6][4] = -2187.0 / 6784.0
A_TAB[6][5] = 11.0 / 84.0

cdef double[7] B_TAB
for _i in range(6):
    B_TAB[_i] = A_TAB[6][_i]
B_TAB[6] = 0.0

cdef double[7] E_TAB
E_TAB[0] = 71.0 / 57600.0
E_TAB[1] = 0.0
E_TAB[2] = -71.0 / 16695.0
E_TAB[3] = 71.0 / 1920.0
E_TAB[4] = -17253.0 / 339200.0
E_TAB[5] = 22.0 / 525.0
E_TAB[6] = -1.0 / 40.0

cdef double[7][4] P_TAB
P_TAB[0][0] = 1.0
P_TAB[0][1] = -8048581381.0 / 2820520608.0
P_TAB[0][2] = 8663915743.0 / 2820520608.0
P_TAB[0][3] = -12715105075.0 / 11282082432.0
for _j in range(4):
    P_TAB[1][_j] = 0.0
P_TAB[2][0] = 0.0
P_TAB[2][1] = 131558114200.0 / 32700410799.0
P_TAB[2][2] = -68118460800.0 / 10900136933.0
P_TAB[2][3] = 87487479700.0 / 32700410799.0
P_TAB[3][0] = 0.0
P_TAB[3][1] = -1754552775.0 / 470086768.0
P_TAB[3][2] = 14199869525.0 / 1410260304.0
P_TAB[3][3] = -10690763975.0 / 1880347072.0
P_TAB[4][0] = 0.0
P_TAB[4][1] = 127303824393.0 / 49829197408.0
P_TAB[4][2] = -318862633887.0 / 49829197408.0
P_TAB[4][3] = 701980252875.0 / 199316789632.0
P_TAB[5][0] = 0.0
P_TAB[5][1] = -282668133.0 / 205662961.0
P_TAB[5][2] = 2019193451.0 / 616988883.0
P_TAB[5][3] = -1453857185.0 / 822651844.0
P_TAB[6][0] = 0.0
P_TAB[6][1] = 40617522.0 / 29380423.0
P_TAB[6][2] = -110615467.0 / 29380423.0
P_TAB[6][3] = 69997945.0 / 29380423.0


# ---------------------------------------------------------------------------
# compiled right-hand sides
# ---------------------------------------------------------------------------

class KernelSingularControl(ArithmeticError):
    """Raised from a compiled RHS when rho falls below its floor; the flow
    layer converts it into the package's SingularControl."""


cdef class CompiledRHS:
    """Base class for C-level right-hand sides, y' = f(t, y), y in R^n."""
    cdef public int n

    cdef int eval(self, double t, double* y, double* out) except -1:
        raise NotImplementedError

    def __call__(self, double t, y):
        cdef cnp.ndarray[double, ndim=1] ya = np.ascontiguousarray(y, dtype=np.float64)
        cdef cnp.ndarray[double, ndim=1] out = np.empty(self.n, dtype=np.float64)
        self.eval(t, <double*> ya.data, <double*> out.data)
        return out


cdef class KeplerExtremalRHS(CompiledRHS):
    """Extremal field of the built-in nilpotent system, optionally reversed
    in time; y = (x1..x4, p1..p4)."""
    cdef double sign
    cdef double rho_floor

    def __init__(self, double direction=1.0, double rho_floor=0.0):
        self.n = 8
        self.sign = direction
        self.rho_floor = rho_floor

    cdef int eval(self, double t, double* y, double* out) except -1:
        cdef double rho = hypot(y[6], y[7])
        if rho <= self.rho_floor:
            raise KernelSingularControl(rho)
        cdef double s = self.sign
        out[0] = s * (1.0 + y[2])
        out[1] = s * y[3]
        out[2] = s * (y[6] / rho)
        out[3] = s * (y[7] / rho)
        out[4] = 0.0
        out[5] = 0.0
        out[6] = -s * y[4]
        out[7] = -s * y[5]
        return 0


cdef class KeplerFrozenRHS(CompiledRHS):
    """Same field with the control held constant (switch restarts)."""
    cdef double sign, u1, u2

    def __init__(self, double u1, double u2, double direction=1.0):
        self.n = 8
        self.sign = direction
        self.u1 = u1
        self.u2 = u2

    cdef int eval(self, double t, double* y, double* out) except -1:
        cdef double s = self.sign
        out[0] = s * (1.0 + y[2])
        out[1] = s * y[3]
        out[2] = s * self.u1
        out[3] = s * self.u2
        out[4] = 0.0
        out[5] = 0.0
        out[6] = -s * y[4]
        out[7] = -s * y[5]
        return 0


def compiled_rhs(kernel_id, double direction=1.0, frozen_u=None, double rho_floor=0.0):
    """Compiled extremal field for a registered kernel id, or None."""
    if kernel_id == "nilpotent-kepler":
        if frozen_u is None:
            return KeplerExtremalRHS(direction, rho_floor)
        return KeplerFrozenRHS(float(frozen_u[0]), float(frozen_u[1]), direction)
    return None


# ---------------------------------------------------------------------------
# stepper kernels
# ---------------------------------------------------------------------------

def dp54_try_step(object f, double t, double[::1] y, double h,
                  double rtol, double atol, double[:, ::1] K, double[::1] y_out):
    """One embedded 5(4) step; same contract as the pure backend."""
    cdef int n = y.shape[0]
    cdef int s, i, j
    cdef double acc, d, sc, e
    cdef double err2 = 0.0
    cdef CompiledRHS crhs
    cdef double[::1] ytmp = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ystage_py
    cdef cnp.ndarray[double, ndim=1] krow

    if isinstance(f, CompiledRHS):
        crhs = <CompiledRHS> f
        for s in range(1, 6):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += A_TAB[s][j] * K[j, i]
                ytmp[i] = y[i] + h * acc
            crhs.eval(t + C_NODES[s] * h, &ytmp[0], &K[s, 0])
        for i in range(n):
            acc = 0.0
            for j in range(6):
                acc += B_TAB[j] * K[j, i]
            y_out[i] = y[i] + h * acc
        crhs.eval(t + h, &y_out[0], &K[6, 0])
    else:
        ystage_py = np.empty(n, dtype=np.float64)
        for s in range(1, 6):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += A_TAB[s][j] * K[j, i]
                ystage_py[i] = y[i] + h * acc
            krow = np.ascontiguousarray(f(t + C_NODES[s] * h, ystage_py), dtype=np.float64)
            for i in range(n):
                K[s, i] = krow[i]
        for i in range(n):
            acc = 0.0
            for j in range(6):
                acc += B_TAB[j] * K[j, i]
            y_out[i] = y[i] + h * acc
        krow = np.ascontiguousarray(f(t + h, np.asarray(y_out)), dtype=np.float64)
        for i in range(n):
            K[6, i] = krow[i]

    for i in range(n):
        e = 0.0
        for j in range(7):
            e += E_TAB[j] * K[j, i]
        e *= h
        d = y[i] if y[i] >= 0.0 else -y[i]
        sc = y_out[i] if y_out[i] >= 0.0 else -y_out[i]
        if d > sc:
            sc = d
        sc = atol + rtol * sc
        err2 += (e / sc) * (e / sc)
    return sqrt(err2 / n)


def dp54_dense_eval(double[::1] y0, double h, double[:, ::1] K, double theta):
    """Evaluate the quartic interpolant of one step at fraction theta."""
    cdef int n = y0.shape[0]
    cdef int i, j
    cdef double[4] tp
    cdef double acc, w
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n, dtype=np.float64)
    tp[0] = theta
    tp[1] = theta * theta
    tp[2] = tp[1] * theta
    tp[3] = tp[2] * theta
    cdef double[7] wrow
    for j in range(7):
        w = 0.0
        for i in range(4):
            w += P_TAB[j][i] * tp[i]
        wrow[j] = w
    for i in range(n):
        acc = 0.0
        for j in range(7):
            acc += wrow[j] * K[j, i]
        out[i] = y0[i] + h * acc
    return out
