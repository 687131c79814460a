"""Independent reference values for the test suite.

Everything here is computed without touching the package's integrator:
closed forms where the flat test model admits them, finite differences and
adaptive quadrature (scipy) elsewhere.  Tests compare package output against
these, never against the package itself.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad


# ---------------------------------------------------------------------------
# flat test model: xdot = (1 + x3, x4, u1, u2), control on the unit disk
# ---------------------------------------------------------------------------

def flat_adjoint(p0, t):
    """Closed-form adjoint: pdot = (0, 0, -p1, -p2) regardless of control."""
    p1, p2, p3, p4 = p0
    return np.array([p1, p2, p3 - t * p1, p4 - t * p2], dtype=float)


def flat_rho(p0, t):
    p = flat_adjoint(p0, t)
    return math.hypot(p[2], p[3])


def flat_switch_time(p0):
    """Time at which (p3, p4)(t) = (p3 - t p1, p4 - t p2) vanishes, or None.

    Requires p1 p4 = p2 p3 (proportionality) and a common positive root.
    """
    p1, p2, p3, p4 = (float(v) for v in p0)
    if abs(p1 * p4 - p2 * p3) > 1e-13 * (1 + np.linalg.norm(p0)) ** 2:
        return None
    cands = []
    if p1 != 0.0:
        cands.append(p3 / p1)
    if p2 != 0.0:
        cands.append(p4 / p2)
    if not cands:
        return None
    t = cands[0]
    if len(cands) == 2 and abs(cands[0] - cands[1]) > 1e-10 * (1 + abs(t)):
        return None
    return t if t > 0 else None


def flat_control(p0, t):
    p = flat_adjoint(p0, t)
    r = math.hypot(p[2], p[3])
    if r == 0.0:
        raise ZeroDivisionError("control undefined at the switch")
    return np.array([p[2] / r, p[3] / r])


def flat_state_quad(p0, x0, t, points=()):
    """State at time t under the maximizing control, via adaptive quadrature.

    x3, x4 are integrals of u(t); x1, x2 are double integrals, reduced to
    single ones by Fubini: x1(t) = x1(0) + t + t*x3(0) + int_0^t (t-s) u1(s) ds.
    """
    x0 = np.asarray(x0, dtype=float)
    pts = [p for p in points if 0 < p < t]

    def u1(s):
        return flat_control(p0, s)[0]

    def u2(s):
        return flat_control(p0, s)[1]

    kw = dict(epsabs=1e-13, epsrel=1e-13, limit=400, points=pts or None)
    i1, _ = quad(u1, 0, t, **kw)
    i2, _ = quad(u2, 0, t, **kw)
    j1, _ = quad(lambda s: (t - s) * u1(s), 0, t, **kw)
    j2, _ = quad(lambda s: (t - s) * u2(s), 0, t, **kw)
    return np.array([
        x0[0] + t + t * x0[2] + j1,
        x0[1] + t * x0[3] + j2,
        x0[2] + i1,
        x0[3] + i2,
    ])


# --- the reference bang-bang extremal: z(0) = (0, (-1, 0, -2, 0)) ----------

REF_P0 = np.array([-1.0, 0.0, -2.0, 0.0])
REF_X0 = np.zeros(4)
REF_TBAR = 2.0
REF_U_MINUS = np.array([-1.0, 0.0])
REF_U_PLUS = np.array([1.0, 0.0])
REF_BRACKETS = (1.0, 0.0, 0.0)   # (h01, h02, h12) at every point of the extremal


def ref_state(t):
    """Piecewise-polynomial state of the reference extremal."""
    t = float(t)
    if t <= REF_TBAR:
        return np.array([t - 0.5 * t * t, 0.0, -t, 0.0])
    return np.array([0.5 * t * t - 3.0 * t + 4.0, 0.0, t - 4.0, 0.0])


def ref_costate(t):
    return flat_adjoint(REF_P0, t)


def ref_control(t):
    return REF_U_MINUS if t < REF_TBAR else REF_U_PLUS


def ref_z(t):
    return np.concatenate([ref_state(t), ref_costate(t)])


# ---------------------------------------------------------------------------
# generic finite-difference oracles
# ---------------------------------------------------------------------------

def fd_jacobian(fun, x, h=1e-6):
    """Central-difference Jacobian of R^n -> R^m."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        J[:, j] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h)
    return J


def fd_lie_bracket(fi, fj, x, h=1e-6):
    """[fi, fj](x) = Jfj(x) fi(x) - Jfi(x) fj(x), Jacobians by differences."""
    ji = fd_jacobian(fi, x, h)
    jj = fd_jacobian(fj, x, h)
    return jj @ np.asarray(fi(x)) - ji @ np.asarray(fj(x))


def fd_poisson(ha, hb, z, h=1e-6):
    """{ha, hb}(x, p) = dp(ha) . dx(hb) - dx(ha) . dp(hb), via differences.

    ha, hb map an 8-vector (x, p) to a scalar.
    """
    z = np.asarray(z, dtype=float)
    ga = fd_jacobian(lambda w: np.array([ha(w)]), z, h)[0]
    gb = fd_jacobian(lambda w: np.array([hb(w)]), z, h)[0]
    return float(ga[4:] @ gb[:4] - ga[:4] @ gb[4:])


# ---------------------------------------------------------------------------
# reference Runge-Kutta (classic fixed-step RK4) for cross-checks
# ---------------------------------------------------------------------------

def rk4(f, y0, t0, t1, n):
    """Plain fixed-step RK4; deliberately unrelated to the package stepper."""
    y = np.asarray(y0, dtype=float).copy()
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = np.asarray(f(t, y))
        k2 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k1))
        k3 = np.asarray(f(t + 0.5 * h, y + 0.5 * h * k2))
        k4 = np.asarray(f(t + h, y + h * k3))
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y
