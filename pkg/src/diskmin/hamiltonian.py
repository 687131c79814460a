"""Hamiltonian lifts, disk-optimal control, and contact classification.

For z = (x, p) in T*R^4 the lifts are Hi(z) = <p, Fi(x)> and the maximized
Hamiltonian of the time-minimal problem with |u| <= 1 is

    h^max(z) = H0 + sqrt(H1^2 + H2^2) + p0cost,

maximized by u = (H1, H2)/rho away from the switching surface
Sigma = {H1 = H2 = 0}.  Contacts with Sigma are classified by the bracket
lifts: transversal contacts (the only ones the flow machinery crosses) have
H12^2 < H01^2 + H02^2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, SigmaPlusEncounter, SingularControl
from .systems import AffineSystem, lie_bracket
from .tolerances import DEFAULT_TOL, Tolerances

Array = NDArray[np.float64]


@dataclass(frozen=True)
class ExtremalPoint:
    """A point of the extremal phase space, with the cost multiplier.

    ``p0cost`` is the (constant) multiplier of the running cost: -1 for
    normal extremals, 0 for abnormal ones.
    """

    x: Array
    p: Array
    p0cost: float = -1.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.shape != (4,) or p.shape != (4,):
            raise ConfigError("ExtremalPoint needs 4-vectors x and p")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p)) and np.isfinite(self.p0cost)):
            raise ConfigError("non-finite extremal point")
        if np.linalg.norm(p) == 0.0 and self.p0cost == 0.0:
            raise ConfigError("(p, p0cost) = 0 is not an admissible covector")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def z(self) -> Array:
        return np.concatenate([self.x, self.p])

    @classmethod
    def from_z(cls, z: Array, p0cost: float = -1.0) -> "ExtremalPoint":
        z = np.asarray(z, dtype=float)
        if z.shape != (8,):
            raise ConfigError("phase vector must have shape (8,)")
        return cls(x=z[:4], p=z[4:], p0cost=p0cost)


@dataclass(frozen=True)
class HamiltonianData:
    """Lifts of the fields and of their drift brackets at one point."""

    h0: float
    h1: float
    h2: float
    rho: float
    h01: float
    h02: float
    h12: float


class SigmaClass(enum.Enum):
    NOT_ON_SIGMA = "off"
    SIGMA_MINUS = "minus"    # transversal contact: h12^2 < h01^2 + h02^2
    SIGMA_PLUS = "plus"      # h12^2 > h01^2 + h02^2 (unsupported downstream)
    SIGMA_ZERO = "zero"      # boundary case, within tolerance of equality


def lifts(sys: AffineSystem, point: ExtremalPoint) -> HamiltonianData:
    x, p = point.x, point.p
    f0, f1, f2 = sys.fields(x)
    h1 = float(p @ f1)
    h2 = float(p @ f2)
    return HamiltonianData(
        h0=float(p @ f0),
        h1=h1,
        h2=h2,
        rho=float(np.hypot(h1, h2)),
        h01=float(p @ lie_bracket(sys, 0, 1, x)),
        h02=float(p @ lie_bracket(sys, 0, 2, x)),
        h12=float(p @ lie_bracket(sys, 1, 2, x)),
    )


def hmax(sys: AffineSystem, point: ExtremalPoint) -> float:
    """Maximized Hamiltonian; normal extremals run on the level {h^max = 0}."""
    hd = lifts(sys, point)
    return hd.h0 + hd.rho + point.p0cost


def optimal_control(
    sys: AffineSystem, point: ExtremalPoint, tol: Tolerances = DEFAULT_TOL
) -> Array:
    """The maximizing control (H1, H2)/rho.  Raises SingularControl within
    tolerance of the switching surface, where the maximizer is not unique."""
    hd = lifts(sys, point)
    floor = tol.tol_rho(float(np.linalg.norm(point.p)))
    if hd.rho < floor:
        raise SingularControl(hd.rho, floor)
    return np.array([hd.h1 / hd.rho, hd.h2 / hd.rho])


def classify_sigma(
    hd: HamiltonianData,
    pnorm: float,
    tol: Tolerances = DEFAULT_TOL,
) -> SigmaClass:
    """Classify a phase point relative to the switching surface.

    Points with rho above the scaled floor are off the surface; on it, the
    sign of  h12^2 - (h01^2 + h02^2)  (with a dead zone ``tol_sigma_class``)
    picks the stratum.
    """
    if hd.rho >= tol.tol_rho(pnorm):
        return SigmaClass.NOT_ON_SIGMA
    q = hd.h12 ** 2 - (hd.h01 ** 2 + hd.h02 ** 2)
    if q < -tol.tol_sigma_class:
        return SigmaClass.SIGMA_MINUS
    if q > tol.tol_sigma_class:
        return SigmaClass.SIGMA_PLUS
    return SigmaClass.SIGMA_ZERO


def switch_controls(a: float, b: float, c: float) -> tuple[Array, Array, float]:
    """One-sided control limits at a transversal contact.

    With (a, b, c) = (H01, H02, H12) at the contact, the incoming/outgoing
    controls are the unit fixed points of

        u1 = s*lam*(a - c*u2),   u2 = s*lam*(b + c*u1),   s = -1 / +1,

    which solve in closed form to

        u(s) = s*lam * (a - s*lam*c*b,  b + s*lam*c*a) / (1 + lam^2 c^2),

    with lam = 1/sqrt(a^2 + b^2 - c^2).  Returns (u_minus, u_plus, lam).
    Raises SigmaPlusEncounter when a^2 + b^2 - c^2 <= 0 (no unit solution).
    """
    disc = a * a + b * b - c * c
    if disc <= 0.0:
        raise SigmaPlusEncounter(a, b, c)
    lam = 1.0 / np.sqrt(disc)
    den = 1.0 + lam * lam * c * c

    def _branch(s: float) -> Array:
        sl = s * lam
        return sl * np.array([a - sl * c * b, b + sl * c * a]) / den

    return _branch(-1.0), _branch(+1.0), float(lam)


def switching_drift(hd: HamiltonianData, u: Array) -> Array:
    """d/dt (H1, H2) along the extremal flow with control value u:
    (H01 - u2*H12, H02 + u1*H12)."""
    return np.array([hd.h01 - u[1] * hd.h12, hd.h02 + u[0] * hd.h12])


def extremal_rhs(
    sys: AffineSystem, point: ExtremalPoint, tol: Tolerances = DEFAULT_TOL
) -> Array:
    """Right-hand side of the extremal flow with the maximizing control.

    zdot = (F0 + u1 F1 + u2 F2,  -(JF0 + u1 JF1 + u2 JF2)^T p)  with
    u = (H1, H2)/rho.  Raises SingularControl on the switching surface.
    """
    u = optimal_control(sys, point, tol)
    return frozen_control_rhs(sys, point, u)


def frozen_control_rhs(sys: AffineSystem, point: ExtremalPoint, u: Array) -> Array:
    """Extremal-equation right-hand side with the control held at ``u``
    (used for restarts at the switching surface, where the maximizer is
    momentarily undefined)."""
    x, p = point.x, point.p
    f0, f1, f2 = sys.fields(x)
    m = sys.eval_jac(0, x) + u[0] * sys.eval_jac(1, x) + u[1] * sys.eval_jac(2, x)
    xdot = f0 + u[0] * f1 + u[1] * f2
    pdot = -(m.T @ p)
    return np.concatenate([xdot, pdot])
