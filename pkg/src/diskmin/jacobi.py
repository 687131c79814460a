"""Jacobi fields, transition matrices, and second-order tests.

The variational (Jacobi) equation  d/dt dz = A(z(t)) dz  is propagated along
an extremal arc-by-arc.  At a transversal switch the one-sided limits are
bridged by the rank-one jump map

    dz+ = dz- + (zdot- - zdot+) * dtbar,
    dtbar = -(alpha*a + beta*b)/(alpha^2 + beta^2),

the least-squares solution of the switching-persistence system; its residual
|beta*a - alpha*b|/sqrt(alpha^2+beta^2) measures the failure of the variation
to keep the contact (it vanishes exactly for variations tangent to the
stable stratum).

The second-order machinery assembles M(t) = [xdot(t) | dx1 | dx2 | dx3] from
three vertical initial directions tangent to the stable stratum (switching
case) or to the zero level of the maximized Hamiltonian (smooth case), and
scans det M(t) for sign changes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline
from scipy.linalg import null_space

from .errors import (
    AssumptionViolated,
    ConfigError,
    NonTransversalCrossing,
    SingularControl,
)
from .flow import Extremal, SwitchEvent
from .hamiltonian import ExtremalPoint, optimal_control
from .stepping import Driver
from .systems import AffineSystem
from .tolerances import DEFAULT_TOL, Tolerances

Array = NDArray[np.float64]

# symplectic form on (x, p), consistent with xdot = dH/dp, pdot = -dH/dx
SYMPLECTIC_J = np.block([[np.zeros((4, 4)), np.eye(4)], [-np.eye(4), np.zeros((4, 4))]])

# the switch bridge hands over to the frozen-control linearization once
# rho drops below this multiple of the contact tolerance
_CUT_RHO_FACTOR = 10.0

# determinant samples below this multiple of the local Hadamard bound
# (product of column norms) carry no sign information at the integration
# tolerance and are treated as numerically zero
_DET_SIG_REL = 1e-8


# ---------------------------------------------------------------------------
# the linearized extremal field A(z)
# ---------------------------------------------------------------------------

# cached constant Jacobians for systems with affine fields
_JAC_CACHE: dict[int, tuple[Array, Array, Array]] = {}


def _jacs(sys: AffineSystem, x: Array) -> tuple[Array, Array, Array]:
    if sys.jac_constant:
        cached = _JAC_CACHE.get(id(sys))
        if cached is None:
            cached = (sys.eval_jac(0, x), sys.eval_jac(1, x), sys.eval_jac(2, x))
            _JAC_CACHE[id(sys)] = cached
        return cached
    return sys.eval_jac(0, x), sys.eval_jac(1, x), sys.eval_jac(2, x)


def _zdot(sys: AffineSystem, z: Array, tol: Tolerances) -> Array:
    x, p = z[:4], z[4:]
    f0, f1, f2 = sys.fields(x)
    h1, h2 = float(p @ f1), float(p @ f2)
    rho = math.hypot(h1, h2)
    if rho < tol.tol_rho(float(np.linalg.norm(p))):
        raise SingularControl(rho, tol.tol_rho(float(np.linalg.norm(p))))
    u1, u2 = h1 / rho, h2 / rho
    jf0, jf1, jf2 = _jacs(sys, x)
    m0 = jf0 + u1 * jf1 + u2 * jf2
    return np.concatenate([f0 + u1 * f1 + u2 * f2, -(m0.T @ p)])


def _zdot_frozen(sys: AffineSystem, z: Array, u: Array) -> Array:
    x, p = z[:4], z[4:]
    f0, f1, f2 = sys.fields(x)
    jf0, jf1, jf2 = _jacs(sys, x)
    m0 = jf0 + u[0] * jf1 + u[1] * jf2
    return np.concatenate([f0 + u[0] * f1 + u[1] * f2, -(m0.T @ p)])


def _drift_hessian_term(sys: AffineSystem, x: Array, p: Array, u1: float,
                        u2: float, h: float) -> Array:
    """W = d/dx [ (JF0 + u1 JF1 + u2 JF2)^T p ] with u, p held fixed,
    by central differences (the only second-derivative information needed)."""
    W = np.empty((4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        mp = (sys.eval_jac(0, x + e) + u1 * sys.eval_jac(1, x + e)
              + u2 * sys.eval_jac(2, x + e))
        mm = (sys.eval_jac(0, x - e) + u1 * sys.eval_jac(1, x - e)
              + u2 * sys.eval_jac(2, x - e))
        W[:, k] = (mp.T @ p - mm.T @ p) / (2 * h)
    return W


def variational_matrix(sys: AffineSystem, z: Array,
                       tol: Tolerances = DEFAULT_TOL,
                       mode: str = "hybrid") -> Array:
    """A(z): the 8x8 Jacobian of the extremal vector field at z.

    mode="hybrid" (default) assembles the exact blocks from the supplied
    field Jacobians -- including the curvature of the maximizer,
    du/d(H1,H2) = (I - u u^T)/rho -- and finite-differences only the
    second-derivative drift term.  mode="fd" differences the extremal field
    directly (cross-check path).
    """
    z = np.asarray(z, dtype=float)
    x, p = z[:4], z[4:]
    f1, f2 = sys.eval_field(1, x), sys.eval_field(2, x)
    h1, h2 = float(p @ f1), float(p @ f2)
    rho = math.hypot(h1, h2)
    pnorm = float(np.linalg.norm(p))
    if rho < tol.tol_rho(pnorm):
        raise SingularControl(rho, tol.tol_rho(pnorm))

    if mode == "fd":
        h = tol.fd_step(float(np.linalg.norm(z)))
        A = np.empty((8, 8))
        for j in range(8):
            e = np.zeros(8)
            e[j] = h
            A[:, j] = (_zdot(sys, z + e, tol) - _zdot(sys, z - e, tol)) / (2 * h)
        return A
    if mode != "hybrid":
        raise ConfigError(f"unknown variational mode {mode!r}")

    u = np.array([h1, h2]) / rho
    jf0, jf1, jf2 = _jacs(sys, x)
    m0 = jf0 + u[0] * jf1 + u[1] * jf2
    F = np.column_stack([f1, f2])
    dxh = np.vstack([jf1.T @ p, jf2.T @ p])      # rows: dH1/dx, dH2/dx
    dph = np.vstack([f1, f2])                    # rows: dH1/dp, dH2/dp
    G = (np.eye(2) - np.outer(u, u)) / rho       # du/d(H1,H2)
    W = (np.zeros((4, 4)) if sys.jac_constant else
         _drift_hessian_term(sys, x, p, u[0], u[1],
                             tol.fd_step(float(np.linalg.norm(z)))))

    A = np.empty((8, 8))
    A[:4, :4] = m0 + F @ (G @ dxh)
    A[:4, 4:] = F @ (G @ dph)
    A[4:, 4:] = -m0.T - dxh.T @ (G @ dph)
    A[4:, :4] = -W - dxh.T @ (G @ dxh)
    return A


def variational_rhs(sys: AffineSystem, z: Array, deltaz: Array,
                    tol: Tolerances = DEFAULT_TOL, mode: str = "hybrid") -> Array:
    """A(z) * deltaz: right-hand side of the Jacobi equation at (z, deltaz)."""
    return variational_matrix(sys, z, tol=tol, mode=mode) @ np.asarray(deltaz, float)


def frozen_variational_matrix(sys: AffineSystem, z: Array, u: Array,
                              tol: Tolerances = DEFAULT_TOL) -> Array:
    """Linearization of the frozen-control field (no maximizer curvature);
    used to bridge the last sliver before/after a switch where 1/rho blows
    up but the control limit is already locked in."""
    z = np.asarray(z, dtype=float)
    x, p = z[:4], z[4:]
    jf0, jf1, jf2 = _jacs(sys, x)
    m0 = jf0 + u[0] * jf1 + u[1] * jf2
    W = (np.zeros((4, 4)) if sys.jac_constant else
         _drift_hessian_term(sys, x, p, u[0], u[1],
                             tol.fd_step(float(np.linalg.norm(z)))))
    A = np.zeros((8, 8))
    A[:4, :4] = m0
    A[4:, 4:] = -m0.T
    A[4:, :4] = -W
    return A


# ---------------------------------------------------------------------------
# the switch jump
# ---------------------------------------------------------------------------

def hamiltonian_differentials(sys: AffineSystem, point: ExtremalPoint) -> tuple[Array, Array]:
    """The 8-covectors dH1, dH2 at a phase point: dHi = (JFi^T p, Fi)."""
    x, p = point.x, point.p
    dh1 = np.concatenate([sys.eval_jac(1, x).T @ p, sys.eval_field(1, x)])
    dh2 = np.concatenate([sys.eval_jac(2, x).T @ p, sys.eval_field(2, x)])
    return dh1, dh2


def switch_jump(deltaz_minus: Array, zdot_minus: Array, zdot_plus: Array,
                dh1: Array, dh2: Array,
                tol: Tolerances = DEFAULT_TOL,
                pnorm: float = 1.0) -> tuple[Array, float, float]:
    """Transport a Jacobi field across a transversal switch.

    Returns (deltaz_plus, delta_tbar, residual).  delta_tbar is the
    least-squares first-order shift of the switching time; the residual is
    the orthogonal component of the 2-equation persistence system and
    vanishes for variations tangent to the stable stratum.
    """
    deltaz_minus = np.asarray(deltaz_minus, float)
    alpha = float(dh1 @ zdot_minus)
    beta = float(dh2 @ zdot_minus)
    denom = alpha * alpha + beta * beta
    if denom < tol.tol_transversal(pnorm) ** 2:
        raise NonTransversalCrossing(
            f"switching-function drift {math.sqrt(denom):.3e} too small for the jump")
    a = float(dh1 @ deltaz_minus)
    b = float(dh2 @ deltaz_minus)
    delta_tbar = -(alpha * a + beta * b) / denom
    deltaz_plus = deltaz_minus + (zdot_minus - zdot_plus) * delta_tbar
    residual = abs(beta * a - alpha * b) / math.sqrt(denom)
    return deltaz_plus, delta_tbar, residual


def switch_jump_matrix(zdot_minus: Array, zdot_plus: Array,
                       dh1: Array, dh2: Array,
                       tol: Tolerances = DEFAULT_TOL,
                       pnorm: float = 1.0) -> Array:
    """The jump as a rank-one update  I + (zdot- - zdot+) w^T  acting on
    Jacobi-field columns."""
    alpha = float(dh1 @ zdot_minus)
    beta = float(dh2 @ zdot_minus)
    denom = alpha * alpha + beta * beta
    if denom < tol.tol_transversal(pnorm) ** 2:
        raise NonTransversalCrossing(
            f"switching-function drift {math.sqrt(denom):.3e} too small for the jump")
    w = -(alpha * dh1 + beta * dh2) / denom
    return np.eye(8) + np.outer(zdot_minus - zdot_plus, w)


# ---------------------------------------------------------------------------
# piecewise propagation of the coupled (z, Phi) system
# ---------------------------------------------------------------------------

@dataclass
class _Phase:
    kind: str                      # "smooth" | "bridge" | "jump"
    t0: float
    t1: float
    u: Optional[Array] = None      # frozen control (bridge)
    ev: Optional[SwitchEvent] = None


def _switch_cut(ev: SwitchEvent, tol: Tolerances) -> float:
    pnorm = float(np.linalg.norm(ev.z_bar[4:]))
    return _CUT_RHO_FACTOR * tol.tol_switch_rho(pnorm) / ev.slope


def _build_itinerary(extremal: Extremal, tol: Tolerances) -> list[_Phase]:
    if extremal.t_final <= extremal.t0:
        raise ConfigError("variational propagation expects a forward extremal")
    phases: list[_Phase] = []
    prev_ev: Optional[SwitchEvent] = None
    for i, arc in enumerate(extremal.arcs):
        ev = extremal.switches[i] if i < len(extremal.switches) else None
        a, b = arc.t_start, arc.t_end
        start = a
        if prev_ev is not None:
            cut = min(_switch_cut(prev_ev, tol), 0.25 * (b - a))
            phases.append(_Phase("bridge", a, a + cut, u=prev_ev.u_plus, ev=prev_ev))
            start = a + cut
        if ev is not None:
            cut = min(_switch_cut(ev, tol), 0.25 * (b - start))
            if ev.t_bar - cut > start:
                phases.append(_Phase("smooth", start, ev.t_bar - cut))
            phases.append(_Phase("bridge", ev.t_bar - cut, ev.t_bar, u=ev.u_minus, ev=ev))
            phases.append(_Phase("jump", ev.t_bar, ev.t_bar, ev=ev))
        elif b > start:
            phases.append(_Phase("smooth", start, b))
        prev_ev = ev
    return phases


class _VariationalWalker:
    """One forward pass of the coupled system (z, Phi) along an extremal.

    Queries must come in nondecreasing time order; at a switch time the
    `side` argument selects the pre- or post-jump state.
    """

    def __init__(self, sys: AffineSystem, extremal: Extremal,
                 tol: Tolerances = DEFAULT_TOL, mode: str = "hybrid"):
        self.sys = sys
        self.tol = tol
        self.mode = mode
        self.phases = _build_itinerary(extremal, tol)
        self.idx = 0
        self.t = extremal.t0
        self.z = extremal.z0.z.copy()
        self.Phi = np.eye(8)
        self._drv: Optional[Driver] = None
        self._drv_idx = -1
        self._slack = 1e-9 * (1.0 + abs(extremal.t_final))

    # -- coupled right-hand sides ------------------------------------------

    def _rhs_for(self, ph: _Phase) -> Callable:
        sys, tol, mode = self.sys, self.tol, self.mode
        if ph.kind == "smooth":
            def rhs(s, Y):
                z = Y[:8]
                A = variational_matrix(sys, z, tol=tol, mode=mode)
                out = np.empty(72)
                out[:8] = _zdot(sys, z, tol)
                out[8:] = (A @ Y[8:].reshape(8, 8)).ravel()
                return out
        else:
            u = ph.u
            def rhs(s, Y):
                z = Y[:8]
                A = frozen_variational_matrix(sys, z, u, tol=tol)
                out = np.empty(72)
                out[:8] = _zdot_frozen(sys, z, u)
                out[8:] = (A @ Y[8:].reshape(8, 8)).ravel()
                return out
        return rhs

    def _ensure_driver(self, ph: _Phase) -> Driver:
        if self._drv_idx != self.idx:
            y0 = np.concatenate([self.z, self.Phi.ravel()])
            span = max(ph.t1 - self.t, 1e-15)
            self._drv = Driver(self._rhs_for(ph), y0, self.tol.tol_int, self.tol.tol_int,
                               h_floor=self.tol.h_floor(self.t) * 1e-3, span_hint=span)
            self._drv_base = self.t
            self._drv_idx = self.idx
        return self._drv

    def _integrate_to(self, ph: _Phase, t_target: float) -> None:
        drv = self._ensure_driver(ph)
        s_target = t_target - self._drv_base
        while drv.s < s_target - 1e-15 * (1.0 + abs(s_target)):
            drv.advance(max_step=s_target - drv.s)
        self.t = self._drv_base + drv.s
        self.z = drv.y[:8].copy()
        self.Phi = drv.y[8:].reshape(8, 8).copy()

    # -- public ---------------------------------------------------------------

    def advance_to(self, t: float, side: int = +1) -> tuple[Array, Array]:
        """State and transition matrix at time t (side = -1 for the pre-jump
        limit when t is a switching time)."""
        if t < self.t - self._slack:
            raise ConfigError("walker queries must be time-ordered")
        while True:
            if self.idx >= len(self.phases):
                if t <= self.t + self._slack:
                    return self.z.copy(), self.Phi.copy()
                raise ConfigError(f"t={t} beyond the extremal's final time")
            ph = self.phases[self.idx]
            if ph.kind == "jump":
                at_jump = abs(t - ph.t0) <= self._slack
                if at_jump and side < 0:
                    return self.z.copy(), self.Phi.copy()
                ev = ph.ev
                pnorm = float(np.linalg.norm(ev.z_bar[4:]))
                dh1, dh2 = hamiltonian_differentials(
                    self.sys, ExtremalPoint.from_z(ev.z_bar))
                jmap = switch_jump_matrix(ev.zdot_minus, ev.zdot_plus, dh1, dh2,
                                          tol=self.tol, pnorm=pnorm)
                self.Phi = jmap @ self.Phi
                self.idx += 1
                if at_jump and side > 0:
                    return self.z.copy(), self.Phi.copy()
                continue
            if t <= ph.t1 + self._slack:
                self._integrate_to(ph, min(t, ph.t1))
                if t <= ph.t1 - self._slack:
                    return self.z.copy(), self.Phi.copy()
                # t lands on the phase boundary: fall through so that jump
                # handling (side selection) applies
                self.idx += 1
                if self.idx >= len(self.phases) or self.phases[self.idx].kind != "jump":
                    return self.z.copy(), self.Phi.copy()
                continue
            self._integrate_to(ph, ph.t1)
            self.idx += 1


def transition_matrix(sys: AffineSystem, extremal: Extremal, t: float,
                      side: int = +1, tol: Tolerances = DEFAULT_TOL,
                      mode: str = "hybrid") -> Array:
    """Phi(t) with Phi(t0) = I, propagated across switches by the jump map.

    ``side=-1`` returns the pre-jump limit when t is a switching time.
    """
    if abs(t - extremal.t0) <= 1e-15 * (1.0 + abs(t)):
        return np.eye(8)
    walker = _VariationalWalker(sys, extremal, tol=tol, mode=mode)
    _, Phi = walker.advance_to(t, side=side)
    return Phi


def propagate_jacobi(sys: AffineSystem, extremal: Extremal, deltaz0: Array,
                     times: list[float], tol: Tolerances = DEFAULT_TOL,
                     mode: str = "hybrid") -> list["JacobiField"]:
    """Jacobi field deltaz(t) with deltaz(t0) = deltaz0 at the given
    (nondecreasing) times."""
    deltaz0 = np.asarray(deltaz0, float)
    walker = _VariationalWalker(sys, extremal, tol=tol, mode=mode)
    out = []
    for t in times:
        _, Phi = walker.advance_to(t)
        out.append(JacobiField(t=t, deltaz=Phi @ deltaz0))
    return out


@dataclass(frozen=True)
class JacobiField:
    t: float
    deltaz: Array


# ---------------------------------------------------------------------------
# stable-fiber basis and the (A2) certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransversalityCertificate:
    """Numerical (A2) check: the functional c on the vertical fiber whose
    kernel is the tangent to (fiber intersect stable stratum)."""

    c: Array                 # 4-vector: c(dp0) = beta*a(dp0) - alpha*b(dp0)
    c_norm: float            # |c| / sqrt(alpha^2+beta^2)
    alpha: float
    beta: float
    t_bar: float
    satisfied: bool


def fiber_stable_basis(
    sys: AffineSystem,
    extremal: Extremal,
    tol: Tolerances = DEFAULT_TOL,
    mode: str = "hybrid",
) -> tuple[list[Array], TransversalityCertificate]:
    """Orthonormal basis of the vertical directions tangent to the stable
    stratum, certified by c != 0 on the fiber (the numerical (A2) check).

    Propagates the four vertical unit directions to the pre-switch limit and
    evaluates the persistence functional c(dp0) = beta*a - alpha*b on them;
    the kernel of c (dimension 3) is the admissible initial set.
    """
    if extremal.switch_count != 1:
        raise ConfigError(
            f"stable-fiber basis needs exactly one switch, got {extremal.switch_count}")
    ev = extremal.switches[0]
    walker = _VariationalWalker(sys, extremal, tol=tol, mode=mode)
    _, Phi_minus = walker.advance_to(ev.t_bar, side=-1)

    pnorm = float(np.linalg.norm(ev.z_bar[4:]))
    dh1, dh2 = hamiltonian_differentials(sys, ExtremalPoint.from_z(ev.z_bar))
    alpha = float(dh1 @ ev.zdot_minus)
    beta = float(dh2 @ ev.zdot_minus)
    denom = math.sqrt(alpha * alpha + beta * beta)

    c = np.empty(4)
    for i in range(4):
        col = Phi_minus[:, 4 + i]          # response to dp0 = e_i (dx0 = 0)
        a = float(dh1 @ col)
        b = float(dh2 @ col)
        c[i] = beta * a - alpha * b
    c_norm = float(np.linalg.norm(c)) / denom
    satisfied = c_norm >= tol.tol_transversal(pnorm)
    cert = TransversalityCertificate(c=c, c_norm=c_norm, alpha=alpha, beta=beta,
                                     t_bar=ev.t_bar, satisfied=satisfied)
    if not satisfied:
        raise AssumptionViolated(
            "A2", f"fiber persistence functional |c| = {c_norm:.3e} below "
            f"{tol.tol_transversal(pnorm):.1e}: fiber contained in the stable "
            "stratum's tangent (no transversality)")

    kernel = null_space(c.reshape(1, 4))   # 4x3, orthonormal
    basis = [np.concatenate([np.zeros(4), kernel[:, j]]) for j in range(3)]
    return basis, cert


def level_fiber_basis(sys: AffineSystem, z0: ExtremalPoint,
                      tol: Tolerances = DEFAULT_TOL) -> list[Array]:
    """Vertical directions tangent to the fiber slice {h^max(x0, .) = 0}:
    the kernel of dp -> dp . xdot(0) (smooth-case basis)."""
    u = optimal_control(sys, z0, tol)
    f0, f1, f2 = sys.fields(z0.x)
    xdot0 = f0 + u[0] * f1 + u[1] * f2
    kernel = null_space(xdot0.reshape(1, 4))
    return [np.concatenate([np.zeros(4), kernel[:, j]]) for j in range(3)]


# ---------------------------------------------------------------------------
# det M(t) profile and verdicts
# ---------------------------------------------------------------------------

@dataclass
class JacobiProfile:
    basis: list[Array]
    grid: Array
    detM: Array
    hadamard: Array                   # per-point column-norm product (det scale)
    sides: list[str]                  # "interior" per grid row
    detM_left: Optional[float]        # det M(tbar-), switching case
    detM_right: Optional[float]
    scale_left: Optional[float]       # Hadamard scale of the one-sided columns
    scale_right: Optional[float]
    t_bar: Optional[float]
    conjugate_times: list[float]
    grazing_warnings: list[str]
    certificate: Optional[TransversalityCertificate]
    epsilon_t0: float
    tolerances: dict
    notes: list[str] = dc_field(default_factory=list)


@dataclass(frozen=True)
class TheoremVerdict:
    normal: bool                      # (i)
    disconjugate: bool                # (ii)
    same_sign: bool                   # (ii')
    statements: list[str]
    reasons: list[str]


def _xdot_of(sys: AffineSystem, z: Array, tol: Tolerances) -> Array:
    return _zdot(sys, z, tol)[:4]


def det_m_profile(
    sys: AffineSystem,
    extremal: Extremal,
    grid: Optional[Array] = None,
    epsilon_t0: Optional[float] = None,
    basis: Optional[list[Array]] = None,
    tol: Tolerances = DEFAULT_TOL,
    mode: str = "hybrid",
    npoints: int = 201,
) -> JacobiProfile:
    """Sample det M(t) = det(xdot(t), dx1(t), dx2(t), dx3(t)) along the
    extremal; at a switch record both one-sided determinants; locate sign
    changes and refine them on the interpolated determinant."""
    t0, t_f = extremal.t0, extremal.t_final
    if t_f <= t0:
        raise ConfigError("profile expects a forward extremal")
    span = t_f - t0
    if epsilon_t0 is None:
        epsilon_t0 = tol.eps_t0_rel * span
    notes: list[str] = []
    cert: Optional[TransversalityCertificate] = None

    if basis is None:
        if extremal.switch_count == 1:
            basis, cert = fiber_stable_basis(sys, extremal, tol=tol, mode=mode)
        elif extremal.switch_count == 0:
            basis = level_fiber_basis(sys, extremal.z0, tol)
        else:
            raise ConfigError(
                f"profile supports 0 or 1 switches, got {extremal.switch_count}")
    if len(basis) != 3:
        raise ConfigError("det M needs exactly 3 basis fields")
    B = np.column_stack([np.asarray(v, float) for v in basis])   # 8x3

    if grid is None:
        grid = np.linspace(t0 + epsilon_t0, t_f, npoints)
    else:
        grid = np.asarray(grid, dtype=float)
        kept = grid[grid > t0 + epsilon_t0]
        if kept.size < grid.size:
            notes.append(
                f"{grid.size - kept.size} grid point(s) at or below epsilon_t0 "
                f"= {epsilon_t0:.3e} excluded (det M(t0) = 0 structurally)")
        grid = np.sort(kept)

    t_bar = extremal.switches[0].t_bar if extremal.switch_count == 1 else None
    # keep grid points out of the bridge slivers around the switch
    if t_bar is not None:
        cut = _switch_cut(extremal.switches[0], tol)
        grid = grid[np.abs(grid - t_bar) > cut]

    walker = _VariationalWalker(sys, extremal, tol=tol, mode=mode)

    def det_at(z: Array, Phi: Array, xdot: Optional[Array] = None) -> tuple[float, float]:
        cols = (Phi @ B)[:4, :]
        xd = _xdot_of(sys, z, tol) if xdot is None else xdot
        M = np.column_stack([xd, cols])
        scale = float(np.prod(np.linalg.norm(M, axis=0)))
        return float(np.linalg.det(M)), scale

    detM = np.empty(grid.size)
    hadamard = np.empty(grid.size)
    detM_left = detM_right = scale_left = scale_right = None

    def one_sided() -> tuple[float, float, float, float]:
        ev = extremal.switches[0]
        z_m, Phi_m = walker.advance_to(t_bar, side=-1)
        dl, sl = det_at(z_m, Phi_m, xdot=ev.zdot_minus[:4])
        z_p, Phi_p = walker.advance_to(t_bar, side=+1)
        dr, sr = det_at(z_p, Phi_p, xdot=ev.zdot_plus[:4])
        return dl, dr, sl, sr

    for i, t in enumerate(grid):
        if t_bar is not None and t > t_bar and detM_left is None:
            detM_left, detM_right, scale_left, scale_right = one_sided()
        z, Phi = walker.advance_to(t)
        detM[i], hadamard[i] = det_at(z, Phi)
    if t_bar is not None and detM_left is None:        # switch at/after last grid point
        detM_left, detM_right, scale_left, scale_right = one_sided()

    conjugate_times, grazing = _scan_sign_changes(grid, detM, hadamard, t_bar)
    if np.all(np.abs(detM) <= _DET_SIG_REL * hadamard):
        notes.append("det M numerically zero on the whole sampled grid "
                     "(degenerate exponential map: no sign information)")

    return JacobiProfile(
        basis=[B[:, j].copy() for j in range(3)],
        grid=grid,
        detM=detM,
        hadamard=hadamard,
        sides=["interior"] * grid.size,
        detM_left=detM_left,
        detM_right=detM_right,
        scale_left=scale_left,
        scale_right=scale_right,
        t_bar=t_bar,
        conjugate_times=conjugate_times,
        grazing_warnings=grazing,
        certificate=cert,
        epsilon_t0=epsilon_t0,
        tolerances=tol.asdict(),
        notes=notes,
    )


def _scan_sign_changes(grid: Array, detM: Array, hadamard: Array,
                       t_bar: Optional[float]) -> tuple[list[float], list[str]]:
    """Sign changes of the sampled determinant, refined by bisection on a
    per-side cubic interpolant.

    Samples with |det| below the significance floor (a small multiple of the
    Hadamard bound of the columns) carry no sign; a sign change between the
    nearest significant neighbours is a conjugate event, while a dip to
    insignificance with equal flanking signs is reported as a grazing
    warning, not a conjugate time.
    """
    conj: list[float] = []
    grazing: list[str] = []
    if grid.size < 2:
        return conj, grazing

    def sides() -> list[np.ndarray]:
        if t_bar is None:
            return [np.arange(grid.size)]
        pre = np.nonzero(grid < t_bar)[0]
        post = np.nonzero(grid > t_bar)[0]
        return [idx for idx in (pre, post) if idx.size >= 2]

    for idx in sides():
        tt, dd, hh = grid[idx], detM[idx], hadamard[idx]
        sig = np.nonzero(np.abs(dd) > _DET_SIG_REL * hh)[0]
        if sig.size < 2:
            continue
        interp = CubicSpline(tt, dd) if tt.size >= 4 else (lambda s: np.interp(s, tt, dd))
        for a, b in zip(sig[:-1], sig[1:]):
            d0, d1 = dd[a], dd[b]
            if d0 * d1 < 0.0:
                lo, hi = tt[a], tt[b]
                flo = d0
                for _ in range(200):
                    if hi - lo <= 1e-10:
                        break
                    mid = 0.5 * (lo + hi)
                    fm = float(interp(mid))
                    if fm == 0.0:
                        lo = hi = mid
                        break
                    if flo * fm < 0:
                        hi = mid
                    else:
                        lo, flo = mid, fm
                conj.append(0.5 * (lo + hi))
            elif b - a > 1:
                t_mid = 0.5 * (tt[a] + tt[b])
                grazing.append(
                    f"det M grazes zero near t = {t_mid:.12g} without sign change")
    return conj, grazing


def check_theorem3(profile: JacobiProfile, p0cost: float) -> TheoremVerdict:
    """Render the second-order sufficiency verdict from a profile.

    (i) normal; (ii) no conjugate time off the switch and nonzero one-sided
    determinant product; (ii') the one-sided determinants share one sign.
    """
    reasons: list[str] = []
    statements: list[str] = []
    normal = p0cost < 0
    if not normal:
        reasons.append("abnormal extremal out of scope")
        return TheoremVerdict(False, False, False, ["verdict withheld"], reasons)

    interior_clean = len(profile.conjugate_times) == 0
    if not interior_clean:
        reasons.append(
            "conjugate time(s) detected at " +
            ", ".join(f"{t:.9g}" for t in profile.conjugate_times))
    if profile.detM_left is not None:
        floor_l = _DET_SIG_REL * (profile.scale_left or 1.0)
        floor_r = _DET_SIG_REL * (profile.scale_right or 1.0)
        oneside_ok = (abs(profile.detM_left) > floor_l
                      and abs(profile.detM_right) > floor_r)
        same_sign = oneside_ok and profile.detM_left * profile.detM_right > 0.0
        if not oneside_ok:
            reasons.append(
                f"one-sided determinants not significantly nonzero "
                f"(det M(tbar-) = {profile.detM_left:.6g}, "
                f"det M(tbar+) = {profile.detM_right:.6g})")
    else:
        oneside_ok = True
        same_sign = True
    disconjugate = interior_clean and oneside_ok

    if normal and disconjugate:
        statements.append(
            "locally time-minimizing among C0-close trajectories with the "
            "same endpoints (second-order sufficiency)")
    if normal and same_sign and interior_clean and profile.t_bar is not None:
        statements.append(
            "final-time map continuous and piecewise C1 near the endpoint")
    if not statements:
        statements.append("sufficiency not established")
    return TheoremVerdict(normal=normal, disconjugate=disconjugate,
                          same_sign=same_sign, statements=statements,
                          reasons=reasons)


def smooth_conjugate_test(
    sys: AffineSystem,
    extremal: Extremal,
    grid: Optional[Array] = None,
    tol: Tolerances = DEFAULT_TOL,
    mode: str = "hybrid",
) -> tuple[JacobiProfile, TheoremVerdict]:
    """Disconjugacy test for a switch-free normal extremal: det M(t) with the
    level-slice vertical basis; verdict reports the first conjugate time."""
    if extremal.switch_count != 0:
        raise ConfigError("smooth test expects a switch-free extremal")
    profile = det_m_profile(sys, extremal, grid=grid, tol=tol, mode=mode)
    verdict = check_theorem3(profile, extremal.z0.p0cost)
    return profile, verdict


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def profile_to_csv(profile: JacobiProfile, path,
                   header_lines: tuple[str, ...] = ()) -> None:
    conj = np.asarray(profile.conjugate_times, dtype=float)

    def conj_flag(t0, t1) -> int:
        return int(np.any((conj >= t0) & (conj <= t1))) if conj.size else 0

    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["t", "detM", "side", "conj_flag"])
        for i, t in enumerate(profile.grid):
            lo = profile.grid[i - 1] if i > 0 else t
            w.writerow([f"{t:.17g}", f"{profile.detM[i]:.17g}",
                        profile.sides[i], conj_flag(lo, t)])
        if profile.t_bar is not None:
            w.writerow([f"{profile.t_bar:.17g}", f"{profile.detM_left:.17g}", "-", 0])
            w.writerow([f"{profile.t_bar:.17g}", f"{profile.detM_right:.17g}", "+", 0])


def verdict_to_json(profile: JacobiProfile, verdict: TheoremVerdict, path,
                    extra: Optional[dict] = None) -> None:
    doc = {
        "flags": {
            "normal": verdict.normal,
            "disconjugate": verdict.disconjugate,
            "same_sign": verdict.same_sign,
        },
        "statements": verdict.statements,
        "reasons": verdict.reasons,
        "conjugate_times": list(map(float, profile.conjugate_times)),
        "detM_left": profile.detM_left,
        "detM_right": profile.detM_right,
        "t_bar": profile.t_bar,
        "epsilon_t0": profile.epsilon_t0,
        "grazing_warnings": profile.grazing_warnings,
        "notes": profile.notes,
        "tolerances": profile.tolerances,
        "certificate": None if profile.certificate is None else {
            "c": list(map(float, profile.certificate.c)),
            "c_norm": profile.certificate.c_norm,
            "alpha": profile.certificate.alpha,
            "beta": profile.certificate.beta,
            "t_bar": profile.certificate.t_bar,
            "satisfied": profile.certificate.satisfied,
        },
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
