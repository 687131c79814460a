"""Two-point boundary solving and final-time map sampling.

``shoot`` finds the extremal joining x0 to x_f in free final time: a damped
Newton iteration on the five unknowns (p0, t_f) with residuals
(x(t_f) - x_f, h^max(x0, p0)).  The cost multiplier stays pinned at -1
(normal extremals); the zero-level equation removes the remaining scaling
freedom of the covector.  The Jacobian columns come from the switch-aware
transition matrix, so crossings of the switching surface are handled
first-order exactly.  Roots lying exactly on the switching surface (the
targets reachable by a switching extremal) get a dedicated endgame: the
iterate is slid onto the surface and refined inside its tangent space.

``tf_map_sample`` maps a segment of endpoints through ``shoot`` with warm
starts and records the final time on each side of the switching seam,
with one-sided finite-difference slopes -- the numerical PC1 picture of
the value function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DiskminError, NewtonDivergence, SingularJacobian
from .flow import Extremal, NearMiss, propagate_extremal, sigma_signed_miss
from .hamiltonian import ExtremalPoint, hmax
from .jacobi import _zdot, fiber_stable_basis, transition_matrix
from .systems import AffineSystem
from .tolerances import DEFAULT_TOL, Tolerances

Array = NDArray[np.float64]

_COND_LIMIT = 1e12
_MAX_HALVINGS = 30

# Switch acceptance used while evaluating shooting residuals.  Restarting
# across an accepted contact carries a state error of order the miss depth,
# so contacts accepted at the default 1e-8 put a ~1e-7 floor under the
# achievable residual.  Tightening the acceptance makes the integrator
# resolve anything shallower as a genuine near-miss passage, and the
# contacts that are still accepted sit below the solver's own target.
_SWITCH_ACCEPT_REL = 1e-13


@dataclass
class ShootResult:
    converged: bool
    p0: Array
    t_f: float
    residual: Array            # x(t_f) - x_f
    residual_norm: float
    level: float               # h^max(x0, p0), zero for a normal extremal
    iterations: int
    switch_count: int
    extremal: Optional[Extremal]


def _deepest_dip(ext: Extremal) -> float:
    """Smallest recorded near-miss distance to the switching surface."""
    dips = [d.rho_min for arc in ext.arcs for d in arc.diagnostics
            if isinstance(d, NearMiss)]
    return min(dips) if dips else math.inf


def _residual_state(sys: AffineSystem, x0: Array, p0: Array, t_f: float,
                    tol: Tolerances) -> tuple[Array, Optional[Extremal]]:
    """Endpoint x(t_f) and the propagated extremal (None for t_f = 0)."""
    start = ExtremalPoint(x=x0, p=p0)
    if t_f <= 1e-14 * (1.0 + abs(t_f)):
        return x0.copy(), None
    ext = propagate_extremal(sys, start, t_f, tol=tol)
    return ext.eval(t_f)[:4], ext


def shoot(sys: AffineSystem, x0: Array, x_f: Array, guess_p0: Array,
          guess_tf: float, tol: Tolerances = DEFAULT_TOL,
          max_iter: int = 25) -> ShootResult:
    """Solve x(t_f; x0, p0) = x_f, h^max(x0, p0) = 0 for (p0, t_f).

    Raises SingularJacobian when the shooting Jacobian's condition number
    exceeds 1e12 and NewtonDivergence when damping cannot reduce the
    residual or the iteration budget runs out.
    """
    x0 = np.asarray(x0, dtype=float)
    x_f = np.asarray(x_f, dtype=float)
    p0 = np.asarray(guess_p0, dtype=float).copy()
    t_f = float(guess_tf)

    scale_x = 1.0 + float(np.linalg.norm(x_f))
    tol_prop = tol.with_overrides(
        tol_switch_rho_rel=min(tol.tol_switch_rho_rel, _SWITCH_ACCEPT_REL))

    def full_residual(p: Array, tf: float) -> tuple[Array, Optional[Extremal]]:
        x_end, ext = _residual_state(sys, x0, p, tf, tol_prop)
        level = hmax(sys, ExtremalPoint(x=x0, p=p))
        return np.concatenate([x_end - x_f, [level]]), ext

    def jacobian_extremal(p: Array, tf: float, ext: Extremal) -> Extremal:
        """Extremal whose transition matrix supplies the Jacobian columns.

        When the tightened-acceptance propagation sailed through a dip that
        the caller's acceptance would have declared a switch, re-propagate
        at the caller's acceptance: the transition matrix then applies the
        rank-one switch update (the seam-side one-sided derivative) instead
        of integrating the near-singular boundary layer.
        """
        pn = float(np.linalg.norm(p))
        deep = tol.tol_switch_rho(pn)
        shallow = all(d.rho_min > deep
                      for arc in ext.arcs for d in arc.diagnostics
                      if isinstance(d, NearMiss))
        if shallow:
            return ext
        try:
            return propagate_extremal(sys, ExtremalPoint(x=x0, p=p), tf, tol=tol)
        except DiskminError:
            return ext

    def slide_to_surface(p: Array, tf: float, normal: Array,
                         slope0: float) -> Optional[Array]:
        """Move p along the surface normal until its trajectory touches the
        switching surface: scalar secant iteration on the signed
        closest-approach offset.  None when the iteration fails."""
        nn = float(np.linalg.norm(normal))
        if nn == 0.0 or slope0 <= 0.0:
            return None
        d = normal / nn
        target = 0.5 * tol_prop.tol_switch_rho(float(np.linalg.norm(p)))
        mu, mu_prev, m_prev = 0.0, None, None
        slope = slope0
        for _ in range(6):
            p_cur = p + mu * d
            try:
                _, rho_min, off = sigma_signed_miss(
                    sys, ExtremalPoint(x=x0, p=p_cur), tf, tol_prop)
            except DiskminError:
                return None
            if off == 0.0 or rho_min <= target:
                return p_cur
            if (m_prev is not None and off != m_prev and mu != mu_prev
                    and math.isfinite(off)):
                slope = (off - m_prev) / (mu - mu_prev)
            if slope == 0.0 or not math.isfinite(slope) or not math.isfinite(off):
                return None
            mu_prev, m_prev = mu, off
            mu = mu - off / slope
        return None

    res, ext = full_residual(p0, t_f)
    res_norm = float(np.linalg.norm(res))
    on_seam = False       # iterate slid onto the switching surface
    seam_banned = False   # surface refinement tried and abandoned

    for it in range(max_iter):
        if (np.linalg.norm(res[:4]) <= tol.tol_shoot_rel * scale_x
                and abs(res[4]) <= tol.tol_level):
            return ShootResult(True, p0, t_f, res[:4].copy(),
                               float(np.linalg.norm(res[:4])), float(res[4]),
                               it, ext.switch_count if ext else 0, ext)

        pn = float(np.linalg.norm(p0))

        # Jacobian: d x(t_f)/d p0 from the transition matrix, d x/d t_f from
        # the flow direction, and the level equation's gradient xdot(0)
        jac_ext = None
        if ext is not None:
            jac_ext = jacobian_extremal(p0, t_f, ext)
            Phi = transition_matrix(sys, jac_ext, t_f, tol=tol)
            dxdp = Phi[:4, 4:]
            xdot_end = _zdot(sys, ext.eval(t_f), tol_prop)[:4]
        else:
            dxdp = np.zeros((4, 4))
            xdot_end = _zdot(sys, np.concatenate([x0, p0]), tol_prop)[:4]
        xdot0 = _zdot(sys, np.concatenate([x0, p0]), tol_prop)[:4]
        J = np.zeros((5, 5))
        J[:4, :4] = dxdp
        J[:4, 4] = xdot_end
        J[4, :4] = xdot0

        # A root on the switching surface is approached from the near-miss
        # side, where the map's derivative picks up a boundary-layer term
        # growing like log of the miss depth and plain Newton turns linear.
        # Once an iterate hugs the surface, slide it exactly on (accepted
        # only on residual decrease) and restrict further steps to the
        # surface's tangent space, where the switch-model Jacobian is
        # one-sided exact and convergence is quadratic again.
        seam_normal = None
        seam_slope = 0.0
        seam_tangent = None
        if (not seam_banned and jac_ext is not None
                and jac_ext.switch_count == 1
                and (on_seam or _deepest_dip(ext) <= tol.tol_switch_rho(pn))):
            try:
                basis, cert = fiber_stable_basis(sys, jac_ext, tol=tol)
            except DiskminError:
                pass
            else:
                seam_normal = cert.c
                seam_slope = cert.c_norm
                seam_tangent = np.stack([b[4:] for b in basis])

        if (seam_normal is not None and ext.switch_count == 0
                and _deepest_dip(ext) <= tol.tol_switch_rho(pn)):
            snapped = slide_to_surface(p0, t_f, seam_normal, seam_slope)
            if snapped is not None:
                try:
                    res_s, ext_s = full_residual(snapped, t_f)
                except DiskminError:
                    pass
                else:
                    norm_s = float(np.linalg.norm(res_s))
                    if norm_s < res_norm:
                        p0, res, res_norm, ext = snapped, res_s, norm_s, ext_s
                        on_seam = True
                        continue   # re-linearize on the surface

        if (on_seam and seam_tangent is not None and ext is not None
                and ext.switch_count > 0):
            Jc = np.column_stack([J[:, :4] @ seam_tangent.T, J[:, 4]])
            cond = float(np.linalg.cond(Jc))
            if not math.isfinite(cond) or cond > _COND_LIMIT:
                raise SingularJacobian(
                    f"surface-restricted shooting Jacobian condition {cond:.3e} "
                    f"exceeds {_COND_LIMIT:.0e} at t_f = {t_f:.6g}")
            red = np.linalg.lstsq(Jc, -res, rcond=None)[0]
            step = np.concatenate([seam_tangent.T @ red[:3], red[3:]])
        else:
            cond = float(np.linalg.cond(J))
            if not math.isfinite(cond) or cond > _COND_LIMIT:
                raise SingularJacobian(
                    f"shooting Jacobian condition {cond:.3e} exceeds {_COND_LIMIT:.0e} "
                    f"at t_f = {t_f:.6g}")
            step = np.linalg.solve(J, -res)

        lam = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            p_new = p0 + lam * step[:4]
            tf_new = t_f + lam * step[4]
            if tf_new >= 0.0:
                try:
                    res_new, ext_new = full_residual(p_new, tf_new)
                except DiskminError:
                    # trial point not propagable (lost contact localization,
                    # singular control, ...): treat as a rejected step
                    lam *= 0.5
                    continue
                norm_new = float(np.linalg.norm(res_new))
                if norm_new < res_norm:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            if on_seam:
                # surface refinement stopped paying: the root is off-surface
                on_seam = False
                seam_banned = True
                continue
            raise NewtonDivergence(it + 1, res_norm,
                                   "shooting step rejected at minimal damping")
        if on_seam and norm_new > 0.9 * res_norm:
            on_seam = False
            seam_banned = True
        p0, t_f, res, res_norm, ext = p_new, tf_new, res_new, norm_new, ext_new

    if (np.linalg.norm(res[:4]) <= tol.tol_shoot_rel * scale_x
            and abs(res[4]) <= tol.tol_level):
        return ShootResult(True, p0, t_f, res[:4].copy(),
                           float(np.linalg.norm(res[:4])), float(res[4]),
                           max_iter, ext.switch_count if ext else 0, ext)
    raise NewtonDivergence(max_iter, res_norm, "shooting iteration budget exhausted")


# ---------------------------------------------------------------------------
# final-time map sampling across the switching seam
# ---------------------------------------------------------------------------

@dataclass
class TfMapRow:
    x_f: Array
    s: float                   # arclength parameter along the segment
    converged: bool
    t_f: float
    p0: Optional[Array]
    iterations: int
    switch_count: int
    side: float                # sign of the Sigma miss offset; 0 = on the seam
    error: Optional[str]


@dataclass
class TfMapResult:
    rows: list[TfMapRow]
    slope_before: Optional[float]     # d t_f / d s from the side s < seam
    slope_after: Optional[float]
    seam_s: Optional[float]           # parameter of the side change (None: no seam)
    tf_before: Optional[float] = None  # t_f extrapolated to the seam, s < seam
    tf_after: Optional[float] = None


def tf_map_sample(sys: AffineSystem, x0: Array, endpoints: Sequence[Array],
                  guess_p0: Array, guess_tf: float,
                  tol: Tolerances = DEFAULT_TOL,
                  horizon_factor: float = 2.0,
                  max_iter: int = 25) -> TfMapResult:
    """Shoot to each endpoint in order, warm-starting from the previous
    solution, and record the final-time map along the segment.

    Failed samples are recorded with ``converged=False`` and skipped by the
    slope estimates; they do not abort the sweep.
    """
    x0 = np.asarray(x0, dtype=float)
    pts = [np.asarray(e, dtype=float) for e in endpoints]
    if not pts:
        raise ValueError("need at least one endpoint")
    base = pts[0]
    direction = pts[-1] - base
    dnorm = float(np.linalg.norm(direction))
    direction = direction / dnorm if dnorm > 0.0 else np.zeros_like(base)

    rows: list[TfMapRow] = []
    p_warm, tf_warm = np.asarray(guess_p0, float), float(guess_tf)
    for x_f in pts:
        s = float((x_f - base) @ direction)
        try:
            sol = shoot(sys, x0, x_f, p_warm, tf_warm, tol=tol,
                        max_iter=max_iter)
        except Exception as exc:   # record, continue with the old warm start
            rows.append(TfMapRow(x_f=x_f, s=s, converged=False, t_f=math.nan,
                                 p0=None, iterations=0, switch_count=0,
                                 side=math.nan, error=f"{type(exc).__name__}: {exc}"))
            continue
        if sol.switch_count > 0:
            side = 0.0
        else:
            _, _, offset = sigma_signed_miss(
                sys, ExtremalPoint(x=x0, p=sol.p0),
                horizon=horizon_factor * max(sol.t_f, tf_warm), tol=tol)
            side = float(np.sign(offset))
        rows.append(TfMapRow(x_f=x_f, s=s, converged=True, t_f=sol.t_f,
                             p0=sol.p0, iterations=sol.iterations,
                             switch_count=sol.switch_count, side=side, error=None))
        p_warm, tf_warm = sol.p0, sol.t_f

    return _with_slopes(rows)


def _one_sided_fit(side_rows: list[TfMapRow],
                   at: float) -> tuple[Optional[float], Optional[float]]:
    """(d t_f/d s, t_f) at s = ``at`` from the last rows of the list:
    polynomial fit through the nearest few points, secant fallback for two.

    Four points give an O(h^3) slope estimate at the evaluation point; the
    t_f values are shifted by the nearest sample before fitting because the
    slopes of interest can sit many orders below t_f itself."""
    if len(side_rows) < 2:
        return None, None
    pts = side_rows[-4:]
    ss = np.array([r.s for r in pts]) - at
    tt = np.array([r.t_f for r in pts])
    if len(pts) >= 3 and len(np.unique(ss)) == len(pts):
        t_ref = tt[-1]
        coef = np.polyfit(ss, tt - t_ref, len(pts) - 1)
        return float(coef[-2]), float(coef[-1] + t_ref)
    a, b = pts[-2], pts[-1]
    if a.s == b.s:
        return None, None
    slope = (b.t_f - a.t_f) / (b.s - a.s)
    return slope, b.t_f + slope * (at - b.s)


def _with_slopes(rows: list[TfMapRow]) -> TfMapResult:
    ok = [r for r in rows if r.converged]
    seam_s = None
    for a, b in zip(ok[:-1], ok[1:]):
        if a.side != b.side:
            seam_s = b.s if b.side == 0.0 else 0.5 * (a.s + b.s)
            break

    if seam_s is None:
        slope, _ = _one_sided_fit(ok, ok[-1].s if ok else 0.0)
        return TfMapResult(rows, slope, None, None)
    before = [r for r in ok if r.s < seam_s and r.side != 0.0]
    after = [r for r in ok if r.s > seam_s and r.side != 0.0]
    # estimates from the samples nearest the seam on each side
    before = sorted(before, key=lambda r: r.s)
    after = sorted(after, key=lambda r: -r.s)
    slope_b, tf_b = _one_sided_fit(before, seam_s)
    slope_a, tf_a = _one_sided_fit(after, seam_s)
    return TfMapResult(rows, slope_b, slope_a, seam_s, tf_b, tf_a)
