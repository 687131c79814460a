"""Extremal flow with bang-bang switching across the surface {H1 = H2 = 0}.

An extremal is integrated as a sequence of smooth arcs.  Each arc runs the
maximizing control u = (H1, H2)/rho; a contact monitor arms when rho drops
below a scaled threshold and either localizes a transversal switch (rho
reaches the contact tolerance) or records a near-miss and carries on.  At a
switch the one-sided control limits are computed from the bracket lifts in
closed form and the next arc restarts on the outgoing smooth branch.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar

from . import backends
from .errors import (
    AssumptionViolated,
    DiskminError,
    NewtonDivergence,
    NonTransversalCrossing,
)
from .hamiltonian import (
    ExtremalPoint,
    HamiltonianData,
    SigmaClass,
    classify_sigma,
    frozen_control_rhs,
    hmax,
    lifts,
    switch_controls,
    switching_drift,
)
from .stepping import DensePath, Driver, Segment
from .systems import AffineSystem
from .tolerances import DEFAULT_TOL, Tolerances

Array = NDArray[np.float64]

HALT_TIME_END = "time_end"
HALT_SIGMA_CONTACT = "sigma_contact"


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------

def make_extremal_rhs(sys: AffineSystem, direction: float = 1.0,
                      frozen_u: Optional[Array] = None) -> Callable:
    """Extremal vector field as a stepper-compatible callable.

    Uses the backend's compiled kernel when the system provides one;
    otherwise builds the generic closure from the field evaluators.
    ``direction=-1`` gives the time-reversed field.  With ``frozen_u`` the
    control is pinned (smooth branch selection at restarts).
    """
    fast = backends.compiled_rhs(sys.kernel_id, direction, frozen_u)
    if fast is not None:
        return fast

    if frozen_u is not None:
        u1, u2 = float(frozen_u[0]), float(frozen_u[1])

        def rhs_frozen(t, y):
            x, p = y[:4], y[4:]
            f0, f1, f2 = sys.fields(x)
            m = sys.eval_jac(0, x) + u1 * sys.eval_jac(1, x) + u2 * sys.eval_jac(2, x)
            out = np.empty(8)
            out[:4] = f0 + u1 * f1 + u2 * f2
            out[4:] = -(m.T @ p)
            if direction < 0:
                out = -out
            return out

        return rhs_frozen

    def rhs(t, y):
        x, p = y[:4], y[4:]
        f0, f1, f2 = sys.fields(x)
        h1 = float(p @ f1)
        h2 = float(p @ f2)
        rho = math.hypot(h1, h2)
        if rho == 0.0:
            raise backends.KernelSingularControl(rho)
        u1, u2 = h1 / rho, h2 / rho
        m = sys.eval_jac(0, x) + u1 * sys.eval_jac(1, x) + u2 * sys.eval_jac(2, x)
        out = np.empty(8)
        out[:4] = f0 + u1 * f1 + u2 * f2
        out[4:] = -(m.T @ p)
        if direction < 0:
            out = -out
        return out

    return rhs


def make_rho(sys: AffineSystem) -> Callable[[Array], float]:
    """Cheap rho(z) evaluator for the contact monitor."""
    if sys.kernel_id == "nilpotent-kepler":
        return lambda y: math.hypot(y[6], y[7])

    def rho(y):
        x, p = y[:4], y[4:]
        return math.hypot(float(p @ sys.eval_field(1, x)), float(p @ sys.eval_field(2, x)))

    return rho


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    t: float
    z: Array
    u: Array
    rho: float


@dataclass(frozen=True)
class NearMiss:
    """A pass of the switching surface that stayed above contact tolerance."""
    t_min: float
    rho_min: float


@dataclass
class ExtremalArc:
    """One smooth arc, with dense output in internal (monotone) time."""

    t_start: float
    t_end: float
    direction: float
    halt: str
    dense: DensePath
    samples: list[Sample]
    diagnostics: list[NearMiss] = dc_field(default_factory=list)
    nsteps: int = 0
    contact_rho: Optional[float] = None

    def _to_internal(self, t: float) -> float:
        return (t - self.t_start) * self.direction

    def eval(self, t: float) -> Array:
        return self.dense.eval(self._to_internal(t))

    @property
    def span(self) -> tuple[float, float]:
        return (min(self.t_start, self.t_end), max(self.t_start, self.t_end))

    def covers(self, t: float, slack: float = 1e-12) -> bool:
        lo, hi = self.span
        pad = slack * (1.0 + abs(hi) + abs(lo))
        return lo - pad <= t <= hi + pad


@dataclass(frozen=True)
class SwitchEvent:
    """A transversal contact with the switching surface."""

    t_bar: float
    z_bar: Array
    hd: HamiltonianData
    sigma_class: SigmaClass
    u_minus: Array
    u_plus: Array
    lam: float
    zdot_minus: Array
    zdot_plus: Array
    rho_residual: float

    @property
    def slope(self) -> float:
        """|d rho/dt| on both sides of a transversal switch: sqrt(a^2+b^2-c^2)."""
        return 1.0 / self.lam


@dataclass
class Extremal:
    """A propagated extremal: contiguous arcs plus the switches between them."""

    system: str
    z0: ExtremalPoint
    t0: float
    t_final: float
    arcs: list[ExtremalArc]
    switches: list[SwitchEvent]

    @property
    def switch_count(self) -> int:
        return len(self.switches)

    @property
    def t_reached(self) -> float:
        return self.arcs[-1].t_end if self.arcs else self.t0

    def eval(self, t: float) -> Array:
        for arc in self.arcs:
            if arc.covers(t):
                return arc.eval(t)
        raise ValueError(f"t={t} not covered by any arc of this extremal")

    def point(self, t: float) -> ExtremalPoint:
        return ExtremalPoint.from_z(self.eval(t), p0cost=self.z0.p0cost)


@dataclass(frozen=True)
class StratumResult:
    """Stratification of an initial covector relative to the switching flow."""

    label: str             # "S0" | "Ss" | "Su"
    t_bar: Optional[float]
    both: bool
    forward_switches: int
    backward_switches: int


@dataclass(frozen=True)
class ProjectionResult:
    point: ExtremalPoint
    t_bar: float
    mu: float
    rho_residual: float
    iterations: int


# ---------------------------------------------------------------------------
# smooth-arc integration with the contact monitor
# ---------------------------------------------------------------------------

def integrate_smooth_arc(
    sys: AffineSystem,
    z0: Array,
    t_start: float,
    t_end: float,
    tol: Tolerances = DEFAULT_TOL,
    initial_control: Optional[Array] = None,
    detect_contacts: bool = True,
) -> ExtremalArc:
    """Integrate one smooth arc of the extremal flow on [t_start, t_end].

    Halts either at t_end or at a localized contact with {rho = 0}
    (halt == "sigma_contact"); near-misses are recorded as diagnostics and
    do not halt.  ``initial_control`` pins the control for one micro-step of
    length ``restart_len_rel * (1 + |t_start|)`` (restart from a switch).
    """
    z0 = np.ascontiguousarray(z0, dtype=float)
    if t_end == t_start:
        raise ValueError("empty time span")
    direction = 1.0 if t_end > t_start else -1.0
    span = abs(t_end - t_start)
    rho_of = make_rho(sys)
    rhs = make_extremal_rhs(sys, direction)

    path = DensePath()
    samples: list[Sample] = []
    diagnostics: list[NearMiss] = []
    nsteps = 0

    def t_of(s: float) -> float:
        return t_start + direction * s

    def sample_at(s: float, y: Array) -> Sample:
        r = rho_of(y)
        pnorm = float(np.linalg.norm(y[4:]))
        if r >= tol.tol_rho(pnorm):
            x, p = y[:4], y[4:]
            u = np.array([float(p @ sys.eval_field(1, x)), float(p @ sys.eval_field(2, x))]) / r
        elif initial_control is not None and s == 0.0:
            u = np.asarray(initial_control, dtype=float)
        else:
            u = np.array([np.nan, np.nan])
        return Sample(t=t_of(s), z=y.copy(), u=u, rho=r)

    samples.append(sample_at(0.0, z0))

    s_cursor = 0.0
    y_cursor = z0

    # --- optional frozen-control micro-step (restart from a switch) -------
    if initial_control is not None:
        micro = min(tol.restart_len_rel * (1.0 + abs(t_start)), 0.5 * span)
        frhs = make_extremal_rhs(sys, direction, frozen_u=np.asarray(initial_control, float))
        drv = Driver(frhs, y_cursor, tol.tol_int, tol.tol_int,
                     h_floor=tol.h_floor(t_start), first_step=micro, span_hint=micro)
        while drv.s < micro:
            seg = drv.advance(max_step=micro - drv.s)
            path.append(seg)
            nsteps += 1
        s_cursor = drv.s
        y_cursor = drv.y.copy()
        samples.append(sample_at(s_cursor, y_cursor))

    # --- main adaptive loop ------------------------------------------------
    drv = Driver(rhs, y_cursor, tol.tol_int, tol.tol_int,
                 h_floor=tol.h_floor(t_start), span_hint=span - s_cursor)
    # continue the internal clock across the micro-step
    s_offset = s_cursor

    halt = HALT_TIME_END
    contact_rho: Optional[float] = None

    rho_prev = samples[-1].rho
    s_prev = s_cursor
    u_prev = samples[-1].u
    armed = False
    dip_rho_min = np.inf
    dip_s_min = s_cursor
    dip_handled = False
    cap = np.inf
    # when restarting from a switch, ignore the monitor until the trajectory
    # has left the armed band once (the contact behind us is not a new event)
    leaving = initial_control is not None

    while True:
        remaining = span - s_cursor
        if remaining <= tol.h_floor(t_end):
            break
        seg = drv.advance(max_step=min(cap, remaining))
        seg = Segment(seg.s0 + s_offset, seg.h, seg.y0, seg.K)
        path.append(seg)
        nsteps += 1
        s_cursor = seg.s1
        y_cursor = drv.y.copy()

        r = rho_of(y_cursor)
        pnorm = float(np.linalg.norm(y_cursor[4:]))
        smp = sample_at(s_cursor, y_cursor)
        samples.append(smp)

        if not detect_contacts:
            rho_prev, s_prev, u_prev = r, s_cursor, smp.u
            continue

        arm_level = tol.rho_arm(pnorm)
        contact_level = tol.tol_switch_rho(pnorm)

        if leaving:
            if r >= arm_level:
                leaving = False
            rho_prev, s_prev, u_prev = r, s_cursor, smp.u
            continue

        # --- safety net: maximizing control reversed across one step means
        # the step passed very close to (or across) the surface.  If the
        # refined interior minimum already meets the contact criterion the
        # step merely sampled past the touch point: rewind and halt there.
        # A pass the step resolved is a near-miss; an unresolved jump is a
        # hard error (the dense data inside such a step cannot be trusted).
        if (np.isfinite(u_prev[0]) and np.isfinite(smp.u[0])
                and float(u_prev @ smp.u) < 0.0 and s_cursor > s_prev):
            s_dip, rho_dip = _dense_argmin_rho(path, rho_of, s_prev, s_cursor)
            if rho_dip <= contact_level:
                halt = HALT_SIGMA_CONTACT
                s_cursor = s_dip
                y_cursor = path.eval(s_dip)
                contact_rho = rho_dip
                samples[-1] = sample_at(s_cursor, y_cursor)
                break
            width_in = max(s_dip - s_prev, 1e-300)
            width_out = max(s_cursor - s_dip, 1e-300)
            sharp = max(abs(rho_dip - rho_prev) / width_in,
                        abs(r - rho_dip) / width_out)
            unresolved = (s_cursor - s_prev) * sharp > 50.0 * max(rho_dip, contact_level)
            if rho_dip < arm_level and unresolved:
                raise AssumptionViolated(
                    "switch-localization",
                    f"step over [{t_of(s_prev):.9g}, {t_of(s_cursor):.9g}] straddled the "
                    f"switching surface (interior rho ~ {rho_dip:.3e}); the contact was "
                    "not localized before crossing")
            if rho_dip < arm_level and not dip_handled:
                diagnostics.append(NearMiss(t_min=t_of(s_dip), rho_min=rho_dip))
                armed = True
                dip_handled = True
                dip_rho_min = rho_dip
                dip_s_min = s_dip

        slope_disc = (r - rho_prev) / (s_cursor - s_prev) if s_cursor > s_prev else 0.0

        if r <= contact_level:
            # --- contact: Newton-polish the time on the linear rho model and
            # finish with a frozen-control hop (smooth through the contact)
            halt = HALT_SIGMA_CONTACT
            point = ExtremalPoint.from_z(y_cursor)
            hd = lifts(sys, point)
            if hd.rho > 0.0:
                u = np.array([hd.h1, hd.h2]) / hd.rho
                drho_ds = direction * float(u @ switching_drift(hd, u))
                if drho_ds < 0.0:
                    s_bar = s_cursor + hd.rho / (-drho_ds)
                    if s_bar > span:
                        # projected contact lies beyond the requested span
                        s_bar = span
                        halt = HALT_TIME_END
                    hop = s_bar - s_cursor
                    if hop > tol.h_floor(t_end) * 1e-2:
                        s_hop0 = s_cursor
                        fr = make_extremal_rhs(sys, direction, frozen_u=u)
                        hop_drv = Driver(fr, y_cursor, tol.tol_int, tol.tol_int,
                                         h_floor=tol.h_floor(t_end) * 1e-3,
                                         first_step=hop, span_hint=hop)
                        while hop_drv.s < hop:
                            hseg = hop_drv.advance(max_step=hop - hop_drv.s)
                            path.append(Segment(hseg.s0 + s_cursor, hseg.h, hseg.y0, hseg.K))
                            nsteps += 1
                        y_cursor = hop_drv.y.copy()
                        s_cursor = s_bar
                        if halt == HALT_SIGMA_CONTACT:
                            # the linear model overshoots shallow dips (the
                            # slope flattens near closest approach): rewind
                            # to the hop's interior minimum when it is lower
                            s_min, rho_min = _dense_argmin_rho(
                                path, rho_of, s_hop0, s_cursor)
                            if rho_min < rho_of(y_cursor):
                                s_cursor = s_min
                                y_cursor = path.eval(s_min)
            contact_rho = rho_of(y_cursor)
            samples.append(sample_at(s_cursor, y_cursor))
            break

        if slope_disc < 0.0:
            # approaching the surface: cap the next step so the distance to
            # go shrinks geometrically instead of being jumped over
            cap = max(0.9 * r / (-slope_disc), 1e-6 * r)
        else:
            cap = np.inf

        if not armed:
            if r < arm_level:
                armed = True
                dip_rho_min = r
                dip_s_min = s_cursor
                dip_handled = False
        else:
            if r < dip_rho_min:
                dip_rho_min = r
                dip_s_min = s_cursor
            if slope_disc < 0.0 and dip_handled:
                # fresh descent after a recorded near-miss: track a new dip
                dip_handled = False
                dip_rho_min = r
                dip_s_min = s_cursor
            elif slope_disc >= 0.0:
                if not dip_handled and dip_rho_min < arm_level:
                    lo = max(path.s_start, dip_s_min - 2 * _local_h(path, dip_s_min))
                    hi = min(path.s_end, dip_s_min + 2 * _local_h(path, dip_s_min))
                    s_min, rho_min = _dense_argmin_rho(path, rho_of, lo, hi)
                    diagnostics.append(NearMiss(t_min=t_of(s_min), rho_min=rho_min))
                    dip_handled = True
                if r >= arm_level:
                    armed = False
                    dip_rho_min = np.inf

        rho_prev, s_prev, u_prev = r, s_cursor, smp.u

    return ExtremalArc(
        t_start=t_start,
        t_end=t_of(s_cursor),
        direction=direction,
        halt=halt,
        dense=path,
        samples=samples,
        diagnostics=diagnostics,
        nsteps=nsteps,
        contact_rho=contact_rho,
    )


def _dense_argmin_rho(path: DensePath, rho_of, lo: float, hi: float) -> tuple[float, float]:
    """Locate the minimum of rho over [lo, hi] on the dense output."""
    if hi <= lo:
        return lo, rho_of(path.eval(lo))
    res = minimize_scalar(lambda s: rho_of(path.eval(s)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * (1.0 + abs(hi))})
    s_min, r_min = float(res.x), float(res.fun)
    for cand in (lo, hi):
        rc = rho_of(path.eval(cand))
        if rc < r_min:
            s_min, r_min = cand, rc
    return s_min, r_min


def _local_h(path: DensePath, s: float) -> float:
    for seg in path.segments:
        if seg.s0 <= s <= seg.s1:
            return seg.h
    return path.segments[-1].h if path.segments else 1.0


# ---------------------------------------------------------------------------
# switch detection and classification at a contact
# ---------------------------------------------------------------------------

def detect_switch(
    sys: AffineSystem,
    arc: ExtremalArc,
    tol: Tolerances = DEFAULT_TOL,
) -> Optional[SwitchEvent]:
    """Classify the contact an arc halted on; None when the arc simply ran
    out of time (near-misses never halt an arc).

    The contact time is polished by bounded minimization of rho^2 on the
    dense output, then the bracket lifts decide the stratum.  Transversal
    contacts (h12^2 < h01^2 + h02^2) yield the closed-form one-sided
    controls; other strata raise.
    """
    if arc.halt != HALT_SIGMA_CONTACT:
        return None

    rho_of = make_rho(sys)
    s_end = arc.dense.s_end
    w = 4.0 * _local_h(arc.dense, s_end)
    lo = max(arc.dense.s_start, s_end - w)
    res = minimize_scalar(lambda s: rho_of(arc.dense.eval(s)) ** 2,
                          bounds=(lo, s_end), method="bounded",
                          options={"xatol": tol.t_loc_rel * (1.0 + abs(s_end))})
    s_bar = float(res.x)
    if rho_of(arc.dense.eval(s_bar)) > rho_of(arc.dense.eval(s_end)):
        s_bar = s_end  # the halt point is the best localization

    z_bar = arc.dense.eval(s_bar)
    t_bar = arc.t_start + arc.direction * s_bar
    point = ExtremalPoint.from_z(z_bar)
    hd = lifts(sys, point)
    pnorm = float(np.linalg.norm(point.p))

    sigma_class = classify_sigma(hd, pnorm, tol.with_overrides(
        tol_rho_rel=tol.tol_switch_rho_rel))
    if sigma_class is SigmaClass.NOT_ON_SIGMA:
        return None

    # switch_controls raises SigmaPlusEncounter on the unsupported strata
    u_minus, u_plus, lam = switch_controls(hd.h01, hd.h02, hd.h12)

    slope = 1.0 / lam
    if slope < tol.tol_transversal(pnorm):
        raise NonTransversalCrossing(
            f"switching-function drift {slope:.3e} below tolerance at t={t_bar:.12g}")

    return SwitchEvent(
        t_bar=t_bar,
        z_bar=z_bar,
        hd=hd,
        sigma_class=sigma_class,
        u_minus=u_minus,
        u_plus=u_plus,
        lam=lam,
        zdot_minus=frozen_control_rhs(sys, point, u_minus),
        zdot_plus=frozen_control_rhs(sys, point, u_plus),
        rho_residual=hd.rho,
    )


# ---------------------------------------------------------------------------
# multi-arc propagation
# ---------------------------------------------------------------------------

def propagate_extremal(
    sys: AffineSystem,
    z0: ExtremalPoint,
    t_final: float,
    t0: float = 0.0,
    tol: Tolerances = DEFAULT_TOL,
    max_switches: int = 64,
) -> Extremal:
    """Propagate an extremal from t0 to t_final (backward when
    t_final < t0), restarting across transversal switches."""
    if t_final == t0:
        raise ValueError("empty propagation span")
    direction = 1.0 if t_final > t0 else -1.0

    arcs: list[ExtremalArc] = []
    switches: list[SwitchEvent] = []
    t_cur = t0
    z_cur = z0.z
    restart_u: Optional[Array] = None

    while True:
        arc = integrate_smooth_arc(sys, z_cur, t_cur, t_final, tol=tol,
                                   initial_control=restart_u)
        arcs.append(arc)
        if arc.halt != HALT_SIGMA_CONTACT:
            break
        ev = detect_switch(sys, arc, tol=tol)
        if ev is None:
            # false contact: the refined closest approach does not classify
            # onto the surface.  Resume the same smooth branch from the halt
            # state; lack of forward progress is a localization failure.
            if direction * (t_final - arc.t_end) <= tol.h_floor(arc.t_end):
                break
            if abs(arc.t_end - t_cur) <= tol.h_floor(arc.t_end):
                raise AssumptionViolated(
                    "switch-localization",
                    f"arc repeatedly halts on an unclassifiable contact at "
                    f"t={arc.t_end:.12g} (rho ~ {arc.contact_rho:.3e})")
            t_cur = arc.t_end
            z_cur = arc.eval(arc.t_end)
            restart_u = None
            continue
        switches.append(ev)
        if len(switches) > max_switches:
            raise DiskminError(
                f"switch budget ({max_switches}) exceeded; "
                "the extremal is outside the supported bang-bang class")
        # clip the halted arc's bookkeeping to the refined switch time
        arc.t_end = ev.t_bar
        t_cur = ev.t_bar
        z_cur = ev.z_bar
        restart_u = ev.u_plus if direction > 0 else ev.u_minus
        if direction * (t_final - t_cur) <= tol.h_floor(t_cur):
            break

    return Extremal(system=sys.name, z0=z0, t0=t0, t_final=t_final,
                    arcs=arcs, switches=switches)


def stratum_of(
    sys: AffineSystem,
    z0: ExtremalPoint,
    horizon: float,
    tol: Tolerances = DEFAULT_TOL,
) -> StratumResult:
    """Stratify an initial point by its switching behavior within the
    horizon: Ss (switch forward), Su (switch backward), S0 (neither)."""
    fwd = propagate_extremal(sys, z0, t_final=horizon, tol=tol)
    bwd = propagate_extremal(sys, z0, t_final=-horizon, tol=tol)
    nf, nb = fwd.switch_count, bwd.switch_count
    if nf > 0:
        return StratumResult(label="Ss", t_bar=fwd.switches[0].t_bar, both=nb > 0,
                             forward_switches=nf, backward_switches=nb)
    if nb > 0:
        return StratumResult(label="Su", t_bar=bwd.switches[0].t_bar, both=False,
                             forward_switches=nf, backward_switches=nb)
    return StratumResult(label="S0", t_bar=None, both=False,
                         forward_switches=0, backward_switches=0)


# ---------------------------------------------------------------------------
# projection onto the stable set of the switching surface
# ---------------------------------------------------------------------------

def _probe_min_rho(sys: AffineSystem, z0: Array, horizon: float,
                   tol: Tolerances) -> tuple[float, float, ExtremalArc]:
    """Forward probe of one smooth branch: (t at min rho, min rho, arc)."""
    arc = integrate_smooth_arc(sys, z0, 0.0, horizon, tol=tol)
    if arc.halt == HALT_SIGMA_CONTACT:
        return arc.t_end, float(arc.contact_rho), arc
    if arc.diagnostics:
        best = min(arc.diagnostics, key=lambda d: d.rho_min)
        return best.t_min, best.rho_min, arc
    best = min(arc.samples, key=lambda s: s.rho)
    return best.t, best.rho, arc


def sigma_signed_miss(sys: AffineSystem, point: ExtremalPoint, horizon: float,
                      tol: Tolerances = DEFAULT_TOL) -> tuple[float, float, float]:
    """Closest approach of (H1, H2) to the origin on one forward smooth branch.

    Returns (t_min, rho_min, offset) where offset is the signed perpendicular
    distance of the locally linearized (H1, H2) path from the origin -- the
    side of the switching surface the branch passes on.  offset = 0 means the
    branch makes contact.
    """
    t_min, rho_min, arc = _probe_min_rho(sys, point.z, horizon, tol)
    if arc.halt == HALT_SIGMA_CONTACT:
        return t_min, rho_min, 0.0
    hd = lifts(sys, ExtremalPoint.from_z(arc.eval(t_min), point.p0cost))
    if hd.rho == 0.0:
        return t_min, rho_min, 0.0
    u = np.array([hd.h1, hd.h2]) / hd.rho
    v = switching_drift(hd, u)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return t_min, rho_min, rho_min
    return t_min, rho_min, float((hd.h1 * v[1] - hd.h2 * v[0]) / nv)


def project_to_stable_manifold(
    sys: AffineSystem,
    guess: ExtremalPoint,
    direction: Array,
    horizon: float,
    tol: Tolerances = DEFAULT_TOL,
    max_iter: int | None = None,
) -> ProjectionResult:
    """Slide a covector along a vertical direction until its forward extremal
    hits the switching surface exactly.

    Unknowns (t, mu) solve (H1, H2)(z(t; x0, p0 + mu*direction)) = 0 by a
    damped Newton iteration; the mu-derivative is a central difference of
    the flow.  Falls back to bisection on the signed miss distance, and
    raises NewtonDivergence when both fail.
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (4,) or not np.any(direction):
        raise ValueError("direction must be a nonzero vertical 4-vector")
    max_iter = max_iter if max_iter is not None else tol.newton_max_iter
    x0 = guess.x
    pnorm = float(np.linalg.norm(guess.p))
    target = 1e-10 * (1.0 + pnorm)

    def z_of(mu: float) -> Array:
        return np.concatenate([x0, guess.p + mu * direction])

    def arc_of(mu: float) -> ExtremalArc:
        return integrate_smooth_arc(sys, z_of(mu), 0.0, horizon, tol=tol)

    def h12_at(arc: ExtremalArc, t: float) -> tuple[Array, HamiltonianData]:
        lo, hi = arc.span
        tt = min(max(t, lo), hi)
        z = arc.eval(tt)
        hd = lifts(sys, ExtremalPoint.from_z(z))
        return np.array([hd.h1, hd.h2]), hd

    t_cur, rho0, arc0 = _probe_min_rho(sys, guess.z, horizon, tol)
    mu = 0.0
    if rho0 <= target:
        return ProjectionResult(ExtremalPoint(x0, guess.p, guess.p0cost),
                                t_cur, 0.0, rho0, 0)

    dmu = tol.fd_step(pnorm) * (1.0 + abs(mu)) / max(float(np.linalg.norm(direction)), 1e-30)
    for it in range(1, max_iter + 1):
        arc = arc_of(mu)
        g, hd = h12_at(arc, t_cur)
        g_norm = float(np.linalg.norm(g))
        if g_norm <= target:
            t_hit, _, _ = _probe_min_rho(sys, z_of(mu), horizon, tol)
            return ProjectionResult(
                ExtremalPoint(x0, guess.p + mu * direction, guess.p0cost),
                t_hit, mu, g_norm, it)
        if hd.rho > 0:
            u = np.array([hd.h1, hd.h2]) / hd.rho
        else:
            u = np.array([1.0, 0.0])
        col_t = switching_drift(hd, u)
        gp, _ = h12_at(arc_of(mu + dmu), t_cur)
        gm, _ = h12_at(arc_of(mu - dmu), t_cur)
        col_mu = (gp - gm) / (2 * dmu)
        J = np.column_stack([col_t, col_mu])
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            break
        # damped update
        scale = 1.0
        for _ in range(8):
            t_new = t_cur + scale * step[0]
            mu_new = mu + scale * step[1]
            if 0.0 < t_new < horizon:
                g_try, _ = h12_at(arc_of(mu_new), t_new)
                if np.linalg.norm(g_try) < g_norm:
                    break
            scale *= 0.5
        else:
            break
        t_cur, mu = t_new, mu_new

    # --- bisection fallback on the signed miss distance --------------------
    def signed_miss(mu_val: float) -> float:
        t_min, rho_min, arc = _probe_min_rho(sys, z_of(mu_val), horizon, tol)
        g, hd = h12_at(arc, t_min)
        if hd.rho > 0:
            u = np.array([hd.h1, hd.h2]) / hd.rho
        else:
            return 0.0
        v = switching_drift(hd, u)
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            return rho_min
        return float((g[0] * v[1] - g[1] * v[0]) / nv)

    spread = 0.5 * (1.0 + pnorm) / max(float(np.linalg.norm(direction)), 1e-30)
    grid = np.linspace(-spread, spread, 21)
    vals = [signed_miss(m) for m in grid]
    bracket = None
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            bracket = (grid[i], grid[i])
            break
        if vals[i] * vals[i + 1] < 0:
            bracket = (grid[i], grid[i + 1])
            break
    if bracket is None:
        raise NewtonDivergence(max_iter, float(np.inf),
                               "projection failed: no sign change of the miss distance "
                               "along the given direction")
    a, b = bracket
    va = signed_miss(a) if a != b else 0.0
    for _ in range(80):
        if b - a < 1e-15 * (1.0 + abs(a) + abs(b)):
            break
        m = 0.5 * (a + b)
        vm = signed_miss(m)
        if vm == 0.0:
            a = b = m
            break
        if va * vm < 0:
            b = m
        else:
            a, va = m, vm
    mu = 0.5 * (a + b)
    t_min, rho_min, _ = _probe_min_rho(sys, z_of(mu), horizon, tol)
    if rho_min > 10 * target:
        raise NewtonDivergence(max_iter, rho_min, "projection bisection stalled")
    return ProjectionResult(ExtremalPoint(x0, guess.p + mu * direction, guess.p0cost),
                            t_min, mu, rho_min, max_iter)


# ---------------------------------------------------------------------------
# trajectory dump
# ---------------------------------------------------------------------------

def trajectory_to_csv(sys: AffineSystem, extremal: Extremal, path,
                      header_lines: tuple[str, ...] = ()) -> None:
    """Write the accepted integration steps of an extremal as CSV.

    Columns: t, x1..x4, p1..p4, u1, u2, rho, hmax, event.  One row per
    accepted step; each switch adds a row flagged ``event=switch`` carrying
    the contact state and the incoming control limit.  ``header_lines`` are
    prepended as ``#`` comments (reproducibility header); ``path`` may be a
    filesystem path or an open text stream.
    """
    stream = path if hasattr(path, "write") else open(path, "w", newline="")
    p0cost = extremal.z0.p0cost

    def fmt(v: float) -> str:
        return f"{v:.17g}"

    def write_row(w, t, z, u, rho, event=""):
        h = hmax(sys, ExtremalPoint.from_z(z, p0cost=p0cost))
        w.writerow([fmt(t)] + [fmt(v) for v in z]
                   + [fmt(u[0]), fmt(u[1]), fmt(rho), fmt(h), event])

    try:
        for line in header_lines:
            stream.write(f"# {line}\n")
        w = csv.writer(stream)
        w.writerow(["t", "x1", "x2", "x3", "x4", "p1", "p2", "p3", "p4",
                    "u1", "u2", "rho", "hmax", "event"])
        switches = sorted(extremal.switches, key=lambda s: s.t_bar)
        si = 0
        for arc in extremal.arcs:
            for smp in arc.samples:
                while (si < len(switches)
                       and switches[si].t_bar < smp.t - 1e-15 * (1 + abs(smp.t))):
                    ev = switches[si]
                    write_row(w, ev.t_bar, ev.z_bar, ev.u_minus, 0.0, "switch")
                    si += 1
                write_row(w, smp.t, smp.z, smp.u, smp.rho)
        while si < len(switches):
            ev = switches[si]
            write_row(w, ev.t_bar, ev.z_bar, ev.u_minus, 0.0, "switch")
            si += 1
    finally:
        if stream is not path:
            stream.close()
