"""Acceptance suite: one test per shipped guarantee, at the stated tolerance.

Run ``pytest tests/test_acceptance.py -v`` for one pass/fail line per
criterion.  Tests are self-contained (no reuse of unit-test internals) and
deterministic; the two stochastic criteria use fixed seeds.

Criterion 6 is expected to fail on the built-in flat system and is left
red on purpose: the stable-stratum fiber there is a cone whose radial
direction has identically vanishing state response, so det M(t) == 0 along
the whole reference curve and the nonzero one-sided-determinant condition
is unattainable.  The one-sided values are pinned as regression constants
instead, and the profile is checked for honest reporting of the degeneracy.
"""

import math
import time
from multiprocessing import Pool

import numpy as np
import pytest

import diskmin
from diskmin import (
    ExtremalPoint,
    SigmaClass,
    propagate_extremal,
    shoot,
)
from diskmin.errors import SigmaPlusEncounter
from diskmin.flow import project_to_stable_manifold
from diskmin.hamiltonian import switch_controls
from diskmin.jacobi import (
    SYMPLECTIC_J,
    check_theorem3,
    det_m_profile,
    fiber_stable_basis,
    hamiltonian_differentials,
    switch_jump,
    transition_matrix,
)
from diskmin.shooting import tf_map_sample
from diskmin.systems import check_a1
from diskmin.tolerances import DEFAULT_TOL

import oracles
from oracles import REF_P0, REF_TBAR

BALL_SEED = 20260815
BALL_RADIUS = 0.1
BALL_COUNT = 10_000


@pytest.fixture(scope="module")
def reference(kepler, ref_point):
    return propagate_extremal(kepler, ref_point, 4.0)


def test_criterion_01_closed_form_adjoint(kepler, ref_point):
    # integrated adjoint against the closed form: p1, p2 constant,
    # p3(t) = -2 + t, p4(t) = 0; max error <= 1e-9 over [0, 4], under 1 s
    t0 = time.perf_counter()
    ext = propagate_extremal(kepler, ref_point, 4.0)
    worst = 0.0
    for t in np.linspace(0.0, 4.0, 401):
        p = ext.eval(t)[4:]
        want = oracles.flat_adjoint(REF_P0, t)
        worst = max(worst, float(np.max(np.abs(p - want))))
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-9
    assert elapsed < 1.0


def test_criterion_02_switch_detection(reference):
    # one switch at t = 2; control flips (-1,0) -> (1,0); transversal
    # stratum with bracket lifts (1, 0, 0)
    assert reference.switch_count == 1
    ev = reference.switches[0]
    assert ev.t_bar == pytest.approx(REF_TBAR, abs=1e-8)
    assert np.max(np.abs(ev.u_minus - oracles.REF_U_MINUS)) <= 1e-8
    assert np.max(np.abs(ev.u_plus - oracles.REF_U_PLUS)) <= 1e-8
    assert ev.sigma_class is SigmaClass.SIGMA_MINUS
    assert ev.hd.h01 == pytest.approx(1.0, abs=1e-8)
    assert ev.hd.h02 == pytest.approx(0.0, abs=1e-8)
    assert ev.hd.h12 == pytest.approx(0.0, abs=1e-8)


def test_criterion_03_control_jump_law():
    # 1000 transversal triples: scaling identity and fixed-point residual
    # at 1e-12; 1000 non-transversal triples all rejected
    rng = np.random.default_rng(1903)
    for _ in range(1000):
        a, b = rng.normal(size=2) * 3.0
        c = rng.uniform(-0.99, 0.99) * math.hypot(a, b)
        u_minus, u_plus, lam = switch_controls(a, b, c)
        assert abs(lam ** 2 * (a * a + b * b - c * c) - 1.0) <= 1e-12
        for s, u in ((-1.0, u_minus), (1.0, u_plus)):
            v = np.array([a - u[1] * c, b + u[0] * c])
            assert np.linalg.norm(u - s * v / np.linalg.norm(v)) <= 1e-12
    for _ in range(1000):
        a, b = rng.normal(size=2) * 3.0
        c = np.sign(rng.normal()) * math.hypot(a, b) * (1.001 + abs(rng.normal()))
        with pytest.raises(SigmaPlusEncounter):
            switch_controls(a, b, c)


def _ball_worker(p0):
    # process-pool worker: fresh system per process, returns the switch count
    global _BALL_SYS
    try:
        sys_ = _BALL_SYS
    except NameError:
        sys_ = _BALL_SYS = diskmin.make_nilpotent_kepler()
    z = np.concatenate([np.zeros(4), p0])
    ext = propagate_extremal(sys_, ExtremalPoint.from_z(z), t_final=5.0)
    return ext.switch_count


def test_criterion_04_at_most_one_switch_in_ball(kepler):
    # 10^4 covectors uniform in the radius-0.1 ball around the reference,
    # horizon 5, at most one switch each, under 60 s on a process pool
    rng = np.random.default_rng(BALL_SEED)
    u = rng.normal(size=(BALL_COUNT, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = BALL_RADIUS * rng.uniform(size=(BALL_COUNT, 1)) ** 0.25
    draws = REF_P0 + r * u

    t0 = time.perf_counter()
    with Pool(2) as pool:
        counts = pool.map(_ball_worker, draws, chunksize=500)
    elapsed = time.perf_counter() - t0
    assert max(counts) <= 1
    assert elapsed < 60.0

    # the ball misses the codimension-one switching stratum almost surely,
    # so also pin exactly-one-switch behaviour on stratum members inside it
    for a in np.linspace(-0.04, 0.04, 16):
        p0 = np.array([-1.0, a, -2.0, 2.0 * a])
        assert _ball_worker(p0) == 1


def test_criterion_05_jacobi_fields_match_flow(kepler, reference):
    # (a) propagated fields vs central differences of the flow, with both
    # endpoints projected onto the stable stratum, relative error <= 1e-4
    t_eval, h = 3.0, 1e-6
    Phi3 = transition_matrix(kepler, reference, t_eval)
    in_stratum = [
        np.concatenate([np.zeros(4), [1.0, 0.0, 0.0, 0.0]]),
        np.concatenate([np.zeros(4), [0.0, 1.0, 0.0, 2.0]]) / np.sqrt(5.0),
    ]
    for v in in_stratum:
        zs = []
        for sgn in (+1.0, -1.0):
            proj = project_to_stable_manifold(
                kepler, ExtremalPoint(x=np.zeros(4), p=REF_P0 + sgn * h * v[4:]),
                direction=v[4:], horizon=4.0)
            zs.append(propagate_extremal(kepler, proj.point, t_eval).eval(t_eval))
        fd = (zs[0] - zs[1]) / (2 * h)
        col = Phi3 @ v
        assert np.max(np.abs(fd - col)) <= 1e-4 * max(1.0, np.max(np.abs(col)))

    # (b) transition matrices symplectic to 1e-6 on smooth arcs
    for t in (1.0, 1.9, 3.5):
        Phi = transition_matrix(kepler, reference, t)
        assert np.max(np.abs(Phi.T @ SYMPLECTIC_J @ Phi - SYMPLECTIC_J)) <= 1e-6

    # (c) the time-translation field is mapped exactly across the switch
    ev = reference.switches[0]
    dh1, dh2 = hamiltonian_differentials(kepler, ExtremalPoint.from_z(ev.z_bar))
    dz_plus, dtbar, resid = switch_jump(ev.zdot_minus, ev.zdot_minus,
                                        ev.zdot_plus, dh1, dh2)
    assert abs(dtbar + 1.0) <= 1e-8
    assert resid <= 1e-8
    assert np.max(np.abs(dz_plus - ev.zdot_plus)) <= 1e-8


def test_criterion_06_determinant_profile_second_order(kepler, reference):
    prof = det_m_profile(kepler, reference)
    assert prof.t_bar == pytest.approx(REF_TBAR, abs=1e-8)
    assert prof.certificate is not None and prof.certificate.satisfied
    # regression pins, recorded from the first computation on this machine
    assert prof.detM_left == 0.0
    assert prof.detM_right == pytest.approx(-3.907985046680496e-15, rel=1e-6)
    # no conjugate time on (eps, t_bar) or (t_bar, 4)
    assert prof.conjugate_times == []
    assert any("numerically zero" in n for n in prof.notes)
    # unattainable here (see module docstring): det M == 0 along the curve,
    # so the nonzero one-sided determinants and flags (i)+(ii) cannot hold
    assert prof.detM_left != 0.0, \
        "det M(t_bar-) vanishes identically on the flat reference"
    assert abs(prof.detM_right) > 1e-8 * prof.scale_right
    verdict = check_theorem3(prof, reference.z0.p0cost)
    assert verdict.normal and verdict.disconjugate and verdict.same_sign


def test_criterion_07_transversal_rho_slope(kepler, reference):
    # |d rho/dt| at t_bar-, t_bar+ equals |(p1, p2)| = 1 within 1e-8
    ev = reference.switches[0]
    slope = ev.slope  # sqrt(a^2 + b^2 - c^2), the same on both sides
    p12 = math.hypot(ev.z_bar[4], ev.z_bar[5])
    assert abs(slope - 1.0) <= 1e-8
    assert abs(p12 - 1.0) <= 1e-8
    assert abs(slope - p12) <= 1e-8
    # corroborate with one-sided finite differences along the flow
    from diskmin.flow import make_rho
    rho = make_rho(kepler)
    for sgn in (-1.0, +1.0):
        d = 1e-5
        fd = rho(reference.eval(ev.t_bar + sgn * d)) / d
        assert fd == pytest.approx(1.0, abs=1e-4)


def test_criterion_08_time_map_piecewise_smoothness(kepler):
    # 41 endpoint samples through the seam: the final-time map is continuous
    # (jump <= 1e-6), its one-sided slopes are stable under grid halving
    # (<= 1e-3 relative), and the two sides differ by a detectable margin
    center = oracles.ref_state(3.0)
    direction = np.array([0.0, 1.0, 1.0, 0.0]) / np.sqrt(2.0)

    def sweep(span):
        pts = [center + s * direction for s in np.linspace(-span, span, 41)]
        res = tf_map_sample(kepler, np.zeros(4), pts, REF_P0, 3.0)
        assert all(r.converged for r in res.rows)
        assert res.seam_s == pytest.approx(span, abs=1e-6)  # seam mid-segment
        return res

    full = sweep(0.05)
    half = sweep(0.025)
    for res in (full, half):
        assert abs(res.tf_after - res.tf_before) <= 1e-6
    for attr in ("slope_before", "slope_after"):
        sf, sh = getattr(full, attr), getattr(half, attr)
        assert abs(sh - sf) <= 1e-3 * abs(sf)
        # the smooth part of the slope is the covector paired with the
        # sweep direction: p(3) . d = 1/sqrt(2)
        assert sf == pytest.approx(math.sqrt(0.5), abs=1e-4)
    assert full.slope_before - full.slope_after > 1e-6
    assert half.slope_before - half.slope_after > 1e-7


def test_criterion_09_shooting_recovery(kepler):
    # from a 1e-2-perturbed guess the solver recovers (p0, t_f = 3) with
    # residual <= 1e-9 in at most 15 Newton iterations
    tight = DEFAULT_TOL.with_overrides(tol_shoot_rel=1e-10)
    delta = np.random.default_rng(7).normal(size=5)
    delta *= 1e-2 / np.linalg.norm(delta)
    res = shoot(kepler, np.zeros(4), oracles.ref_state(3.0),
                guess_p0=REF_P0 + delta[:4], guess_tf=3.0 + delta[4],
                tol=tight)
    assert res.converged
    assert res.iterations <= 15
    assert res.residual_norm <= 1e-9
    assert res.t_f == pytest.approx(3.0, abs=1e-8)
    assert np.max(np.abs(res.p0 - REF_P0)) <= 1e-7
    assert res.switch_count == 1


def test_criterion_10_frame_and_fiber_assumptions(kepler, reference):
    # (A1) the frame determinant has modulus one at every sampled state
    for arc in reference.arcs:
        for smp in arc.samples:
            assert abs(abs(check_a1(kepler, smp.z[:4])) - 1.0) <= 1e-10
    # (A2) fiber transversality certificate: c != 0 with a 3-dim kernel
    basis, cert = fiber_stable_basis(kepler, reference)
    assert cert.satisfied
    assert cert.c_norm > 0.0
    assert len(basis) == 3
    B = np.column_stack(basis)
    assert np.max(np.abs(B[:4, :])) == 0.0
    for v in basis:
        assert abs(cert.c @ v[4:]) <= 1e-10
