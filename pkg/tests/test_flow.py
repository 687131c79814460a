import numpy as np
import pytest

from diskmin import (
    ExtremalPoint,
    SigmaClass,
    hmax,
    integrate_smooth_arc,
    project_to_stable_manifold,
    propagate_extremal,
    stratum_of,
)
from diskmin.flow import HALT_SIGMA_CONTACT, HALT_TIME_END, make_extremal_rhs, make_rho

import oracles


def test_rhs_fast_path_matches_generic(kepler, rng):
    fast = make_extremal_rhs(kepler)
    assert fast is not None
    for _ in range(10):
        z = rng.normal(size=8)
        if np.hypot(z[6], z[7]) < 1e-6:
            continue
        x, p = z[:4], z[4:]
        rho = np.hypot(p[2], p[3])
        u = np.array([p[2], p[3]]) / rho
        want = np.concatenate([[1 + x[2] + u[0] * 0, 0], [0, 0]])  # placeholder
        want = np.array([1 + x[2], x[3], u[0], u[1], 0, 0, -p[0], -p[1]])
        assert np.allclose(fast(0.0, z), want, atol=1e-14)
        # backward field is the negation
        back = make_extremal_rhs(kepler, direction=-1.0)
        assert np.allclose(back(0.0, z), -want, atol=1e-14)


def test_smooth_arc_stops_at_contact(kepler, ref_point):
    arc = integrate_smooth_arc(kepler, ref_point.z, 0.0, 5.0)
    assert arc.halt == HALT_SIGMA_CONTACT
    assert arc.t_end == pytest.approx(2.0, abs=1e-8)
    assert arc.contact_rho < 1e-10


def test_smooth_arc_runs_to_time_end(kepler):
    # dip bottoms out at rho = 1e-3, inside the armed band but far above the
    # contact tolerance: a near-miss, not a switch
    p0 = np.array([-1.0, 0.0, -2.0, 1e-3])
    arc = integrate_smooth_arc(kepler, np.concatenate([np.zeros(4), p0]), 0.0, 5.0)
    assert arc.halt == HALT_TIME_END
    assert arc.t_end == pytest.approx(5.0, abs=1e-12)
    assert len(arc.diagnostics) == 1
    d = arc.diagnostics[0]
    assert d.t_min == pytest.approx(2.0, abs=1e-6)
    assert d.rho_min == pytest.approx(1e-3, abs=1e-9)


def test_reference_extremal_forward(kepler, ref_point):
    ext = propagate_extremal(kepler, ref_point, t_final=4.0)
    assert ext.switch_count == 1
    ev = ext.switches[0]
    assert ev.t_bar == pytest.approx(oracles.REF_TBAR, abs=1e-8)
    assert np.allclose(ev.u_minus, oracles.REF_U_MINUS, atol=1e-8)
    assert np.allclose(ev.u_plus, oracles.REF_U_PLUS, atol=1e-8)
    assert (ev.hd.h01, ev.hd.h02, ev.hd.h12) == pytest.approx(
        oracles.REF_BRACKETS, abs=1e-8)
    assert ev.sigma_class is SigmaClass.SIGMA_MINUS
    assert ev.slope == pytest.approx(1.0, rel=1e-8)

    for t in (0.5, 1.5, 2.5, 3.0, 4.0):
        z = ext.eval(t)
        assert np.allclose(z[:4], oracles.ref_state(t), atol=1e-9), f"state at t={t}"
        assert np.allclose(z[4:], oracles.ref_costate(t), atol=1e-9), f"costate at t={t}"
    assert np.allclose(ext.eval(4.0)[:4], np.zeros(4), atol=1e-9)


def test_reference_extremal_backward(kepler):
    # start at t=0 from the endpoint state/costate of the forward run and
    # integrate back: the switch must reappear two time units in
    z4 = oracles.ref_z(4.0)
    ext = propagate_extremal(kepler, ExtremalPoint.from_z(z4), t_final=-4.0)
    assert ext.switch_count == 1
    assert ext.switches[0].t_bar == pytest.approx(-2.0, abs=1e-8)
    z_back = ext.eval(-4.0)
    assert np.allclose(z_back[:4], oracles.ref_state(0.0), atol=1e-9)
    assert np.allclose(z_back[4:], oracles.ref_costate(0.0), atol=1e-9)


def test_hmax_conserved_along_extremal(kepler, ref_point):
    ext = propagate_extremal(kepler, ref_point, t_final=4.0)
    for t in (0.3, 1.7, 2.4, 3.9):
        pt = ext.point(t)
        assert hmax(kepler, pt) == pytest.approx(0.0, abs=1e-9)


def test_adjoint_exact_for_many_covectors(kepler, rng):
    """The costate equation of the flat model is control-independent;
    closed form must be matched for arbitrary covectors."""
    for _ in range(5):
        p0 = rng.normal(size=4)
        if abs(p0[2]) + abs(p0[3]) < 0.3:
            continue
        z0 = np.concatenate([rng.normal(size=4) * 0.2, p0])
        arc = integrate_smooth_arc(kepler, z0, 0.0, 1.5)
        t = arc.t_end
        assert np.allclose(arc.eval(t)[4:], oracles.flat_adjoint(p0, t), atol=1e-10)


def test_stratum_classification(kepler, ref_point):
    res = stratum_of(kepler, ref_point, horizon=5.0)
    assert res.label == "Ss"
    assert res.t_bar == pytest.approx(2.0, abs=1e-8)
    assert not res.both

    past = ExtremalPoint.from_z(oracles.ref_z(3.0))
    res = stratum_of(kepler, past, horizon=5.0)
    assert res.label == "Su"
    assert res.t_bar == pytest.approx(-1.0, abs=1e-8)

    free = ExtremalPoint(x=np.zeros(4), p=np.array([0.0, -1.0, -2.0, 0.0]))
    # (p3, p4)(t) = (-2, t): never zero -> no switch either way
    res = stratum_of(kepler, free, horizon=5.0)
    assert res.label == "S0"
    assert res.forward_switches == 0 and res.backward_switches == 0


def test_projection_onto_stable_set(kepler):
    # p4 != 0 breaks the proportionality p1 p4 = p2 p3; restore it along e4
    p0 = np.array([-1.0, 0.0, -2.0, 1e-3])
    guess = ExtremalPoint(x=np.zeros(4), p=p0)
    res = project_to_stable_manifold(
        kepler, guess, direction=np.array([0.0, 0.0, 0.0, 1.0]), horizon=5.0)
    assert res.rho_residual <= 1e-10 * (1 + np.linalg.norm(p0))
    assert res.point.p[3] == pytest.approx(0.0, abs=1e-9)
    assert res.t_bar == pytest.approx(2.0, abs=1e-6)
    # the projected covector now actually switches
    ext = propagate_extremal(kepler, res.point, t_final=4.0)
    assert ext.switch_count == 1


def test_propagation_rejects_empty_span(kepler, ref_point):
    with pytest.raises(ValueError):
        propagate_extremal(kepler, ref_point, t_final=0.0)


def test_rho_fast_path(kepler, rng):
    rho = make_rho(kepler)
    z = rng.normal(size=8)
    assert rho(z) == pytest.approx(np.hypot(z[6], z[7]), abs=1e-15)
