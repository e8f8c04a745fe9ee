"""Pre-geodesic flow, shooting, periodic loops, splitting invariance."""

import numpy as np
import pytest

from prerand.fields import (constant_oneform, constant_tensor,
                            cylinder, plane, torus)
from prerand.geodesic import (UnboundedBelowError, integrate_pregeodesic,
                              lift_lightlike, periodic_search, shoot_connect)
from prerand.metrics import PreRandersMetric


def drift_metric(chart, w=(0.3, 0.0)):
    return PreRandersMetric(constant_tensor(chart, np.eye(2)),
                            constant_oneform(chart, w))


def bump_drift_metric(chart, amp=0.2):
    """Nonconstant drift with an analytic jet, to exercise the curl term."""
    w = 2 * np.pi

    def f(p):
        z = np.zeros(p.shape[:-1])
        return np.stack([amp * np.sin(w * p[..., 1]), z], axis=-1)

    def df(p):
        z = np.zeros(p.shape[:-1] + (2,))
        dy = np.stack([amp * w * np.cos(w * p[..., 1]),
                       np.zeros(p.shape[:-1])], axis=-1)
        return np.stack([z, dy])

    from prerand.fields import OneFormField
    om = OneFormField(chart, f, deriv=df, name="bump drift")
    return PreRandersMetric(constant_tensor(chart, np.eye(2)), om)


def test_constant_drift_pregeodesics_are_straight():
    """Closed one-forms do not bend pre-geodesics."""
    F = drift_metric(torus(), (0.4, 0.1))
    crv = integrate_pregeodesic(F, [0.1, 0.1], [1.0, 0.5], 0.6,
                                n_steps=256, store_every=1)
    unw = crv.points_unwrapped()
    chord = unw - unw[0]
    t = crv.s[:, None]
    assert np.allclose(chord, t * np.array([1.0, 0.5]), atol=1e-12)


def test_h_speed_is_conserved():
    F = bump_drift_metric(torus())
    crv = integrate_pregeodesic(F, [0.2, 0.3], [0.8, 0.6], 1.0,
                                n_steps=512, store_every=1)
    sp = F.h_norm(crv.points, crv.velocities)
    assert np.max(np.abs(sp - sp[0])) < 1e-10


def test_positive_homogeneity_of_flow():
    """Scaling the initial speed reparametrizes the same path."""
    F = bump_drift_metric(torus())
    a = integrate_pregeodesic(F, [0.2, 0.3], [1.0, 0.0], 1.0,
                              n_steps=512, store_every=1)
    b = integrate_pregeodesic(F, [0.2, 0.3], [2.0, 0.0], 0.5,
                              n_steps=512, store_every=2)
    ia = np.arange(0, 513, 2)
    assert np.allclose(a.points_unwrapped()[ia], b.points_unwrapped(),
                       atol=1e-8)


def test_shoot_connect_euclidean():
    F = drift_metric(plane([[0.0, 1.0], [0.0, 1.0]]), (0.0, 0.0))
    res = shoot_connect(F, [0.2, 0.2], [0.8, 0.6])
    assert res.found
    assert res.length == pytest.approx(np.hypot(0.6, 0.4), abs=1e-6)
    assert res.residual < 1e-5


def test_shoot_connect_respects_winding():
    F = drift_metric(torus(), (0.3, 0.0))
    res0 = shoot_connect(F, [0.1, 0.5], [0.6, 0.5], winding=(0, 0))
    res1 = shoot_connect(F, [0.1, 0.5], [0.6, 0.5], winding=(-1, 0))
    assert res0.found and res1.found
    assert tuple(res0.winding) == (0, 0)
    assert tuple(res1.winding) == (-1, 0)
    # 0.5 forward at cost 1.3 vs 0.5 backward at cost 0.7
    assert res0.length == pytest.approx(0.65, abs=1e-4)
    assert res1.length == pytest.approx(0.35, abs=1e-4)


def test_periodic_search_finds_straight_loop():
    F = drift_metric(torus(), (0.3, 0.0))
    res = periodic_search(F, (0, 1), seed=0)
    assert res.converged
    assert res.length == pytest.approx(1.0, abs=1e-3)
    assert tuple(res.winding) == (0, 1)


def test_periodic_search_floor_certificate():
    """Descent crossing the caller's floor raises with a witness loop."""
    ch = cylinder([[0.0, 1.0], [0.0, 1.0]], periodic_axis=0)
    F = drift_metric(ch, (-2.0, 0.0))
    with pytest.raises(UnboundedBelowError) as exc:
        periodic_search(F, (1, 0), floor=-0.5, seed=0)
    wit = exc.value.witness
    assert tuple(wit.winding) == (1, 0)
    assert F.length(wit) < -0.5


def test_lightlike_lift_tracks_arrival_time():
    """The t-lift of a curve accrues exactly its F-length."""
    F = drift_metric(torus(), (0.3, 0.0))
    crv = integrate_pregeodesic(F, [0.1, 0.1], [1.0, 0.0], 0.5,
                                n_steps=128, store_every=1)
    lift = lift_lightlike(crv, F)
    t0, t1 = lift.time_span()
    assert t0 == 0.0
    assert t1 == pytest.approx(F.length(crv), abs=1e-9)
    assert np.all(np.diff(lift.tau) >= 0.0)
    assert lift.spatial is crv


def test_lightlike_lift_audited_against_spacetime():
    """Lifting through the spacetime runs the g(v,v) ~ 0 audit."""
    from prerand.metrics import som_from_pre_randers

    F = drift_metric(torus(), (0.3, 0.0))
    som = som_from_pre_randers(F)
    crv = integrate_pregeodesic(F, [0.1, 0.1], [0.7, 0.4], 0.8,
                                n_steps=256, store_every=1)
    lift = lift_lightlike(crv, som, t0=2.0)
    assert lift.tau[0] == 2.0
    assert lift.time_span()[1] == pytest.approx(2.0 + F.length(crv), abs=1e-9)
