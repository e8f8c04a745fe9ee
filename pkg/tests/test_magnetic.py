"""Magnetic trajectories, potential construction, F_c reduction drivers."""

import numpy as np
import pytest

from oracles import magnetic_circle
from prerand.errors import NumericalError, ValidationError
from prerand.fields import (Curve, OneFormField, plane, scalar_from_expression,
                            tensor_from_expressions, torus)
from prerand.magnetic import (MagneticStructure, construct_potential,
                              eleq_residual, fc_metric, integrate_magnetic,
                              lorentz_force, magnetic_connect,
                              magnetic_periodic)
from prerand.scenario import load_scenario


@pytest.fixture(scope="module")
def uniform():
    return load_scenario("magnetic_constant_B").magnetic


@pytest.fixture(scope="module")
def zeroflux():
    """Oscillating-field torus with its analytic gauge potential attached."""
    S = load_scenario("magnetic_zeroflux_torus").magnetic
    w = 2 * np.pi

    def pf(p):
        z = np.zeros(p.shape[:-1])
        return np.stack([z, -(1 - np.cos(w * p[..., 0])) / w], axis=-1)

    def pdf(p):
        z = np.zeros(p.shape[:-1])
        dx = np.stack([z, -np.sin(w * p[..., 0])], axis=-1)
        return np.stack([dx, np.stack([z, z], axis=-1)])

    pot = OneFormField(S.chart, pf, deriv=pdf, name="gauge")
    return MagneticStructure(S.g, S.B, pot)


def test_lorentz_force_turns_left(uniform):
    """Positive B rotates velocities counterclockwise, at right angles."""
    S = uniform
    assert np.allclose(lorentz_force(S, [0.0, 0.0], [1.0, 0.0]), [0.0, 1.0])
    assert np.allclose(lorentz_force(S, [0.3, -0.4], [0.0, 2.0]), [-2.0, 0.0])
    v = np.array([0.6, -0.8])
    Y = lorentz_force(S, [0.1, 0.2], v)
    assert abs(np.dot(Y, v)) < 1e-14


def test_uniform_field_orbit_is_a_circle(uniform):
    """B = 1 at unit speed: the unit circle about (0, 1), period 2 pi."""
    crv = integrate_magnetic(uniform, [0.0, 0.0], [1.0, 0.0], 2 * np.pi,
                             n_steps=1024, store_every=8)
    want_x, want_v = magnetic_circle(crv.s, 1.0, 1.0)
    assert np.max(np.abs(crv.points_unwrapped() - want_x)) < 1e-9
    assert np.max(np.abs(crv.velocities - want_v)) < 1e-9
    e = uniform.energy(crv.points, crv.velocities)
    assert np.max(np.abs(e - 0.5)) < 1e-9


def test_integrate_magnetic_rejects_bad_input(uniform):
    with pytest.raises(ValidationError):
        integrate_magnetic(uniform, [0.0, 0.0], [1.0, 0.0], -1.0)
    with pytest.raises(ValidationError):
        integrate_magnetic(uniform, [0.0, 0.0], [0.0, 0.0], 1.0)


def test_potential_gauge_on_zero_flux_torus():
    """Quadrature potential reproduces -(1 - cos(2 pi x))/(2 pi) dy."""
    S = load_scenario("magnetic_zeroflux_torus").magnetic
    assert S.potential is None
    pot = construct_potential(S)
    pts = np.random.default_rng(0).random((64, 2))
    w = 2 * np.pi
    want = np.stack([np.zeros(64), -(1 - np.cos(w * pts[:, 0])) / w], axis=-1)
    assert np.max(np.abs(pot(pts) - want)) < 1e-12
    # and it passes the structure's own d(potential) = -Omega audit
    MagneticStructure(S.g, S.B, pot)


def test_nonzero_flux_has_no_global_potential():
    ch = torus()
    g = tensor_from_expressions(ch, [["1", "0"], ["0", "1"]])
    B = scalar_from_expression(ch, "1")
    with pytest.raises(ValidationError, match="flux"):
        construct_potential(MagneticStructure(g, B))


def test_structure_validates_inputs():
    ch = plane([[-1.0, 1.0], [-1.0, 1.0]])
    B = scalar_from_expression(ch, "1")
    bad_g = tensor_from_expressions(ch, [["-1", "0"], ["0", "1"]])
    with pytest.raises(ValidationError):
        MagneticStructure(bad_g, B)
    g = tensor_from_expressions(ch, [["1", "0"], ["0", "1"]])
    wrong_pot = OneFormField(ch, lambda p: np.zeros(p.shape[:-1] + (2,)),
                             name="zero form")
    with pytest.raises(ValidationError, match="potential"):
        MagneticStructure(g, B, wrong_pot)


def test_eleq_residual_flags_non_trajectories(uniform):
    """A straight line through a field is not a magnetic geodesic."""
    s = np.linspace(0.0, 1.0, 65)
    pts = np.stack([s, np.zeros_like(s)], axis=-1)
    vel = np.tile([1.0, 0.0], (65, 1))
    crv = Curve(s, pts, vel, uniform.chart, np.zeros(2, dtype=int))
    res = eleq_residual(uniform, crv)
    assert np.max(res) > 0.5
    with pytest.raises(ValidationError):
        eleq_residual(uniform, Curve(s[:5], pts[:5], vel[:5], uniform.chart,
                                     np.zeros(2, dtype=int)))


def test_connect_audit_refuses_strong_field(uniform):
    """At c = 1/2 the drift beats the metric: negative F_c-loops exist."""
    with pytest.raises(ValidationError, match="negative length"):
        magnetic_connect(uniform, 0.5, [0.0, 0.0], [0.7, 0.7])


def test_connect_weak_field(uniform):
    """High energy tames the drift; the connector solves the equation."""
    res = magnetic_connect(uniform, 50.0, [0.0, 0.0], [0.7, 0.7])
    assert res.found
    crv = res.curve
    assert np.allclose(crv.points[0], [0.0, 0.0], atol=1e-9)
    assert np.allclose(crv.points[-1], [0.7, 0.7], atol=1e-5)
    speed = np.sqrt(2.0 * uniform.energy(crv.points, crv.velocities))
    assert np.max(np.abs(speed - 10.0)) < 1e-9
    assert np.max(eleq_residual(uniform, crv)) < 1e-5


def test_fc_pregeodesics_solve_the_lorentz_equation(zeroflux):
    """Reduction route: F_c pre-geodesics at speed sqrt(2c) obey D(u)/dt = Y(u)."""
    from prerand.geodesic import integrate_pregeodesic

    S = zeroflux
    c = 0.5
    Fc = fc_metric(S, c)
    x0, v0 = np.array([0.1, 0.4]), np.array([1.0, 0.3])
    v0 = v0 / float(Fc.h_norm(x0, v0))
    crv = integrate_pregeodesic(Fc, x0, v0, 1.0, n_steps=512, store_every=4)
    # h-arclength parametrization is g-unit speed here; rescale to sqrt(2c)
    speed = np.sqrt(2.0 * c)
    resc = Curve(crv.s / speed, crv.points, crv.velocities * speed,
                 crv.chart, crv.winding)
    assert np.max(eleq_residual(S, resc)) < 1e-5


def test_periodic_orbit_on_the_torus(zeroflux):
    per = magnetic_periodic(zeroflux, 0.5, (1, 0), n_nodes=24, n_steps=192)
    assert per.converged
    assert tuple(per.winding) == (1, 0)
    crv = per.curve
    speed = np.sqrt(2.0 * zeroflux.energy(crv.points, crv.velocities))
    assert np.max(np.abs(speed - 1.0)) < 1e-9
    assert np.max(eleq_residual(zeroflux, crv)) < 1e-5
    # closed orbit: endpoints agree on the torus
    gap, _ = zeroflux.chart.wrap_displacement(crv.points[-1], crv.points[0])
    assert np.linalg.norm(gap) < 1e-8
