"""Charts, expression compilation, field evaluation and derivatives."""

import numpy as np
import pytest

from prerand.errors import DomainError, FieldError, ValidationError
from prerand.fields import (ChartManifold, Curve, compile_expression,
                            constant_oneform, constant_tensor, curve_from_nodes,
                            cylinder, oneform_from_expressions, plane,
                            scalar_from_expression, tensor_from_expressions,
                            torus)


def test_wrap_and_windings():
    ch = torus()
    pts = np.array([[1.25, -0.5], [0.0, 0.999]])
    w = ch.wrap(pts)
    assert np.allclose(w, [[0.25, 0.5], [0.0, 0.999]])
    vec, wind = ch.wrap_displacement(np.array([0.9, 0.1]), np.array([0.1, 0.9]))
    assert np.allclose(vec, [0.2, -0.2])
    assert wind.tolist() == [1, -1]


def test_cylinder_wraps_one_axis_only():
    ch = cylinder([[0.0, 1.0], [0.0, 2.0]], periodic_axis=0)
    assert np.allclose(ch.wrap([1.2, 1.5]), [0.2, 1.5])
    with pytest.raises(DomainError):
        ch.require_inside(np.array([0.5, 2.5]))


def test_plane_rejects_outside_points():
    ch = plane([[0.0, 1.0], [0.0, 1.0]])
    ch.require_inside(np.array([0.5, 0.5]))
    with pytest.raises(DomainError):
        ch.require_inside(np.array([1.5, 0.5]))


def test_expression_whitelist():
    compile_expression("sin(2*pi*x) + y^2 / e")
    for bad in ("__import__('os')", "x.real", "lambda: 1", "abs(x)", "z + 1"):
        with pytest.raises(ValidationError):
            compile_expression(bad)


def test_expression_vectorized_eval():
    f = compile_expression("x*y + 1")
    pts = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.allclose(f(pts), [3.0, 13.0])


def test_constant_expression_has_zero_derivative():
    ch = torus()
    s = scalar_from_expression(ch, "3/4")
    assert not s.uses_fd_derivatives
    pts = np.random.default_rng(0).random((5, 2))
    assert np.all(s(pts) == 0.75)
    assert np.all(s.derivative(pts) == 0.0)


def test_fd_derivative_matches_analytic():
    ch = torus()
    s = scalar_from_expression(ch, "sin(2*pi*x)*cos(2*pi*y)")
    pts = np.array([[0.13, 0.27], [0.61, 0.82]])
    d = s.derivative(pts)
    w = 2 * np.pi
    want_x = w * np.cos(w * pts[:, 0]) * np.cos(w * pts[:, 1])
    want_y = -w * np.sin(w * pts[:, 0]) * np.sin(w * pts[:, 1])
    assert np.allclose(d[0], want_x, atol=1e-8)
    assert np.allclose(d[1], want_y, atol=1e-8)


def test_oneform_pair_and_curl():
    ch = plane([[-1.0, 1.0], [-1.0, 1.0]])
    om = oneform_from_expressions(ch, ["-y", "x"])
    pts = np.array([[0.2, 0.3]])
    assert np.allclose(om.pair(pts, np.array([[1.0, 1.0]])), [-0.3 + 0.2])
    assert np.allclose(om.curl(pts), [2.0], atol=1e-8)


def test_tensor_symmetrized_and_quad():
    ch = plane([[-1.0, 1.0], [-1.0, 1.0]])
    m = tensor_from_expressions(ch, [["1", "x"], ["0", "2"]])
    pts = np.array([[0.4, 0.0]])
    got = m(pts)[0]
    assert np.allclose(got, [[1.0, 0.2], [0.2, 2.0]])
    q = m.quad(pts, np.array([[1.0, 1.0]]))
    assert np.allclose(q, [1.0 + 2 * 0.2 + 2.0])


def test_field_error_on_nonfinite():
    ch = plane([[0.0, 1.0], [0.0, 1.0]])
    s = scalar_from_expression(ch, "1/(x - 1/2)")
    with np.errstate(divide="ignore"), pytest.raises(FieldError):
        s(np.array([[0.5, 0.1]]))


def test_constant_builders():
    ch = torus()
    om = constant_oneform(ch, [0.3, 0.0])
    t = constant_tensor(ch, np.eye(2))
    pts = np.random.default_rng(1).random((4, 2))
    assert np.all(om.derivative(pts) == 0.0)
    assert np.all(t(pts)[:, 0, 0] == 1.0)


def test_curve_winding_and_unwrap():
    ch = torus()
    nodes = np.array([[0.1, 0.5], [0.5, 0.5], [0.9, 0.5], [0.3, 0.5]])
    crv = curve_from_nodes(ch, nodes)
    assert isinstance(crv, Curve)
    assert crv.winding.tolist() == [1, 0]
    unw = crv.points_unwrapped()
    assert np.allclose(unw[-1], [1.3, 0.5])


def test_curve_reversed_orientation():
    ch = plane([[0.0, 1.0], [0.0, 1.0]])
    nodes = np.array([[0.1, 0.1], [0.5, 0.5], [0.9, 0.9]])
    crv = curve_from_nodes(ch, nodes)
    rev = crv.reversed()
    assert np.allclose(rev.points[0], [0.9, 0.9])
    assert np.allclose(rev.points[-1], [0.1, 0.1])
