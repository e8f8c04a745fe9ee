"""Metric containers, conversions, splitting changes, quadrature."""

import numpy as np
import pytest

from oracles import sheared_quotient_data
from prerand.errors import ConversionError, MetricError
from prerand.fields import (constant_oneform, constant_tensor, plane,
                            scalar_from_expression, torus,
                            oneform_from_expressions, tensor_from_expressions,
                            curve_from_nodes, ScalarField)
from prerand.metrics import (PreRandersMetric, SOMSpacetime, change_splitting,
                             exact_oneform_from_scalar, fermat_from_som,
                             fermat_of_submersion, lorentzianize,
                             oneform_periods, riemannianize,
                             som_from_pre_randers)


def drift_metric(chart, w=(0.3, 0.0)):
    return PreRandersMetric(constant_tensor(chart, np.eye(2)),
                            constant_oneform(chart, w))


def test_F_values_and_zero():
    F = drift_metric(torus())
    pts = np.zeros((3, 2))
    assert np.allclose(F.F(pts, np.array([[1.0, 0.0]] * 3)), 1.3)
    assert np.allclose(F.F(pts, np.array([[-1.0, 0.0]] * 3)), 0.7)
    assert F.F(np.zeros(2), np.zeros(2)) == 0.0


def test_non_positive_definite_rejected():
    ch = torus()
    with pytest.raises(MetricError):
        PreRandersMetric(constant_tensor(ch, np.diag([1.0, -1.0])),
                         constant_oneform(ch, [0.0, 0.0]))


def test_unrestricted_drift_allowed():
    F = drift_metric(torus(), w=(2.0, 0.0))
    assert F.F(np.zeros(2), np.array([-1.0, 0.0])) == pytest.approx(-1.0)


def test_som_roundtrip_pointwise():
    F = drift_metric(torus())
    F2 = fermat_from_som(som_from_pre_randers(F))
    rng = np.random.default_rng(3)
    pts, vecs = rng.random((200, 2)), rng.standard_normal((200, 2))
    assert np.allclose(F2.F(pts, vecs), F.F(pts, vecs), rtol=0, atol=1e-14)


def test_signature_roundtrip():
    M = som_from_pre_randers(drift_metric(torus()))
    M2 = lorentzianize(riemannianize(M))
    rng = np.random.default_rng(4)
    pts, vecs = rng.random((100, 2)), rng.standard_normal((100, 2))
    assert np.allclose(M2.beta(pts), M.beta(pts), atol=1e-14)
    assert np.allclose(M2.omega.pair(pts, vecs), M.omega.pair(pts, vecs), atol=1e-14)
    assert np.allclose(M2.g0.quad(pts, vecs), M.g0.quad(pts, vecs), atol=1e-14)


def test_submersion_fermat_agrees_with_som_route():
    ch = torus()
    beta = scalar_from_expression(ch, "2")
    om = oneform_from_expressions(ch, ["1", "0"])
    g0 = tensor_from_expressions(ch, [["0", "0"], ["0", "1"]])
    M = SOMSpacetime(beta, om, g0)
    R = riemannianize(M)
    F1 = fermat_from_som(M)
    F2 = fermat_of_submersion(R)
    rng = np.random.default_rng(5)
    pts, vecs = rng.random((100, 2)), rng.standard_normal((100, 2))
    assert np.allclose(F1.F(pts, vecs), F2.F(pts, vecs), atol=1e-12)


def test_spacetime_quadratic_factorization():
    """g((tau, v)) = -beta (tau - F(v)) (tau + F(-v)) for the SOM metric."""
    ch = torus()
    M = som_from_pre_randers(drift_metric(ch, w=(0.4, 0.1)))
    F = fermat_from_som(M)
    rng = np.random.default_rng(6)
    pts = rng.random((50, 2))
    vecs = rng.standard_normal((50, 2))
    taus = rng.standard_normal(50)
    quad = (-M.beta(pts) * taus**2
            + 2.0 * M.beta(pts) * M.omega.pair(pts, vecs) * taus
            + M.g0.quad(pts, vecs))
    fw = F.F(pts, vecs)
    bw = F.F(pts, -vecs)
    assert np.allclose(quad, -M.beta(pts) * (taus - fw) * (taus + bw), atol=1e-10)


def test_null_direction_of_quotient_data():
    h, om, a = sheared_quotient_data()
    ch = torus()
    F = PreRandersMetric(constant_tensor(ch, h), constant_oneform(ch, om))
    val = F.F(np.zeros(2), np.array([-1.0, a]))
    assert abs(val) < 1e-15


def test_change_splitting_is_drift_by_differential():
    ch = torus()
    M = som_from_pre_randers(drift_metric(ch))
    w = 2 * np.pi

    def f(p):
        return 0.05 * np.sin(w * p[..., 0])

    def df(p):
        return np.stack([0.05 * w * np.cos(w * p[..., 0]),
                         np.zeros(p.shape[:-1])])

    fs = ScalarField(ch, f, deriv=df, name="f")
    Ff = fermat_from_som(change_splitting(M, fs))
    F = fermat_from_som(M)
    rng = np.random.default_rng(7)
    pts, vecs = rng.random((100, 2)), rng.standard_normal((100, 2))
    dfv = np.sum(vecs * np.moveaxis(fs.derivative(pts), 0, -1), axis=-1)
    assert np.allclose(Ff.F(pts, vecs), F.F(pts, vecs) - dfv, atol=1e-12)


def test_oneform_periods_detect_nonexactness():
    ch = torus()
    om = constant_oneform(ch, [0.3, 0.0])
    per = oneform_periods(om)
    assert np.allclose(per, [0.3, 0.0], atol=1e-10)


def test_exact_oneform_has_zero_periods():
    ch = torus()
    w = 2 * np.pi

    def f(p):
        return 0.1 * np.cos(w * p[..., 0])

    def df(p):
        return np.stack([-0.1 * w * np.sin(w * p[..., 0]),
                         np.zeros(p.shape[:-1])])

    om = exact_oneform_from_scalar(ScalarField(ch, f, deriv=df))
    assert np.allclose(oneform_periods(om), [0.0, 0.0], atol=1e-10)


def test_length_quadrature_straight_segment():
    ch = plane([[0.0, 1.0], [0.0, 1.0]])
    F = drift_metric(ch, w=(0.5, 0.0))
    crv = curve_from_nodes(ch, np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]))
    assert F.length(crv) == pytest.approx(1.5, abs=1e-12)
    assert F.length(crv.reversed()) == pytest.approx(0.5, abs=1e-12)


def test_beta_positive_required():
    ch = torus()
    with pytest.raises(ConversionError):
        SOMSpacetime(scalar_from_expression(ch, "-1"),
                     constant_oneform(ch, [0.0, 0.0]),
                     constant_tensor(ch, np.eye(2)))
