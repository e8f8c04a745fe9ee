"""Stencil graph, pre-distance, negative-loop detection, balls."""

import numpy as np
import pytest

from oracles import flat_torus_drift_distance, plane_drift_distance
from prerand.distance import (NEG_INFINITY, ball, build_graph, pre_distance,
                              rho_to_set, symmetrized)
from prerand.errors import ValidationError
from prerand.fields import constant_oneform, constant_tensor, cylinder, plane, torus
from prerand.metrics import PreRandersMetric


def drift_metric(chart, w=(0.3, 0.0)):
    return PreRandersMetric(constant_tensor(chart, np.eye(2)),
                            constant_oneform(chart, w))


def test_plane_distance_matches_closed_form():
    ch = plane([[0.0, 1.0], [0.0, 1.0]])
    w = (0.5, 0.0)
    G = build_graph(drift_metric(ch, w), 48)
    D = pre_distance(G, sources=[G.node_index([0.0, 0.0])])
    for q in ([1.0, 0.0], [0.5, 0.5], [0.0, 1.0], [0.75, 0.25]):
        k = G.node_index(q)
        got = float(D.matrix[0, k])
        want = plane_drift_distance([0.0, 0.0], G.nodes[k], w)
        assert got == pytest.approx(want, abs=0.02), q


def test_torus_distance_uses_short_image():
    ch = torus()
    w = (0.3, 0.0)
    G = build_graph(drift_metric(ch, w), 48)
    i0 = G.node_index([0.1, 0.1])
    D = pre_distance(G, sources=[i0])
    for q in ([0.9, 0.1], [0.6, 0.6], [0.1, 0.9]):
        k = G.node_index(q)
        got = float(D.matrix[0, k])
        want = flat_torus_drift_distance(G.nodes[i0], G.nodes[k], w)
        assert got == pytest.approx(want, abs=0.02), q


def test_asymmetry_and_symmetrization():
    ch = torus()
    G = build_graph(drift_metric(ch, (0.3, 0.0)), 32)
    D = pre_distance(G)
    i = G.node_index([0.125, 0.5])
    j = G.node_index([0.375, 0.5])
    fwd, bwd = D.matrix[i, j], D.matrix[j, i]
    assert fwd == pytest.approx(0.25 * 1.3, abs=1e-9)
    assert bwd == pytest.approx(0.25 * 0.7, abs=1e-9)
    ds = symmetrized(D)
    assert ds[i, j] == ds[j, i] == pytest.approx(0.25, abs=1e-9)


def test_negative_loop_cylinder():
    ch = cylinder([[0.0, 1.0], [0.0, 1.0]], periodic_axis=0)
    G = build_graph(drift_metric(ch, (-2.0, 0.0)), 32)
    D = pre_distance(G)
    assert D.status == NEG_INFINITY
    assert D.witness is not None
    assert D.witness_length <= -0.9
    assert np.isneginf(D.lookup(0, 1))


def test_no_false_negative_loop_at_unit_drift():
    """|omega| = 1 exactly: zero loops exist but none may round negative."""
    ch = cylinder([[0.0, 1.0], [0.0, 1.0]], periodic_axis=0)
    G = build_graph(drift_metric(ch, (1.0, 0.0)), 32)
    D = pre_distance(G)
    assert D.status == "finite"
    d = D.matrix
    assert float(np.min(d + d.T)) >= -G.eps_zero


def test_self_distance_zero_when_causal():
    G = build_graph(drift_metric(torus(), (0.3, 0.0)), 24)
    D = pre_distance(G)
    assert np.allclose(np.diag(D.matrix), 0.0)


def test_triangle_inequality_exact_in_graph():
    G = build_graph(drift_metric(torus(), (0.3, 0.1)), 16)
    d = pre_distance(G).matrix
    n = d.shape[0]
    rng = np.random.default_rng(0)
    i, j, k = (rng.integers(0, n, 4000) for _ in range(3))
    assert np.all(d[i, k] <= d[i, j] + d[j, k] + 1e-12)


def test_balls_forward_backward():
    G = build_graph(drift_metric(torus(), (0.3, 0.0)), 32)
    D = pre_distance(G)
    c = G.node_index([0.5, 0.5])
    fb = ball(D, c, 0.2, kind="forward")
    bb = ball(D, c, 0.2, kind="backward")
    sb = ball(D, c, 0.2, kind="symmetrized")
    assert fb[c] and bb[c] and sb[c]
    # omega = +0.3 dx taxes +x moves, so the forward ball reaches further in -x
    right = G.node_index([0.71875, 0.5])   # 0.21875 away: 0.284 fwd, 0.153 bwd
    left = G.node_index([0.28125, 0.5])
    assert fb[left] and not fb[right]
    assert bb[right] and not bb[left]


def test_rho_to_set_is_min_over_targets():
    G = build_graph(drift_metric(torus(), (0.0, 0.0)), 24)
    t1, t2 = G.node_index([0.0, 0.0]), G.node_index([0.5, 0.5])
    rho = rho_to_set(G, np.array([t1, t2]))
    D = pre_distance(G)
    want = np.minimum(D.matrix[:, t1], D.matrix[:, t2])
    assert np.allclose(rho, want, atol=1e-12)


def test_symmetrized_refuses_vicious():
    ch = cylinder([[0.0, 1.0], [0.0, 1.0]], periodic_axis=0)
    G = build_graph(drift_metric(ch, (-2.0, 0.0)), 24)
    D = pre_distance(G)
    with pytest.raises(ValidationError):
        symmetrized(D)


def test_stencil_widens_monotonically():
    """A richer stencil can only shorten graph distances."""
    F = drift_metric(torus(), (0.3, 0.0))
    d8 = pre_distance(build_graph(F, 24, stencil=8)).matrix
    d16 = pre_distance(build_graph(F, 24, stencil=16)).matrix
    assert np.all(d16 <= d8 + 1e-12)
