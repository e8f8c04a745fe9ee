"""Causal ladder classification, chronological relations, verdict order."""

import numpy as np
import pytest

from oracles import sheared_quotient_data
from prerand.causality import (FAILS, HOLDS, MARGINAL, NEG_INFINITY, RUNGS,
                               chronological_related, chronological_set,
                               classify_ladder)
from prerand.distance import build_graph, pre_distance
from prerand.errors import ValidationError
from prerand.fields import constant_oneform, constant_tensor, torus
from prerand.metrics import PreRandersMetric
from prerand.scenario import load_scenario

RANK = {FAILS: 0, MARGINAL: 1, HOLDS: 2}


def ladder_for(name, N, budget=2):
    sc = load_scenario(name, grid=N)
    G = build_graph(sc.metric, N, sc.stencil)
    D = pre_distance(G)
    return G, D, classify_ladder(G, D, convexity_budget=budget)


@pytest.fixture(scope="module")
def drift_plane():
    sc = load_scenario("plane_drift_05", grid=24)
    G = build_graph(sc.metric, 24, sc.stencil)
    return G, pre_distance(G)


def test_euclidean_plane_ladder():
    _, _, rep = ladder_for("euclidean_plane", 24)
    for name in RUNGS[1:-1]:
        assert rep.verdict(name) == HOLDS
    assert rep.verdict("totally_vicious") == FAILS
    # truncated open chart: ball precompactness cannot be certified
    assert rep.verdict("globally_hyperbolic") == MARGINAL
    assert rep.implied["strongly_causal"] == HOLDS
    assert rep.implied["stably_causal"] == HOLDS


def test_quotient_torus_zero_loop():
    """Closed null drift line: chronology survives, causality does not."""
    _, D, rep = ladder_for("paper_g2_torus", 32)
    assert D.status == "finite"
    assert rep.verdict("chronological") == HOLDS
    assert rep.verdict("causal") == FAILS
    wit = rep.rungs["causal"].witness
    assert abs(wit["winding"][0]) == 1 and wit["winding"][1] == 0
    assert abs(wit["length_F"]) <= 1e-12
    assert rep.verdict("distinguishing") == FAILS
    assert rep.implied["strongly_causal"] == FAILS


def test_sheared_quotient_degrades_gracefully():
    """With an irrational shear the null line misses the lattice: the cycle
    statistic stays conservatively positive while the distance statistic
    still exposes the collapse."""
    h, om, a = sheared_quotient_data()
    ch = torus()
    F = PreRandersMetric(constant_tensor(ch, h), constant_oneform(ch, om))
    G = build_graph(F, 32)
    D = pre_distance(G)
    assert D.status == "finite"
    assert float(np.max(np.abs(D.matrix))) <= G.eps_zero
    rep = classify_ladder(G, D, convexity_budget=2)
    assert rep.verdict("chronological") == HOLDS
    assert rep.verdict("causal") == HOLDS
    dist = rep.rungs["distinguishing"]
    assert dist.verdict == FAILS
    assert dist.statistic < 0.01


def test_vicious_ladder_and_relations():
    sc = load_scenario("vicious_cylinder", grid=16)
    G = build_graph(sc.metric, 16, sc.stencil)
    D = pre_distance(G)
    assert D.status == NEG_INFINITY
    assert D.witness_length < 0.0
    rep = classify_ladder(G, D)
    assert rep.verdict("totally_vicious") == HOLDS
    for name in RUNGS[1:]:
        assert rep.verdict(name) == FAILS
    assert rep.implied["strongly_causal"] == FAILS
    # everything is related to everything, with no marginal hedge
    assert chronological_related(D, (0.0, [0.1, 0.5]), (-5.0, [0.9, 0.5])) \
        == (True, False)
    assert np.all(chronological_set(D, [0.3, 0.5]) == -np.inf)
    assert np.all(chronological_set(D, [0.3, 0.5], sign="past") == np.inf)


def test_chronological_relation_thresholds(drift_plane):
    """(t0,x) << (t1,y) iff d_F(x,y) < t1 - t0, with a noise band."""
    G, D = drift_plane
    x0, x1 = [0.0, 0.5], [1.0, 0.5]
    d = D.lookup(G.node_index(x0), G.node_index(x1))
    assert d == pytest.approx(1.5, abs=1e-9)
    assert chronological_related(D, (0.0, x0), (3.0, x1)) == (True, False)
    assert chronological_related(D, (0.0, x0), (0.5, x1)) == (False, False)
    # dt right at d_F: not related, flagged as inside discretization noise
    assert chronological_related(D, (0.0, x0), (d, x1)) == (False, True)


def test_chronological_set_rows(drift_plane):
    G, D = drift_plane
    x0, x1 = [0.0, 0.5], [1.0, 0.5]
    i, j = G.node_index(x0), G.node_index(x1)
    d = D.lookup(i, j)
    fut = chronological_set(D, x0, t0=1.0, sign="future")
    assert fut[j] == pytest.approx(1.0 + d)
    past = chronological_set(D, x1, t0=0.0, sign="past")
    assert past[i] == pytest.approx(-d)
    with pytest.raises(ValidationError):
        chronological_set(D, x0, sign="sideways")


def test_verdicts_never_improve_climbing(drift_plane):
    """A marginal rung caps everything above it at marginal."""
    G, D = drift_plane
    rep = classify_ladder(G, D, convexity_budget=2)
    assert rep.verdict("distinguishing") == MARGINAL
    ranks = [RANK[rep.verdict(name)] for name in RUNGS[1:]]
    assert all(a >= b for a, b in zip(ranks, ranks[1:]))
    assert RANK[rep.verdict("causally_simple")] <= RANK[MARGINAL]
