"""Causal structure of the product spacetime from pre-distance data.

Everything reduces to d_F: the point (t0, x0) chronologically precedes
(t1, x1) exactly when d_F(x0, x1) < t1 - t0, so causality verdicts become
statements about loops and separations of the spatial pre-distance. The
ladder is reported rung by rung with HOLDS / FAILS / MARGINAL verdicts,
each carrying the decisive statistic, the threshold it was compared to,
and a witness where one exists.

Rung statistics on the grid graph:
  - totally vicious / chronological: sign of the negative-loop verdict
    (d_F finite everywhere or identically -infinity).
  - causal: mu* = minimum F-length per unit Riemannian length over directed
    cycles. Closed causal curves show up as cycles of length ~ 0; a strictly
    positive mu* bounds every loop's F-length from below. The witness cycle's
    winding class is polished by a continuum loop search.
  - distinguishing: sigma* = minimum symmetrized distance between node pairs
    at Riemannian separation of at least half the diameter. Distinct points
    that fail to be distinguished make d_s degenerate at macroscopic range.
  - causally simple: spot-check that geodesic connectors realize d_F
    (convexity audit); non-convergence downgrades to MARGINAL, never FAILS.
  - globally hyperbolic: on a fully periodic (compact) chart it follows from
    the rungs below; on open charts ball precompactness cannot be certified
    from a truncated grid, so the verdict is MARGINAL at best.

MARGINAL is reported whenever a statistic lands within 10% of its threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _graphalg as ga
from .distance import (FINITE, NEG_INFINITY, DiscreteGeometry,
                       PreDistanceResult, pre_distance, symmetrized)
from .errors import ValidationError
from .geodesic import UnboundedBelowError, periodic_search, shoot_connect
from .metrics import PreRandersMetric, SOMSpacetime, fermat_from_som

HOLDS = "HOLDS"
FAILS = "FAILS"
MARGINAL = "MARGINAL"

RUNGS = ("totally_vicious", "chronological", "causal", "distinguishing",
         "causally_continuous", "causally_simple", "globally_hyperbolic")

EPS_MU = 1e-3          # threshold for the causal cycle-ratio statistic
MARGIN_FACTOR = 0.1    # +-10% band around each threshold


# ---------------------------------------------------------------------------
# Tangent-vector classification
# ---------------------------------------------------------------------------

def classify_tangent(M: SOMSpacetime, x, tau, v, eps=1e-9) -> str:
    """Causal character of the tangent vector (tau, v) at (t, x).

    The spacetime quadratic form factors through the Fermat metric:
    g((tau, v)) = -beta (tau - F(v)) (tau + F(-v)), so the vector is future
    lightlike iff tau = F(v), past lightlike iff tau = -F(-v), timelike
    between the A spacelike outside. Tolerance eps is relative.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    tau = float(tau)
    F = _fermat_of(M)
    f_plus = float(F.F(x, v)) if np.any(v != 0) else 0.0
    f_minus = float(F.F(x, -v)) if np.any(v != 0) else 0.0
    scale = max(abs(tau), float(F.h_norm(x, v)) if np.any(v != 0) else 0.0, 1e-300)
    if abs(tau) < eps * max(scale, 1e-30) and not np.any(v != 0):
        return "zero"
    up = tau - f_plus          # > 0 above the future cone
    dn = tau + f_minus         # < 0 below the past cone
    if abs(up) <= eps * scale:
        return "lightlike_future"
    if abs(dn) <= eps * scale:
        return "lightlike_past"
    if up > 0:
        return "timelike_future"
    if dn < 0:
        return "timelike_past"
    return "spacelike"


def _fermat_of(M: SOMSpacetime) -> PreRandersMetric:
    F = getattr(M, "_fermat_cache", None)
    if F is None:
        F = fermat_from_som(M)
        M._fermat_cache = F
    return F


# ---------------------------------------------------------------------------
# Chronological relation and sets
# ---------------------------------------------------------------------------

def chronological_related(D: PreDistanceResult, event0, event1):
    """Is (t0, x0) << (t1, x1)?  Returns (related, marginal).

    events are (t, point) pairs; points snap to grid nodes. marginal flags
    |d_F - dt| <= eps_zero, where the verdict is inside discretization noise.
    """
    (t0, x0), (t1, x1) = event0, event1
    if D.status == NEG_INFINITY:
        return True, False
    G = D.geometry
    i, j = G.node_index(x0), G.node_index(x1)
    d = D.lookup(i, j)
    dt = float(t1) - float(t0)
    return bool(d < dt), bool(abs(d - dt) <= G.eps_zero)


def chronological_set(D: PreDistanceResult, point, t0=0.0, sign="future"):
    """Threshold field of the chronological future or past of (t0, point).

    Returns per-node times tau(x): (t, x) lies in the set iff t > tau(x)
    (future) or t < tau(x) (past). When d_F is -infinity the set is the whole
    spacetime and the thresholds are -inf / +inf.
    """
    G = D.geometry
    n = G.n_nodes
    if D.status == NEG_INFINITY:
        fill = -np.inf if sign == "future" else np.inf
        return np.full(n, fill)
    i = G.node_index(point)
    if sign == "future":
        return t0 + D.matrix[_row(D, i)]
    if sign == "past":
        if not D.is_all_pairs:
            raise ValidationError("past set needs all-pairs distances")
        return t0 - D.matrix[:, i]
    raise ValidationError(f"sign must be 'future' or 'past', got {sign!r}")


def _row(D: PreDistanceResult, i: int) -> int:
    if D.sources is None:
        return i
    rows = np.flatnonzero(D.sources == i)
    if len(rows) == 0:
        raise ValidationError(f"node {i} not among computed sources")
    return int(rows[0])


# ---------------------------------------------------------------------------
# Ladder classification
# ---------------------------------------------------------------------------

@dataclass
class RungVerdict:
    name: str
    verdict: str
    statistic: float = np.nan
    threshold: float = np.nan
    note: str = ""
    witness: dict = field(default_factory=dict)

    def line(self) -> str:
        stat = "" if np.isnan(self.statistic) else f"  stat={self.statistic:.6g}"
        thr = "" if np.isnan(self.threshold) else f"  thr={self.threshold:.6g}"
        note = f"  ({self.note})" if self.note else ""
        return f"{self.name:22s} {self.verdict:8s}{stat}{thr}{note}"


@dataclass
class LadderReport:
    rungs: dict
    implied: dict = field(default_factory=dict)

    def verdict(self, name: str) -> str:
        return self.rungs[name].verdict

    def lines(self):
        out = [self.rungs[r].line() for r in RUNGS]
        for k, v in self.implied.items():
            out.append(f"{k:22s} {v:8s}  (implied)")
        return out


def _band(value, threshold):
    """HOLDS above, FAILS below, MARGINAL within +-10% of the threshold."""
    lo = threshold * (1.0 - MARGIN_FACTOR)
    hi = threshold * (1.0 + MARGIN_FACTOR)
    if value <= lo:
        return FAILS
    if value >= hi:
        return HOLDS
    return MARGINAL


def classify_ladder(G: DiscreteGeometry, D: PreDistanceResult | None = None,
                    convexity_budget=8, refine=True, seed=0) -> LadderReport:
    """Full causal-ladder classification of the spacetime over G's metric."""
    if D is None:
        D = pre_distance(G)
    if D.status == NEG_INFINITY:
        return _vicious_report(D)
    if not D.is_all_pairs:
        raise ValidationError("ladder classification needs all-pairs distances")

    rungs = {}
    eps = G.eps_zero

    # Not totally vicious, chronology holds: no negative loop exists.
    rungs["totally_vicious"] = RungVerdict(
        "totally_vicious", FAILS, note="d_F finite everywhere; no negative loop")
    m_tot = _min_cycle_total(G, D)
    rungs["chronological"] = RungVerdict(
        "chronological", HOLDS, m_tot, 0.0,
        "minimum loop total through any edge is nonnegative")

    # Causal: minimum cycle ratio (F-length per Riemannian length).
    mu, cyc_nodes, cyc_offs = ga.min_cycle_ratio(
        G.W_in, G.len_h_in, G.S_in, G.V_in, tol=EPS_MU / 4)
    witness = {}
    causal_verdict = _band(mu, EPS_MU)
    if causal_verdict != HOLDS:
        crv = G.cycle_curve(cyc_nodes, cyc_offs)
        witness = {"cycle": crv, "winding": tuple(int(w) for w in crv.winding),
                   "length_F": G.cycle_length_F(cyc_nodes, cyc_offs)}
        if refine:
            witness.update(_refine_loop(G.metric, crv))
    rungs["causal"] = RungVerdict(
        "causal", causal_verdict, mu, EPS_MU,
        "minimum F-length per unit h-length over directed cycles", witness)

    # Distinguishing: macroscopic pairs with vanishing symmetrized distance.
    d_s = symmetrized(D)
    d_h = G.h_distance_matrix()
    diam = float(np.max(d_h[np.isfinite(d_h)]))
    far = d_h >= 0.5 * diam
    sigma = float(np.min(d_s[far])) if np.any(far) else np.inf
    dist_verdict = _band(sigma, eps)
    wit_d = {}
    if dist_verdict != HOLDS and np.any(far):
        masked = np.where(far, d_s, np.inf)
        i, j = np.unravel_index(int(np.argmin(masked)), d_s.shape)
        wit_d = {"pair": (int(i), int(j)), "points": (G.nodes[i], G.nodes[j]),
                 "d_s": float(d_s[i, j]), "separation_h": float(d_h[i, j])}
    rungs["distinguishing"] = RungVerdict(
        "distinguishing", dist_verdict, sigma, eps,
        "minimum d_s over pairs at least half the h-diameter apart", wit_d)

    # Causal continuity follows from distinguishing for this metric class
    # (d_s-balls vary continuously in the finite case).
    rungs["causally_continuous"] = RungVerdict(
        "causally_continuous", dist_verdict,
        note="inherits the distinguishing verdict")

    rungs["causally_simple"] = _convexity_audit(
        G, D, dist_verdict, convexity_budget, seed)

    rungs["globally_hyperbolic"] = _gh_verdict(G, rungs)
    _enforce_monotone(rungs)
    implied = {"strongly_causal": rungs["distinguishing"].verdict,
               "stably_causal": rungs["distinguishing"].verdict}
    return LadderReport(rungs, implied)


def _vicious_report(D: PreDistanceResult) -> LadderReport:
    wit = {"cycle": D.witness, "length_F": D.witness_length,
           "ratio": D.witness_ratio}
    rungs = {"totally_vicious": RungVerdict(
        "totally_vicious", HOLDS, D.witness_length, 0.0,
        "negative loop found; d_F identically -infinity", wit)}
    for name in RUNGS[1:]:
        rungs[name] = RungVerdict(name, FAILS,
                                  note="spacetime is totally vicious")
    implied = {"strongly_causal": FAILS, "stably_causal": FAILS}
    return LadderReport(rungs, implied)


def _min_cycle_total(G: DiscreteGeometry, D: PreDistanceResult) -> float:
    """min over edges (u, v) of w(u, v) + d_F(v, u): the cheapest loop total."""
    k, n = G.W_out.shape
    back = D.matrix[G.T_out, np.tile(np.arange(n), (k, 1))]
    tot = np.where(G.V_out, G.W_out + back, np.inf)
    return float(np.min(tot))


def _refine_loop(metric, crv):
    """Polish a witness cycle by the continuum loop search in its class."""
    wind = tuple(int(w) for w in crv.winding)
    if all(w == 0 for w in wind):
        return {"refined": None,
                "refine_note": "contractible cycle; no loop class to polish"}
    try:
        res = periodic_search(metric, wind, n_nodes=32, restarts=1)
        return {"refined": res.curve, "refined_length": res.length,
                "refine_note": f"loop search in class {wind}"}
    except UnboundedBelowError as exc:
        return {"refined": exc.witness, "refined_length": exc.length,
                "refine_note": "length unbounded below in the class"}


def _convexity_audit(G, D, dist_verdict, budget, seed) -> RungVerdict:
    if dist_verdict == FAILS:
        return RungVerdict("causally_simple", FAILS,
                           note="fails below: not distinguishing")
    if budget <= 0:
        return RungVerdict("causally_simple", dist_verdict,
                           note="audit skipped (budget 0); inherits lower rung")
    rng = np.random.default_rng(seed)
    n = G.n_nodes
    worst = -np.inf
    missed = 0
    pairs = []
    d_h = G.h_distance_matrix()
    diam = float(np.max(d_h[np.isfinite(d_h)]))
    for _ in range(budget):
        i, j = int(rng.integers(n)), int(rng.integers(n))
        if i == j or d_h[i, j] < 0.15 * diam:
            continue
        # shoot only in the winding class of the minimizing discrete path
        wind = _path_winding(G, i, j)
        res = shoot_connect(G.metric, G.nodes[i], G.nodes[j], winding=wind)
        d = D.lookup(i, j)
        if not res.found:
            missed += 1
            continue
        gap = res.length - d
        worst = max(worst, gap)
        pairs.append((i, j, gap))
    eps = G.eps_zero
    if missed:
        return RungVerdict(
            "causally_simple", MARGINAL, worst, 2 * eps,
            f"{missed}/{budget} shots failed to converge; connectivity unresolved")
    if worst <= 2 * eps:
        return RungVerdict(
            "causally_simple", HOLDS, worst, 2 * eps,
            f"geodesic connectors realize d_F on {len(pairs)} sampled pairs")
    return RungVerdict(
        "causally_simple", MARGINAL, worst, 2 * eps,
        "a connector exceeded d_F beyond tolerance; grid refinement advised")


def _path_winding(G: DiscreteGeometry, i: int, j: int):
    """Winding class of the shortest discrete path i -> j (None if trivial chart)."""
    if not np.any(G.chart.periodic):
        return np.zeros(2, dtype=int)
    from scipy.sparse.csgraph import dijkstra as _dij
    _, pred = _dij(G.reduced_csr(), indices=[i], return_predecessors=True)
    chain = [j]
    cur = j
    guard = 0
    while cur != i and guard <= G.n_nodes:
        cur = int(pred[0, cur])
        if cur < 0:
            return np.zeros(2, dtype=int)
        chain.append(cur)
        guard += 1
    chain.reverse()
    _, wind = G.chart.wrap_displacement(G.nodes[chain[:-1]], G.nodes[chain[1:]])
    return wind.sum(axis=0)


def _gh_verdict(G, rungs) -> RungVerdict:
    compact = bool(np.all(G.chart.periodic))
    below = [rungs[r].verdict for r in
             ("chronological", "causal", "distinguishing",
              "causally_continuous", "causally_simple")]
    if FAILS in below:
        return RungVerdict("globally_hyperbolic", FAILS,
                           note="fails below on the ladder")
    if compact:
        v = HOLDS if all(b == HOLDS for b in below) else MARGINAL
        return RungVerdict(
            "globally_hyperbolic", v,
            note="compact space: symmetrized balls are automatically precompact")
    return RungVerdict(
        "globally_hyperbolic", MARGINAL,
        note="open chart: ball precompactness not certifiable from a truncated grid")


def _enforce_monotone(rungs):
    """Verdicts never improve while climbing: FAILS pins everything above
    to FAILS, and a MARGINAL rung caps everything above at MARGINAL."""
    rank = {FAILS: 0, MARGINAL: 1, HOLDS: 2}
    cap = 2
    for name in RUNGS[1:]:
        old = rungs[name]
        if rank[old.verdict] > cap:
            capped = MARGINAL if cap == 1 else FAILS
            why = "marginal" if cap == 1 else "failing"
            note = (old.note + "; " if old.note else "") + f"a rung below is {why}"
            rungs[name] = RungVerdict(name, capped, statistic=old.statistic,
                                      threshold=old.threshold, note=note,
                                      witness=old.witness)
        cap = min(cap, rank[rungs[name].verdict])
