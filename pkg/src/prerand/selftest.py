"""Acceptance suite: nine numbered checks, one pass/fail line each.

Each criterion exercises one advertised capability end to end on the builtin
scenarios, at fixed tolerances, and reports a single PASS or FAIL line plus
detail lines for the numbers behind the verdict. run_all() drives them in
order and is what `prerand selftest` calls. Heavy intermediates (graphs,
all-pairs distances, weights) are shared through a SuiteCache.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .causality import classify_ladder
from .distance import (NEG_INFINITY, ball, build_graph, pre_distance,
                       symmetrized)
from .fields import OneFormField, ScalarField
from .geodesic import integrate_pregeodesic, pregeodesic_accel
from .harris import (harris_classify, ladder_agreement,
                     prop_weight_negloop_check, weight)
from .horizon import TargetSet, cut_locus
from .magnetic import fc_metric, integrate_magnetic
from .metrics import (change_splitting, fermat_from_som, lorentzianize,
                      riemannianize, som_from_pre_randers)
from .scenario import list_builtins, load_scenario

VERDICT_RANK = {"HOLDS": 2, "MARGINAL": 1, "FAILS": 0}
LADDER_ORDER = ("totally_vicious", "chronological", "causal", "distinguishing",
                "causally_continuous", "causally_simple", "globally_hyperbolic")


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    detail: list = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"criterion {self.index}  {self.name:32s} {mark}  ({self.seconds:.1f}s)"


class SuiteCache:
    """Scenario, graph, all-pairs distance and weight results, shared."""

    def __init__(self):
        self._sc, self._g, self._d, self._w = {}, {}, {}, {}

    def scenario(self, name, grid=None):
        key = (name, grid)
        if key not in self._sc:
            self._sc[key] = load_scenario(name, grid=grid)
        return self._sc[key]

    def graph(self, name, grid=None):
        sc = self.scenario(name, grid)
        key = (name, sc.grid, sc.stencil)
        if key not in self._g:
            self._g[key] = build_graph(sc.metric, sc.grid, stencil=sc.stencil)
        return sc, self._g[key]

    def dist(self, name, grid=None, cache=True):
        sc, G = self.graph(name, grid)
        key = (name, sc.grid, sc.stencil)
        if key in self._d:
            return sc, G, self._d[key]
        D = pre_distance(G)
        if cache:
            self._d[key] = D
        return sc, G, D

    def weight(self, name, grid=None):
        sc, G = self.graph(name, grid)
        key = (name, sc.grid, sc.stencil)
        if key not in self._w:
            self._w[key] = weight(G)
        return self._w[key]


def _check(ok_list, detail, cond, text):
    ok_list.append(bool(cond))
    detail.append(("ok  " if cond else "BAD ") + text)


# ------------------------------------------------------------- criterion 1

def criterion_1(cache: SuiteCache) -> CriterionResult:
    """Distance against the closed form on the constant-drift plane."""
    t0 = time.perf_counter()
    oks, detail, errs = [], [], {}
    for N in (64, 128):
        sc, G = cache.graph("plane_drift_05", grid=N)
        i0, i1 = G.node_index([0.0, 0.0]), G.node_index([1.0, 0.0])
        D = pre_distance(G, sources=[i0, i1])
        fwd, bwd = float(D.matrix[0, i1]), float(D.matrix[1, i0])
        errs[N] = abs(fwd - 1.5) + abs(bwd - 0.5)
        detail.append(f"N={N}: d_F((0,0),(1,0)) = {fwd:.9f}, "
                      f"d_F((1,0),(0,0)) = {bwd:.9f}")
        if N == 64:
            _check(oks, detail, 1.485 <= fwd <= 1.515, "forward within 1%")
            _check(oks, detail, 0.495 <= bwd <= 0.505, "backward within 1%")
    floor = 1e-9
    _check(oks, detail, errs[128] <= errs[64] / 1.7 or errs[128] <= floor,
           f"error drops by 1.7x (or below {floor:.0e} floor): "
           f"{errs[64]:.3e} -> {errs[128]:.3e}")
    return CriterionResult(1, "exact-form distance oracle", all(oks), detail,
                           time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 2

def criterion_2(cache: SuiteCache) -> CriterionResult:
    """Unbounded-below detection on the strong-drift cylinder."""
    t0 = time.perf_counter()
    oks, detail = [], []
    sc, G, D = cache.dist("vicious_cylinder")
    _check(oks, detail, D.status == NEG_INFINITY, f"status = {D.status}")
    wl = D.witness_length if D.witness_length is not None else np.inf
    _check(oks, detail, wl <= -0.9, f"witness loop length {wl:.4f} <= -0.9")
    ladder = classify_ladder(G, D, seed=sc.seed)
    _check(oks, detail, ladder.verdict("totally_vicious") == "HOLDS",
           "ladder rung totally_vicious HOLDS")
    rep = harris_classify(G)
    _check(oks, detail, abs(rep.weight - 2.0) <= 0.02,
           f"weight {rep.weight:.4f} = 2 +- 0.02")
    consistent, wt_side, loop_side = prop_weight_negloop_check(G, D, rep.witness)
    _check(oks, detail, consistent,
           f"weight route (wt<=1: {wt_side}) agrees with loop route "
           f"(no negative loop: {loop_side})")
    agree, msgs = ladder_agreement(rep, ladder)
    _check(oks, detail, agree, "taxonomy agrees with ladder" +
           ("" if agree else ": " + "; ".join(msgs)))
    return CriterionResult(2, "vicious detection", all(oks), detail,
                           time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 3

def criterion_3(cache: SuiteCache) -> CriterionResult:
    """Null-drift quotient torus: zero F along -dx, flat d_F, causal gap."""
    t0 = time.perf_counter()
    oks, detail = [], []
    sc, G = cache.graph("paper_g2_torus")
    rng = np.random.default_rng(sc.seed)
    pts = sc.chart.lo + rng.random((512, 2)) * sc.chart.extent
    vals = sc.metric.F(pts, np.broadcast_to([-1.0, 0.0], (512, 2)))
    _check(oks, detail, bool(np.all(vals == 0.0)),
           f"F(-dx) identically zero at 512 samples (max |F| = "
           f"{float(np.max(np.abs(vals))):.2e})")
    D = pre_distance(G)
    maxd = float(np.max(np.abs(D.matrix)))
    _check(oks, detail, maxd <= G.eps_zero,
           f"max |d_F| = {maxd:.6f} <= eps_zero = {G.eps_zero:.6f}")
    ladder = classify_ladder(G, D, seed=sc.seed)
    for rung, want in (("chronological", "HOLDS"), ("causal", "FAILS"),
                       ("distinguishing", "FAILS")):
        got = ladder.verdict(rung)
        _check(oks, detail, got == want, f"{rung} {got} (want {want})")
    wit = ladder.rungs["causal"].witness
    if wit:
        detail.append(f"causal rung witness: loop in class {wit.get('winding')} "
                      f"with F-length {wit.get('length_F', np.nan):.6f}")
    rep = harris_classify(G)
    _check(oks, detail, abs(rep.weight - 1.0) <= 1e-3,
           f"weight {rep.weight:.6f} = 1 +- 1e-3")
    return CriterionResult(3, "null-drift quotient torus", all(oks), detail,
                           time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 4

def criterion_4(cache: SuiteCache) -> CriterionResult:
    """Small-drift torus: globally hyperbolic, d_s genuine, weight < 1."""
    t0 = time.perf_counter()
    oks, detail = [], []
    sc, G = cache.graph("randers_torus")
    D = pre_distance(G)
    ladder = classify_ladder(G, D, seed=sc.seed)
    _check(oks, detail, ladder.verdict("globally_hyperbolic") == "HOLDS",
           "globally_hyperbolic HOLDS")
    ds = symmetrized(D)
    off = ds[~np.eye(ds.shape[0], dtype=bool)]
    _check(oks, detail, float(np.min(off)) > 0.0,
           f"min off-diagonal d_s = {float(np.min(off)):.6f} > 0")
    rep = harris_classify(G)
    _check(oks, detail, rep.case == 6 and rep.weight < 1.0,
           f"case {rep.case} with weight {rep.weight:.4f} < 1")
    consistent, *_ = prop_weight_negloop_check(G, D, rep.witness)
    agree, msgs = ladder_agreement(rep, ladder)
    _check(oks, detail, consistent and agree, "both routes agree" +
           ("" if agree else ": " + "; ".join(msgs)))
    return CriterionResult(4, "globally hyperbolic drift torus", all(oks),
                           detail, time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 5

def criterion_5(cache: SuiteCache) -> CriterionResult:
    """Magnetic orbit equals the reduced-metric pre-geodesic."""
    t0 = time.perf_counter()
    oks, detail = [], []
    sc = cache.scenario("magnetic_constant_B")
    S, c = sc.magnetic, sc.energy
    x0, v0, span = [0.0, 0.0], [1.0, 0.0], 2.0 * np.pi
    direct = integrate_magnetic(S, x0, v0, span, n_steps=1024, store_every=1)
    pre = integrate_pregeodesic(sc.metric, x0, v0, span, n_steps=1024,
                                store_every=1)
    gap = float(np.max(np.linalg.norm(direct.points - pre.points, axis=1)))
    _check(oks, detail, gap <= 1e-5,
           f"max sample distance over one period = {gap:.3e} <= 1e-5")
    rad = np.linalg.norm(direct.points - np.array([0.0, 1.0]), axis=1)
    rdev = float(np.max(np.abs(rad - 1.0)))
    _check(oks, detail, rdev <= 1e-6, f"orbit radius = 1 +- {rdev:.3e}")
    en = S.energy(direct.points, direct.velocities)
    drift = float(np.max(np.abs(en - c)))
    _check(oks, detail, drift <= 1e-8, f"energy drift = {drift:.3e} <= 1e-8")
    return CriterionResult(5, "magnetic reduction equivalence", all(oks),
                           detail, time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 6

def _analytic_bump(chart):
    """0.1 sin(2 pi x) cos(2 pi y) with hand-coded gradient."""
    w = 2.0 * np.pi

    def f(p):
        return 0.1 * np.sin(w * p[..., 0]) * np.cos(w * p[..., 1])

    def df(p):
        return np.stack([
            0.1 * w * np.cos(w * p[..., 0]) * np.cos(w * p[..., 1]),
            -0.1 * w * np.sin(w * p[..., 0]) * np.sin(w * p[..., 1])])

    return ScalarField(chart, f, deriv=df, name="bump")


def criterion_6(cache: SuiteCache) -> CriterionResult:
    """Representation roundtrips, splitting change, drift-by-differential."""
    t0 = time.perf_counter()
    oks, detail = [], []
    sc = cache.scenario("randers_torus")
    F, chart = sc.metric, sc.chart
    rng = np.random.default_rng(11)
    n = 10**4
    pts = chart.lo + rng.random((n, 2)) * chart.extent
    vecs = rng.standard_normal((n, 2))

    M = som_from_pre_randers(F)
    F2 = fermat_from_som(M)
    ref = F.F(pts, vecs)
    dev = float(np.max(np.abs(F2.F(pts, vecs) - ref) / (1.0 + np.abs(ref))))
    _check(oks, detail, dev <= 1e-12,
           f"spacetime roundtrip of F: rel dev {dev:.2e} <= 1e-12 ({n} samples)")

    M2 = lorentzianize(riemannianize(M))
    db = float(np.max(np.abs(M2.beta(pts) - M.beta(pts))))
    dw = float(np.max(np.abs(M2.omega.pair(pts, vecs) - M.omega.pair(pts, vecs))))
    dg = float(np.max(np.abs(M2.g0.quad(pts, vecs) - M.g0.quad(pts, vecs))))
    scale = 1.0 + float(np.max(np.abs(M.g0.quad(pts, vecs))))
    dev2 = max(db, dw, dg) / scale
    _check(oks, detail, dev2 <= 1e-12,
           f"signature roundtrip of (beta, omega, g0): rel dev {dev2:.2e} <= 1e-12")

    f = _analytic_bump(chart)
    Ff = fermat_from_som(change_splitting(M, f))
    dfv = np.sum(vecs * np.moveaxis(f.derivative(pts), 0, -1), axis=-1)
    dev3 = float(np.max(np.abs(Ff.F(pts, vecs) - (ref - dfv))))
    _check(oks, detail, dev3 <= 1e-10,
           f"splitting change matches F - df: dev {dev3:.2e} <= 1e-10")

    sc2 = cache.scenario("plane_drift_05", grid=32)
    fb = _analytic_bump(sc2.chart)
    Mb = som_from_pre_randers(sc2.metric)
    Fb = fermat_from_som(change_splitting(Mb, fb))
    G1 = build_graph(sc2.metric, 32, stencil=sc2.stencil)
    G2 = build_graph(Fb, 32, stencil=sc2.stencil)
    x0, x1 = [0.0, 0.0], [0.25, 0.5]
    i0 = G1.node_index(x0)
    j1 = G1.node_index(x1)
    d1 = float(pre_distance(G1, sources=[i0]).matrix[0, j1])
    d2 = float(pre_distance(G2, sources=[i0]).matrix[0, j1])
    fx0 = float(fb(np.asarray(x0, float)))
    fx1 = float(fb(np.asarray(x1, float)))
    gap = abs(d1 - (d2 + fx1 - fx0))
    _check(oks, detail, gap <= 0.03,
           f"graph distances shift by the potential difference: "
           f"|{d1:.6f} - ({d2:.6f} + {fx1 - fx0:+.6f})| = {gap:.2e} <= 0.03")
    return CriterionResult(6, "roundtrip identities", all(oks), detail,
                           time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 7

def criterion_7(cache: SuiteCache) -> CriterionResult:
    """Cut locus of a point on the flat torus, at two resolutions."""
    t0 = time.perf_counter()
    oks, detail = [], []
    frac = {}
    for N in (64, 128):
        sc, G = cache.graph("cut_torus_point", grid=N)
        target = TargetSet.from_point(G, [0.0, 0.0])
        rep = cut_locus(G, target)
        frac[N] = rep.fraction
        i_mid = G.node_index([0.5, 0.5])
        rho_mid = float(rep.rho.values[i_mid])
        cell = 1.0 / N
        cut_xy = G.nodes[rep.cut_mask]
        off = np.minimum(np.abs(cut_xy[:, 0] - 0.5), np.abs(cut_xy[:, 1] - 0.5))
        worst = float(np.max(off)) if len(cut_xy) else 0.0
        detail.append(f"N={N}: {int(rep.cut_mask.sum())} cut nodes "
                      f"({100 * rep.fraction:.2f}%), agreement "
                      f"{100 * rep.agreement:.1f}%")
        if N == 128:
            _check(oks, detail, abs(rho_mid - np.sqrt(0.5)) <= 0.01 * np.sqrt(0.5),
                   f"rho(1/2,1/2) = {rho_mid:.6f} = 0.7071 +- 1%")
            _check(oks, detail, worst <= cell + 1e-12,
                   f"every cut node within one cell of the midlines "
                   f"(worst offset {worst / cell:.2f} cells)")
            _check(oks, detail, rep.agreement >= 0.95,
                   f"detector agreement {100 * rep.agreement:.1f}% >= 95%")
    _check(oks, detail, frac[128] <= 0.7 * frac[64],
           f"cut fraction shrinks {100 * frac[64]:.2f}% -> "
           f"{100 * frac[128]:.2f}% (>= 30% drop)")
    return CriterionResult(7, "flat torus cut locus", all(oks), detail,
                           time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 8

def _diamond_check(G, D, detail):
    """Projection of a causal diamond vs the symmetrized ball, +- one cell."""
    i0 = G.node_index(G.chart.lo + 0.5 * G.chart.extent)
    if D.status == NEG_INFINITY:
        detail.append("  vicious: diamond projection and ball are both everything")
        return True
    r = 0.35 * G.h_diameter()
    om0, om1 = 0.0, 2.0 * r
    fwd = D.matrix[i0, :]
    bwd = D.matrix[:, i0]
    cell = float(np.max(G.len_h))
    n_t = max(65, int(np.ceil((om1 - om0) / (0.5 * cell))) + 1)
    ts = np.linspace(om0, om1, n_t)
    lhs = np.any((fwd[None, :] < ts[:, None] - om0)
                 & (bwd[None, :] < om1 - ts[:, None]), axis=0)
    rhs = ball(D, i0, r, kind="symmetrized")
    tol = cell + (ts[1] - ts[0])
    dsrow = 0.5 * (fwd + bwd)
    bad = (lhs != rhs) & (np.abs(dsrow - r) > tol)
    detail.append(f"  diamond vs ball: {int(np.sum(lhs != rhs))} boundary "
                  f"mismatches, {int(np.sum(bad))} beyond one cell")
    return not bool(np.any(bad))


def criterion_8(cache: SuiteCache) -> CriterionResult:
    """Weight/loop equivalence, diamond projection, ball inclusion."""
    t0 = time.perf_counter()
    oks, detail = [], []
    for name in list_builtins():
        sc, G, D = cache.dist(name, grid=48)
        wres = cache.weight(name, grid=48)
        consistent, wt_side, loop_side = prop_weight_negloop_check(G, D, wres)
        ok_d = _diamond_check(G, D, detail)
        if D.status == NEG_INFINITY:
            ok_b, note = True, "ball inclusion vacuous (d_s = -infinity)"
        else:
            gap = float(np.max(symmetrized(D) - G.h_distance_matrix()))
            scale = 1.0 + G.h_diameter()
            ok_b = gap <= 1e-9 * scale
            note = f"max(d_s - d_h) = {gap:.3e}"
        _check(oks, detail, consistent and ok_d and ok_b,
               f"{name}: weight/loop consistent={consistent} "
               f"(wt<=1: {wt_side}, finite: {loop_side}); {note}")
    return CriterionResult(8, "bridge invariants", all(oks), detail,
                           time.perf_counter() - t0)


# ------------------------------------------------------------- criterion 9

def _fc_gauges(S, c, f):
    """The reduced metric in two gauges differing by the differential of f."""
    from .metrics import exact_oneform_from_scalar
    from .magnetic import construct_potential, MagneticStructure
    pot = construct_potential(S)
    df = exact_oneform_from_scalar(f)

    def shifted(p):
        return pot(p) + df(p)

    def shifted_d(p):
        return pot.derivative(p) + df.derivative(p)

    pot2 = OneFormField(S.chart, shifted, deriv=shifted_d, name="gauge2")
    S0 = MagneticStructure(S.g, S.B, pot)
    S1 = MagneticStructure(S.g, S.B, pot2)
    return fc_metric(S0, c), fc_metric(S1, c)


def criterion_9(cache: SuiteCache) -> CriterionResult:
    """Seeded property sweeps; every sampled case must hold."""
    t0 = time.perf_counter()
    oks, detail = [], []
    rng = np.random.default_rng(1234)
    total = 0

    mets = [cache.scenario(n).metric
            for n in ("randers_torus", "plane_drift_05", "paper_g2_torus")]

    n_h, bad_h = 0, 0
    for F in mets:
        m = 40000 // len(mets) + 1
        pts = F.chart.lo + rng.random((m, 2)) * F.chart.extent
        vecs = rng.standard_normal((m, 2))
        lam = 10.0 ** rng.uniform(-3, 3, m)
        lhs = F.F(pts, lam[:, None] * vecs)
        rhs = lam * F.F(pts, vecs)
        bad_h += int(np.sum(np.abs(lhs - rhs) > 1e-12 * (1.0 + np.abs(rhs))))
        n_h += m
    total += n_h
    _check(oks, detail, bad_h == 0, f"homogeneity: {bad_h}/{n_h} failures")

    n_r, bad_r = 0, 0
    for F in mets:
        m = 25000 // len(mets) + 1
        pts = F.chart.lo + rng.random((m, 2)) * F.chart.extent
        vecs = rng.standard_normal((m, 2))
        defect = F.F(pts, vecs) + F.F(pts, -vecs) - 2.0 * F.h_norm(pts, vecs)
        bad_r += int(np.sum(np.abs(defect) > 1e-12 * (1.0 + F.h_norm(pts, vecs))))
        n_r += m
    total += n_r
    _check(oks, detail, bad_r == 0,
           f"reversibility defect cancels the drift: {bad_r}/{n_r} failures")

    sc32, G32 = cache.graph("randers_torus", grid=32)
    D32 = pre_distance(G32)
    mat = D32.matrix
    m = 15000
    n_nodes = mat.shape[0]
    i, j, k = (rng.integers(0, n_nodes, m) for _ in range(3))
    viol = mat[i, k] - mat[i, j] - mat[j, k]
    bad_t = int(np.sum(viol > 1e-9 * (1.0 + np.abs(mat[i, k]))))
    total += m
    _check(oks, detail, bad_t == 0, f"triangle inequality: {bad_t}/{m} failures")

    ds = symmetrized(D32)
    m = 10000
    i, j = rng.integers(0, n_nodes, m), rng.integers(0, n_nodes, m)
    bad_s = int(np.sum(ds[i, j] != ds[j, i]))
    bad_s += int(np.sum(ds[i, j] < -1e-9))
    total += m
    _check(oks, detail, bad_s == 0,
           f"d_s symmetric and nonnegative: {bad_s}/{m} failures")

    n_l, bad_l = 0, 0
    for name in list_builtins():
        sc, G = cache.graph(name, grid=24)
        rep = classify_ladder(G, pre_distance(G), convexity_budget=2,
                              seed=sc.seed)
        ranks = [VERDICT_RANK[rep.verdict(r)] for r in LADDER_ORDER[1:]]
        for a, b in zip(ranks, ranks[1:]):
            n_l += 1
            bad_l += int(b > a)
        vic = VERDICT_RANK[rep.verdict("totally_vicious")]
        n_l += 1
        bad_l += int(vic == 2 and ranks[0] > 0)
    total += n_l
    _check(oks, detail, bad_l == 0,
           f"ladder monotone down the rungs: {bad_l}/{n_l} failures")

    scm = cache.scenario("magnetic_constant_B")
    S, c = scm.magnetic, scm.energy
    n_e, bad_e = 0, 0
    for _ in range(5):
        x0 = rng.uniform(-0.5, 0.5, 2)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        v0 = np.sqrt(2.0 * c) * np.array([np.cos(ang), np.sin(ang)])
        crv = integrate_magnetic(S, x0, v0, 2.0 * np.pi, n_steps=1999,
                                 store_every=1)
        en = S.energy(crv.points, crv.velocities)
        bad_e += int(np.sum(np.abs(en - c) > 1e-8))
        n_e += en.shape[0]
    total += n_e
    _check(oks, detail, bad_e == 0,
           f"energy conserved along orbits: {bad_e}/{n_e} samples")

    f = _analytic_bump(scm.chart)
    Fc0, Fc1 = _fc_gauges(S, c, f)
    a0, a1 = pregeodesic_accel(Fc0), pregeodesic_accel(Fc1)
    m = 9928
    pts = scm.chart.lo + rng.random((m, 2)) * scm.chart.extent
    vecs = rng.standard_normal((m, 2))
    g0, g1 = a0(pts, vecs), a1(pts, vecs)
    bad_g = int(np.sum(np.linalg.norm(g0 - g1, axis=-1)
                       > 1e-8 * (1.0 + np.linalg.norm(g0, axis=-1))))
    total += m
    _check(oks, detail, bad_g == 0,
           f"gauge change leaves the motion law alone: {bad_g}/{m} failures")

    detail.append(f"total sampled cases: {total}")
    _check(oks, detail, total >= 10**5, f"case count {total} >= 1e5")
    return CriterionResult(9, "property suites", all(oks), detail,
                           time.perf_counter() - t0)


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9)


def run_all(only=None, cache: SuiteCache | None = None) -> list[CriterionResult]:
    cache = cache or SuiteCache()
    picks = only or range(1, len(CRITERIA) + 1)
    return [CRITERIA[i - 1](cache) for i in picks]
