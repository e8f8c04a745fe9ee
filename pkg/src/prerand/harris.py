"""Drift-form efficiency, loop weight, and the six-case boundary taxonomy.

The drift data of a pre-Randers metric F = sqrt(h) + omega is the pair
(h_tilde, theta) = (h, -omega): loops gain F-length L_theta = L - int(theta),
with L the Riemannian length. The efficiency of a loop is int(theta) / L and
the weight wt is its supremum over all loops, computed here as a maximum
cycle ratio on the stencil graph (bisection with a negative-cycle oracle).

wt < 1 keeps every loop's F-length positive (causality holds with margin);
wt > 1 produces negative loops (d_F identically -infinity); wt = 1 is the
critical wall, split by whether some near-unit-efficiency loop actually
attains F-length zero (a closed causal loop) or the infimum is only
approached. The delta-ladder table reports, for shrinking efficiency
deficits delta, the smallest F-length among loops with efficiency at least
1 - delta, which is the diagnostic separating the remaining boundary cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _graphalg as ga
from .distance import NEG_INFINITY, DiscreteGeometry, PreDistanceResult
from .errors import ValidationError
from .fields import Curve, OneFormField, SymTensorField
from .geodesic import UnboundedBelowError, periodic_search
from .metrics import PreRandersMetric

EPS_WT = 1e-3
DELTA_LADDER = (0.1, 0.03, 0.01, 0.003, 0.001)


@dataclass
class DriftData:
    """(h_tilde, theta): Riemannian part and drift one-form, F = sqrt(h) - theta."""

    h_tilde: SymTensorField
    theta: OneFormField

    @classmethod
    def from_pre_randers(cls, F: PreRandersMetric) -> "DriftData":
        def theta_func(p):
            return -F.omega(p)
        theta = OneFormField(F.chart, theta_func, name="drift form")
        return cls(F.h, theta)

    @property
    def metric(self) -> PreRandersMetric:
        """The pre-Randers metric with this drift data (omega = -theta)."""
        def om(p):
            return -self.theta(p)
        return PreRandersMetric(self.h_tilde,
                                OneFormField(self.h_tilde.chart, om, name="-theta"))


@dataclass
class EfficiencyResult:
    efficiency: float
    length_h: float
    int_theta: float
    length_F: float     # = length_h - int_theta


def efficiency(data: DriftData, curve: Curve) -> EfficiencyResult:
    """Loop efficiency int(theta)/L and the derived F-length L - int(theta)."""
    m = data.metric
    L = m.length(curve, integrand="h")
    I = -m.length(curve, integrand="omega")
    if L <= 0:
        raise ValidationError("curve has zero Riemannian length")
    return EfficiencyResult(I / L, L, I, L - I)


@dataclass
class WeightResult:
    weight: float
    cycle: Curve
    efficiency: float
    length_h: float
    int_theta: float
    tol: float


def weight(G: DiscreteGeometry, data: DriftData | None = None,
           tol=EPS_WT) -> WeightResult:
    """Maximum loop efficiency on the stencil graph, with a witness cycle.

    Bisection on the threshold ratio, each step answered by a negative-cycle
    test; the reported value is the achieved ratio of the extracted witness,
    within 2 * tol of the supremum over grid loops.
    """
    if data is None:
        data = DriftData.from_pre_randers(G.metric)
    num_out = G.integrate_oneform_edges(data.theta)
    num_in = G.gather_in(num_out)
    wt, nodes, offs = ga.max_cycle_ratio(num_in, G.len_h_in, G.S_in, G.V_in,
                                         tol=tol / 2)
    crv = G.cycle_curve(nodes, offs)
    s_num = ga._cycle_sum(num_in, nodes, offs)
    s_den = ga._cycle_sum(G.len_h_in, nodes, offs)
    return WeightResult(float(wt), crv, float(s_num / s_den), float(s_den),
                        float(s_num), tol)


@dataclass
class HarrisReport:
    weight: float
    case: int
    label: str
    marginal: bool
    loops: dict                     # winding -> EfficiencyResult
    delta_table: list               # (delta, n_loops, min_length_F)
    witness: WeightResult | None = None
    notes: list = field(default_factory=list)

    def lines(self):
        out = [f"weight wt = {self.weight:.6f}  ->  case {self.case} ({self.label})"
               + ("  [marginal]" if self.marginal else "")]
        for w, eff in sorted(self.loops.items()):
            out.append(f"  loop {w}: eff={eff.efficiency:+.4f}  L={eff.length_h:.4f}"
                       f"  L_F={eff.length_F:.6f}")
        out.append("  delta-ladder (min F-length among loops with eff >= 1-delta):")
        for d, cnt, mv in self.delta_table:
            val = "none" if cnt == 0 else f"{mv:.6f}"
            out.append(f"    delta={d:<6g} loops={cnt}  min L_F={val}")
        out.extend("  " + n for n in self.notes)
        return out


def harris_classify(G: DiscreteGeometry, data: DriftData | None = None,
                    tol=EPS_WT, w_max=1, loop_nodes=32) -> HarrisReport:
    """Boundary taxonomy from the weight plus a loop-class survey.

    Cases: 1 (wt > 1: negative loops, totally vicious regime), 2 (wt = 1
    attained by a zero-F-length loop: closed causal loop, chronology still
    holds), 6 (wt < 1: causal with margin). Between, the delta-ladder output
    is reported as the case 3-5 diagnostic: those cases differ in how the
    F-length infimum is approached, which a finite grid can only tabulate.
    """
    if data is None:
        data = DriftData.from_pre_randers(G.metric)
    wres = weight(G, data, tol)
    wt = wres.weight
    metric = data.metric
    chart = metric.chart

    loops = {}
    notes = []
    classes = []
    for wx in (range(-w_max, w_max + 1) if chart.periodic[0] else (0,)):
        for wy in (range(-w_max, w_max + 1) if chart.periodic[1] else (0,)):
            if (wx, wy) != (0, 0):
                classes.append((wx, wy))
    wit_wind = tuple(int(w) for w in wres.cycle.winding)
    if wit_wind not in classes and any(wit_wind):
        classes.append(wit_wind)
    for wind in classes:
        try:
            res = periodic_search(metric, wind, n_nodes=loop_nodes, restarts=1)
            loops[wind] = efficiency(data, res.curve)
        except UnboundedBelowError:
            loops[wind] = EfficiencyResult(np.inf, np.nan, np.nan, -np.inf)
            notes.append(f"loop class {wind}: F-length unbounded below")
    # the discrete witness cycle joins the survey (it may be contractible)
    wit_eff = EfficiencyResult(wres.efficiency, wres.length_h, wres.int_theta,
                               wres.length_h - wres.int_theta)

    delta_table = []
    entries = list(loops.values()) + [wit_eff]
    for d in DELTA_LADDER:
        sel = [e.length_F for e in entries if e.efficiency >= 1.0 - d]
        delta_table.append((d, len(sel), min(sel) if sel else np.nan))

    eps_zero = G.eps_zero
    marginal = abs(abs(wt - 1.0) - tol) <= 0.1 * tol
    if wt > 1.0 + tol:
        case, label = 1, "weight above 1: negative loops, d_F = -infinity"
    elif wt < 1.0 - tol:
        case, label = 6, "weight below 1: every loop has positive F-length"
    else:
        attained = [e for e in entries
                    if e.efficiency >= 1.0 - tol and e.length_F <= eps_zero]
        if attained:
            case, label = 2, "critical weight attained: zero-F-length loop exists"
        else:
            case, label = 0, ("critical weight, zero loop not attained: "
                              "case 3-5 regime, see delta-ladder")
    return HarrisReport(wt, case, label, marginal, loops, delta_table,
                        wres, notes)


def ladder_agreement(report: HarrisReport, ladder) -> tuple[bool, list]:
    """Cross-check the taxonomy against an independently computed ladder."""
    msgs = []
    v = ladder.rungs
    if report.case == 1 and v["totally_vicious"].verdict != "HOLDS":
        msgs.append("case 1 but ladder not totally vicious")
    if report.case == 6:
        if v["totally_vicious"].verdict != "FAILS":
            msgs.append("case 6 but ladder says vicious")
        if v["causal"].verdict == "FAILS":
            msgs.append("case 6 but ladder causality fails")
    if report.case == 2:
        if v["chronological"].verdict == "FAILS":
            msgs.append("case 2 but chronology fails (should only be causal failure)")
        if v["causal"].verdict == "HOLDS":
            msgs.append("case 2 but ladder finds no causal violation")
    return len(msgs) == 0, msgs


def prop_weight_negloop_check(G: DiscreteGeometry, D: PreDistanceResult,
                              wres: WeightResult, tol=EPS_WT):
    """Equivalence audit: wt <= 1 iff no loop is negative beyond roundoff.

    Returns (consistent, wt_side, loop_side): wt_side is wt <= 1 + tol,
    loop_side is the absence of a negative cycle in the distance layer.
    """
    wt_side = wres.weight <= 1.0 + tol
    loop_side = D.status != NEG_INFINITY
    return wt_side == loop_side, wt_side, loop_side
