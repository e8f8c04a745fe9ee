"""Distance to a closed target set, its cut locus, and the horizon graph.

rho_C(x) = inf over points c of C of d_F(x, c) is computed for every node by
one backward Dijkstra through a super-target. Minimizing segments follow
slack-tight edges of the shortest-path identity
rho(x) = w(x, y) + rho(y); where two essentially different tight directions
exist, or rho kinks, x lies on the cut locus of C. The graph of -rho_C in
the product spacetime is a horizon-like achronal hypersurface; achronality
d_F(x, y) >= rho(x) - rho(y) is the triangle inequality and is audited on
samples.

Detector conventions: an edge is tight when its slack w + rho(head) - rho(x)
is at most eps_multi (default: the longest stencil edge's Riemannian length,
so the flagged band scales with the cell size and the flagged fraction
shrinks under refinement). Multiplicity counts angular clusters of tight
directions separated by more than angle_sep. Non-smoothness flags nodes
whose second difference of rho along axis or diagonal lines exceeds three
times the 90th-percentile band. Nodes of C are excluded from both; the cone
tip is additionally shielded from the second-difference detector, which
cannot tell it from a cut point at its resolution floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distance import DiscreteGeometry, rho_to_set
from .errors import NumericalError, ValidationError
from .fields import Curve

ANGLE_SEP_DEG = 30.0
NONSMOOTH_BAND_FACTOR = 3.0
NONSMOOTH_PCT = 90.0


# ---------------------------------------------------------------------------
# Target sets
# ---------------------------------------------------------------------------

@dataclass
class TargetSet:
    """Closed target set rasterized to grid nodes."""

    indices: np.ndarray
    description: str = "target"

    @classmethod
    def from_point(cls, G: DiscreteGeometry, point) -> "TargetSet":
        return cls(np.array([G.node_index(point)]), f"point {tuple(np.round(point, 6))}")

    @classmethod
    def from_points(cls, G: DiscreteGeometry, points) -> "TargetSet":
        idx = np.unique(G.node_indices(points))
        return cls(idx, f"{len(idx)} points")

    @classmethod
    def from_circle(cls, G: DiscreteGeometry, center, radius) -> "TargetSet":
        """All nodes whose grid cell intersects the circle."""
        vec, _ = G.chart.wrap_displacement(
            np.broadcast_to(np.asarray(center, float), G.nodes.shape), G.nodes)
        r = np.linalg.norm(vec, axis=-1)
        halfcell = 0.5 * float(np.linalg.norm(G.spacing))
        idx = np.flatnonzero(np.abs(r - radius) <= halfcell)
        if idx.size == 0:
            raise ValidationError("circle does not intersect the grid")
        return cls(idx, f"circle c={tuple(np.round(center, 6))} r={radius}")

    @classmethod
    def from_predicate(cls, G: DiscreteGeometry, predicate, description="level set"
                       ) -> "TargetSet":
        mask = np.asarray(predicate(G.nodes), dtype=bool)
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise ValidationError("predicate selects no grid node")
        return cls(idx, description)

    def mask(self, G: DiscreteGeometry) -> np.ndarray:
        m = np.zeros(G.n_nodes, dtype=bool)
        m[self.indices] = True
        return m


# ---------------------------------------------------------------------------
# rho and minimizing segments
# ---------------------------------------------------------------------------

@dataclass
class RhoResult:
    values: np.ndarray
    target: TargetSet
    status: str = "finite"


def rho_C(G: DiscreteGeometry, target: TargetSet) -> RhoResult:
    """d_F from every node to the target set (one backward sweep)."""
    cyc, _ = G.negative_cycle()
    if cyc is not None:
        return RhoResult(np.full(G.n_nodes, -np.inf), target, "neg_infinity")
    return RhoResult(rho_to_set(G, target.indices), target)


def _edge_slack(G: DiscreteGeometry, rho: np.ndarray) -> np.ndarray:
    """slack[k, i] = w(i -> nbr_k) + rho(nbr_k) - rho(i); zero on tight edges."""
    s = np.where(G.V_out, G.W_out + rho[G.T_out] - rho[None, :], np.inf)
    return s


def default_eps_multi(G: DiscreteGeometry) -> float:
    """Tight-edge tolerance: a quarter of the shortest axis edge.

    An out-edge whose direction is merely adjacent to the minimizing one
    carries slack >= (1 - cos 30deg) ~ 0.13 of its own h-length, so a
    quarter of the shortest edge keeps every off-direction edge loose
    while genuine second directions (slack -> 0 on the cut set) pass.
    """
    axes = np.flatnonzero(np.sum(np.abs(G.offsets), axis=1) == 1)
    lens = G.len_h[axes]
    return 0.25 * float(np.min(lens[G.V_out[axes]]))


def _offset_angles(G: DiscreteGeometry) -> np.ndarray:
    d = G.offsets * G.spacing
    return np.arctan2(d[:, 1], d[:, 0])


def minimizing_segments(G: DiscreteGeometry, target: TargetSet, point,
                        rho: RhoResult | None = None, eps_multi=None,
                        angle_sep_deg=ANGLE_SEP_DEG) -> list[Curve]:
    """Tight-edge chains from a point to the target, one per direction cluster.

    Each chain follows the slack-minimal out-edge, so along it the identity
    rho(a) = l_F(a..b) + rho(b) holds to roundoff; distinct chains exist
    exactly where the first tight step is ambiguous (cut-locus multiplicity).
    """
    if rho is None:
        rho = rho_C(G, target)
    if rho.status != "finite":
        raise NumericalError("segments undefined: d_F is -infinity")
    vals = rho.values
    if eps_multi is None:
        eps_multi = default_eps_multi(G)
    slack = _edge_slack(G, vals)
    tmask = target.mask(G)
    start = G.node_index(point)
    if tmask[start]:
        return []
    first = np.flatnonzero(slack[:, start] <= eps_multi)
    if first.size == 0:
        raise NumericalError("no tight edge at the start node")
    reps = _cluster_representatives(first, slack[:, start], _offset_angles(G),
                                    np.deg2rad(angle_sep_deg))
    out = []
    for k0 in reps:
        chain = [start, int(G.T_out[k0, start])]
        hops = 0
        while not tmask[chain[-1]] and hops < G.n_nodes:
            cur = chain[-1]
            k = int(np.argmin(slack[:, cur]))
            chain.append(int(G.T_out[k, cur]))
            hops += 1
        if not tmask[chain[-1]]:
            raise NumericalError("tight chain failed to reach the target")
        out.append(G.path_curve(chain))
    return out


def _cluster_representatives(ks, slacks, angles, alpha):
    """Pick the min-slack edge of each angular cluster (gap > alpha splits)."""
    ang = angles[ks]
    order = np.argsort(ang)
    ks, ang = ks[order], ang[order]
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    cuts = np.flatnonzero(gaps > alpha)
    if cuts.size == 0:
        return [int(ks[np.argmin(slacks[ks])])]
    reps = []
    start = (cuts[-1] + 1) % len(ks)
    bounds = np.concatenate([[start], cuts + 1])
    m = len(ks)
    for b0, b1 in zip(bounds[:-1], bounds[1:]):
        members = [int(ks[i % m]) for i in range(b0, b1 if b1 > b0 else b1 + m)]
        reps.append(members[int(np.argmin(slacks[members]))])
    return reps


# ---------------------------------------------------------------------------
# Cut locus
# ---------------------------------------------------------------------------

@dataclass
class CutReport:
    rho: RhoResult
    eps_multi: float
    multiplicity: np.ndarray          # angular cluster count of tight edges
    mult_mask: np.ndarray             # multiplicity >= 2
    nonsmooth_mask: np.ndarray
    nonsmooth_stat: np.ndarray
    nonsmooth_band: float
    excluded: np.ndarray              # nodes outside both detectors' domain
    cut_mask: np.ndarray
    agreement: float                  # within-one-cell agreement on flags
    agreement_raw: float
    fraction: float

    def summary(self):
        return (f"cut nodes: {int(np.sum(self.cut_mask))} "
                f"({100 * self.fraction:.2f}% of grid), "
                f"detector agreement {100 * self.agreement:.1f}% "
                f"(raw {100 * self.agreement_raw:.1f}%)")


def cut_locus(G: DiscreteGeometry, target: TargetSet,
              rho: RhoResult | None = None, eps_multi=None,
              angle_sep_deg=ANGLE_SEP_DEG) -> CutReport:
    """Cut locus of the target from the two independent detectors."""
    if rho is None:
        rho = rho_C(G, target)
    if rho.status != "finite":
        raise NumericalError("cut locus undefined: d_F is -infinity")
    vals = rho.values
    if eps_multi is None:
        eps_multi = default_eps_multi(G)
    n = G.n_nodes
    tmask = target.mask(G)

    # --- multiplicity of tight directions -----------------------------------
    slack = _edge_slack(G, vals)
    tight = slack <= eps_multi
    mult = _cluster_count(tight, _offset_angles(G), np.deg2rad(angle_sep_deg))
    mult_mask = (mult >= 2) & ~tmask

    # --- second-difference (kink) detector ----------------------------------
    stat = _second_difference_stat(G, vals)
    # shield the cone tip: within a few cells of the target rho is conical
    cell = float(np.max(G.spacing))
    near = _near_target_mask(G, tmask, 3.5 * cell)
    domain = ~tmask & ~near & np.isfinite(stat)
    band = NONSMOOTH_BAND_FACTOR * float(
        np.percentile(stat[domain], NONSMOOTH_PCT)) if np.any(domain) else np.inf
    ns_mask = domain & (stat > band)

    cut_mask = mult_mask | ns_mask
    either = (mult_mask | ns_mask)
    both = mult_mask & ns_mask
    raw = float(np.sum(both) / max(np.sum(either), 1))
    # within-one-cell agreement: a node flagged by one detector agrees if a
    # node flagged by the other lies within one cell (Chebyshev <= 1)
    agree_m = _within_one_cell(G, mult_mask, ns_mask | near)
    agree_n = _within_one_cell(G, ns_mask, mult_mask)
    n_either = int(np.sum(either))
    n_agree = int(np.sum((mult_mask & agree_m) | (ns_mask & agree_n)))
    tol_agree = float(n_agree / max(n_either, 1))
    return CutReport(rho, float(eps_multi), mult, mult_mask, ns_mask, stat,
                     band, ~domain, cut_mask, tol_agree, raw,
                     float(np.sum(cut_mask) / n))


def _cluster_count(tight, angles, alpha):
    """Number of angular clusters of tight directions per node, vectorized."""
    k = len(angles)
    order = np.argsort(angles)
    ang = angles[order]
    m = tight[order, :]                      # (k, n) in angle order
    n = m.shape[1]
    count = np.zeros(n, dtype=np.int64)
    for p in range(k):
        seeking = m[p].copy()
        if not np.any(seeking):
            continue
        for d in range(1, k + 1):
            q = (p + d) % k
            found = seeking & m[q]
            if np.any(found):
                gap = ang[q] - ang[p] if d < k else 2.0 * np.pi
                if d < k and gap <= 0:
                    gap += 2.0 * np.pi
                if gap > alpha:
                    count[found] += 1
                seeking &= ~m[q]
                if not np.any(seeking):
                    break
    return count


def _second_difference_stat(G: DiscreteGeometry, vals):
    """max over 4 grid directions of |second difference| / step length."""
    N = G.N
    f = vals.reshape(N, N)
    best = np.zeros((N, N))
    dirs = [(1, 0), (0, 1), (1, 1), (1, -1)]
    for dx, dy in dirs:
        step = float(np.linalg.norm([dx * G.spacing[0], dy * G.spacing[1]]))
        fp, okp = _shift2(G, f, dx, dy)
        fm, okm = _shift2(G, f, -dx, -dy)
        s = np.abs(fp - 2.0 * f + fm) / step
        s[~(okp & okm)] = 0.0
        best = np.maximum(best, s)
    return best.ravel()


def _shift2(G: DiscreteGeometry, f, dx, dy):
    N = G.N
    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    ri, rj = ii + dx, jj + dy
    ok = np.ones((N, N), dtype=bool)
    if G.chart.periodic[0]:
        ri = ri % N
    else:
        ok &= (ri >= 0) & (ri < N)
        ri = np.clip(ri, 0, N - 1)
    if G.chart.periodic[1]:
        rj = rj % N
    else:
        ok &= (rj >= 0) & (rj < N)
        rj = np.clip(rj, 0, N - 1)
    return f[ri, rj], ok


def _near_target_mask(G: DiscreteGeometry, tmask, radius):
    idx = np.flatnonzero(tmask)
    vec, _ = G.chart.wrap_displacement(
        G.nodes[:, None, :], G.nodes[None, idx, :])
    d = np.min(np.linalg.norm(vec, axis=-1), axis=1)
    return d <= radius


def _within_one_cell(G: DiscreteGeometry, src_mask, ref_mask):
    """For each node of src_mask: is some node of ref_mask within one cell?"""
    N = G.N
    ref = ref_mask.reshape(N, N)
    grown = ref.copy()
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            g, ok = _shift2(G, ref.astype(float), dx, dy)
            grown |= (g > 0.5) & ok
    return grown.ravel()


# ---------------------------------------------------------------------------
# Horizon graph
# ---------------------------------------------------------------------------

@dataclass
class HorizonResult:
    values: np.ndarray                # H = -rho_C per node
    rho: RhoResult
    audit_pairs: int
    audit_worst: float                # max over samples of rho(x)-rho(y)-d(x,y)
    achronal: bool

    def summary(self):
        return (f"horizon H = -rho on {len(self.values)} nodes; achronality "
                f"audit worst slack {self.audit_worst:.3e} on "
                f"{self.audit_pairs} pairs -> {'achronal' if self.achronal else 'VIOLATED'}")


def horizon_graph(G: DiscreteGeometry, target: TargetSet,
                  rho: RhoResult | None = None, n_audit_sources=24,
                  seed=0) -> HorizonResult:
    """Graph of -rho_C as an achronal hypersurface, with a sampled audit.

    (t0, x) precedes (t1, y) iff d_F(x, y) < t1 - t0, so the graph of -rho is
    achronal iff d_F(x, y) >= rho(x) - rho(y) for all pairs; that is the
    triangle inequality through the target and must hold up to eps_zero.
    """
    from scipy.sparse.csgraph import dijkstra
    if rho is None:
        rho = rho_C(G, target)
    if rho.status != "finite":
        raise NumericalError("horizon undefined: d_F is -infinity")
    vals = rho.values
    rng = np.random.default_rng(seed)
    srcs = rng.choice(G.n_nodes, size=min(n_audit_sources, G.n_nodes),
                      replace=False)
    pot = G.potentials()
    d_hat = dijkstra(G.reduced_csr(), indices=srcs)
    d = d_hat - pot[srcs][:, None] + pot[None, :]
    viol = (vals[srcs][:, None] - vals[None, :]) - d
    worst = float(np.max(viol))
    return HorizonResult(-vals, rho, int(d.size), worst,
                         bool(worst <= G.eps_zero))
