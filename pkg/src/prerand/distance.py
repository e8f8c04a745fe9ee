"""Discrete pre-distance on stencil grid graphs.

The chart is sampled on an N x N grid and every node is joined to its stencil
neighbours by straight segments; the directed edge weight is the Gauss
quadrature of F along the segment, which may be negative. The pre-distance
d_F(x, y) is the infimum of F-length over paths: either finite for all pairs
or identically -infinity, decided by a negative-cycle test. In the finite
case the converged Bellman-Ford potentials reweight the graph to nonnegative
edges and Dijkstra finishes the job (shortest paths are preserved under the
reweighting, the standard Johnson construction).

The symmetrized distance d_s = (d_F(x, y) + d_F(y, x)) / 2 and forward /
backward / symmetrized balls follow from the matrix. eps_zero, the scale
below which discrete distances are numerically zero, is five times the
largest stencil edge weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from . import _graphalg as ga
from .errors import NumericalError, ValidationError
from .fields import ChartManifold, Curve, curve_from_nodes
from .metrics import PreRandersMetric

STENCILS = (8, 16, 32)
DEFAULT_STENCIL = 16
ALL_PAIRS_NODE_CAP = 8192       # 8192^2 float64 = 0.5 GB


def stencil_offsets(stencil: int) -> np.ndarray:
    if stencil not in STENCILS:
        raise ValidationError(f"stencil must be one of {STENCILS}")
    offs = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]
    if stencil >= 16:
        offs += [(1, 2), (2, 1), (-1, 2), (-2, 1), (1, -2), (2, -1), (-1, -2), (-2, -1)]
    if stencil >= 32:
        offs += [(3, 1), (1, 3), (-3, 1), (-1, 3), (3, -1), (1, -3), (-3, -1), (-1, -3),
                 (3, 2), (2, 3), (-3, 2), (-2, 3), (3, -2), (2, -3), (-3, -2), (-2, -3)]
    return np.array(offs, dtype=np.int64)


@dataclass
class DiscreteGeometry:
    """Grid graph of a pre-Randers metric: nodes, stencil edges, weights."""

    metric: PreRandersMetric
    N: int
    stencil: int = DEFAULT_STENCIL
    offsets: np.ndarray = field(init=False)
    nodes: np.ndarray = field(init=False)        # (n, 2)
    W_out: np.ndarray = field(init=False)        # (k, n) weight of i -> i+off
    T_out: np.ndarray = field(init=False)        # (k, n) target index
    V_out: np.ndarray = field(init=False)        # (k, n) edge validity
    S_in: np.ndarray = field(init=False)         # (k, n) gather sources
    W_in: np.ndarray = field(init=False)
    V_in: np.ndarray = field(init=False)

    def __post_init__(self):
        chart = self.chart
        N = self.N
        if N < 4:
            raise ValidationError("grid resolution must be at least 4")
        self.offsets = stencil_offsets(self.stencil)
        axes, self.spacing = [], np.empty(2)
        for a in range(2):
            if chart.periodic[a]:
                axes.append(chart.lo[a] + np.arange(N) * (chart.extent[a] / N))
                self.spacing[a] = chart.extent[a] / N
            else:
                axes.append(np.linspace(chart.lo[a], chart.hi[a], N))
                self.spacing[a] = chart.extent[a] / (N - 1)
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        self.nodes = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        n = N * N
        ii, jj = np.divmod(np.arange(n), N)
        k = len(self.offsets)
        self.T_out = np.empty((k, n), dtype=np.int64)
        self.S_in = np.empty((k, n), dtype=np.int64)
        self.V_out = np.empty((k, n), dtype=bool)
        self.V_in = np.empty((k, n), dtype=bool)
        self.W_out = np.empty((k, n))
        for m, off in enumerate(self.offsets):
            ti, vi = self._shift(ii, off[0], 0)
            tj, vj = self._shift(jj, off[1], 1)
            self.T_out[m] = ti * N + tj
            self.V_out[m] = vi & vj
            si, ui = self._shift(ii, -off[0], 0)
            sj, uj = self._shift(jj, -off[1], 1)
            self.S_in[m] = si * N + sj
            self.V_in[m] = ui & uj
            disp = off * self.spacing
            self.W_out[m] = self.metric.displacement_quadrature(self.nodes, disp[None, :])
        self.W_out[~self.V_out] = np.inf
        self.W_in = self.W_out[np.arange(k)[:, None], self.S_in]
        self.W_in[~self.V_in] = np.inf
        self._rev = self._reverse_offset_index()
        self._cache = {}

    @property
    def chart(self) -> ChartManifold:
        return self.metric.chart

    @property
    def n_nodes(self) -> int:
        return self.N * self.N

    def _shift(self, idx, delta, axis):
        raw = idx + int(delta)
        if self.chart.periodic[axis]:
            return raw % self.N, np.ones_like(idx, dtype=bool)
        ok = (raw >= 0) & (raw < self.N)
        return np.clip(raw, 0, self.N - 1), ok

    def _reverse_offset_index(self):
        out = np.empty(len(self.offsets), dtype=np.int64)
        for m, off in enumerate(self.offsets):
            hits = np.flatnonzero(np.all(self.offsets == -off, axis=1))
            out[m] = hits[0]
        return out

    # -- derived edge data --------------------------------------------------

    @property
    def eps_zero(self) -> float:
        """Numerical zero for distances: 5x the largest edge weight."""
        return 5.0 * float(np.max(self.W_out[self.V_out]))

    @property
    def len_h(self) -> np.ndarray:
        """Riemannian edge lengths: omega cancels in (w(i->j) + w(j->i)) / 2."""
        if "len_h" not in self._cache:
            w_back = self.W_out[self._rev[:, None], self.T_out]
            lh = 0.5 * (self.W_out + w_back)
            lh[~self.V_out] = np.inf
            self._cache["len_h"] = lh
        return self._cache["len_h"]

    @property
    def len_h_in(self) -> np.ndarray:
        if "len_h_in" not in self._cache:
            lh = self.len_h[np.arange(len(self.offsets))[:, None], self.S_in]
            lh[~self.V_in] = np.inf
            self._cache["len_h_in"] = lh
        return self._cache["len_h_in"]

    def integrate_oneform_edges(self, oneform) -> np.ndarray:
        """Gauss quadrature of a one-form along every stencil edge, (k, n)."""
        from .metrics import GAUSS_T, GAUSS_W
        k, n = self.W_out.shape
        out = np.zeros((k, n))
        for m, off in enumerate(self.offsets):
            disp = off * self.spacing
            acc = 0.0
            for t, wq in zip(GAUSS_T, GAUSS_W):
                p = self.nodes + t * disp
                acc = acc + wq * oneform.pair(p, disp[None, :])
            out[m] = acc
        out[~self.V_out] = np.inf
        return out

    def gather_in(self, values_out) -> np.ndarray:
        """Re-index per-edge values from out form (at source) to in form (at target)."""
        v = values_out[np.arange(len(self.offsets))[:, None], self.S_in]
        v = np.where(self.V_in, v, np.inf)
        return v

    # -- node lookup ----------------------------------------------------------

    def node_index(self, point) -> int:
        p = self.chart.wrap(np.asarray(point, dtype=float))
        vec, _ = self.chart.wrap_displacement(self.nodes, p)
        return int(np.argmin(np.einsum("...i,...i->...", vec, vec)))

    def node_indices(self, points) -> np.ndarray:
        return np.array([self.node_index(p) for p in np.atleast_2d(points)])

    def path_curve(self, node_list) -> Curve:
        return curve_from_nodes(self.chart, self.nodes[np.asarray(node_list)])

    def cycle_curve(self, nodes, offs) -> Curve:
        crv = curve_from_nodes(self.chart, self.nodes[np.asarray(nodes)], closed=True)
        return crv

    def cycle_length_F(self, nodes, offs) -> float:
        return ga._cycle_sum(self.W_in, np.asarray(nodes), np.asarray(offs))

    def cycle_length_h(self, nodes, offs) -> float:
        return ga._cycle_sum(self.len_h_in, np.asarray(nodes), np.asarray(offs))

    # -- Bellman-Ford / Johnson layer ----------------------------------------

    def negative_cycle(self):
        """Cached negative-cycle verdict: (cycle-or-None, potentials-or-None)."""
        if "negcyc" not in self._cache:
            cyc, pot = ga.bellman_ford(self.S_in, self.W_in, self.V_in)
            self._cache["negcyc"] = (cyc, None if cyc is not None else pot)
        return self._cache["negcyc"]

    def potentials(self) -> np.ndarray:
        cyc, pot = self.negative_cycle()
        if cyc is not None:
            raise NumericalError("graph has a negative cycle; no potentials")
        return pot

    def reduced_csr(self) -> csr_matrix:
        """Johnson-reweighted sparse graph with nonnegative edge weights."""
        if "csr" not in self._cache:
            pot = self.potentials()
            k, n = self.W_out.shape
            src = np.tile(np.arange(n), k)
            dst = self.T_out.ravel()
            w = (self.W_out + pot[None, :] - pot[self.T_out]).ravel()
            mask = self.V_out.ravel()
            w_sel = w[mask]
            floor = -1e-9 * max(float(np.max(np.abs(self.W_out[self.V_out]))), 1.0)
            if np.min(w_sel) < floor:
                raise NumericalError("reduced weights negative beyond roundoff")
            self._cache["csr"] = csr_matrix(
                (np.maximum(w_sel, 0.0), (src[mask], dst[mask])),
                shape=(n, n))
        return self._cache["csr"]

    def h_distance_matrix(self) -> np.ndarray:
        """All-pairs shortest paths for the Riemannian edge lengths."""
        if "h_dist" not in self._cache:
            k, n = self.W_out.shape
            if n > ALL_PAIRS_NODE_CAP:
                raise ValidationError("grid too large for an all-pairs matrix")
            src = np.tile(np.arange(n), k)
            dst = self.T_out.ravel()
            w = self.len_h.ravel()
            mask = self.V_out.ravel()
            csr = csr_matrix((w[mask], (src[mask], dst[mask])), shape=(n, n))
            self._cache["h_dist"] = dijkstra(csr)
        return self._cache["h_dist"]

    def h_diameter(self) -> float:
        d = self.h_distance_matrix()
        return float(np.max(d[np.isfinite(d)]))


def build_graph(metric: PreRandersMetric, N: int, stencil: int = DEFAULT_STENCIL
                ) -> DiscreteGeometry:
    return DiscreteGeometry(metric, N, stencil)


# ---------------------------------------------------------------------------
# Pre-distance
# ---------------------------------------------------------------------------

FINITE = "finite"
NEG_INFINITY = "neg_infinity"


@dataclass
class PreDistanceResult:
    """d_F on grid nodes: a (sources x n) matrix, or the -infinity verdict."""

    geometry: DiscreteGeometry
    status: str
    sources: np.ndarray | None = None     # None means all nodes, in order
    matrix: np.ndarray | None = None
    witness: Curve | None = None
    witness_length: float = np.nan
    witness_ratio: float = np.nan

    @property
    def is_all_pairs(self) -> bool:
        return self.status == FINITE and self.sources is None

    def lookup(self, i: int, j: int) -> float:
        if self.status != FINITE:
            return -np.inf
        if self.sources is None:
            return float(self.matrix[i, j])
        rows = np.flatnonzero(self.sources == i)
        if len(rows) == 0:
            raise ValidationError(f"node {i} is not among the computed sources")
        return float(self.matrix[rows[0], j])


def pre_distance(G: DiscreteGeometry, sources=None) -> PreDistanceResult:
    """Compute d_F from the given source nodes (all nodes when None).

    If the graph carries a negative cycle, d_F is identically -infinity; the
    reported witness is the loop with the most negative F-length per unit of
    Riemannian length, so its F-length is a certified negative lower bound.
    """
    cyc, _ = G.negative_cycle()
    if cyc is not None:
        ratio, nodes, offs = ga.min_cycle_ratio(
            G.W_in, G.len_h_in, G.S_in, G.V_in, tol=1e-4)
        crv = G.cycle_curve(nodes, offs)
        return PreDistanceResult(G, NEG_INFINITY, witness=crv,
                                 witness_length=G.cycle_length_F(nodes, offs),
                                 witness_ratio=ratio)
    if sources is None and G.n_nodes > ALL_PAIRS_NODE_CAP:
        raise ValidationError(
            f"all-pairs distance needs n <= {ALL_PAIRS_NODE_CAP} nodes; "
            "pass an explicit source list at this resolution")
    pot = G.potentials()
    csr = G.reduced_csr()
    idx = None if sources is None else np.asarray(sources, dtype=np.int64)
    d_hat = dijkstra(csr, indices=idx)
    src_pot = pot if idx is None else pot[idx]
    mat = d_hat - src_pot[:, None] + pot[None, :]
    return PreDistanceResult(G, FINITE, idx, mat)


def symmetrized(D: PreDistanceResult) -> np.ndarray:
    """d_s = (d_F(x,y) + d_F(y,x)) / 2; needs the all-pairs matrix."""
    if D.status != FINITE:
        raise ValidationError("symmetrized distance undefined: d_F is -infinity")
    if not D.is_all_pairs:
        raise ValidationError("symmetrized distance needs all-pairs input")
    return 0.5 * (D.matrix + D.matrix.T)


def ball(D: PreDistanceResult, center, radius, kind="forward") -> np.ndarray:
    """Node mask of a metric ball: forward B+, backward B-, or symmetrized."""
    if D.status != FINITE:
        raise ValidationError("balls undefined: d_F is -infinity")
    G = D.geometry
    c = center if np.isscalar(center) else G.node_index(center)
    c = int(c)
    if kind == "forward":
        row = D.matrix[_source_row(D, c)]
        return row < radius
    if kind == "backward":
        if not D.is_all_pairs:
            raise ValidationError("backward ball needs all-pairs input")
        return D.matrix[:, c] < radius
    if kind == "symmetrized":
        if not D.is_all_pairs:
            raise ValidationError("symmetrized ball needs all-pairs input")
        return 0.5 * (D.matrix[c] + D.matrix[:, c]) < radius
    raise ValidationError(f"unknown ball kind {kind!r}")


def _source_row(D: PreDistanceResult, i: int) -> int:
    if D.sources is None:
        return i
    rows = np.flatnonzero(D.sources == i)
    if len(rows) == 0:
        raise ValidationError(f"node {i} is not among the computed sources")
    return int(rows[0])


def rho_to_set(G: DiscreteGeometry, target_idx) -> np.ndarray:
    """d_F(x -> nearest target) for every node x, via one reverse Dijkstra.

    A super target is appended to the reduced graph with zero-cost edges from
    each target node (made nonnegative by shifting with the potentials), and
    a single backward pass from it yields every value.
    """
    targets = np.asarray(target_idx, dtype=np.int64).ravel()
    if targets.size == 0:
        raise ValidationError("target set is empty")
    cyc, _ = G.negative_cycle()
    if cyc is not None:
        raise NumericalError("rho undefined: d_F is identically -infinity")
    pot = G.potentials()
    csr = G.reduced_csr().tocoo()
    n = G.n_nodes
    pot_super = float(np.min(pot[targets]))
    rows = np.concatenate([csr.row, targets])
    cols = np.concatenate([csr.col, np.full(targets.size, n)])
    vals = np.concatenate([csr.data, pot[targets] - pot_super])
    aug = csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))
    d_hat = dijkstra(aug.T, indices=n)[:n]
    return d_hat - pot + pot_super
