"""Vectorized Bellman-Ford machinery for signed edge weights on grid graphs.

Graphs are stored in gather form: for each stencil offset k there are arrays
S_in[k] (source node of the edge coming into j along offset k), W_in[k] (its
weight) and V_in[k] (validity at the chart boundary). Relaxation over all
edges of one offset is then a fancy-indexed gather, so a full Bellman-Ford
round is a handful of (k, n) array operations.

Distances are initialized to zero everywhere (a virtual super source with
zero-weight edges to every node), which makes negative-cycle detection
equivalent to non-convergence and yields Johnson potentials on convergence.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


def bellman_ford(S_in, W_in, V_in, probe_every=64, round_cap=None):
    """Run relaxations until convergence or a negative cycle is confirmed.

    Returns (cycle, dist): cycle is None when the graph has no negative cycle
    and dist holds the converged potentials (all <= 0); otherwise cycle is a
    (nodes, offsets) pair describing one negative cycle in forward order,
    where offsets[t] is the stencil slot of the edge nodes[t] -> nodes[t+1].
    """
    n = S_in.shape[1]
    dist = np.zeros(n)
    pred_k = np.full(n, -1, dtype=np.int64)
    w = np.where(V_in, W_in, np.inf)
    cap = round_cap or (n + 2)
    idx = np.arange(n)
    for rnd in range(1, cap + 1):
        cand = dist[S_in] + w
        best_k = np.argmin(cand, axis=0)
        best = cand[best_k, idx]
        gain = dist - best
        improved = gain > 0.0
        if not np.any(improved):
            return None, dist
        dist = np.where(improved, best, dist)
        pred_k = np.where(improved, best_k, pred_k)
        if rnd % probe_every == 0 or rnd >= cap:
            start = int(np.argmax(np.where(improved, gain, -np.inf)))
            cyc = _probe_cycle(start, pred_k, S_in, W_in)
            if cyc is not None:
                return cyc, dist
    # Still improving past the cap with no certified cycle: genuine negative
    # cycles are found by the probe within n rounds, so only roundoff-scale
    # chatter remains; probe widely once more, then accept convergence.
    for start in np.flatnonzero(pred_k >= 0)[:256]:
        cyc = _probe_cycle(int(start), pred_k, S_in, W_in)
        if cyc is not None:
            return cyc, dist
    slack = np.where(V_in, W_in + dist[S_in] - dist[None, :], np.inf)
    scale = max(float(np.max(np.abs(W_in[V_in]))), 1.0)
    if np.min(slack) < -1e-9 * scale:
        raise NumericalError("Bellman-Ford exceeded the round cap without a verdict")
    return None, dist


def _probe_cycle(start, pred_k, S_in, W_in):
    """Walk the predecessor graph backwards; return a negative cycle if hit."""
    n = len(pred_k)
    seen = {}
    path = []
    j = start
    for _ in range(n + 1):
        k = int(pred_k[j])
        if k < 0:
            return None
        if j in seen:
            tail = path[seen[j]:]
            nodes = np.array([node for node, _ in tail][::-1], dtype=np.int64)
            ks = [off for _, off in tail]
            offs = np.roll(np.array(ks[::-1], dtype=np.int64), -1)
            weight = _cycle_sum(W_in, nodes, offs)
            if weight < 0:
                return nodes, offs
            return None
        seen[j] = len(path)
        path.append((j, k))
        j = int(S_in[k, j])
    return None


def has_negative_cycle(S_in, W_in, V_in):
    cyc, _ = bellman_ford(S_in, W_in, V_in)
    return cyc is not None


def max_cycle_ratio(num, den, S_in, V_in, tol=1e-3, bracket=None):
    """Maximize sum(num)/sum(den) over directed cycles; den must be positive.

    Bisection on lambda: a cycle with ratio above lambda exists iff the graph
    with weights lambda * den - num has a negative cycle. Returns
    (ratio, nodes, offsets) with the achieved ratio of an extracted witness
    cycle; the supremum lies within 2 * tol of it.
    """
    valid = V_in & np.isfinite(num) & (den > 0)
    if not np.any(valid):
        raise NumericalError("no valid edges for cycle-ratio search")
    num = np.where(valid, num, 0.0)
    den = np.where(valid, den, 1.0)
    r = np.where(valid, num / den, np.nan)
    lo = float(np.nanmin(r)) if bracket is None else bracket[0]
    hi = float(np.nanmax(r)) if bracket is None else bracket[1]
    lo -= tol
    hi += tol
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if has_negative_cycle(S_in, mid * den - num, valid):
            lo = mid
        else:
            hi = mid
    cyc, _ = bellman_ford(S_in, (lo - tol) * den - num, valid)
    if cyc is None:
        raise NumericalError("cycle-ratio witness extraction failed")
    nodes, offs = cyc
    s_num = _cycle_sum(num, nodes, offs)
    s_den = _cycle_sum(den, nodes, offs)
    return s_num / s_den, nodes, offs


def min_cycle_ratio(num, den, S_in, V_in, tol=1e-3):
    ratio, nodes, offs = max_cycle_ratio(-num, den, S_in, V_in, tol)
    return -ratio, nodes, offs


def _cycle_sum(values, nodes, offs):
    m = len(nodes)
    return float(sum(values[offs[t], nodes[(t + 1) % m]] for t in range(m)))


def cycle_edge_values(values, nodes, offs):
    """Per-edge values along a forward cycle (edge t is nodes[t] -> nodes[t+1])."""
    m = len(nodes)
    return np.array([values[offs[t], nodes[(t + 1) % m]] for t in range(m)])
