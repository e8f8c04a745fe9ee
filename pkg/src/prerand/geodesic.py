"""Pre-geodesics: integration, two-point shooting, closed-loop search, lifts.

In h-arclength-compatible parameter the Euler-Lagrange equation of the length
functional of F = sqrt(h) + omega reads

    du^k/ds = -Gamma^k_ij u^i u^j + sqrt(h(u,u)) * Y^k(u),
    Y^k(u)  = h^{kj} A_{ji} u^i,   A_{ij} = d_i omega_j - d_j omega_i,

so only d(omega) enters: adding an exact form leaves pre-geodesics unchanged.
The flow preserves h-speed, and scaling the initial velocity only
reparametrizes the orbit (positive homogeneity).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.optimize import minimize

from .errors import NumericalError, ValidationError
from .fields import ChartManifold, Curve
from .metrics import GAUSS_T, GAUSS_W, PreRandersMetric, SOMSpacetime, fermat_from_som

DEFAULT_STEPS = 4096
SHOOT_DIRECTIONS = 64
MAX_NEWTON = 14
SPEED_DRIFT_TOL = 1e-6


class UnboundedBelowError(NumericalError):
    """Loop-length descent found no lower bound in the winding class."""

    def __init__(self, message, witness=None, length=None):
        super().__init__(message)
        self.witness = witness
        self.length = length


# ---------------------------------------------------------------------------
# Right-hand side
# ---------------------------------------------------------------------------

def christoffel(metric: PreRandersMetric, points):
    """Gamma^k_ij of h at points, shape (..., 2, 2, 2)."""
    dh = metric.h.derivative(points)          # (2, ..., 2, 2): d_m h_ij
    dh = np.moveaxis(dh, 0, -3)               # (..., m, i, j)
    hinv = np.linalg.inv(metric.h(points))
    # d_i h_lj + d_j h_li - d_l h_ij
    bracket = (np.swapaxes(dh, -3, -2) + np.moveaxis(dh, -3, -1)
               - dh)                          # (..., l, i, j) after relabel
    return 0.5 * np.einsum("...kl,...lij->...kij", hinv, bracket)


def rotation_term(metric: PreRandersMetric, points, u):
    """sqrt(h(u,u)) * Y(u) with Y^k = h^{kj} A_{ji} u^i (A the curl matrix)."""
    a = metric.omega.curl(points)             # d_x omega_y - d_y omega_x
    c = np.stack([a * u[..., 1], -a * u[..., 0]], axis=-1)
    hinv = np.linalg.inv(metric.h(points))
    y = np.einsum("...kj,...j->...k", hinv, c)
    speed = metric.h_norm(points, u)
    return speed[..., None] * y


def pregeodesic_accel(metric: PreRandersMetric):
    def accel(x, u):
        gam = christoffel(metric, x)
        return (-np.einsum("...kij,...i,...j->...k", gam, u, u)
                + rotation_term(metric, x, u))
    return accel


# ---------------------------------------------------------------------------
# Batched fixed-step RK4 on the cover
# ---------------------------------------------------------------------------

def rk4_flow(accel, x0, u0, dt, n_steps, store_every=0):
    """Integrate x' = u, u' = accel(x, u) with per-row step sizes dt (m,).

    Positions are kept on the universal cover (fields wrap internally).
    Returns (x, u) at the end, plus stacked trajectories when store_every > 0.
    Rows that go non-finite are frozen; the returned mask marks survivors.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    u = np.atleast_2d(np.asarray(u0, dtype=float)).copy()
    m = len(x)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), (m,)).copy()
    alive = np.ones(m, dtype=bool)
    traj_x, traj_u = [], []
    if store_every:
        traj_x.append(x.copy())
        traj_u.append(u.copy())
    h = dt[:, None]
    for k in range(n_steps):
        k1x, k1u = u, accel(x, u)
        x2, u2 = x + 0.5 * h * k1x, u + 0.5 * h * k1u
        k2x, k2u = u2, accel(x2, u2)
        x3, u3 = x + 0.5 * h * k2x, u + 0.5 * h * k2u
        k3x, k3u = u3, accel(x3, u3)
        x4, u4 = x + h * k3x, u + h * k3u
        k4x, k4u = u4, accel(x4, u4)
        xn = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        un = u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        ok = np.all(np.isfinite(xn), axis=-1) & np.all(np.isfinite(un), axis=-1)
        alive &= ok | ~alive
        keep = alive[:, None]
        x = np.where(keep, xn, x)
        u = np.where(keep, un, u)
        if store_every and (k + 1) % store_every == 0:
            traj_x.append(x.copy())
            traj_u.append(u.copy())
    if store_every:
        return x, u, alive, np.stack(traj_x), np.stack(traj_u)
    return x, u, alive


def _curve_from_flow(chart: ChartManifold, s, xs, us) -> Curve:
    pts = chart.wrap(xs)
    _, wind = chart.wrap_displacement(pts[:-1], pts[1:])
    return Curve(s, pts, us, chart, wind.sum(axis=0))


def integrate_pregeodesic(metric: PreRandersMetric, x0, v0, span,
                          n_steps=None, store_every=None) -> Curve:
    """Pre-geodesic from (x0, v0) over the given parameter span.

    The step halves (up to 4 times) if the conserved h-speed drifts by more
    than SPEED_DRIFT_TOL relatively or the state goes non-finite.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if span <= 0:
        raise ValidationError("span must be positive")
    s0 = float(metric.h_norm(x0, v0))
    if not s0 > 0:
        raise ValidationError("initial velocity must have positive h-norm")
    n = int(n_steps) if n_steps else DEFAULT_STEPS
    accel = pregeodesic_accel(metric)
    for attempt in range(5):
        store = store_every or max(n // DEFAULT_STEPS, 1)
        xe, ue, alive, xs, us = rk4_flow(
            accel, x0[None], v0[None], span / n, n, store_every=store)
        if alive[0]:
            s_end = float(metric.h_norm(xe[0], ue[0]))
            if abs(s_end - s0) <= SPEED_DRIFT_TOL * s0:
                s = np.arange(xs.shape[0]) * (span / n * store)
                return _curve_from_flow(metric.chart, s, xs[:, 0], us[:, 0])
        n *= 2
    raise NumericalError("pre-geodesic integration failed to conserve h-speed")


# ---------------------------------------------------------------------------
# Two-point shooting
# ---------------------------------------------------------------------------

@dataclass
class ShootingResult:
    found: bool
    curve: Curve | None = None
    length: float = np.nan
    residual: float = np.inf
    winding: tuple = (0, 0)
    iterations: int = 0
    message: str = ""
    by_class: dict = field(default_factory=dict)


def _winding_classes(chart: ChartManifold, w_max):
    ranges = [range(-w_max, w_max + 1) if chart.periodic[a] else (0,)
              for a in range(2)]
    return [np.array(w) for w in product(*ranges)]


def _h_matrix_scale(metric, x0):
    m = metric.h(np.asarray(x0, float))
    lam = np.linalg.eigvalsh(m)
    return float(np.sqrt(lam[-1])), float(np.sqrt(lam[0]))


def shoot_connect(metric: PreRandersMetric, x0, x1, winding=None, w_max=1,
                  n_dir=SHOOT_DIRECTIONS, eps=None, n_steps=512,
                  span_factor=2.5) -> ShootingResult:
    """Connect x0 to x1 by a pre-geodesic, per winding class.

    For each class the target is lifted to the cover; a fan of unit headings
    is integrated to pick seeds by closest approach; a damped Newton iteration
    in (heading angle, parameter span) polishes each seed. The result with the
    smallest F-length over converged classes wins; all class outcomes are kept.
    """
    chart = metric.chart
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if eps is None:
        eps = 1e-6 * chart.diameter_bound()
    # winding is absolute (net positive seam crossings of the sought curve,
    # matching Curve.winding); the minimal displacement already carries
    # base_wind crossings, so the cover target shifts by the difference.
    base_vec, base_wind = chart.wrap_displacement(x0, x1)
    classes = ([np.asarray(winding, dtype=int)] if winding is not None
               else [base_wind + o for o in _winding_classes(chart, w_max)])
    accel = pregeodesic_accel(metric)
    hmax, hmin = _h_matrix_scale(metric, x0)

    result = ShootingResult(False, winding=(0, 0))
    for w in classes:
        if np.any(w[~chart.periodic] != 0):
            continue
        target = x0 + base_vec + (w - base_wind) * chart.extent
        delta = target - x0
        dist = float(np.linalg.norm(delta))
        if dist < 1e-14:
            crv = Curve(np.array([0.0, 1e-12]), np.vstack([chart.wrap(x0)] * 2),
                        np.zeros((2, 2)), chart)
            result.by_class[tuple(w)] = (0.0, 0.0)
            if not result.found or 0.0 < result.length:
                result = ShootingResult(True, crv, 0.0, 0.0, tuple(w), 0,
                                        "coincident points", result.by_class)
            continue
        # parameter is h-arclength, so covering Euclidean distance `dist`
        # needs roughly dist * sqrt(lambda_max(h)) of parameter
        span = span_factor * dist * max(hmax, 1e-12)
        seeds = _scan_seeds(metric, accel, x0, target, n_dir, span, n_steps)
        best = None
        for phi0, s0_guess in seeds:
            out = _newton_polish(metric, accel, x0, target, phi0, s0_guess,
                                 eps, n_steps)
            if out is None:
                continue
            phi, s_span, res, iters = out
            if best is None or res < best[2]:
                best = (phi, s_span, res, iters)
            if res <= eps:
                break
        if best is None or best[2] > eps:
            result.by_class[tuple(w)] = (np.nan, best[2] if best else np.inf)
            continue
        phi, s_span, res, iters = best
        v0 = np.array([np.cos(phi), np.sin(phi)])
        fine = max(int(n_steps), 512)
        crv = integrate_pregeodesic(metric, x0, v0, s_span, n_steps=fine,
                                    store_every=1)
        lf = metric.length(crv)
        result.by_class[tuple(w)] = (lf, res)
        if not result.found or lf < result.length:
            result = ShootingResult(True, crv, float(lf), float(res),
                                    tuple(w), iters, "", result.by_class)
    if not result.found and result.message == "":
        result.message = "no class converged"
    return result


def _scan_seeds(metric, accel, x0, target, n_dir, span, n_steps, keep=3):
    ang = np.linspace(0.0, 2.0 * np.pi, n_dir, endpoint=False)
    chord = target - x0
    ang = np.concatenate([ang, [np.arctan2(chord[1], chord[0])]])
    u0 = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    # fan uses h-unit speeds so the parameter tracks h-arclength
    nrm = metric.h_norm(np.broadcast_to(x0, u0.shape), u0)
    u0 = u0 / nrm[:, None]
    x0b = np.broadcast_to(x0, u0.shape)
    store = max(n_steps // 64, 1)
    _, _, alive, xs, _ = rk4_flow(accel, x0b, u0, span / n_steps, n_steps,
                                  store_every=store)
    d = np.linalg.norm(xs - target, axis=-1)          # (stored, m)
    d[:, ~alive] = np.inf
    best_idx = np.argmin(d, axis=0)
    best_val = d[best_idx, np.arange(d.shape[1])]
    order = np.argsort(best_val)[:keep]
    dt_per_store = span / n_steps * store
    return [(ang[i], max(best_idx[i] * dt_per_store, 8 * span / n_steps))
            for i in order]


def _endpoint(accel, metric, x0, phi, s_span, n_steps):
    v0 = np.array([np.cos(phi), np.sin(phi)])
    v0 = v0 / float(metric.h_norm(x0, v0))
    xe, ue, alive = rk4_flow(accel, x0[None], v0[None], s_span / n_steps, n_steps)
    if not alive[0]:
        return None
    return xe[0], ue[0]


def _newton_polish(metric, accel, x0, target, phi, s_span, eps, n_steps):
    dphi = 1e-6
    res_prev = np.inf
    state = None
    for it in range(MAX_NEWTON):
        state = _endpoint(accel, metric, x0, phi, s_span, n_steps)
        if state is None:
            return None
        xe, ue = state
        r = xe - target
        res = float(np.linalg.norm(r))
        if res <= eps:
            return phi, s_span, res, it
        plus = _endpoint(accel, metric, x0, phi + dphi, s_span, n_steps)
        if plus is None:
            return None
        dx_dphi = (plus[0] - xe) / dphi
        jac = np.column_stack([dx_dphi, ue])
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return phi, s_span, res, it
        lam = 1.0
        for _ in range(5):
            phi_n = phi + lam * step[0]
            s_n = max(s_span + lam * step[1], 1e-9)
            st = _endpoint(accel, metric, x0, phi_n, s_n, n_steps)
            if st is not None:
                res_n = float(np.linalg.norm(st[0] - target))
                if res_n < res:
                    phi, s_span, res_prev = phi_n, s_n, res_n
                    break
            lam *= 0.5
        else:
            return phi, s_span, res, it
    state = _endpoint(accel, metric, x0, phi, s_span, n_steps)
    res = float(np.linalg.norm(state[0] - target)) if state else np.inf
    return phi, s_span, res, MAX_NEWTON


# ---------------------------------------------------------------------------
# Polyline length and gradient (shared by loop search and open minimizer)
# ---------------------------------------------------------------------------

def _polyline_value_grad(metric: PreRandersMetric, nodes, closure_shift=None):
    """F-length of the polyline on the cover and its gradient w.r.t. nodes.

    nodes: (m, 2) cover coordinates. If closure_shift is given the chain is
    closed by a final segment nodes[-1] -> nodes[0] + closure_shift.
    """
    a = nodes
    if closure_shift is not None:
        b = np.vstack([nodes[1:], nodes[:1] + closure_shift])
    else:
        a = nodes[:-1]
        b = nodes[1:]
    delta = b - a
    total = 0.0
    grad_a = np.zeros_like(a)
    grad_b = np.zeros_like(a)
    for t, wq in zip(GAUSS_T, GAUSS_W):
        p = a + t * delta
        H = metric.h(p)
        dH = np.moveaxis(metric.h.derivative(p), 0, -3)     # (..., m, i, j)
        om = metric.omega(p)
        dom = np.moveaxis(metric.omega.derivative(p), 0, -2)  # (..., m, i)
        HD = np.einsum("...ij,...j->...i", H, delta)
        s = np.sqrt(np.maximum(np.einsum("...i,...i->...", HD, delta), 1e-300))
        total += wq * np.sum(s + np.einsum("...i,...i->...", om, delta))
        g_delta = HD / s[:, None] + om
        g_p = (np.einsum("...mij,...i,...j->...m", dH, delta, delta) / (2.0 * s[:, None])
               + np.einsum("...mi,...i->...m", dom, delta))
        grad_a += wq * ((1.0 - t) * g_p - g_delta)
        grad_b += wq * (t * g_p + g_delta)
    grad = np.zeros_like(nodes)
    if closure_shift is not None:
        grad += grad_a
        grad[1:] += grad_b[:-1]
        grad[0] += grad_b[-1]
    else:
        grad[:-1] += grad_a
        grad[1:] += grad_b
    return float(total), grad


@dataclass
class PeriodicResult:
    curve: Curve
    length: float
    grad_norm: float
    converged: bool
    winding: tuple


def periodic_search(metric: PreRandersMetric, winding, n_nodes=48,
                    restarts=2, maxiter=400, floor=None, seed=0) -> PeriodicResult:
    """Minimize F-length over closed polyline loops in a fixed winding class.

    Descent is L-BFGS with the analytic gradient of the per-segment Gauss
    quadrature. If the objective dives below an a-priori floor the class is
    reported unbounded below (UnboundedBelowError with the witness loop).
    """
    chart = metric.chart
    w = np.asarray(winding, dtype=int)
    if np.any(w[~chart.periodic] != 0):
        raise ValidationError("winding must vanish on non-periodic axes")
    if np.all(w == 0):
        raise ValidationError("winding class must be nontrivial")
    shift = w * chart.extent
    base = 0.5 * (chart.lo + chart.hi)
    t = np.arange(n_nodes)[:, None] / n_nodes
    straight = base + t * shift
    if floor is None:
        v0, _ = _polyline_value_grad(metric, straight, shift)
        floor = -50.0 * (abs(v0) + np.linalg.norm(shift) + 1.0)

    rng = np.random.default_rng(seed)
    jitter_scale = 0.05 * float(np.min(chart.extent))
    best = None
    for trial in range(restarts + 1):
        nodes0 = straight if trial == 0 else straight + rng.normal(
            scale=jitter_scale, size=straight.shape)

        hit_floor = {}

        def fun(z):
            val, grad = _polyline_value_grad(metric, z.reshape(-1, 2), shift)
            if val < floor:
                hit_floor["nodes"] = z.reshape(-1, 2).copy()
                hit_floor["val"] = val
                raise _FloorHit()
            return val, grad.ravel()

        try:
            res = minimize(fun, nodes0.ravel(), jac=True, method="L-BFGS-B",
                           options={"maxiter": maxiter, "ftol": 1e-14,
                                    "gtol": 1e-10})
        except _FloorHit:
            crv = _loop_curve(chart, hit_floor["nodes"], w)
            raise UnboundedBelowError(
                f"loop length unbounded below in winding class {tuple(w)}",
                witness=crv, length=hit_floor["val"]) from None
        nodes = res.x.reshape(-1, 2)
        val, grad = _polyline_value_grad(metric, nodes, shift)
        gnorm = float(np.linalg.norm(grad) / np.sqrt(nodes.size))
        if best is None or val < best[0]:
            best = (val, nodes, gnorm, bool(res.success))
    val, nodes, gnorm, ok = best
    return PeriodicResult(_loop_curve(chart, nodes, w), float(val), gnorm,
                          ok, tuple(int(c) for c in w))


class _FloorHit(Exception):
    pass


def _loop_curve(chart, nodes, winding) -> Curve:
    shift = winding * chart.extent
    closed_nodes = np.vstack([nodes, nodes[:1] + shift])
    vec = np.diff(closed_nodes, axis=0)
    seg = np.maximum(np.linalg.norm(vec, axis=-1), 1e-300)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    vel = np.vstack([vec / seg[:, None], vec[-1:] / seg[-1]])
    return Curve(s, chart.wrap(closed_nodes), vel, chart,
                 np.asarray(winding, dtype=int), closed=True)


def minimize_open_polyline(metric: PreRandersMetric, x0, x1, winding=(0, 0),
                           n_nodes=33, maxiter=400):
    """Direct length minimization over open polylines with pinned endpoints.

    Independent of the shooting route: it descends the discrete functional
    instead of solving the Euler-Lagrange equation. Returns (curve, length).
    """
    chart = metric.chart
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    vec, _ = chart.wrap_displacement(x0, x1)
    target = x0 + vec + np.asarray(winding) * chart.extent
    t = np.linspace(0.0, 1.0, n_nodes)[:, None]
    nodes0 = x0 + t * (target - x0)

    def fun(zfree):
        nodes = np.vstack([x0, zfree.reshape(-1, 2), target])
        val, grad = _polyline_value_grad(metric, nodes)
        return val, grad[1:-1].ravel()

    res = minimize(fun, nodes0[1:-1].ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": maxiter, "ftol": 1e-14, "gtol": 1e-10})
    nodes = np.vstack([x0, res.x.reshape(-1, 2), target])
    val, _ = _polyline_value_grad(metric, nodes)
    seg = np.maximum(np.linalg.norm(np.diff(nodes, axis=0), axis=-1), 1e-300)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    vel = np.vstack([np.diff(nodes, axis=0) / seg[:, None],
                     (nodes[-1] - nodes[-2])[None] / seg[-1]])
    crv = Curve(s, chart.wrap(nodes), vel, chart,
                np.asarray(winding, dtype=int))
    return crv, float(val)


# ---------------------------------------------------------------------------
# Lightlike lifts
# ---------------------------------------------------------------------------

@dataclass
class SpacetimeCurve:
    """Curve in R x S: parameter, time coordinate, spatial track."""

    s: np.ndarray
    tau: np.ndarray
    spatial: Curve

    def time_span(self):
        return float(self.tau[0]), float(self.tau[-1])


def lift_lightlike(curve: Curve, data, t0=0.0) -> SpacetimeCurve:
    """Lift a spatial curve to the lightlike graph tau(s) = t0 + int F(xdot).

    data may be a PreRandersMetric or an SOMSpacetime; for the latter the lift
    is audited against the spacetime metric (g on the lifted tangent ~ 0).
    """
    if isinstance(data, SOMSpacetime):
        som = data
        F = fermat_from_som(data)
    else:
        som, F = None, data
    tau = t0 + F.cumulative_length(curve)
    if som is not None:
        disp = curve.segment_displacements()
        mid = curve.chart.wrap(curve.points[:-1] + 0.5 * disp)
        dtau = np.diff(tau)
        q = som.g_eval(mid, dtau, disp)
        scale = np.maximum(som.g0.quad(mid, disp) + dtau ** 2, 1e-30)
        worst = float(np.max(np.abs(q) / scale))
        if worst > 1e-4:
            raise NumericalError(
                f"lightlike lift failed the spacetime audit (residual {worst:.2e})")
    return SpacetimeCurve(curve.s.copy(), tau, curve)
