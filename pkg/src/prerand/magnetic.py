"""Magnetic flows on a surface and their pre-Randers reduction.

A magnetic structure is a Riemannian metric g together with a 2-form
Omega = B dx^dy. Trajectories solve D(u)/dt = Y(u), where the Lorentz
force Y is the g-dual of contracting the velocity into Omega; the kinetic
energy (1/2) g(u,u) is a first integral. At a fixed energy c > 0 the
trajectories coincide, up to affine reparametrization, with pre-geodesics
of F_c(v) = sqrt(g(v,v)) + omega(v)/sqrt(2c) for any one-form omega with
d(omega) = -Omega, so every pre-Randers tool (shooting, loop descent,
distance audits) doubles as a magnetic-geodesic driver.

Orientation convention: Y is fixed by Omega(u, v) = g(Y(u), v), so a
positive B curves unit-speed orbits counterclockwise in chart coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import FieldError, NumericalError, ValidationError
from .fields import (Curve, OneFormField, ScalarField, SymTensorField,
                     constant_oneform)
from .metrics import GAUSS_T, GAUSS_W, PreRandersMetric, _sample_points
from .geodesic import (PeriodicResult, ShootingResult, christoffel,
                       integrate_pregeodesic, periodic_search,
                       pregeodesic_accel, rk4_flow, shoot_connect)
from . import distance as ds

DEFAULT_STEPS = 4096
ENERGY_DRIFT_TOL = 1e-9
POTENTIAL_TOL = 1e-4      # relative tolerance for d(omega) = -Omega
FLUX_TOL = 1e-8           # per-row flux tolerance on periodic axes
QUAD_PANELS = 32          # composite Gauss panels for the potential
ELEQ_TOL = 1e-5
AUDIT_GRID = 32


@dataclass(frozen=True)
class EnergyLevel:
    """Kinetic energy level c = (1/2) g(u,u) > 0 of a magnetic trajectory."""

    c: float

    def __post_init__(self):
        if not float(self.c) > 0.0:
            raise ValidationError("energy level must be positive")
        object.__setattr__(self, "c", float(self.c))

    @property
    def speed(self) -> float:
        """g-speed sqrt(2c) of trajectories at this energy."""
        return float(np.sqrt(2.0 * self.c))


def _energy(c) -> EnergyLevel:
    return c if isinstance(c, EnergyLevel) else EnergyLevel(float(c))


@dataclass
class MagneticStructure:
    """Riemannian metric g with magnetic density B (Omega = B dx^dy).

    The potential, when present, is a one-form with d(potential) = -Omega;
    it is required by the F_c reduction and can be built on the fly by
    construct_potential where the topology allows a global primitive.
    """

    g: SymTensorField
    B: ScalarField
    potential: OneFormField | None = None

    def __post_init__(self):
        if not isinstance(self.g, SymTensorField):
            raise ValidationError("g must be a symmetric tensor field")
        if not isinstance(self.B, ScalarField):
            raise ValidationError("B must be a scalar field")
        pts = _sample_points(self.chart)
        lam = self.g.min_eigenvalue(pts)
        if np.any(lam <= 0):
            bad = pts[np.argmin(lam)]
            raise ValidationError(f"g is not positive definite near {bad}")
        if self.potential is not None:
            defect = self.potential.curl(pts) + self.B(pts)
            scale = 1.0 + float(np.max(np.abs(self.B(pts))))
            worst = float(np.max(np.abs(defect)))
            if worst > POTENTIAL_TOL * scale:
                raise ValidationError(
                    f"d(potential) != -Omega: defect {worst:.3e} "
                    f"exceeds {POTENTIAL_TOL * scale:.3e}")
        self._g_metric = None

    @property
    def chart(self):
        return self.g.chart

    def energy(self, points, vectors):
        """Kinetic energy (1/2) g(v,v), broadcasting over leading shape."""
        return 0.5 * self.g.quad(points, vectors)

    def geodesic_background(self) -> PreRandersMetric:
        """g packaged as a drift-free pre-Randers metric (for Christoffels)."""
        if self._g_metric is None:
            zero = constant_oneform(self.chart, [0.0, 0.0])
            self._g_metric = PreRandersMetric(self.g, zero)
        return self._g_metric


def lorentz_force(S: MagneticStructure, x, v):
    """Y_x(v), the unique vector with Omega_x(v, w) = g_x(Y_x(v), w).

    In coordinates g Y(v) = B (-v_y, v_x); g(Y(v), v) = 0 up to roundoff,
    and positive B rotates velocities counterclockwise.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    b = S.B(x)
    c = np.stack([-b * v[..., 1], b * v[..., 0]], axis=-1)
    try:
        return np.linalg.solve(S.g(x), c[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise FieldError(f"metric degenerate under Lorentz solve: {exc}") from exc


def magnetic_accel(S: MagneticStructure):
    """Acceleration field of D(u)/dt = Y(u): -Gamma_g(u,u) + Y(u)."""
    bg = S.geodesic_background()

    def accel(x, u):
        gam = christoffel(bg, x)
        return (-np.einsum("...kij,...i,...j->...k", gam, u, u)
                + lorentz_force(S, x, u))

    return accel


def integrate_magnetic(S: MagneticStructure, x0, v0, span,
                       n_steps=None, store_every=None) -> Curve:
    """Magnetic trajectory from (x0, v0) over a time span.

    The g-speed is a first integral; the step halves (up to 4 times) until
    the relative energy drift over the span stays below ENERGY_DRIFT_TOL.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if span <= 0:
        raise ValidationError("span must be positive")
    e0 = float(S.energy(x0, v0))
    if not e0 > 0:
        raise ValidationError("initial velocity must have positive g-norm")
    accel = magnetic_accel(S)
    n = int(n_steps) if n_steps else DEFAULT_STEPS
    for attempt in range(5):
        store = store_every or max(n // DEFAULT_STEPS, 1)
        xe, ue, alive, xs, us = rk4_flow(
            accel, x0[None], v0[None], span / n, n, store_every=store)
        if alive[0]:
            e_end = float(S.energy(xe[0], ue[0]))
            if abs(e_end - e0) <= ENERGY_DRIFT_TOL * e0:
                s = np.arange(xs.shape[0]) * (span / n * store)
                chart = S.chart
                pts = chart.wrap(xs[:, 0])
                _, wind = chart.wrap_displacement(pts[:-1], pts[1:])
                return Curve(s, pts, us[:, 0], chart, wind.sum(axis=0))
        n *= 2
    raise NumericalError("magnetic integration failed to conserve energy")


# ---------------------------------------------------------------------------
# Potential construction
# ---------------------------------------------------------------------------

def _composite_gauss(panels):
    t = (np.arange(panels)[:, None] + GAUSS_T[None, :]).ravel() / panels
    w = np.tile(GAUSS_W, panels) / panels
    return t, w


def construct_potential(S: MagneticStructure, panels=QUAD_PANELS) -> OneFormField:
    """A primitive omega with d(omega) = -Omega, in the gauge omega = -G dy.

    G(x, y) integrates B along the x-axis from the gauge base (0 when the
    chart contains it, else the left edge), by composite Gauss quadrature.
    On an x-periodic chart a global primitive exists only when every row
    carries zero flux; otherwise the construction is refused, since the
    reduction then lives on the universal cover rather than the chart.
    """
    chart = S.chart
    lo, hi = chart.lo, chart.hi
    base = 0.0 if lo[0] <= 0.0 <= hi[0] else float(lo[0])
    tq, wq = _composite_gauss(panels)

    if chart.periodic[0]:
        ny = 33
        rows = (np.linspace(lo[1], hi[1], ny, endpoint=False)
                if chart.periodic[1] else np.linspace(lo[1], hi[1], ny))
        sx = lo[0] + chart.extent[0] * tq
        grid = np.stack(np.broadcast_arrays(sx[None, :], rows[:, None]), axis=-1)
        flux = chart.extent[0] * np.sum(wq[None, :] * S.B(grid), axis=1)
        scale = chart.extent[0] * (1.0 + float(np.max(np.abs(S.B(grid)))))
        if np.max(np.abs(flux)) > FLUX_TOL * scale:
            raise ValidationError(
                "no global potential: the magnetic 2-form has nonzero flux "
                f"through the periodic x-axis (worst row {np.max(np.abs(flux)):.3e}); "
                "the F_c reduction then only exists on the universal cover - "
                "supply a potential or work on a non-periodic chart")

    def g_of(pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        span = (x - base)[..., None]
        sample_x = base + span * tq
        sample_y = np.broadcast_to(y[..., None], sample_x.shape)
        samples = np.stack([sample_x, sample_y], axis=-1)
        return span[..., 0] * np.einsum("q,...q->...", wq, S.B(samples))

    def func(pts):
        pts = np.asarray(pts, dtype=float)
        g = g_of(pts)
        out = np.zeros(pts.shape)
        out[..., 1] = -g
        return out

    def deriv(pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        span = (x - base)[..., None]
        sample_x = base + span * tq
        sample_y = np.broadcast_to(y[..., None], sample_x.shape)
        samples = np.stack([sample_x, sample_y], axis=-1)
        db_dy = S.B.derivative(samples)[1]
        d = np.zeros((2,) + pts.shape)
        d[0, ..., 1] = -S.B(pts)
        d[1, ..., 1] = -span[..., 0] * np.einsum("q,...q->...", wq, db_dy)
        return d

    return OneFormField(chart, func, deriv, name="magnetic potential")


def fc_metric(S: MagneticStructure, c) -> PreRandersMetric:
    """The pre-Randers metric F_c = sqrt(g) + omega/sqrt(2c).

    Its pre-geodesics, run at g-speed sqrt(2c), are exactly the magnetic
    trajectories of energy c. Builds a potential when none is stored.
    """
    lvl = _energy(c)
    pot = S.potential if S.potential is not None else construct_potential(S)
    fac = 1.0 / lvl.speed

    def func(pts):
        return fac * pot(pts)

    def deriv(pts):
        return fac * pot.derivative(pts)

    omega = OneFormField(S.chart, func, deriv,
                         name=f"{pot.name or 'potential'}/sqrt(2c)")
    return PreRandersMetric(S.g, omega)


# ---------------------------------------------------------------------------
# Equation audit and reparametrization
# ---------------------------------------------------------------------------

def eleq_residual(S: MagneticStructure, curve: Curve) -> np.ndarray:
    """Pointwise g-norm of x'' + Gamma(x',x') - Y(x') from 5-point stencils.

    The residual vanishes only in the trajectory's own time parametrization,
    so feed it curves at constant g-speed. Edge samples reuse the nearest
    interior value. Requires a uniformly sampled curve of >= 7 points.
    """
    n = curve.n
    if n < 7:
        raise ValidationError("residual audit needs at least 7 samples")
    dt = np.diff(curve.s)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * dt[0]:
        raise ValidationError("residual audit needs uniform parameter steps")
    h = float(dt[0])
    x = curve.points_unwrapped()
    v = (-x[4:] + 8 * x[3:-1] - 8 * x[1:-3] + x[:-4]) / (12 * h)
    a = (-x[4:] + 16 * x[3:-1] - 30 * x[2:-2] + 16 * x[1:-3] - x[:-4]) / (12 * h * h)
    pts = curve.points[2:-2]
    bg = S.geodesic_background()
    gam = christoffel(bg, pts)
    defect = (a + np.einsum("...kij,...i,...j->...k", gam, v, v)
              - lorentz_force(S, pts, v))
    sq = np.einsum("...ij,...i,...j->...", S.g(pts), defect, defect)
    res = np.sqrt(np.maximum(sq, 0.0))
    return np.concatenate([res[:1], res[:1], res, res[-1:], res[-1:]])


def _to_energy_parametrization(S: MagneticStructure, curve: Curve, lvl) -> Curve:
    """Rescale an h-arclength pre-geodesic to g-speed sqrt(2c) in time."""
    speed = lvl.speed
    nrm = np.sqrt(np.maximum(S.g.quad(curve.points, curve.velocities), 1e-300))
    vel = curve.velocities * (speed / nrm)[:, None]
    return Curve(curve.s / speed, curve.points, vel, curve.chart,
                 curve.winding, curve.closed)


# ---------------------------------------------------------------------------
# Connection and periodic-orbit drivers
# ---------------------------------------------------------------------------

def _connection_audit(Fc: PreRandersMetric, x0, x1, grid=AUDIT_GRID):
    """Certify the existence hypotheses before shooting.

    Two discrete checks: no loop of F_c-length below -eps_zero (otherwise
    the length functional is unbounded below), and the connecting sublevel
    set {d(x0,.) + d(., x1) <= chord + 2 eps_zero} stays clear of every
    non-periodic chart edge (so minimizing sequences stay in a compact set,
    the symmetrized-ball condition in discrete form). Returns a violation
    message or None.
    """
    G = ds.build_graph(Fc, grid)
    cyc, _ = G.negative_cycle()
    if cyc is not None:
        length = ds.pre_distance(G).witness_length
        if length < -G.eps_zero:
            return (f"loops of negative length exist (witness {length:.4f} "
                    f"< -eps_zero = {-G.eps_zero:.4f}); the length functional "
                    "is unbounded below")
        return ("the discrete loop scan sits at the numeric boundary "
                f"(witness {length:.4f}); existence cannot be certified")
    i0, i1 = G.node_index(x0), G.node_index(x1)
    fwd = ds.pre_distance(G, sources=[i0]).matrix[0]
    bwd = ds.rho_to_set(G, [i1])
    chord = fwd[i1]
    # margin covers the discrete overestimate of near-minimizers: a few
    # percent stencil bias plus a few of the shortest edges
    axes = np.flatnonzero(np.sum(np.abs(G.offsets), axis=1) == 1)
    edge = float(np.max(G.W_out[axes][G.V_out[axes]]))
    level = fwd + bwd <= chord + max(0.05 * abs(chord), 3.0 * edge)
    chart = Fc.chart
    nodes = G.nodes
    for ax in range(2):
        if chart.periodic[ax]:
            continue
        edge = ((np.abs(nodes[:, ax] - chart.lo[ax]) < 0.5 * G.spacing[ax])
                | (np.abs(nodes[:, ax] - chart.hi[ax]) < 0.5 * G.spacing[ax]))
        if np.any(level & edge):
            return ("the connecting sublevel set reaches the chart boundary "
                    f"on axis {ax}; compactness of symmetrized balls cannot "
                    "be certified on this window")
    return None


def magnetic_connect(S: MagneticStructure, c, x0, x1, audit=True,
                     **shoot_kw) -> ShootingResult:
    """Magnetic geodesic of energy c from x0 to x1 via the F_c reduction.

    The existence hypotheses are audited on a coarse graph first (no
    negative loops, compact connecting sublevel set) and ValidationError
    names the violated condition. The shooting outcome is reported as-is;
    a found curve comes back in time parametrization at g-speed sqrt(2c)
    with its equation residual checked pointwise.
    """
    lvl = _energy(c)
    Fc = fc_metric(S, lvl)
    if audit:
        violation = _connection_audit(Fc, x0, x1)
        if violation is not None:
            raise ValidationError(f"connection hypotheses fail: {violation}")
    res = shoot_connect(Fc, x0, x1, **shoot_kw)
    if not res.found:
        return res
    curve = _to_energy_parametrization(S, res.curve, lvl)
    worst = float(np.max(eleq_residual(S, curve)))
    if worst > ELEQ_TOL:
        raise NumericalError(
            f"connector violates the magnetic equation: residual {worst:.2e}")
    return replace(res, curve=curve)


def _closure_residual(Fc, accel, z, shift, n_steps):
    x0 = z[:2]
    u0 = np.array([np.cos(z[2]), np.sin(z[2])])
    u0 = u0 / float(Fc.h_norm(x0, u0))
    xe, ue, alive = rk4_flow(accel, x0[None], u0[None], z[3] / n_steps, n_steps)
    if not alive[0]:
        return None
    return np.concatenate([xe[0] - (x0 + shift), ue[0] - u0])


def magnetic_periodic(S: MagneticStructure, c, winding, n_nodes=48,
                      n_steps=1024, seed=0) -> PeriodicResult:
    """Closed magnetic geodesic of energy c in a fixed winding class.

    Loop descent under F_c seeds a closure Newton iteration in (start
    point, heading, period); least squares absorbs the phase-shift null
    direction. The polished orbit is returned in time parametrization at
    g-speed sqrt(2c) and must satisfy the equation audit pointwise.
    """
    lvl = _energy(c)
    Fc = fc_metric(S, lvl)
    loop = periodic_search(Fc, winding, n_nodes=n_nodes, seed=seed)
    crv = loop.curve
    accel = pregeodesic_accel(Fc)
    chart = S.chart
    shift = np.asarray(winding, dtype=int) * chart.extent
    span0 = float(Fc.length(crv, "h"))
    phi0 = float(np.arctan2(crv.velocities[0, 1], crv.velocities[0, 0]))
    z = np.array([crv.points[0, 0], crv.points[0, 1], phi0, span0])
    scale = float(chart.diameter_bound())
    tol = 1e-11 * scale

    r = _closure_residual(Fc, accel, z, shift, n_steps)
    if r is None:
        raise NumericalError("periodic polish: seed trajectory blew up")
    for it in range(24):
        rn = float(np.linalg.norm(r))
        if rn <= tol:
            break
        steps = np.array([1e-7 * scale, 1e-7 * scale, 1e-7, 1e-7 * span0])
        jac = np.empty((4, 4))
        for j in range(4):
            zp = z.copy()
            zp[j] += steps[j]
            rp = _closure_residual(Fc, accel, zp, shift, n_steps)
            if rp is None:
                raise NumericalError("periodic polish: Jacobian probe blew up")
            jac[:, j] = (rp - r) / steps[j]
        delta = np.linalg.lstsq(jac, -r, rcond=None)[0]
        for damp in range(6):
            zn = z + delta
            rn_new = _closure_residual(Fc, accel, zn, shift, n_steps)
            if rn_new is not None and np.linalg.norm(rn_new) < rn:
                z, r = zn, rn_new
                break
            delta *= 0.5
        else:
            break
    if float(np.linalg.norm(r)) > 1e3 * tol:
        raise NumericalError(
            f"periodic polish stalled at closure residual {np.linalg.norm(r):.2e}")

    u0 = np.array([np.cos(z[2]), np.sin(z[2])])
    u0 = u0 / float(Fc.h_norm(z[:2], u0))
    fine = max(4 * n_steps, 2048)
    orbit = integrate_pregeodesic(Fc, z[:2], u0, z[3], n_steps=fine,
                                  store_every=1)
    orbit = replace(orbit, closed=True)
    orbit = _to_energy_parametrization(S, orbit, lvl)
    worst = float(np.max(eleq_residual(S, orbit)))
    if worst > ELEQ_TOL:
        raise NumericalError(
            f"periodic orbit violates the magnetic equation: residual {worst:.2e}")
    return PeriodicResult(orbit, float(Fc.length(orbit)), loop.grad_norm,
                          True, tuple(int(w) for w in np.asarray(winding)))
