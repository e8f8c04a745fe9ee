"""Pre-Randers metrics, stationary spacetimes, and the maps between them.

A pre-Randers metric is F(v) = sqrt(h(v,v)) + omega(v) with Riemannian h and
an unrestricted one-form omega, so F may be negative on some directions. A
stationary spacetime here is the product R x S with metric
g = -beta dt^2 + dt (x) omega + omega (x) dt + g0, Lorentz exactly when
g0(v,v) + omega(v)^2/beta > 0 for v != 0. The Fermat map sends the spacetime
data to the pre-Randers metric whose pre-geodesics are the spatial projections
of lightlike geodesics; a sign-flip map relates the same data to a Riemannian
metric on R x S with the same Killing field. Changing the splitting slice by
t -> t + f(x) shifts F by -df (an almost isometry).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import RegularGridInterpolator

from .errors import ConversionError, MetricError, ValidationError
from .fields import (ChartManifold, Curve, OneFormField, ScalarField,
                     SymTensorField, constant_scalar)

# Curl residual threshold for "closed form" judgments, scaled by field size.
EPS_CLOSED = 1e-6
# Points per fundamental loop for period integrals of one-forms.
PERIOD_QUAD_POINTS = 1024
# Gauss-Legendre nodes/weights on [0, 1], used for all segment quadrature.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)
GAUSS_T = 0.5 * (_GL_NODES + 1.0)
GAUSS_W = 0.5 * _GL_WEIGHTS


def _sample_points(chart: ChartManifold, n_side=12, n_random=64, seed=7):
    """Deterministic probe points: a coarse grid plus seeded uniform draws."""
    axes = [np.linspace(chart.lo[a], chart.hi[a], n_side, endpoint=False)
            + 0.5 * chart.extent[a] / n_side for a in range(2)]
    gx, gy = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    rng = np.random.default_rng(seed)
    rand = chart.lo + rng.random((n_random, 2)) * chart.extent
    return np.vstack([grid, rand])


def _sample_directions(n=16):
    ang = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


# ---------------------------------------------------------------------------
# Metric types
# ---------------------------------------------------------------------------

@dataclass
class PreRandersMetric:
    """F(v) = sqrt(h(v,v)) + omega(v); h Riemannian, omega unrestricted."""

    h: SymTensorField
    omega: OneFormField

    def __post_init__(self):
        if self.h.chart is not self.omega.chart:
            raise ValidationError("h and omega must share one chart")
        pts = _sample_points(self.chart)
        lam = self.h.min_eigenvalue(pts)
        if np.any(lam <= 0):
            bad = pts[int(np.argmin(lam))]
            raise MetricError(f"h not positive definite near {bad}")

    @property
    def chart(self) -> ChartManifold:
        return self.h.chart

    def F(self, points, vectors):
        """Evaluate F, broadcasting over leading shape; F(0) = 0."""
        q = self.h.quad(points, vectors)
        if np.any(q < -1e-30):
            raise MetricError("h(v,v) negative; metric degenerate")
        return np.sqrt(np.maximum(q, 0.0)) + self.omega.pair(points, vectors)

    def h_norm(self, points, vectors):
        return np.sqrt(np.maximum(self.h.quad(points, vectors), 0.0))

    def omega_h_norm(self, points):
        """Pointwise h-dual norm of omega: sup of omega(v) over h-unit v."""
        m = self.h(points)
        w = self.omega(points)
        hinv = np.linalg.inv(m)
        return np.sqrt(np.einsum("...ij,...i,...j->...", hinv, w, w))

    def segment_quadrature(self, starts, ends, integrand="F"):
        """Integral of F (or 'h' or 'omega' part) along straight segments.

        Segment displacement is the minimal winding-aware representative of
        end - start; Gauss points are wrapped before field evaluation.
        """
        starts = np.asarray(starts, dtype=float)
        vec, _ = self.chart.wrap_displacement(starts, np.asarray(ends, dtype=float))
        return self.displacement_quadrature(starts, vec, integrand)

    def displacement_quadrature(self, starts, vec, integrand="F"):
        starts = np.asarray(starts, dtype=float)
        vec = np.asarray(vec, dtype=float)
        total = 0.0
        for t, w in zip(GAUSS_T, GAUSS_W):
            p = starts + t * vec
            if integrand == "F":
                val = self.F(p, vec)
            elif integrand == "h":
                val = self.h_norm(p, vec)
            elif integrand == "omega":
                val = self.omega.pair(p, vec)
            else:
                raise ValidationError(f"unknown integrand {integrand!r}")
            total = total + w * val
        return total

    def length(self, curve: Curve, integrand="F"):
        """Curve length by per-segment Gauss quadrature on the chords."""
        disp = curve.segment_displacements()
        return float(np.sum(self.displacement_quadrature(curve.points[:-1], disp, integrand)))

    def cumulative_length(self, curve: Curve, integrand="F"):
        disp = curve.segment_displacements()
        seg = self.displacement_quadrature(curve.points[:-1], disp, integrand)
        return np.concatenate([[0.0], np.cumsum(seg)])


@dataclass
class SOMSpacetime:
    """Stationary splitting data (beta, omega, g0) on R x S."""

    beta: ScalarField
    omega: OneFormField
    g0: SymTensorField

    def __post_init__(self):
        chart = self.chart
        if self.omega.chart is not chart or self.g0.chart is not chart:
            raise ValidationError("beta, omega, g0 must share one chart")
        pts = _sample_points(chart)
        b = self.beta(pts)
        if np.any(b <= 0):
            raise ConversionError(f"beta not positive near {pts[int(np.argmin(b))]}")
        dirs = _sample_directions()
        q = self.g0.quad(pts[:, None, :], dirs) + self.omega.pair(pts[:, None, :], dirs) ** 2 / b[:, None]
        if np.any(q <= 0):
            i, j = np.unravel_index(int(np.argmin(q)), q.shape)
            raise ConversionError(
                f"Lorentz condition fails at {pts[i]} direction {dirs[j]}")

    @property
    def chart(self) -> ChartManifold:
        return self.beta.chart

    def g_eval(self, points, tau, vectors):
        """Quadratic form g((tau, v), (tau, v)) of the spacetime metric."""
        tau = np.asarray(tau, dtype=float)
        b = self.beta(points)
        return (-b * tau ** 2 + 2.0 * tau * self.omega.pair(points, vectors)
                + self.g0.quad(points, vectors))


@dataclass
class KillingSubmersionMetric:
    """Riemannian counterpart data (beta_bar, omega_bar, g0_bar) on R x S."""

    beta_bar: ScalarField
    omega_bar: OneFormField
    g0_bar: SymTensorField

    def __post_init__(self):
        chart = self.chart
        if self.omega_bar.chart is not chart or self.g0_bar.chart is not chart:
            raise ValidationError("beta_bar, omega_bar, g0_bar must share one chart")
        pts = _sample_points(chart)
        b = self.beta_bar(pts)
        if np.any(b <= 0):
            raise ConversionError("beta_bar must be positive")
        dirs = _sample_directions()
        q = self.g0_bar.quad(pts[:, None, :], dirs) - self.omega_bar.pair(pts[:, None, :], dirs) ** 2 / b[:, None]
        if np.any(q <= 0):
            i, j = np.unravel_index(int(np.argmin(q)), q.shape)
            raise ConversionError(
                f"Riemannian condition fails at {pts[i]} direction {dirs[j]}")

    @property
    def chart(self) -> ChartManifold:
        return self.beta_bar.chart


# ---------------------------------------------------------------------------
# Derived-field helpers
# ---------------------------------------------------------------------------

def _derived_tensor(chart, func, name) -> SymTensorField:
    return SymTensorField(chart, func, name=name)


def _derived_oneform(chart, func, name) -> OneFormField:
    return OneFormField(chart, func, name=name)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def eval_F(F: PreRandersMetric, x, v) -> float:
    return float(F.F(np.asarray(x, float), np.asarray(v, float)))


def fermat_from_som(M: SOMSpacetime) -> PreRandersMetric:
    """Arrival-time (Fermat) metric of the splitting:
    F(v) = omega(v)/beta + sqrt(omega(v)^2/beta^2 + g0(v,v)/beta),
    in pre-Randers form with h = omega(x)omega/beta^2 + g0/beta."""
    beta, omega, g0 = M.beta, M.omega, M.g0

    def h_func(p):
        b = beta(p)
        w = omega(p)
        m = g0(p)
        return (np.einsum("...i,...j->...ij", w, w) / b[..., None, None] ** 2
                + m / b[..., None, None])

    def omega_func(p):
        return omega(p) / beta(p)[..., None]

    h = _derived_tensor(M.chart, h_func, "fermat h")
    om = _derived_oneform(M.chart, omega_func, "fermat one-form")
    return PreRandersMetric(h, om)


def som_from_pre_randers(F: PreRandersMetric) -> SOMSpacetime:
    """Canonical spacetime with beta = 1, same omega, g0 = h - omega(x)omega."""
    h, omega = F.h, F.omega

    def g0_func(p):
        w = omega(p)
        return h(p) - np.einsum("...i,...j->...ij", w, w)

    g0 = _derived_tensor(F.chart, g0_func, "g0 = h - omega^2")
    return SOMSpacetime(constant_scalar(F.chart, 1.0, "beta=1"), omega, g0)


def riemannianize(M: SOMSpacetime) -> KillingSubmersionMetric:
    """Sign-flip map to the Riemannian companion:
    beta_bar = beta, omega_bar = -omega, g0_bar = g0 + (2/beta) omega(x)omega."""
    beta, omega, g0 = M.beta, M.omega, M.g0

    def g0_bar_func(p):
        w = omega(p)
        return g0(p) + 2.0 * np.einsum("...i,...j->...ij", w, w) / beta(p)[..., None, None]

    def omega_bar_func(p):
        return -omega(p)

    return KillingSubmersionMetric(
        beta,
        _derived_oneform(M.chart, omega_bar_func, "-omega"),
        _derived_tensor(M.chart, g0_bar_func, "g0 + 2 omega^2/beta"))


def lorentzianize(R: KillingSubmersionMetric) -> SOMSpacetime:
    """Inverse of riemannianize."""
    beta, omega_bar, g0_bar = R.beta_bar, R.omega_bar, R.g0_bar

    def g0_func(p):
        w = omega_bar(p)
        return g0_bar(p) - 2.0 * np.einsum("...i,...j->...ij", w, w) / beta(p)[..., None, None]

    def omega_func(p):
        return -omega_bar(p)

    return SOMSpacetime(
        beta,
        _derived_oneform(R.chart, omega_func, "-omega_bar"),
        _derived_tensor(R.chart, g0_func, "g0_bar - 2 omega_bar^2/beta_bar"))


def fermat_of_submersion(R: KillingSubmersionMetric) -> PreRandersMetric:
    """Fermat metric straight from the Riemannian data:
    F(v) = -omega_bar(v)/beta_bar + sqrt(g0_bar(v,v)/beta_bar - omega_bar(v)^2/beta_bar^2),
    i.e. pre-Randers with h = g0_bar/beta_bar - omega_bar(x)omega_bar/beta_bar^2."""
    beta, omega_bar, g0_bar = R.beta_bar, R.omega_bar, R.g0_bar

    def h_func(p):
        b = beta(p)
        w = omega_bar(p)
        return (g0_bar(p) / b[..., None, None]
                - np.einsum("...i,...j->...ij", w, w) / b[..., None, None] ** 2)

    def omega_func(p):
        return -omega_bar(p) / beta(p)[..., None]

    return PreRandersMetric(
        _derived_tensor(R.chart, h_func, "submersion fermat h"),
        _derived_oneform(R.chart, omega_func, "submersion fermat one-form"))


def oneform_periods(omega: OneFormField, n=PERIOD_QUAD_POINTS):
    """Loop integrals of a one-form along the axis-aligned fundamental loops
    through the chart midpoint; None on non-periodic axes."""
    chart = omega.chart
    mid = 0.5 * (chart.lo + chart.hi)
    out = []
    for a in range(2):
        if not chart.periodic[a]:
            out.append(None)
            continue
        t = np.linspace(0.0, 1.0, n, endpoint=False) + 0.5 / n
        pts = np.tile(mid, (n, 1))
        pts[:, a] = chart.lo[a] + t * chart.extent[a]
        comps = omega(pts)
        out.append(float(np.sum(comps[:, a]) * chart.extent[a] / n))
    return out


def exact_oneform_from_scalar(f: ScalarField, name="df") -> OneFormField:
    def func(p):
        d = f.derivative(p)  # (2, ...)
        return np.stack([d[0], d[1]], axis=-1)

    return _derived_oneform(f.chart, func, name)


def change_splitting(M: SOMSpacetime, f: ScalarField) -> SOMSpacetime:
    """Slice change t -> t + f(x): omega^f = omega - beta df,
    g0^f = g0 + df(x)omega + omega(x)df - beta df(x)df; Fermat metric drops by df.

    On periodic axes df must have zero periods (f single-valued on S)."""
    if f.chart is not M.chart:
        raise ValidationError("f must live on the spacetime chart")
    df = exact_oneform_from_scalar(f)
    periods = oneform_periods(df)
    scale = max(float(np.max(np.abs(df(_sample_points(M.chart))))), 1.0)
    for a, per in enumerate(periods):
        if per is not None and abs(per) > EPS_CLOSED * scale * M.chart.extent[a]:
            raise ValidationError(
                f"f has nonzero period {per:.3e} on periodic axis {a}; not a function on S")
    beta, omega, g0 = M.beta, M.omega, M.g0

    def omega_f(p):
        return omega(p) - beta(p)[..., None] * df(p)

    def g0_f(p):
        w = omega(p)
        d = df(p)
        sym = np.einsum("...i,...j->...ij", d, w)
        sym = sym + np.swapaxes(sym, -1, -2)
        return g0(p) + sym - beta(p)[..., None, None] * np.einsum("...i,...j->...ij", d, d)

    return SOMSpacetime(beta,
                        _derived_oneform(M.chart, omega_f, "omega - beta df"),
                        _derived_tensor(M.chart, g0_f, "g0 shifted by df"))


@dataclass
class AlmostIsometryResult:
    """Outcome of the almost-isometry test between two pre-Randers metrics."""

    ok: bool
    f: ScalarField | None = None
    reason: str = ""
    residual: float = 0.0


def almost_isometry_residual(F: PreRandersMetric, F2: PreRandersMetric,
                             n_grid=257) -> AlmostIsometryResult:
    """Search for f with F = F2 + df.

    Necessary condition checked first: the h-parts agree (the difference of
    the metrics is linear in v). Then theta = omega - omega2 must be closed
    (finite-difference curl below EPS_CLOSED) with zero periods on periodic
    axes; on success theta is integrated along grid paths into f, normalized
    to f = 0 at the low corner.
    """
    chart = F.chart
    if F2.chart is not chart:
        raise ValidationError("metrics must share one chart")
    pts = _sample_points(chart)
    dh = np.max(np.abs(F.h(pts) - F2.h(pts)))
    h_scale = max(float(np.max(np.abs(F.h(pts)))), 1.0)
    if dh > 1e-10 * h_scale:
        return AlmostIsometryResult(False, None, "h parts differ (difference not a one-form)", float(dh))

    def theta_func(p):
        return F.omega(p) - F2.omega(p)

    theta = _derived_oneform(chart, theta_func, "omega difference")
    th_scale = max(float(np.max(np.abs(theta(pts)))), 1e-12)

    curl = np.max(np.abs(theta.curl(pts)))
    if curl > EPS_CLOSED * max(th_scale, 1.0):
        return AlmostIsometryResult(False, None, "difference form not closed", float(curl))

    for a, per in enumerate(oneform_periods(theta)):
        if per is not None and abs(per) > EPS_CLOSED * max(th_scale, 1.0) * chart.extent[a]:
            return AlmostIsometryResult(
                False, None, f"nonzero period on periodic axis {a}", float(per))

    # Integrate along the x-edge then up each column; Simpson on a fine grid.
    xs = np.linspace(chart.lo[0], chart.hi[0], n_grid)
    ys = np.linspace(chart.lo[1], chart.hi[1], n_grid)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid_pts = np.stack([gx, gy], axis=-1)
    comps = theta(grid_pts)  # (nx, ny, 2)
    base_row = cumulative_simpson(comps[:, 0, 0], x=xs, initial=0.0)
    columns = cumulative_simpson(comps[:, :, 1], x=ys, axis=1, initial=0.0)
    fvals = base_row[:, None] + columns

    interp = RegularGridInterpolator((xs, ys), fvals, method="linear",
                                     bounds_error=False, fill_value=None)

    def f_func(p):
        return np.asarray(interp(p.reshape(-1, 2)), dtype=float).reshape(p.shape[:-1])

    f = ScalarField(chart, f_func, name="almost-isometry potential")
    return AlmostIsometryResult(True, f, "", float(curl))
