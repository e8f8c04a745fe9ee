"""Coordinate charts, periodic topologies, and evaluable fields.

A ChartManifold is a rectangular 2-D chart whose axes may be periodically
identified (plane, cylinder, flat torus). Scalar fields, one-forms and
symmetric 2-tensors are vectorized evaluators over chart coordinates, with
optional analytic derivatives and a central finite-difference fallback.
Small closed-form expression strings (config files) compile onto numpy.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, FieldError, ValidationError

# Relative finite-difference step; per axis the step is REL_FD_STEP * extent.
REL_FD_STEP = 1e-5


# ---------------------------------------------------------------------------
# Chart
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartManifold:
    """Rectangular 2-D chart with optional periodic identifications."""

    bounds: np.ndarray          # shape (2, 2): [[lo, hi], [lo, hi]]
    periodic: np.ndarray        # shape (2,), bool

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        p = np.asarray(self.periodic, dtype=bool)
        if b.shape != (2, 2) or p.shape != (2,):
            raise ValidationError("chart needs bounds shape (2,2) and periodic shape (2,)")
        if not np.all(b[:, 1] > b[:, 0]):
            raise ValidationError("chart bounds must have positive extent on every axis")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "periodic", p)

    @property
    def lo(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def hi(self) -> np.ndarray:
        return self.bounds[:, 1]

    @property
    def extent(self) -> np.ndarray:
        return self.bounds[:, 1] - self.bounds[:, 0]

    @property
    def dim(self) -> int:
        return 2

    def wrap(self, points):
        """Wrap periodic axes into [lo, hi); non-periodic axes pass through."""
        pts = np.array(points, dtype=float, copy=True)
        for a in range(2):
            if self.periodic[a]:
                w = self.extent[a]
                pts[..., a] = self.lo[a] + np.mod(pts[..., a] - self.lo[a], w)
        return pts

    def require_inside(self, points):
        """Raise DomainError for points outside a non-periodic axis range."""
        pts = np.asarray(points, dtype=float)
        for a in range(2):
            if not self.periodic[a]:
                x = pts[..., a]
                tol = 1e-12 * self.extent[a]
                if np.any(x < self.lo[a] - tol) or np.any(x > self.hi[a] + tol):
                    raise DomainError(f"coordinate outside chart on non-periodic axis {a}")

    def wrap_displacement(self, a, b):
        """Minimal displacement b - a plus integer winding per periodic axis.

        The winding counts seam crossings of the minimal straight segment,
        positive when crossing in the increasing direction: moving from 0.9
        to 0.1 on a unit circle gives displacement +0.2 and winding +1.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        self.require_inside(a)
        self.require_inside(b)
        raw = b - a
        vec = raw.copy()
        winding = np.zeros(raw.shape, dtype=int)
        for ax in range(2):
            if self.periodic[ax]:
                w = self.extent[ax]
                m = raw[..., ax] - w * np.round(raw[..., ax] / w)
                vec[..., ax] = m
                end = a[..., ax] + m
                wrapped = self.lo[ax] + np.mod(end - self.lo[ax], w)
                winding[..., ax] = np.round((end - wrapped) / w).astype(int)
        return vec, winding

    def diameter_bound(self) -> float:
        """Euclidean-coordinate diameter of the chart (periodic axes halved)."""
        span = np.where(self.periodic, self.extent / 2.0, self.extent)
        return float(np.hypot(span[0], span[1]))


def plane(bounds=((0.0, 1.0), (0.0, 1.0))) -> ChartManifold:
    return ChartManifold(np.asarray(bounds, float), np.array([False, False]))


def cylinder(bounds=((0.0, 1.0), (0.0, 1.0)), periodic_axis: int = 0) -> ChartManifold:
    p = np.array([False, False])
    p[periodic_axis] = True
    return ChartManifold(np.asarray(bounds, float), p)


def torus(bounds=((0.0, 1.0), (0.0, 1.0))) -> ChartManifold:
    return ChartManifold(np.asarray(bounds, float), np.array([True, True]))


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

def _fd_steps(chart: ChartManifold) -> np.ndarray:
    return REL_FD_STEP * chart.extent


class _BaseField:
    """Deterministic, total evaluator on a chart with an optional analytic jet.

    `func` maps points of shape (..., 2) to values; `deriv`, when given, maps
    points to the stacked partial derivatives along axis 0 and 1. Without
    `deriv`, central finite differences with a wrap-aware step substitute and
    `uses_fd_derivatives` is flagged.
    """

    value_ndim = 0  # trailing dims of a single value

    def __init__(self, chart: ChartManifold, func, deriv=None, name: str = ""):
        self.chart = chart
        self._func = func
        self._deriv = deriv
        self.name = name
        self.uses_fd_derivatives = deriv is None

    def __call__(self, points):
        pts = self.chart.wrap(points)
        val = np.asarray(self._func(pts), dtype=float)
        if not np.all(np.isfinite(val)):
            bad = np.argwhere(~np.isfinite(np.atleast_1d(val)))
            raise FieldError(f"field {self.name or '<anon>'} non-finite near sample {bad[:1]}")
        return val

    def derivative(self, points):
        """Partial derivatives, stacked on a leading axis of size 2."""
        pts = np.asarray(points, dtype=float)
        if self._deriv is not None:
            return np.asarray(self._deriv(self.chart.wrap(pts)), dtype=float)
        steps = _fd_steps(self.chart)
        out = []
        for a in range(2):
            e = np.zeros(2)
            e[a] = steps[a]
            out.append((self(pts + e) - self(pts - e)) / (2.0 * steps[a]))
        return np.stack(out, axis=0)


class ScalarField(_BaseField):
    value_ndim = 0


class OneFormField(_BaseField):
    """Covector components (..., 2)."""

    value_ndim = 1

    def pair(self, points, vectors):
        """omega_x(v), broadcasting over leading shape."""
        comps = self(points)
        v = np.asarray(vectors, dtype=float)
        return np.einsum("...i,...i->...", comps, v)

    def curl(self, points):
        """d(omega) density: d_x(omega_y) - d_y(omega_x)."""
        d = self.derivative(points)  # (2, ..., 2)
        return d[0][..., 1] - d[1][..., 0]


class SymTensorField(_BaseField):
    """Symmetric matrix components (..., 2, 2)."""

    value_ndim = 2

    def __call__(self, points):
        m = super().__call__(points)
        return 0.5 * (m + np.swapaxes(m, -1, -2))  # enforce exact symmetry

    def quad(self, points, vectors):
        """v^T M(x) v."""
        m = self(points)
        v = np.asarray(vectors, dtype=float)
        return np.einsum("...ij,...i,...j->...", m, v, v)

    def apply(self, points, vectors):
        m = self(points)
        v = np.asarray(vectors, dtype=float)
        return np.einsum("...ij,...j->...i", m, v)

    def min_eigenvalue(self, points):
        m = self(points)
        tr = m[..., 0, 0] + m[..., 1, 1]
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        disc = np.sqrt(np.maximum((tr / 2.0) ** 2 - det, 0.0))
        return tr / 2.0 - disc


def constant_scalar(chart, value, name="") -> ScalarField:
    value = float(value)

    def f(p):
        return np.full(p.shape[:-1], value)

    def d(p):
        return np.zeros((2,) + p.shape[:-1])

    return ScalarField(chart, f, d, name or f"const {value}")


def constant_oneform(chart, comps, name="") -> OneFormField:
    comps = np.asarray(comps, dtype=float)

    def f(p):
        return np.broadcast_to(comps, p.shape[:-1] + (2,)).copy()

    def d(p):
        return np.zeros((2,) + p.shape[:-1] + (2,))

    return OneFormField(chart, f, d, name or "const one-form")


def constant_tensor(chart, mat, name="") -> SymTensorField:
    mat = np.asarray(mat, dtype=float)

    def f(p):
        return np.broadcast_to(mat, p.shape[:-1] + (2, 2)).copy()

    def d(p):
        return np.zeros((2,) + p.shape[:-1] + (2, 2))

    return SymTensorField(chart, f, d, name or "const tensor")


def finite_diff_jet(fld: _BaseField, x):
    """Value and first derivatives at x (analytic derivatives when supplied)."""
    x = np.asarray(x, dtype=float)
    return fld(x), fld.derivative(x)


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

@dataclass
class Curve:
    """Sampled curve: strictly increasing parameters, wrapped points,
    velocities, and an integer winding vector for periodic axes."""

    s: np.ndarray               # (n,)
    points: np.ndarray          # (n, 2), wrapped into the chart
    velocities: np.ndarray      # (n, 2)
    chart: ChartManifold
    winding: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=int))
    closed: bool = False

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.winding = np.asarray(self.winding, dtype=int)
        if self.s.ndim != 1 or np.any(np.diff(self.s) <= 0):
            raise ValidationError("curve parameters must be strictly increasing")

    @property
    def n(self) -> int:
        return len(self.s)

    def segment_displacements(self) -> np.ndarray:
        """Per-segment minimal displacement (n-1, 2), winding-aware."""
        vec, _ = self.chart.wrap_displacement(self.points[:-1], self.points[1:])
        return vec

    def points_unwrapped(self) -> np.ndarray:
        """Continuous coordinates accumulated from per-segment displacements."""
        disp = self.segment_displacements()
        out = np.empty_like(self.points)
        out[0] = self.points[0]
        out[1:] = self.points[0] + np.cumsum(disp, axis=0)
        return out

    def reversed(self) -> "Curve":
        s = self.s[-1] - self.s[::-1]
        return Curve(s, self.points[::-1].copy(), -self.velocities[::-1],
                     self.chart, -self.winding, self.closed)


def curve_from_nodes(chart: ChartManifold, nodes, closed=False) -> Curve:
    """Polygonal curve through wrapped nodes, parametrized by chord length."""
    pts = chart.wrap(np.asarray(nodes, dtype=float))
    if closed and not np.allclose(pts[0], pts[-1]):
        pts = np.vstack([pts, pts[:1]])
    vec, wind = chart.wrap_displacement(pts[:-1], pts[1:])
    seg = np.linalg.norm(vec, axis=-1)
    seg = np.where(seg > 0, seg, 1e-300)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    vel = np.vstack([vec / seg[:, None], vec[-1:] / seg[-1]])
    return Curve(s, pts, vel, chart, wind.sum(axis=0), closed)


# ---------------------------------------------------------------------------
# Expression fields
# ---------------------------------------------------------------------------

_ALLOWED_CALLS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
_ALLOWED_NAMES = {"pi": math.pi, "e": math.e}
_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def _check_expr(node: ast.AST, src: str):
    if isinstance(node, ast.Expression):
        _check_expr(node.body, src)
    elif isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        _check_expr(node.left, src)
        _check_expr(node.right, src)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        _check_expr(node.operand, src)
    elif isinstance(node, ast.Call):
        if not (isinstance(node.func, ast.Name) and node.func.id in _ALLOWED_CALLS
                and not node.keywords and len(node.args) == 1):
            raise ValidationError(f"expression {src!r}: only sin/cos/exp/sqrt calls allowed")
        _check_expr(node.args[0], src)
    elif isinstance(node, ast.Name):
        if node.id not in ("x", "y") and node.id not in _ALLOWED_NAMES:
            raise ValidationError(f"expression {src!r}: unknown name {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ValidationError(f"expression {src!r}: only numeric constants allowed")
    else:
        raise ValidationError(f"expression {src!r}: node {type(node).__name__} not allowed")


def compile_expression(src: str):
    """Compile an expression in x, y (operators + - * / ^, sin cos exp sqrt)
    into a vectorized function of points (..., 2)."""
    if not isinstance(src, str):
        src = repr(src)
    text = src.replace("^", "**")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse expression {src!r}: {exc}") from exc
    _check_expr(tree, src)
    code = compile(tree, "<field-expression>", "eval")
    env = dict(_ALLOWED_CALLS)
    env.update(_ALLOWED_NAMES)

    names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
    if not names & {"x", "y"}:
        # variable-free: fold once, evaluate as a fill, derivative is zero
        cval = float(eval(code, {"__builtins__": {}}, dict(env)))

        def f(points):
            pts = np.asarray(points, dtype=float)
            return np.full(pts.shape[:-1], cval)

        f.const = cval
        return f

    def f(points):
        pts = np.asarray(points, dtype=float)
        loc = {"x": pts[..., 0], "y": pts[..., 1]}
        val = eval(code, {"__builtins__": {}}, {**env, **loc})
        return np.broadcast_to(np.asarray(val, dtype=float), pts.shape[:-1]).copy()

    f.const = None
    return f


def _zero_deriv(value_shape):
    def deriv(points):
        pts = np.asarray(points, dtype=float)
        return np.zeros((2,) + pts.shape[:-1] + value_shape)
    return deriv


def scalar_from_expression(chart, src, name="") -> ScalarField:
    f = compile_expression(src)
    deriv = _zero_deriv(()) if f.const is not None else None
    return ScalarField(chart, f, deriv=deriv, name=name or src)


def oneform_from_expressions(chart, comps, name="") -> OneFormField:
    if len(comps) != 2:
        raise ValidationError("one-form needs exactly 2 component expressions")
    fx, fy = (compile_expression(c) for c in comps)

    if fx.const is not None and fy.const is not None:
        vals = np.array([fx.const, fy.const])

        def f(points):
            pts = np.asarray(points, dtype=float)
            return np.broadcast_to(vals, pts.shape[:-1] + (2,)).copy()

        return OneFormField(chart, f, deriv=_zero_deriv((2,)),
                            name=name or "one-form")

    def f(points):
        return np.stack([fx(points), fy(points)], axis=-1)

    return OneFormField(chart, f, name=name or "one-form")


def tensor_from_expressions(chart, rows, name="") -> SymTensorField:
    rows = list(rows)
    if len(rows) != 2 or any(len(r) != 2 for r in rows):
        raise ValidationError("tensor needs a 2x2 nest of component expressions")
    fs = [[compile_expression(c) for c in r] for r in rows]

    if all(fs[i][j].const is not None for i in range(2) for j in range(2)):
        vals = np.array([[fs[i][j].const for j in range(2)] for i in range(2)])

        def f(points):
            pts = np.asarray(points, dtype=float)
            return np.broadcast_to(vals, pts.shape[:-1] + (2, 2)).copy()

        return SymTensorField(chart, f, deriv=_zero_deriv((2, 2)),
                              name=name or "tensor")

    def f(points):
        m = np.stack([np.stack([fs[i][j](points) for j in range(2)], axis=-1)
                      for i in range(2)], axis=-2)
        return m

    return SymTensorField(chart, f, name=name or "tensor")
