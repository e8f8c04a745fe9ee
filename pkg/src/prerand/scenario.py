"""Scenario files: one chart, one metric section, numeric knobs, task hints.

A scenario TOML has a [manifold] section, exactly one metric section among
[pre_randers], [som], [killing_submersion] and [magnetic], an optional
[numerics] section (grid, stencil, seed) and an optional [task] section of
point/direction defaults for the subcommands. Loading compiles the component
expressions onto the chart, derives the pre-Randers view of whatever was
given, and keeps the fully resolved key/value map so outputs can embed it.
Validation errors carry file:line anchors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                      # python < 3.11
    import tomli as tomllib

from .errors import ValidationError
from .fields import (ChartManifold, cylinder, oneform_from_expressions,
                     plane, scalar_from_expression, tensor_from_expressions,
                     torus)
from .metrics import (KillingSubmersionMetric, PreRandersMetric, SOMSpacetime,
                      fermat_from_som, fermat_of_submersion)
from .magnetic import MagneticStructure, fc_metric

METRIC_SECTIONS = ("pre_randers", "som", "killing_submersion", "magnetic")
TOP_SECTIONS = ("name", "description", "manifold", "numerics", "task") + METRIC_SECTIONS
TASK_KEYS = ("from", "to", "dir", "span", "winding", "point", "circle")
DEFAULT_GRID = 64
DEFAULT_STENCIL = 16
DEFAULT_SEED = 0
DEFAULT_ENERGY = 0.5


def builtin_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def list_builtins() -> list[str]:
    return sorted(p.stem for p in builtin_dir().glob("*.toml"))


@dataclass
class Scenario:
    name: str
    description: str
    chart: ChartManifold
    kind: str                         # which metric section was present
    metric: PreRandersMetric          # pre-Randers view, always derived
    som: SOMSpacetime | None
    submersion: KillingSubmersionMetric | None
    magnetic: MagneticStructure | None
    energy: float | None
    grid: int
    stencil: int
    seed: int
    task: dict
    resolved: dict = field(default_factory=dict)
    source: str = ""

    def header_lines(self, extra: dict | None = None) -> list[str]:
        """Sorted '# key = value' lines with the full resolved config."""
        merged = dict(self.resolved)
        if extra:
            merged.update(extra)
        return [f"# {k} = {merged[k]}" for k in sorted(merged)]


def _line_of(text: str, token: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if token in line:
            return i
    return 1


def _anchor(path, text, token) -> str:
    return f"{path}:{_line_of(text, token)}"


def _expr_list(section, key, anchor, n=2):
    vals = section.get(key)
    if (not isinstance(vals, list) or len(vals) != n
            or not all(isinstance(v, (str, int, float)) for v in vals)):
        raise ValidationError(f"{anchor}: {key} must be a list of {n} expressions")
    return [str(v) for v in vals]


def _expr_matrix(section, key, anchor):
    rows = section.get(key)
    if (not isinstance(rows, list) or len(rows) != 2
            or any(not isinstance(r, list) or len(r) != 2 for r in rows)):
        raise ValidationError(f"{anchor}: {key} must be a 2x2 nest of expressions")
    return [[str(v) for v in r] for r in rows]


def _build_chart(man, anchor) -> ChartManifold:
    kind = man.get("kind")
    bounds = man.get("bounds", [[0.0, 1.0], [0.0, 1.0]])
    if kind == "plane":
        return plane(bounds)
    if kind == "cylinder":
        return cylinder(bounds, int(man.get("periodic_axis", 0)))
    if kind == "torus":
        return torus(bounds)
    raise ValidationError(f"{anchor}: manifold kind must be plane, cylinder or torus")


def resolve_path(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.suffix == ".toml" and p.exists():
        return p
    cand = builtin_dir() / f"{name_or_path}.toml"
    if cand.exists():
        return cand
    if p.exists():
        return p
    raise ValidationError(
        f"no scenario {name_or_path!r}: not a file, and builtins are "
        + ", ".join(list_builtins()))


def load_scenario(name_or_path, grid=None, stencil=None, seed=None) -> Scenario:
    """Parse, validate and compile a scenario; knob arguments override."""
    path = resolve_path(name_or_path)
    text = path.read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from exc

    for key in data:
        if key not in TOP_SECTIONS:
            raise ValidationError(
                f"{_anchor(path, text, key)}: unknown section or key {key!r}")
    present = [s for s in METRIC_SECTIONS if s in data]
    if len(present) == 0:
        raise ValidationError(
            f"{path}:1: exactly one metric section required "
            f"(none of {', '.join(METRIC_SECTIONS)} present)")
    if len(present) > 1:
        raise ValidationError(
            f"{_anchor(path, text, '[' + present[1] + ']')}: exactly one metric "
            f"section allowed, found {present}")
    if "manifold" not in data:
        raise ValidationError(f"{path}:1: [manifold] section required")

    man_anchor = _anchor(path, text, "[manifold]")
    chart = _build_chart(data["manifold"], man_anchor)

    kind = present[0]
    sec = data[kind]
    sec_anchor = _anchor(path, text, f"[{kind}]")
    for key in sec:
        allowed = {"pre_randers": ("h", "omega"),
                   "som": ("beta", "omega", "g0"),
                   "killing_submersion": ("beta", "omega", "g0"),
                   "magnetic": ("g", "B", "potential", "energy")}[kind]
        if key not in allowed:
            raise ValidationError(
                f"{_anchor(path, text, key)}: key {key!r} not allowed in [{kind}]")

    som = sub = mag = None
    energy = None
    if kind == "pre_randers":
        h = tensor_from_expressions(chart, _expr_matrix(sec, "h", sec_anchor), "h")
        om = oneform_from_expressions(chart, _expr_list(sec, "omega", sec_anchor), "omega")
        metric = PreRandersMetric(h, om)
    elif kind in ("som", "killing_submersion"):
        if "beta" not in sec or "omega" not in sec or "g0" not in sec:
            raise ValidationError(f"{sec_anchor}: [{kind}] needs beta, omega and g0")
        beta = scalar_from_expression(chart, str(sec["beta"]), "beta")
        om = oneform_from_expressions(chart, _expr_list(sec, "omega", sec_anchor), "omega")
        g0 = tensor_from_expressions(chart, _expr_matrix(sec, "g0", sec_anchor), "g0")
        if kind == "som":
            som = SOMSpacetime(beta, om, g0)
            metric = fermat_from_som(som)
        else:
            sub = KillingSubmersionMetric(beta, om, g0)
            metric = fermat_of_submersion(sub)
    else:
        if "g" not in sec or "B" not in sec:
            raise ValidationError(f"{sec_anchor}: [magnetic] needs g and B")
        g = tensor_from_expressions(chart, _expr_matrix(sec, "g", sec_anchor), "g")
        B = scalar_from_expression(chart, str(sec["B"]), "B")
        pot = None
        if "potential" in sec:
            pot = oneform_from_expressions(
                chart, _expr_list(sec, "potential", sec_anchor), "potential")
        mag = MagneticStructure(g, B, pot)
        energy = float(sec.get("energy", DEFAULT_ENERGY))
        if not energy > 0:
            raise ValidationError(f"{sec_anchor}: energy must be positive")
        metric = fc_metric(mag, energy)

    num = data.get("numerics", {})
    for key in num:
        if key not in ("grid", "stencil", "seed"):
            raise ValidationError(
                f"{_anchor(path, text, key)}: unknown numerics key {key!r}")
    grid_v = int(grid if grid is not None else num.get("grid", DEFAULT_GRID))
    stencil_v = int(stencil if stencil is not None else num.get("stencil", DEFAULT_STENCIL))
    seed_v = int(seed if seed is not None else num.get("seed", DEFAULT_SEED))
    if grid_v < 4:
        raise ValidationError(f"{_anchor(path, text, 'grid')}: grid must be >= 4")
    if stencil_v not in (8, 16, 32):
        raise ValidationError(
            f"{_anchor(path, text, 'stencil')}: stencil must be 8, 16 or 32")

    task = data.get("task", {})
    for key in task:
        if key not in TASK_KEYS:
            raise ValidationError(
                f"{_anchor(path, text, key)}: unknown task key {key!r}")

    resolved = {
        "scenario": data.get("name", path.stem),
        "manifold.kind": data["manifold"].get("kind"),
        "manifold.bounds": data["manifold"].get("bounds", [[0.0, 1.0], [0.0, 1.0]]),
        "metric.kind": kind,
        "numerics.grid": grid_v,
        "numerics.stencil": stencil_v,
        "numerics.seed": seed_v,
    }
    if data["manifold"].get("kind") == "cylinder":
        resolved["manifold.periodic_axis"] = int(data["manifold"].get("periodic_axis", 0))
    for key, val in sec.items():
        resolved[f"{kind}.{key}"] = val
    if kind == "magnetic":
        resolved["magnetic.energy"] = energy
    for key, val in task.items():
        resolved[f"task.{key}"] = val

    return Scenario(
        name=data.get("name", path.stem),
        description=data.get("description", ""),
        chart=chart, kind=kind, metric=metric, som=som, submersion=sub,
        magnetic=mag, energy=energy, grid=grid_v, stencil=stencil_v,
        seed=seed_v, task=task, resolved=resolved, source=str(path))
