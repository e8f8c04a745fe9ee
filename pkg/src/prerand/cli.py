"""Command line front end.

Eight subcommands over a scenario file: convert, distance, geodesic,
classify, weight, cutlocus, magnetic, selftest. Tabular output is CSV with
the fully resolved configuration embedded as '# key = value' comment lines,
so identical config and flags reproduce byte-identical files. classify and
weight print structured text reports instead. Exit codes: 0 on success, 2 on
validation errors, 3 on numeric failures.

Only the standard library is imported at module level; PRERAND_THREADS is
applied to the BLAS/OpenMP environment before numpy loads.
"""

from __future__ import annotations

import argparse
import os
import sys

FLOAT_FMT = "%.12g"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
               "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def _apply_thread_cap():
    cap = os.environ.get("PRERAND_THREADS")
    if cap:
        for var in THREAD_VARS:
            os.environ.setdefault(var, cap)


def _fmt(val) -> str:
    if isinstance(val, float):
        return FLOAT_FMT % val
    return str(val)


def _write_lines(lines, out_path):
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(scenario, command, flags, columns, rows, out_path, extra=None):
    header = dict(flags)
    header["command"] = command
    if extra:
        header.update(extra)
    lines = scenario.header_lines(header)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_lines(lines, out_path)


def _parse_pair(text, flag):
    from .errors import ValidationError
    parts = str(text).split(",")
    if len(parts) != 2:
        raise ValidationError(f"{flag} expects two comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ValidationError(f"{flag}: {exc}") from exc


def _parse_winding(text, flag):
    vals = _parse_pair(text, flag)
    from .errors import ValidationError
    if any(v != int(v) for v in vals):
        raise ValidationError(f"{flag} expects integers, got {text!r}")
    return (int(vals[0]), int(vals[1]))


def _task_pair(args, flag_val, task, key, flag, required=True):
    """Flag value, else the scenario task default, else error."""
    from .errors import ValidationError
    if flag_val is not None:
        return _parse_pair(flag_val, flag)
    if key in task:
        return [float(v) for v in task[key]]
    if required:
        raise ValidationError(f"{flag} required (no task.{key} in the scenario)")
    return None


def _load(args):
    from .scenario import load_scenario
    return load_scenario(args.config, grid=args.grid,
                         stencil=args.stencil, seed=args.seed)


def _graph(sc):
    from .distance import build_graph
    return build_graph(sc.metric, sc.grid, stencil=sc.stencil)


# ---------------------------------------------------------------- convert

_WRAP = "({})".format


def _omega_over(om, beta):
    return [f"({o})/({beta})" for o in om]


def _convert_exprs(kind, sec, target):
    """Textual composition of the component expressions of the target view."""
    from .errors import ValidationError

    def pre_to_som(h, om):
        g0 = [[f"({h[i][j]}) - ({om[i]})*({om[j]})" for j in (0, 1)] for i in (0, 1)]
        return "1", list(om), g0

    def som_to_pre(beta, om, g0):
        h = [[f"({om[i]})*({om[j]})/({beta})^2 + ({g0[i][j]})/({beta})"
              for j in (0, 1)] for i in (0, 1)]
        return h, _omega_over(om, beta)

    def som_to_ks(beta, om, g0):
        g0b = [[f"({g0[i][j]}) + (2/({beta}))*({om[i]})*({om[j]})"
                for j in (0, 1)] for i in (0, 1)]
        return beta, [f"-({o})" for o in om], g0b

    def ks_to_som(beta, om, g0):
        g00 = [[f"({g0[i][j]}) - (2/({beta}))*({om[i]})*({om[j]})"
                for j in (0, 1)] for i in (0, 1)]
        return beta, [f"-({o})" for o in om], g00

    if kind == "pre_randers":
        h, om = sec["h"], sec["omega"]
        som = pre_to_som(h, om)
    elif kind in ("som", "killing_submersion"):
        beta, om, g0 = str(sec["beta"]), sec["omega"], sec["g0"]
        som = (beta, om, g0) if kind == "som" else ks_to_som(beta, om, g0)
    else:
        raise ValidationError(
            "convert from a magnetic scenario needs an explicit potential; "
            "use the fc reduction via the magnetic subcommand instead")

    if target == "som":
        beta, om, g0 = som
        return {"beta": beta, "omega": om, "g0": g0}
    if target == "pre_randers":
        h, omf = som_to_pre(*som)
        return {"h": h, "omega": omf}
    if target == "killing_submersion":
        beta, om, g0 = som_to_ks(*som)
        return {"beta": beta, "omega": om, "g0": g0}
    raise ValidationError(f"unknown convert target {target!r}")


def _toml_value(val):
    if isinstance(val, str):
        return '"%s"' % val
    if isinstance(val, list):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    return _fmt(val)


def cmd_convert(args) -> int:
    import numpy as np
    from .fields import (oneform_from_expressions, scalar_from_expression,
                         tensor_from_expressions)
    from .metrics import (KillingSubmersionMetric, PreRandersMetric,
                          SOMSpacetime, fermat_from_som, fermat_of_submersion)

    sc = _load(args)
    sec = {k.split(".", 1)[1]: v for k, v in sc.resolved.items()
           if k.startswith(sc.kind + ".")}
    exprs = _convert_exprs(sc.kind, sec, args.to)

    # audit: rebuild a metric from the composed expressions and compare F
    chart = sc.chart
    if args.to == "pre_randers":
        F2 = PreRandersMetric(
            tensor_from_expressions(chart, exprs["h"], "h"),
            oneform_from_expressions(chart, exprs["omega"], "omega"))
    else:
        beta = scalar_from_expression(chart, exprs["beta"], "beta")
        om = oneform_from_expressions(chart, exprs["omega"], "omega")
        g0 = tensor_from_expressions(chart, exprs["g0"], "g0")
        if args.to == "som":
            F2 = fermat_from_som(SOMSpacetime(beta, om, g0))
        else:
            F2 = fermat_of_submersion(KillingSubmersionMetric(beta, om, g0))
    rng = np.random.default_rng(sc.seed)
    pts = chart.lo + rng.random((256, 2)) * chart.extent
    vecs = rng.standard_normal((256, 2))
    ref = sc.metric.F(pts, vecs)
    dev = float(np.max(np.abs(ref - F2.F(pts, vecs))))
    scale = 1.0 + float(np.max(np.abs(ref)))
    if dev > 1e-9 * scale:
        from .errors import ConsistencyError
        raise ConsistencyError(
            f"converted representation deviates by {dev:.3e} in F")

    lines = sc.header_lines({"command": "convert", "to": args.to,
                             "audit_max_dev": dev})
    lines.append(f"[{args.to}]")
    for key in sorted(exprs):
        lines.append(f"{key} = {_toml_value(exprs[key])}")
    _write_lines(lines, args.out)
    return 0


# ---------------------------------------------------------------- distance

def cmd_distance(args) -> int:
    import numpy as np
    from .distance import NEG_INFINITY, pre_distance

    sc = _load(args)
    p = _task_pair(args, args.frm, sc.task, "from", "--from")
    q = _task_pair(args, args.to, sc.task, "to", "--to", required=not args.field)
    G = _graph(sc)
    i0 = G.node_index(p)

    if args.field:
        D = pre_distance(G, sources=[i0])
        row = D.matrix[0]
        extra = {"status": D.status, "from_node": list(np.round(G.nodes[i0], 12))}
        rows = [(G.nodes[k, 0], G.nodes[k, 1], float(row[k]))
                for k in range(G.nodes.shape[0])]
        _csv(sc, "distance", {"from": p, "field": True}, ("x", "y", "d_F"),
             rows, args.out, extra)
        return 0

    i1 = G.node_index(q)
    D = pre_distance(G, sources=[i0, i1])
    extra = {"status": D.status}
    if D.status == NEG_INFINITY:
        extra["witness_length"] = D.witness_length
        fwd = bwd = float("-inf")
    else:
        fwd = float(D.matrix[0, i1])
        bwd = float(D.matrix[1, i0])
    rows = [("d_F", p[0], p[1], q[0], q[1], fwd),
            ("d_F", q[0], q[1], p[0], p[1], bwd),
            ("d_s", p[0], p[1], q[0], q[1], 0.5 * (fwd + bwd))]
    _csv(sc, "distance", {"from": p, "to": q},
         ("kind", "from_x", "from_y", "to_x", "to_y", "value"),
         rows, args.out, extra)
    return 0


# ---------------------------------------------------------------- geodesic

def _curve_rows(curve):
    return [(float(curve.s[k]), float(curve.points[k, 0]), float(curve.points[k, 1]),
             float(curve.velocities[k, 0]), float(curve.velocities[k, 1]))
            for k in range(curve.s.shape[0])]


def cmd_geodesic(args) -> int:
    from .errors import NumericalError, ValidationError
    from .geodesic import integrate_pregeodesic, shoot_connect

    sc = _load(args)
    p = _task_pair(args, args.frm, sc.task, "from", "--from")
    flags = {"from": p}

    if args.dir is not None:
        v = _parse_pair(args.dir, "--dir")
        span = args.span if args.span is not None else float(sc.task.get("span", 1.0))
        crv = integrate_pregeodesic(sc.metric, p, v, span,
                                    n_steps=args.steps, store_every=1)
        flags.update({"dir": v, "span": span, "steps": args.steps})
        _csv(sc, "geodesic", flags, ("s", "x", "y", "vx", "vy"),
             _curve_rows(crv), args.out)
        return 0

    q = _task_pair(args, args.to, sc.task, "to", "--to", required=False)
    if q is None:
        raise ValidationError("geodesic needs --dir with --span, or --to")
    winding = None
    if args.winding is not None:
        winding = _parse_winding(args.winding, "--winding")
    elif "winding" in sc.task:
        winding = tuple(int(w) for w in sc.task["winding"])
    res = shoot_connect(sc.metric, p, q, winding=winding, n_steps=args.steps)
    if not res.found:
        raise NumericalError(f"no connecting pre-geodesic: {res.message}")
    flags.update({"to": q, "winding": [int(w) for w in res.winding],
                  "length": res.length, "residual": res.residual})
    _csv(sc, "geodesic", flags, ("s", "x", "y", "vx", "vy"),
         _curve_rows(res.curve), args.out)
    return 0


# ---------------------------------------------------------------- classify

def cmd_classify(args) -> int:
    from .causality import classify_ladder
    from .distance import pre_distance

    sc = _load(args)
    G = _graph(sc)
    D = pre_distance(G)
    rep = classify_ladder(G, D, seed=sc.seed)
    lines = sc.header_lines({"command": "classify"})
    lines.append("causal ladder")
    lines.extend("  " + ln for ln in rep.lines())
    _write_lines(lines, args.out)
    return 0


# ---------------------------------------------------------------- weight

def cmd_weight(args) -> int:
    from .harris import harris_classify

    sc = _load(args)
    G = _graph(sc)
    rep = harris_classify(G)
    lines = sc.header_lines({"command": "weight"})
    lines.extend(rep.lines())
    _write_lines(lines, args.out)
    return 0


# ---------------------------------------------------------------- cutlocus

def cmd_cutlocus(args) -> int:
    from .errors import ValidationError
    from .horizon import TargetSet, cut_locus

    sc = _load(args)
    G = _graph(sc)
    if args.point is not None:
        pt = _parse_pair(args.point, "--point")
        target, tdesc = TargetSet.from_point(G, pt), {"point": pt}
    elif args.circle is not None:
        parts = str(args.circle).split(",")
        if len(parts) != 3:
            raise ValidationError("--circle expects cx,cy,r")
        cx, cy, r = (float(v) for v in parts)
        target, tdesc = TargetSet.from_circle(G, (cx, cy), r), {"circle": [cx, cy, r]}
    elif "point" in sc.task:
        pt = [float(v) for v in sc.task["point"]]
        target, tdesc = TargetSet.from_point(G, pt), {"point": pt}
    elif "circle" in sc.task:
        cx, cy, r = (float(v) for v in sc.task["circle"])
        target, tdesc = TargetSet.from_circle(G, (cx, cy), r), {"circle": [cx, cy, r]}
    else:
        raise ValidationError("cutlocus needs --point or --circle "
                              "(no task default in the scenario)")

    rep = cut_locus(G, target)
    n = G.nodes.shape[0]
    extra = {"n_cut": int(rep.cut_mask.sum()),
             "cut_fraction": rep.fraction,
             "eps_multi": rep.eps_multi,
             "nonsmooth_band": rep.nonsmooth_band,
             "detector_agreement": rep.agreement}
    rows = [(G.nodes[k, 0], G.nodes[k, 1], float(rep.rho.values[k]),
             int(rep.multiplicity[k]), float(rep.nonsmooth_stat[k]),
             int(rep.cut_mask[k]))
            for k in range(n)]
    _csv(sc, "cutlocus", tdesc,
         ("x", "y", "rho", "multiplicity", "nonsmooth_stat", "cut"),
         rows, args.out, extra)
    return 0


# ---------------------------------------------------------------- magnetic

def cmd_magnetic(args) -> int:
    import numpy as np
    from .errors import ValidationError
    from .fields import scalar_from_expression
    from .magnetic import (MagneticStructure, eleq_residual,
                           integrate_magnetic, magnetic_connect,
                           magnetic_periodic)

    sc = _load(args)
    if sc.magnetic is None and args.B is None:
        raise ValidationError(
            "magnetic subcommand needs a [magnetic] scenario or --B")
    if args.B is not None:
        if sc.magnetic is not None:
            g = sc.magnetic.g
        else:
            g = sc.metric.h
        S = MagneticStructure(g, scalar_from_expression(sc.chart, args.B, "B"))
    else:
        S = sc.magnetic
    c = args.energy if args.energy is not None else (sc.energy or 0.5)
    if not c > 0:
        raise ValidationError("--energy must be positive")

    p = _task_pair(args, args.frm, sc.task, "from", "--from",
                   required=args.periodic is None)
    flags = {"energy": c}
    if args.B is not None:
        flags["B"] = args.B

    if args.dir is not None:
        mode = "ray"
    elif args.to is not None:
        mode = "connect"
    elif args.periodic is not None:
        mode = "periodic"
    elif "dir" in sc.task:
        mode = "ray"
    elif "to" in sc.task:
        mode = "connect"
    else:
        raise ValidationError("magnetic needs --dir with --span, --to, "
                              "or --periodic")

    if mode == "periodic":
        w = _parse_winding(args.periodic, "--periodic")
        res = magnetic_periodic(S, c, w, seed=sc.seed)
        crv = res.curve
        flags.update({"periodic": list(w), "length": res.length,
                      "converged": res.converged})
    elif mode == "ray":
        v = np.asarray(_task_pair(args, args.dir, sc.task, "dir", "--dir"),
                       dtype=float)
        nrm = float(np.sqrt(2.0 * S.energy(np.asarray(p, dtype=float), v)))
        if nrm <= 0:
            raise ValidationError("--dir must be nonzero")
        v = v * (np.sqrt(2.0 * c) / nrm)
        span = args.span if args.span is not None else float(sc.task.get("span", 1.0))
        crv = integrate_magnetic(S, p, v, span, n_steps=args.steps, store_every=1)
        flags.update({"dir": [float(v[0]), float(v[1])], "span": span})
    else:
        q = _task_pair(args, args.to, sc.task, "to", "--to")
        winding = None
        if args.winding is not None:
            winding = _parse_winding(args.winding, "--winding")
        elif "winding" in sc.task:
            winding = tuple(int(w) for w in sc.task["winding"])
        res = magnetic_connect(S, c, p, q, winding=winding)
        crv = res.curve
        flags.update({"to": q, "winding": [int(w) for w in res.winding],
                      "length": res.length})

    energies = S.energy(crv.points, crv.velocities)
    resid = eleq_residual(S, crv)
    rows = [(float(crv.s[k]), float(crv.points[k, 0]), float(crv.points[k, 1]),
             float(crv.velocities[k, 0]), float(crv.velocities[k, 1]),
             float(energies[k]), float(resid[k]))
            for k in range(crv.s.shape[0])]
    _csv(sc, "magnetic", flags,
         ("t", "x", "y", "vx", "vy", "energy", "eleq_residual"),
         rows, args.out)
    return 0


# ---------------------------------------------------------------- selftest

def cmd_selftest(args) -> int:
    from .selftest import run_all

    only = None
    if args.criteria:
        only = sorted({int(tok) for tok in str(args.criteria).split(",")})
    results = run_all(only=only)
    lines = []
    for res in results:
        lines.append(res.line())
        if args.verbose:
            lines.extend("    " + d for d in res.detail)
    ok = all(r.passed for r in results)
    lines.append("selftest: %d/%d criteria passed"
                 % (sum(r.passed for r in results), len(results)))
    _write_lines(lines, args.out)
    return 0 if ok else 3


# ---------------------------------------------------------------- dispatch

def _add_common(sub, config_required=True):
    sub.add_argument("--config", required=config_required,
                     help="scenario file or builtin name")
    sub.add_argument("--grid", type=int, default=None)
    sub.add_argument("--stencil", type=int, default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--out", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="prerand",
        description="pre-Randers metrics, their spacetimes, and magnetic flows")
    sp = ap.add_subparsers(dest="command", required=True)

    p = sp.add_parser("convert", help="emit another representation of the metric")
    _add_common(p)
    p.add_argument("--to", required=True,
                   choices=("pre_randers", "som", "killing_submersion"))
    p.set_defaults(func=cmd_convert)

    p = sp.add_parser("distance", help="pre-distance between points")
    _add_common(p)
    p.add_argument("--from", dest="frm", default=None, metavar="X,Y")
    p.add_argument("--to", default=None, metavar="X,Y")
    p.add_argument("--field", action="store_true",
                   help="emit d_F(from, .) over the whole grid")
    p.set_defaults(func=cmd_distance)

    p = sp.add_parser("geodesic", help="pre-geodesic by shooting or initial data")
    _add_common(p)
    p.add_argument("--from", dest="frm", default=None, metavar="X,Y")
    p.add_argument("--to", default=None, metavar="X,Y")
    p.add_argument("--dir", default=None, metavar="VX,VY")
    p.add_argument("--span", type=float, default=None)
    p.add_argument("--winding", default=None, metavar="WX,WY")
    p.add_argument("--steps", type=int, default=512)
    p.set_defaults(func=cmd_geodesic)

    p = sp.add_parser("classify", help="causal ladder report")
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sp.add_parser("weight", help="cocycle weight and case report")
    _add_common(p)
    p.set_defaults(func=cmd_weight)

    p = sp.add_parser("cutlocus", help="distance from a closed set and its cut locus")
    _add_common(p)
    p.add_argument("--point", default=None, metavar="X,Y")
    p.add_argument("--circle", default=None, metavar="CX,CY,R")
    p.set_defaults(func=cmd_cutlocus)

    p = sp.add_parser("magnetic", help="magnetic trajectories at fixed energy")
    _add_common(p)
    p.add_argument("--B", default=None, help="override the field strength expression")
    p.add_argument("--energy", type=float, default=None)
    p.add_argument("--from", dest="frm", default=None, metavar="X,Y")
    p.add_argument("--dir", default=None, metavar="VX,VY")
    p.add_argument("--to", default=None, metavar="X,Y")
    p.add_argument("--span", type=float, default=None)
    p.add_argument("--winding", default=None, metavar="WX,WY")
    p.add_argument("--periodic", default=None, metavar="WX,WY")
    p.add_argument("--steps", type=int, default=4096)
    p.set_defaults(func=cmd_magnetic)

    p = sp.add_parser("selftest", help="run the acceptance suite")
    _add_common(p, config_required=False)
    p.add_argument("--criteria", default=None, help="comma list, e.g. 1,2,5")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_selftest)

    return ap


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    from .errors import PrerandError, ValidationError
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PrerandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
