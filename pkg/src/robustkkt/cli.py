"""Command-line front end: problem files in, verdicts and reports out.

Exit codes: 0 when the tested condition holds, 1 when it fails, 2 on usage
or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import expr as E
from . import problem_file as PF
from .apps import BUILTIN_NAMES, builtin_example
from .certify import (
    InfeasiblePointError,
    check_any,
    check_cq,
    find_fritz_john,
    find_kkt,
)
from .robust import Box, FEAS_TOL, active_uncertainty, equality_residual, is_feasible, phi
from .subdiff import constraint_agg_result, equality_agg_set, subdiff
from .verify import (
    dual_feasible,
    falsify_pseudo_convexity,
    sufficiency_pipeline,
    verify_efficiency,
    verify_weak_efficiency,
)

_VALUE_FLAGS = ("--point", "--param", "--box", "--y", "--mu")


class UsageError(Exception):
    pass


# argument parsing -------------------------------------------------------------

def _vector(text: str) -> np.ndarray:
    try:
        return np.atleast_1d(E._arr(E._raw([t for t in text.replace(";", ",").split(",") if t.strip()])))
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad vector {text!r}") from exc


def _grid(text: str | None, n: int, default: int):
    if text is None:
        return default
    try:
        parts = [int(t) for t in text.lower().split("x")]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}; use e.g. 161x161") from exc
    if len(parts) == 1:
        parts = parts * n
    if len(parts) != n or min(parts) < 1:
        raise UsageError(f"grid needs {n} positive sizes")
    return tuple(parts)


def _box(text: str | None, n: int):
    """'lo1:hi1,lo2:hi2' -> Box."""
    if text is None:
        return None
    try:
        pairs = [p.split(":") for p in text.split(",")]
        lo = [p[0] for p in pairs]
        hi = [p[1] for p in pairs]
        box = Box(lo, hi)
    except (ValueError, IndexError) as exc:
        raise UsageError(f"bad box {text!r}; use lo:hi per coordinate, comma separated") from exc
    if box.dim != n:
        raise UsageError(f"box has {box.dim} coordinates, problem has {n}")
    return box


def _protect_negatives(argv: list[str]) -> list[str]:
    """Glue '--point -1,1' into '--point=-1,1' so argparse does not read an option."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robustkkt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help_, point=True, before=None):
        p = sub.add_parser(name, help=help_)
        if before:
            p.add_argument(before[0], choices=before[1])
        p.add_argument("file")
        if point:
            p.add_argument("--point", help="comma-separated; defaults to the file's point")
        p.add_argument("--json", action="store_true", help="machine-readable output (sorted keys)")
        p.add_argument("--tol", type=float, default=FEAS_TOL, help="feasibility tolerance")
        return p

    cmd("feasible", "robust feasibility with the worst-case table")
    p = cmd("subdiff", "vertices of a limiting subdifferential")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--objective", type=int, metavar="K", help="objective component (1-based)")
    g.add_argument("--constraint", type=int, metavar="I", help="inequality constraint (1-based)")
    g.add_argument("--equality", type=int, metavar="J", help="equality constraint (1-based)")
    p.add_argument("--param", help="uncertain parameter; with --constraint gives the set at that v")
    cmd("check-kkt", "check the file's certificate")
    cmd("find-kkt", "search a KKT certificate")
    cmd("find-fj", "search a Fritz-John certificate")
    cmd("check-cq", "constraint qualification at the point")
    p = cmd("verify", "grid efficiency audit", before=("order", ["weak", "pareto"]))
    p.add_argument("--grid", help="NxM candidate grid (default 101 per axis)")
    p.add_argument("--box", help="lo:hi per coordinate, comma separated")
    p = cmd("pseudo-falsify", "search a pseudo-convexity counterexample")
    p.add_argument("--mode", choices=["I", "II"], default="I")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--box", help="sampling box, lo:hi per coordinate")
    p = cmd("dual-check", "membership in the dual feasible set")
    p.add_argument("--y", help="objective multipliers (default: file certificate)")
    p.add_argument("--mu", help="constraint multipliers (default: file certificate)")
    p.add_argument("--quantifier", choices=["active", "all"], default="active")
    p = cmd("report", "full pipeline: feasibility, KKT, CQ, pseudo convexity, grid")
    p.add_argument("--grid", help="NxM candidate grid (default 101 per axis)")
    p.add_argument("--box", help="lo:hi per coordinate, comma separated")
    p.add_argument("--samples", type=int, default=200)
    p = sub.add_parser("export-example", help="write a built-in fixture as a problem file")
    p.add_argument("name", choices=BUILTIN_NAMES)
    p.add_argument("-o", "--output", help="file to write (default stdout)")
    p.add_argument("--json", action="store_true", help="accepted for symmetry; output is always JSON")
    return ap


# commands ---------------------------------------------------------------------

def _point(args, pf: PF.ProblemFile) -> np.ndarray:
    if getattr(args, "point", None):
        x = _vector(args.point)
    elif pf.point is not None:
        x = pf.point_array
    else:
        raise UsageError("no point given and the file has none")
    if x.size != pf.problem.n:
        raise UsageError(f"point has {x.size} entries, problem has {pf.problem.n}")
    return x


def _fmt(a) -> str:
    return "(" + ", ".join(f"{float(t):.10g}" for t in np.atleast_1d(a)) + ")"


def _feasible(args, pf):
    prob, x = pf.problem, _point(args, pf)
    feas = is_feasible(prob, x, args.tol)
    rows = []
    for i in range(len(prob.constraints)):
        rows.append({"kind": "inequality", "index": i + 1, "worst_case": phi(prob, i, x),
                     "maximizers": [v.tolist() for v in active_uncertainty(prob, i, x)]})
    for j in range(len(prob.equalities)):
        rows.append({"kind": "equality", "index": j + 1, "max_abs": equality_residual(prob, j, x)})
    out = {"point": x.tolist(), "feasible": bool(feas), "constraints": rows}
    text = [f"point {_fmt(x)}: {'feasible' if feas else 'infeasible'}"]
    for r in rows:
        if r["kind"] == "inequality":
            ms = r["maximizers"]
            vs = ", ".join(_fmt(v) for v in ms[:6]) + (f", ... ({len(ms)} in all)" if len(ms) > 6 else "")
            text.append(f"  g{r['index']}: max {r['worst_case']:.10g} at v in {{{vs}}}")
        else:
            text.append(f"  h{r['index']}: max |h| {r['max_abs']:.10g}")
    return (0 if feas else 1), out, text


def _subdiff(args, pf):
    prob, x = pf.problem, _point(args, pf)
    if args.objective is not None:
        k = _index(args.objective, prob.p, "objective")
        res = subdiff(prob.objectives[k], x)
        label, exact, sets = f"objective {k + 1}", res.exact, [m.vertices for m in res.set.members]
    elif args.constraint is not None:
        i = _index(args.constraint, len(prob.constraints), "constraint")
        if args.param is not None:
            v = _vector(args.param)
            res = subdiff(prob.constraints[i].expr, x, v)
            label, exact, sets = f"constraint {i + 1} at v={_fmt(v)}", res.exact, [m.vertices for m in res.set.members]
        else:
            res = constraint_agg_result(prob, i, x)
            label, exact, sets = f"constraint {i + 1} aggregate", res.exact, [m.vertices for m in res.set.members]
    else:
        j = _index(args.equality, len(prob.equalities), "equality")
        label, exact, sets = f"equality {j + 1} aggregate", False, [equality_agg_set(prob, j, x).vertices]
    sets = [np.asarray(s)[np.lexsort(np.asarray(s).T[::-1])] for s in sets]
    out = {"target": label, "point": x.tolist(), "exact": bool(exact), "members": [s.tolist() for s in sets]}
    text = [f"{label} at {_fmt(x)} ({'exact' if exact else 'outer estimate'}):"]
    for q, s in enumerate(sets):
        text.append(f"  piece {q + 1}: " + " ".join(_fmt(r) for r in s))
    return 0, out, text


def _index(k: int, n: int, what: str) -> int:
    if not 1 <= k <= n:
        raise UsageError(f"{what} index must be in 1..{n}")
    return k - 1


def _verdict_text(name, v):
    lines = [f"{name}: {v.status} (residual {v.residual:.3e})"]
    if v.diagnostics:
        lines.append(f"  {v.diagnostics}")
    return lines


def _check_kkt(args, pf):
    cert = pf.certificate_obj()
    if cert is None:
        raise UsageError("the file has no certificate block")
    x = _point(args, pf)
    v = check_any(pf.problem, x, cert)
    return (0 if v.holds else 1), {"point": x.tolist(), "verdict": v.as_dict()}, _verdict_text("certificate", v)


def _find(args, pf, finder, label):
    x = _point(args, pf)
    c = finder(pf.problem, x)
    if c is None:
        return 1, {"point": x.tolist(), "certificate": None}, [f"no {label} certificate at {_fmt(x)}"]
    shown = c.normalized()
    text = [f"{label} certificate at {_fmt(x)}", f"  y  = {_fmt(shown.y)}", f"  mu = {_fmt(shown.mu)}"]
    return 0, {"point": x.tolist(), "certificate": c.to_dict(), "display": shown.to_dict()}, text


def _check_cq(args, pf):
    x = _point(args, pf)
    r = check_cq(pf.problem, x)
    out = {"point": x.tolist(), "holds": r.holds, "active": [i + 1 for i in r.active],
           "per_index": {str(i + 1): bool(h) for i, h in r.per_index.items()}}
    act = ", ".join(str(i + 1) for i in r.active) or "none"
    return (0 if r.holds else 1), out, [f"CQ {'holds' if r.holds else 'fails'} (active: {act})"]


def _verify(args, pf):
    prob, x = pf.problem, _point(args, pf)
    box = _box(args.box, prob.n)
    res = _grid(args.grid, prob.n, 101)
    fn = verify_weak_efficiency if args.order == "weak" else verify_efficiency
    r = fn(prob, x, box, res)
    text = [f"{args.order} efficiency of {_fmt(x)}: {r.verdict} ({r.n_feasible} feasible grid points)"]
    if r.witness is not None:
        text.append(f"  witness {_fmt(r.witness)} with values {_fmt(r.witness_values)}")
    return (1 if r.dominated else 0), r.as_dict(), text


def _pseudo(args, pf):
    prob, x = pf.problem, _point(args, pf)
    r = falsify_pseudo_convexity(prob, x, args.mode, args.samples, seed=args.seed, box=_box(args.box, prob.n))
    text = [f"type {args.mode} pseudo convexity at {_fmt(x)}: {r.verdict} ({r.samples} samples, {r.lps} LPs)"]
    if r.witness:
        text.append(f"  x = {_fmt(r.witness['x'])}, y* = {_fmt(r.witness['y'])}, x* = {_fmt(r.witness['xstar'])}")
    return (1 if r.counterexample else 0), r.as_dict(), text


def _dual(args, pf):
    prob, z = pf.problem, _point(args, pf)
    cert = pf.certificate_obj()
    y = _vector(args.y) if args.y else (cert.y if cert else None)
    mu = _vector(args.mu) if args.mu else (cert.mu if cert else np.zeros(len(prob.constraints)))
    if y is None:
        raise UsageError("give --y or embed a certificate")
    if mu.size == 0 and prob.constraints:
        mu = np.zeros(len(prob.constraints))
    try:
        d = dual_feasible(prob, z, y, mu, args.quantifier)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = [f"dual feasibility ({args.quantifier} quantifier) at {_fmt(z)}: {'member' if d.member else 'not a member'}"]
    if d.diagnostics:
        text.append(f"  {d.diagnostics}")
    return (0 if d.member else 1), d.as_dict(), text


def _report(args, pf):
    prob, x = pf.problem, _point(args, pf)
    feas = is_feasible(prob, x, args.tol)
    out: dict = {"name": prob.name, "point": x.tolist(), "feasibility": feas.as_dict()}
    text = [f"report for {prob.name or args.file} at {_fmt(x)}", f"  feasible: {bool(feas)}"]
    if not feas:
        out["status"] = "infeasible"
        return 1, out, text
    cq = check_cq(prob, x)
    out["cq"] = {"holds": cq.holds, "active": [i + 1 for i in cq.active]}
    text.append(f"  CQ: {'holds' if cq.holds else 'fails'}")
    fj = find_fritz_john(prob, x)
    out["fritz_john"] = None if fj is None else fj.to_dict()
    text.append(f"  Fritz-John: {'found' if fj is not None else 'none'}")
    cert = pf.certificate_obj()
    if cert is not None:
        v = check_any(prob, x, cert)
        out["embedded_certificate"] = v.as_dict()
        text.append(f"  embedded certificate: {v.status} (residual {v.residual:.3e})")
    suff = sufficiency_pipeline(prob, x, _box(args.box, prob.n), _grid(args.grid, prob.n, 101), args.samples)
    out["sufficiency"] = suff
    text.append(f"  KKT: {'found' if suff['kkt'] is not None else 'none'}")
    if "pseudo_convexity" in suff:
        text.append(f"  pseudo convexity (type I): {suff['pseudo_convexity']['verdict']}")
        text.append(f"  grid audit: {suff['grid']['verdict']}")
    text.append(f"  conclusion: {suff['conclusion']}")
    ok = suff["kkt"] is not None and suff.get("grid", {}).get("verdict") == "not-dominated-on-grid"
    out["status"] = "holds" if ok else "fails"
    return (0 if ok else 1), out, text


def _export(args):
    prob, x, cert = builtin_example(args.name)
    text = PF.dumps(PF.export(prob, x, cert))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "feasible": _feasible,
    "subdiff": _subdiff,
    "check-kkt": _check_kkt,
    "find-kkt": lambda a, pf: _find(a, pf, find_kkt, "KKT"),
    "find-fj": lambda a, pf: _find(a, pf, find_fritz_john, "Fritz-John"),
    "check-cq": _check_cq,
    "verify": _verify,
    "pseudo-falsify": _pseudo,
    "dual-check": _dual,
    "report": _report,
}


def _clean(obj):
    """Make report payloads JSON-safe and deterministic."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if f != f or f in (float("inf"), float("-inf")):
            return str(f)
        return 0.0 if f == 0 else f
    return obj


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    try:
        args = parser.parse_args(_protect_negatives(argv))
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        if args.command == "export-example":
            return _export(args)
        pf = PF.load(args.file)
        code, out, text = _COMMANDS[args.command](args, pf)
    except PF.SchemaError as exc:
        print(f"robustkkt: invalid problem file: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"robustkkt: {exc}", file=sys.stderr)
        return 2
    except (UsageError, InfeasiblePointError, E.DomainError) as exc:
        print(f"robustkkt: {exc}", file=sys.stderr)
        return 2
    if args.json:
        sys.stdout.write(json.dumps(_clean(out), sort_keys=True, indent=2) + "\n")
    else:
        sys.stdout.write("\n".join(text) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
