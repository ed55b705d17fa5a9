"""JSON problem files: schema validation, import and export."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from . import expr as E
from .apps import AUPSpec, CULSpec, NormTerm, build_aup, build_cul
from .certify import Certificate
from .robust import Box, Constraint, RobustProblem, UncertaintySet

__all__ = ["ProblemFile", "SchemaError", "dump", "dumps", "export", "load", "loads", "parse", "schema"]


class SchemaError(ValueError):
    """The document does not match the problem schema."""


_SCHEMA = None


def schema() -> dict:
    global _SCHEMA
    if _SCHEMA is None:
        text = resources.files(__package__).joinpath("problem.schema.json").read_text(encoding="utf-8")
        _SCHEMA = json.loads(text)
    return _SCHEMA


@dataclass
class ProblemFile:
    problem: RobustProblem
    point: list | None = None  # raw tokens
    certificate: dict | None = None  # raw tokens
    order: list | None = None  # constraint kinds in file order

    @property
    def point_array(self) -> np.ndarray | None:
        return None if self.point is None else np.atleast_1d(E._arr(self.point))

    def certificate_obj(self) -> Certificate | None:
        c = self.certificate
        if c is None:
            return None
        return Certificate(
            y=E._arr(c["y"]),
            mu=E._arr(c.get("mu", [])),
            sigma=None if "sigma" not in c else E._arr(c["sigma"]),
            dual_vectors=None if "dual_vectors" not in c else tuple(E._arr(d) for d in c["dual_vectors"]),
        )


def _validate(doc) -> None:
    v = jsonschema.Draft202012Validator(schema())
    errors = sorted(v.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        where = "/".join(str(p) for p in best.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {best.message}")


def _uset(d: dict) -> UncertaintySet:
    return UncertaintySet(d["lo"], d["hi"], d["resolution"])


def parse(doc: dict) -> ProblemFile:
    """Validate and construct; raises SchemaError on any mismatch."""
    _validate(doc)
    try:
        box = Box(doc["box"]["lo"], doc["box"]["hi"])
        if box.dim != doc["dim"]:
            raise SchemaError(f"box has dimension {box.dim}, dim says {doc['dim']}")
        ineq, eq = [], []
        for c in doc.get("constraints", []):
            con = Constraint(E.from_json(c["expr"]), _uset(c["uncertainty"]), c["kind"])
            (ineq if c["kind"] == "inequality" else eq).append(con)
        name = doc.get("name", "")
        if "aup" in doc:
            a = doc["aup"]
            terms = [NormTerm(t["T"], t["target"], t["alpha"], t["beta"]) for t in a["terms"]]
            prob = build_aup(AUPSpec([E.from_json(r) for r in a["r"]], terms, box, ineq, eq, name))
        elif "cul" in doc:
            if eq:
                raise SchemaError("linear-operator problems take inequality constraints only")
            pairs = [(E.from_json(q["f"]), q["T"]) for q in doc["cul"]["pairs"]]
            prob = build_cul(CULSpec(pairs, box, ineq, name))
        else:
            prob = RobustProblem([E.from_json(f) for f in doc["objectives"]], ineq, eq, box, name)
        point = None
        if "point" in doc:
            point = E._raw(doc["point"])
            if len(point) != box.dim:
                raise SchemaError(f"point has {len(point)} entries, dim is {box.dim}")
        cert = None
        if "certificate" in doc:
            cert = {k: E._raw(v) for k, v in doc["certificate"].items()}
    except SchemaError:
        raise
    except (ValueError, TypeError, KeyError, IndexError) as exc:
        raise SchemaError(str(exc)) from exc
    pf = ProblemFile(prob, point, cert, [c["kind"] for c in doc.get("constraints", [])])
    if cert is not None:
        c = pf.certificate_obj()
        if c.y.size != prob.p or c.mu.size not in (0, len(prob.constraints)):
            raise SchemaError("certificate multipliers do not match the problem")
    return pf


def loads(text: str) -> ProblemFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not JSON: {exc}") from exc
    return parse(doc)


def load(path) -> ProblemFile:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _interval(raw) -> dict:
    lo, hi = raw
    return {"lo": E._dump(lo), "hi": E._dump(hi)}


def _constraint(c: Constraint) -> dict:
    u = _interval(c.uset.raw)
    u["resolution"] = c.uset.resolution
    return {"kind": c.kind, "expr": E.to_json(c.expr), "uncertainty": u}


def export(pf: ProblemFile | RobustProblem, point=None, certificate=None) -> dict:
    """Problem (plus optional point and certificate) as a schema-valid document."""
    if isinstance(pf, RobustProblem):
        pf = ProblemFile(pf, None if point is None else E._raw(point), None)
        if certificate is not None:
            pf.certificate = _cert_raw(certificate)
    prob = pf.problem
    doc: dict = {}
    if prob.name:
        doc["name"] = prob.name
    doc["dim"] = prob.n
    doc["box"] = _interval(prob.box.raw)
    if "aup" in prob.meta:
        a = prob.meta["aup"]
        doc["aup"] = {"r": [E.to_json(r) for r in a["r"]],
                      "terms": [{k: E._dump(v) for k, v in t.items()} for t in a["terms"]]}
    elif "cul" in prob.meta:
        doc["cul"] = {"pairs": [{"f": E.to_json(f), "T": E._dump(T)} for f, T in prob.meta["cul"]["pairs"]]}
    else:
        doc["objectives"] = [E.to_json(f) for f in prob.objectives]
    order = pf.order or ["inequality"] * len(prob.constraints) + ["equality"] * len(prob.equalities)
    pools = {"inequality": iter(prob.constraints), "equality": iter(prob.equalities)}
    cons = [_constraint(next(pools[k])) for k in order]
    if cons:
        doc["constraints"] = cons
    if pf.point is not None:
        doc["point"] = E._dump(pf.point)
    if pf.certificate is not None:
        doc["certificate"] = {k: E._dump(v) for k, v in pf.certificate.items()}
    return doc


def _cert_raw(c: Certificate) -> dict:
    d = {"y": c.y.tolist(), "mu": c.mu.tolist()}
    if c.sigma is not None:
        d["sigma"] = c.sigma.tolist()
    if c.dual_vectors is not None:
        d["dual_vectors"] = [v.tolist() for v in c.dual_vectors]
    return d


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def dump(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))
