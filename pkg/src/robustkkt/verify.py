"""Grid efficiency audits, pseudo-convexity falsification, sufficiency and duality checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import expr as E
from .certify import Certificate, check_certificate, find_kkt
from .lp import lp_solve
from .polyset import fixed_weight_membership
from .robust import (
    Box,
    RobustProblem,
    active_uncertainty,
    is_feasible,
    phi,
    sample_feasible,
    worst_case,
)
from .subdiff import constraint_agg_result, scalarized_subdiff, subdiff

DOM_TOL = 1e-9
STRICT_DELTA = 1e-6
SIGN_TOL = 1e-8
MAX_TUPLES = 4096

__all__ = [
    "DualPoint",
    "EfficiencyReport",
    "PseudoConvexityReport",
    "converse_duality_check",
    "dual_feasible",
    "falsify_pseudo_convexity",
    "simplex_lattice",
    "sufficiency_pipeline",
    "verify_efficiency",
    "verify_weak_efficiency",
    "weak_duality_audit",
]


def _box(problem: RobustProblem, box) -> Box:
    if box is None:
        return problem.box
    if isinstance(box, Box):
        return box
    lo, hi = box
    return Box(lo, hi)


def _res(resolution, n: int) -> tuple:
    r = np.broadcast_to(np.atleast_1d(resolution), (n,))
    return tuple(int(k) for k in r)


@dataclass(frozen=True)
class EfficiencyReport:
    verdict: str  # not-dominated-on-grid | dominated
    order: str  # weak | pareto
    witness: tuple | None
    witness_values: tuple | None
    reference_values: tuple
    box: tuple
    resolution: tuple
    n_feasible: int

    @property
    def dominated(self) -> bool:
        return self.verdict == "dominated"

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "order": self.order,
            "witness": None if self.witness is None else list(self.witness),
            "witness_values": None if self.witness_values is None else list(self.witness_values),
            "reference_values": list(self.reference_values),
            "box": [list(self.box[0]), list(self.box[1])],
            "resolution": list(self.resolution),
            "n_feasible": self.n_feasible,
        }


def _audit(problem, xbar, box, resolution, order, points=None) -> EfficiencyReport:
    b = _box(problem, box)
    res = _res(resolution, problem.n)
    pts = sample_feasible(problem, b, res) if points is None else np.atleast_2d(points)
    f0 = problem.objective_values(np.asarray(xbar, dtype=float))
    if pts.shape[0] == 0:
        return EfficiencyReport("not-dominated-on-grid", order, None, None, tuple(f0.tolist()),
                                (b.lo, b.hi), res, 0)
    F = problem.objective_values(pts)
    if order == "weak":
        dom = np.all(F < f0 - DOM_TOL, axis=1)
    else:
        dom = np.all(F <= f0 + DOM_TOL, axis=1) & np.any(F < f0 - DOM_TOL, axis=1)
    idx = np.nonzero(dom)[0]
    if idx.size:
        k = int(idx[0])
        return EfficiencyReport("dominated", order, tuple(pts[k].tolist()), tuple(F[k].tolist()),
                                tuple(f0.tolist()), (b.lo, b.hi), res, int(pts.shape[0]))
    return EfficiencyReport("not-dominated-on-grid", order, None, None, tuple(f0.tolist()),
                            (b.lo, b.hi), res, int(pts.shape[0]))


def verify_weak_efficiency(problem: RobustProblem, xbar, box=None, resolution=101, points=None) -> EfficiencyReport:
    """Search a feasible grid point improving every objective strictly (by more than 1e-9)."""
    return _audit(problem, xbar, box, resolution, "weak", points)


def verify_efficiency(problem: RobustProblem, xbar, box=None, resolution=101, points=None) -> EfficiencyReport:
    """Search a feasible grid point that Pareto-dominates xbar."""
    return _audit(problem, xbar, box, resolution, "pareto", points)


def grid_efficient_points(problem: RobustProblem, box=None, resolution=21, order: str = "weak") -> np.ndarray:
    """All feasible grid points that no other feasible grid point dominates."""
    pts = sample_feasible(problem, _box(problem, box), _res(resolution, problem.n))
    if pts.shape[0] == 0:
        return pts
    F = problem.objective_values(pts)
    keep = []
    for k in range(F.shape[0]):
        if order == "weak":
            dom = np.all(F < F[k] - DOM_TOL, axis=1)
        else:
            dom = np.all(F <= F[k] + DOM_TOL, axis=1) & np.any(F < F[k] - DOM_TOL, axis=1)
        if not dom.any():
            keep.append(k)
    return pts[keep]


# pseudo-convexity -------------------------------------------------------------

def simplex_lattice(p: int, denominator: int = 4) -> np.ndarray:
    """Points of the unit simplex in R^p with coordinates in (1/denominator) Z, lexicographic."""
    pts = [c for c in itertools.product(range(denominator + 1), repeat=p) if sum(c) == denominator]
    return np.array(sorted(pts, reverse=True), dtype=float) / denominator


@dataclass(frozen=True)
class PseudoConvexityReport:
    mode: str
    verdict: str  # no-counterexample | counterexample
    witness: dict | None
    samples: int
    lps: int
    exact: bool = True

    @property
    def counterexample(self) -> bool:
        return self.verdict == "counterexample"

    def as_dict(self) -> dict:
        return {"mode": self.mode, "verdict": self.verdict, "witness": self.witness,
                "samples": self.samples, "lps": self.lps, "exact": self.exact}


def _nu_exists(xstar: np.ndarray, rows: list[np.ndarray], delta: float) -> bool:
    """Is there nu in [-1,1]^n with <xstar,nu> <= -delta and <row,nu> <= 0 for each row?"""
    n = xstar.size
    # variables: a (n), b (n), s_box_a (n), s_box_b (n), slack for each inequality
    m_ineq = 1 + len(rows)
    nvar = 4 * n + m_ineq
    A = np.zeros((2 * n + m_ineq, nvar))
    bvec = np.zeros(2 * n + m_ineq)
    A[:n, :n] = np.eye(n)
    A[:n, 2 * n:3 * n] = np.eye(n)
    A[n:2 * n, n:2 * n] = np.eye(n)
    A[n:2 * n, 3 * n:4 * n] = np.eye(n)
    bvec[:2 * n] = 1.0
    for r, vec in enumerate([xstar] + rows):
        A[2 * n + r, :n] = vec
        A[2 * n + r, n:2 * n] = -vec
        A[2 * n + r, 4 * n + r] = 1.0
    bvec[2 * n] = -delta
    return lp_solve(np.zeros(nvar), A, bvec).status == "feasible"


def falsify_pseudo_convexity(
    problem: RobustProblem,
    xbar,
    mode: str = "I",
    samples: int = 200,
    *,
    seed: int = 0,
    box=None,
    denominator: int = 4,
    delta: float = STRICT_DELTA,
) -> PseudoConvexityReport:
    """Look for (x, y*, subgradient selection) with no direction nu as the definition demands."""
    mode = mode.upper().replace("TYPE-", "").replace("TYPE", "").strip()
    if mode not in ("I", "II"):
        raise ValueError("mode must be 'I' or 'II'")
    xb = np.atleast_1d(np.asarray(xbar, dtype=float))
    b = _box(problem, box)
    rng = np.random.default_rng(seed)
    X = rng.uniform(np.array(b.lo), np.array(b.hi), size=(samples, problem.n))

    ys = simplex_lattice(problem.p, denominator)
    xstars, exact = [], True
    for y in ys:
        r = scalarized_subdiff(y, problem.objectives, xb)
        exact &= r.exact
        xstars.append(r.set.all_vertices())
    # per constraint and active parameter: subgradient vertices
    pairs = []
    for i, c in enumerate(problem.constraints):
        for vb in active_uncertainty(problem, i, xb):
            r = subdiff(c.expr, xb, vb)
            exact &= r.exact
            pairs.append((i, vb, r.set.all_vertices(), float(E.evaluate(c.expr, xb, vb))))

    fX = problem.objective_values(X)
    fb = problem.objective_values(xb)
    same = np.all(np.abs(X - xb) <= 1e-15, axis=1)
    # constraint antecedents per sample and pair
    ante = np.zeros((samples, len(pairs)), dtype=bool)
    for q, (i, vb, _, g0) in enumerate(pairs):
        gx = np.broadcast_to(E.evaluate(problem.constraints[i].expr, X, vb), (samples,))
        ante[:, q] = gx <= g0 + 1e-12

    cache: dict = {}
    lps = 0
    for s in range(samples):
        for yi, y in enumerate(ys):
            lhs, rhs = float(fX[s] @ y), float(fb @ y)
            if mode == "I":
                holds = lhs < rhs - DOM_TOL
            else:
                holds = (not same[s]) and lhs <= rhs + 1e-12
            if not holds:
                continue
            req = tuple(np.nonzero(ante[s])[0].tolist())
            key = (yi, req)
            if key in cache:
                continue
            found = None
            choice_lists = [range(len(pairs[q][2])) for q in req]
            count = 0
            for xs_idx in range(len(xstars[yi])):
                for sel in itertools.product(*choice_lists):
                    count += 1
                    if count > MAX_TUPLES:
                        break
                    rows = [pairs[q][2][j] for q, j in zip(req, sel)]
                    lps += 1
                    if not _nu_exists(xstars[yi][xs_idx], rows, delta):
                        found = (xs_idx, sel)
                        break
                if found or count > MAX_TUPLES:
                    break
            cache[key] = found
            if found is not None:
                xs_idx, sel = found
                witness = {
                    "x": X[s].tolist(),
                    "y": y.tolist(),
                    "xstar": xstars[yi][xs_idx].tolist(),
                    "constraint_subgradients": [
                        {"constraint": pairs[q][0], "v": np.asarray(pairs[q][1]).tolist(),
                         "subgradient": pairs[q][2][j].tolist()}
                        for q, j in zip(req, sel)
                    ],
                }
                return PseudoConvexityReport("type-" + mode, "counterexample", witness, samples, lps, exact)
    return PseudoConvexityReport("type-" + mode, "no-counterexample", None, samples, lps, exact)


def sufficiency_pipeline(problem: RobustProblem, xbar, box=None, resolution=101, samples: int = 200) -> dict:
    """KKT search, then pseudo-convexity falsification, then a grid cross-check."""
    xb = np.atleast_1d(np.asarray(xbar, dtype=float))
    out: dict = {"point": xb.tolist()}
    cert = find_kkt(problem, xb)
    out["kkt"] = None if cert is None else cert.to_dict()
    if cert is None:
        out["stage"] = "kkt"
        out["conclusion"] = "no KKT certificate; sufficiency test not applicable"
        return out
    pc = falsify_pseudo_convexity(problem, xb, "I", samples)
    out["pseudo_convexity"] = pc.as_dict()
    grid = verify_weak_efficiency(problem, xb, box, resolution)
    out["grid"] = grid.as_dict()
    if pc.counterexample:
        out["stage"] = "pseudo-convexity"
        out["conclusion"] = "KKT holds but type I pseudo convexity was falsified; grid result is informative only"
    elif grid.dominated:
        out["stage"] = "grid"
        out["conclusion"] = "tolerance diagnostic: KKT and pseudo convexity passed yet the grid found a dominating point"
    else:
        out["stage"] = "complete"
        out["conclusion"] = "weakly efficient (KKT + no pseudo-convexity counterexample), confirmed on grid"
    return out


# duality ------------------------------------------------------------------------

@dataclass(frozen=True)
class DualPoint:
    z: tuple
    y: tuple
    mu: tuple
    member: bool
    inclusion: bool
    sign_ok: bool
    vbar: tuple
    quantifier: str
    residual: float
    diagnostics: str = ""

    def as_dict(self) -> dict:
        return {
            "z": list(self.z), "y": list(self.y), "mu": list(self.mu), "member": self.member,
            "inclusion": self.inclusion, "sign_ok": self.sign_ok,
            "vbar": [None if v is None else list(v) for v in self.vbar],
            "quantifier": self.quantifier, "residual": self.residual, "diagnostics": self.diagnostics,
        }


def dual_feasible(problem: RobustProblem, z, y, mu, quantifier: str = "active") -> DualPoint:
    """Membership of (z, y, mu) in the dual feasible set.

    ``quantifier='active'`` asks mu_i g_i(z, v) >= 0 at a maximizing parameter;
    ``'all'`` asks it for every grid parameter.
    """
    if quantifier not in ("active", "all"):
        raise ValueError("quantifier must be 'active' or 'all'")
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float)) if len(problem.constraints) else np.zeros(0)
    if y.size != problem.p or mu.size != len(problem.constraints):
        raise ValueError("multiplier dimensions do not match the problem")
    if np.any(y < 0) or np.any(mu < 0):
        raise ValueError("multipliers must be nonnegative")
    if not np.any(y > 0):
        raise ValueError("objective multipliers must not all vanish")

    terms = []
    for k, f in enumerate(problem.objectives):
        if y[k] > 0:
            terms.append((y[k], subdiff(f, zz).set))
    vbar, notes, sign_ok = [], [], True
    for i, c in enumerate(problem.constraints):
        act = active_uncertainty(problem, i, zz)
        vbar.append(tuple(act[0].tolist()))
        if mu[i] <= 0:
            continue
        terms.append((mu[i], constraint_agg_result(problem, i, zz).set))
        if quantifier == "active":
            val = mu[i] * phi(problem, i, zz)
        else:
            val = -mu[i] * worst_case(E.Neg(c.expr), c.uset, zz)[0]
        if val < -SIGN_TOL:
            sign_ok = False
            notes.append(f"sign condition fails for constraint {i + 1} ({val:.3e})")
    w = fixed_weight_membership(terms) if terms else None
    inclusion = bool(w is not None and w.feasible)
    residual = float("inf") if w is None else float(w.residual)
    if not inclusion:
        notes.append("0 is not in the weighted sum")
    return DualPoint(tuple(zz.tolist()), tuple(y.tolist()), tuple(mu.tolist()), inclusion and sign_ok,
                     inclusion, sign_ok, tuple(vbar), quantifier, residual, "; ".join(notes))


def weak_duality_audit(problem: RobustProblem, primal, dual_points, mode: str = "weak") -> list[dict]:
    """Feasible primal points whose objective vector beats a dual point's value."""
    if mode not in ("weak", "strong"):
        raise ValueError("mode must be 'weak' or 'strong'")
    P = np.atleast_2d(np.asarray(primal, dtype=float))
    out = []
    if P.shape[0] == 0 or P.size == 0:
        return out
    F = problem.objective_values(P)
    for dp in dual_points:
        fz = problem.objective_values(np.asarray(dp.z, dtype=float))
        if mode == "weak":
            bad = np.all(F < fz - DOM_TOL, axis=1)
        else:
            bad = np.all(F <= fz + DOM_TOL, axis=1) & np.any(F < fz - DOM_TOL, axis=1)
        for k in np.nonzero(bad)[0]:
            out.append({"x": P[k].tolist(), "z": list(dp.z), "fx": F[k].tolist(), "fz": fz.tolist(), "mode": mode})
    return out


def converse_duality_check(problem: RobustProblem, dual_point: DualPoint, box=None, resolution=101,
                           samples: int = 200) -> dict:
    """If z is feasible, rebuild the KKT certificate at z and run the sufficiency checks there."""
    z = np.asarray(dual_point.z, dtype=float)
    out: dict = {"z": z.tolist()}
    if not problem.box.contains(z, 1e-9) or not is_feasible(problem, z):
        out["status"] = "not applicable"
        out["reason"] = "z is not robust feasible"
        return out
    mu = np.asarray(dual_point.mu, dtype=float)
    comp = [float(m * phi(problem, i, z)) for i, m in enumerate(mu)]
    out["complementarity"] = comp
    cert = Certificate(y=np.asarray(dual_point.y), mu=mu)
    kkt = check_certificate(problem, z, cert)
    out["kkt"] = kkt.as_dict()
    pc = falsify_pseudo_convexity(problem, z, "I", samples)
    out["pseudo_convexity"] = pc.as_dict()
    grid = verify_weak_efficiency(problem, z, box, resolution)
    out["grid"] = grid.as_dict()
    if not kkt.holds:
        out["status"] = "kkt-fails"
    elif grid.dominated:
        out["status"] = "grid-dominated"
    else:
        out["status"] = "confirmed"
    return out
