"""Checking and searching multiplier certificates of robust optimality conditions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .polyset import LPWitness, Polytope, fixed_weight_membership, point_in_polytope, zero_in_weighted_sum
from .robust import ACT_TOL, RobustProblem, active_uncertainty, is_feasible, phi, phi_max
from .subdiff import ball_directions, constraint_agg_result, equality_agg_set, subdiff

COMPL_TOL = 1e-8
MEMBER_TOL = 1e-8

__all__ = [
    "CQReport",
    "Certificate",
    "InfeasiblePointError",
    "Verdict",
    "check_any",
    "check_certificate",
    "check_cq",
    "check_equality_certificate",
    "check_linear_composite",
    "find_fritz_john",
    "find_kkt",
]


class InfeasiblePointError(ValueError):
    """The candidate point is not robust feasible."""


def _vec(a, n=None, name="vector"):
    if a is None:
        return np.zeros(n or 0)
    out = np.atleast_1d(np.asarray(a, dtype=float)).reshape(-1)
    if n is not None and out.size != n:
        raise ValueError(f"{name} needs {n} entries, got {out.size}")
    return out


@dataclass
class Certificate:
    """Multipliers for objectives (y), inequality constraints (mu) and equalities (sigma).

    ``vbar`` holds one maximizing parameter per constraint (None when inactive).
    ``dual_vectors`` carries the per-term y_k* of approximation problems.
    """

    y: np.ndarray
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma: np.ndarray | None = None
    vbar: tuple = ()
    dual_vectors: tuple | None = None
    witness: LPWitness | None = None
    exact: bool = True

    def __post_init__(self):
        self.y = _vec(self.y)
        self.mu = _vec(self.mu)
        if self.sigma is not None:
            self.sigma = _vec(self.sigma)
        if self.dual_vectors is not None:
            self.dual_vectors = tuple(_vec(d) for d in self.dual_vectors)

    def scaled(self, t: float) -> "Certificate":
        if t <= 0:
            raise ValueError("scale must be positive")
        return replace(
            self,
            y=self.y * t,
            mu=self.mu * t,
            sigma=None if self.sigma is None else self.sigma * t,
        )

    def normalized(self) -> "Certificate":
        """Rescale so that ||y|| + ||mu|| (+ ||sigma||) = 1 in Euclidean norms."""
        s = np.linalg.norm(self.y) + np.linalg.norm(self.mu)
        if self.sigma is not None:
            s += np.linalg.norm(self.sigma)
        return self if s == 0 else self.scaled(1.0 / s)

    def to_dict(self) -> dict:
        d = {"y": self.y.tolist(), "mu": self.mu.tolist()}
        if self.sigma is not None:
            d["sigma"] = self.sigma.tolist()
        if self.dual_vectors is not None:
            d["dual_vectors"] = [v.tolist() for v in self.dual_vectors]
        if self.vbar:
            d["vbar"] = [None if v is None else np.asarray(v).tolist() for v in self.vbar]
        return d


@dataclass(frozen=True)
class Verdict:
    status: str  # holds | fails | holds-under-outer-estimate
    residual: float
    diagnostics: str = ""
    details: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.status != "fails"

    def as_dict(self) -> dict:
        return {"status": self.status, "residual": self.residual, "diagnostics": self.diagnostics,
                "details": self.details}


def _fail(msg: str, residual: float = float("inf"), **details) -> Verdict:
    return Verdict("fails", residual, msg, details)


def _require_feasible(problem, x):
    feas = is_feasible(problem, x)
    if not feas:
        raise InfeasiblePointError(f"point {np.asarray(x).tolist()} is not robust feasible: {feas.as_dict()}")
    return feas


def _complementarity(problem, x, mu) -> str | None:
    for i, m in enumerate(mu):
        if m != 0:
            val = m * phi(problem, i, x)
            if abs(val) > COMPL_TOL:
                return f"complementarity fails for constraint {i + 1}: mu*phi = {val:.3e}"
    return None


def _nonneg(**vecs):
    for name, v in vecs.items():
        if v is not None and np.any(np.asarray(v) < 0):
            raise ValueError(f"{name} must be nonnegative")


def _membership(terms, offset, exact: bool, n: int, extra: dict | None = None) -> Verdict:
    terms = [(c, S) for c, S in terms if c != 0]
    if not terms:
        off = np.zeros(n) if offset is None else np.asarray(offset)
        res = float(np.abs(off).sum())
        ok = res <= MEMBER_TOL
        status = ("holds" if exact else "holds-under-outer-estimate") if ok else "fails"
        return Verdict(status, res, "only fixed vectors present", extra or {})
    w = fixed_weight_membership(terms, offset=offset, tol=MEMBER_TOL)
    if w.feasible:
        status = "holds" if exact else "holds-under-outer-estimate"
        msg = "0 lies in the weighted sum"
    else:
        status = "fails"
        msg = "0 is not in the weighted sum"
    details = {"choice": list(w.choice)}
    details.update(extra or {})
    return Verdict(status, float(w.residual), msg, details)


def check_certificate(problem: RobustProblem, xbar, cert: Certificate) -> Verdict:
    """Check the robust KKT inclusion for given multipliers (objective weights must be nonzero)."""
    x = np.atleast_1d(np.asarray(xbar, dtype=float))
    y = _vec(cert.y, problem.p, "y")
    mu = _vec(cert.mu, len(problem.constraints), "mu")
    _nonneg(y=y, mu=mu)
    _require_feasible(problem, x)
    if not np.any(y > 0):
        return _fail("objective multipliers must not all vanish")
    bad = _complementarity(problem, x, mu)
    if bad:
        return _fail(bad)
    terms, exact = [], True
    for k, f in enumerate(problem.objectives):
        if y[k] > 0:
            r = subdiff(f, x)
            exact &= r.exact
            terms.append((y[k], r.set))
    for i in range(len(problem.constraints)):
        if mu[i] > 0:
            r = constraint_agg_result(problem, i, x)
            exact &= r.exact
            terms.append((mu[i], r.set))
    return _membership(terms, None, exact, problem.n)


def _search(problem: RobustProblem, xbar, normalization: str) -> Certificate | None:
    x = np.atleast_1d(np.asarray(xbar, dtype=float))
    obj, exact = [], True
    for f in problem.objectives:
        r = subdiff(f, x)
        exact &= r.exact
        obj.append(r.set)
    con, force, vbar = [], [], []
    for i in range(len(problem.constraints)):
        if abs(phi(problem, i, x)) > ACT_TOL:
            force.append(i)
            con.append(Polytope(np.zeros(problem.n)))
            vbar.append(None)
            continue
        r = constraint_agg_result(problem, i, x)
        exact &= r.exact
        con.append(r.set)
        vbar.append(active_uncertainty(problem, i, x)[0])
    w = zero_in_weighted_sum(obj, con, force, normalization=normalization, tol=MEMBER_TOL)
    if not w.feasible:
        return None
    return Certificate(y=w.lam, mu=w.mu, vbar=tuple(vbar), witness=w, exact=exact)


def find_fritz_john(problem: RobustProblem, xbar) -> Certificate | None:
    """Search nonnegative (y, mu), summing to one, with 0 in the weighted sum of sets."""
    return _search(problem, xbar, "all")


def find_kkt(problem: RobustProblem, xbar) -> Certificate | None:
    """As find_fritz_john, but the objective weights alone sum to one."""
    return _search(problem, xbar, "obj")


@dataclass(frozen=True)
class CQReport:
    active: tuple
    per_index: dict
    holds: bool

    def __bool__(self) -> bool:
        return self.holds

    def as_dict(self) -> dict:
        return {"active": list(self.active), "per_index": {str(k): v for k, v in self.per_index.items()},
                "holds": self.holds}


def check_cq(problem: RobustProblem, xbar) -> CQReport:
    """0 must lie outside the aggregate set of every maximally violated constraint."""
    x = np.atleast_1d(np.asarray(xbar, dtype=float))
    if not problem.constraints:
        return CQReport((), {}, True)
    top = phi_max(problem, x)
    if top < -ACT_TOL:
        return CQReport((), {}, True)
    act = tuple(i for i in range(len(problem.constraints)) if phi(problem, i, x) >= top - ACT_TOL)
    per = {}
    for i in act:
        agg = constraint_agg_result(problem, i, x).set.hull()
        per[i] = not point_in_polytope(np.zeros(problem.n), agg)
    return CQReport(act, per, all(per.values()))


def _dual_term_sets(aup: dict, x, dual_vectors, lam):
    """Fixed offset and set-valued terms contributed by the norm parts of an approximation problem."""
    n = x.size
    offset = np.zeros(n)
    terms = []
    exact = True
    problems = []
    for k, term in enumerate(aup["terms"]):
        T = np.atleast_2d(np.asarray(term["T"], dtype=float))
        a = T @ x - np.asarray(term["target"], dtype=float)
        alpha, beta = float(term["alpha"]), float(term["beta"])
        na = float(np.linalg.norm(a))
        coef = lam[k] * alpha * beta
        if dual_vectors is not None:
            ys = np.asarray(dual_vectors[k], dtype=float)
            if ys.size != a.size:
                problems.append(f"dual vector {k + 1} has wrong dimension")
                continue
            if abs(ys @ a - na**beta) > COMPL_TOL:
                problems.append(f"dual vector {k + 1}: <y*, Tx - y0> = {ys @ a:.6g} differs from {na**beta:.6g}")
            if beta == 1 and na <= COMPL_TOL:
                if np.linalg.norm(ys) > 1 + COMPL_TOL:
                    problems.append(f"dual vector {k + 1} lies outside the unit ball")
            elif abs(np.linalg.norm(ys) - na ** (beta - 1)) > COMPL_TOL:
                problems.append(f"dual vector {k + 1} has norm {np.linalg.norm(ys):.6g}, expected {na ** (beta - 1):.6g}")
            offset += coef * (T.T @ ys)
        elif coef != 0:
            if beta == 1 and na <= COMPL_TOL:
                dirs = ball_directions(a.size)
                exact &= a.size == 1
                terms.append((coef, Polytope(dirs @ T)))
            else:
                ys = na ** (beta - 1) * a / na if na > 0 else np.zeros_like(a)
                offset += coef * (T.T @ ys)
    return offset, terms, exact, problems


def check_equality_certificate(problem: RobustProblem, xbar, cert: Certificate) -> Verdict:
    """Inclusion with equality multipliers sigma (and norm-term dual vectors when present)."""
    x = np.atleast_1d(np.asarray(xbar, dtype=float))
    lam = _vec(cert.y, problem.p, "y")
    mu = _vec(cert.mu, len(problem.constraints), "mu")
    sigma = _vec(cert.sigma if cert.sigma is not None else np.zeros(len(problem.equalities)),
                 len(problem.equalities), "sigma")
    _nonneg(y=lam, mu=mu, sigma=sigma)
    _require_feasible(problem, x)
    if not (np.any(lam > 0) or np.any(mu > 0) or np.any(sigma > 0)):
        return _fail("multipliers must not all vanish")
    bad = _complementarity(problem, x, mu)
    if bad:
        return _fail(bad)
    aup = problem.meta.get("aup")
    terms, exact, offset = [], True, np.zeros(problem.n)
    if aup is not None:
        for k, r in enumerate(aup["r"]):
            if lam[k] > 0:
                res = subdiff(r, x)
                exact &= res.exact
                terms.append((lam[k], res.set))
        dv = cert.dual_vectors
        if dv is not None and len(dv) != len(aup["terms"]):
            raise ValueError("one dual vector per norm term is required")
        offset, dterms, dexact, problems = _dual_term_sets(aup, x, dv, lam)
        if problems:
            return _fail("; ".join(problems))
        terms += dterms
        exact &= dexact
    else:
        for k, f in enumerate(problem.objectives):
            if lam[k] > 0:
                res = subdiff(f, x)
                exact &= res.exact
                terms.append((lam[k], res.set))
    for i in range(len(problem.constraints)):
        if mu[i] > 0:
            res = constraint_agg_result(problem, i, x)
            exact &= res.exact
            terms.append((mu[i], res.set))
    for j in range(len(problem.equalities)):
        if sigma[j] > 0:
            terms.append((sigma[j], equality_agg_set(problem, j, x)))
    return _membership(terms, offset, exact, problem.n)


def check_linear_composite(problem: RobustProblem, xbar, cert: Certificate) -> Verdict:
    """Inclusion sum lam_k T_k^T df_k(T_k x) + sum mu_i agg_i for linear-operator objectives."""
    x = np.atleast_1d(np.asarray(xbar, dtype=float))
    lam = _vec(cert.y, problem.p, "y")
    mu = _vec(cert.mu, len(problem.constraints), "mu")
    _nonneg(y=lam, mu=mu)
    _require_feasible(problem, x)
    raw = float(np.linalg.norm(lam) + np.linalg.norm(mu))
    shown = Certificate(y=lam, mu=mu).normalized()
    info = {"norm_sum": raw, "normalized_norm_sum": float(np.linalg.norm(shown.y) + np.linalg.norm(shown.mu))}
    if raw == 0:
        return _fail("multipliers must not all vanish", **info)
    bad = _complementarity(problem, x, mu)
    if bad:
        return _fail(bad, **info)
    cul = problem.meta.get("cul")
    pairs = cul["pairs"] if cul is not None else [(f, np.eye(problem.n)) for f in problem.objectives]
    terms, exact = [], True
    for k, (f, T) in enumerate(pairs):
        if lam[k] > 0:
            T = np.atleast_2d(np.asarray(T, dtype=float))
            res = subdiff(f, T @ x)
            exact &= res.exact
            terms.append((lam[k], res.set.mapped(T.T)))
    for i in range(len(problem.constraints)):
        if mu[i] > 0:
            res = constraint_agg_result(problem, i, x)
            exact &= res.exact
            terms.append((mu[i], res.set))
    return _membership(terms, None, exact, problem.n, info)


def check_any(problem: RobustProblem, xbar, cert: Certificate) -> Verdict:
    """Route to the check matching the problem's structure."""
    if "aup" in problem.meta or problem.equalities:
        return check_equality_certificate(problem, xbar, cert)
    if "cul" in problem.meta:
        return check_linear_composite(problem, xbar, cert)
    return check_certificate(problem, xbar, cert)
