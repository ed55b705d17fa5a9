"""Worst-case constraint values, active parameter sets, and robust feasibility."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as E

ACT_TOL = 1e-8
CLUSTER_RADIUS = 1e-6
FEAS_TOL = 1e-9
GOLDEN_TOL = 1e-12
MAX_GRID = 200_000

__all__ = [
    "Box",
    "Constraint",
    "Feasibility",
    "RobustProblem",
    "UncertaintySet",
    "active_uncertainty",
    "is_feasible",
    "phi",
    "phi_max",
    "sample_feasible",
    "worst_case",
]


def _bounds(lo, hi, obj):
    """Parse bounds (numbers or rational strings), remembering the raw tokens."""
    rlo = E._raw(list(np.atleast_1d(lo)) if not isinstance(lo, (list, tuple)) else lo)
    rhi = E._raw(list(np.atleast_1d(hi)) if not isinstance(hi, (list, tuple)) else hi)
    object.__setattr__(obj, "raw", (rlo, rhi))
    return np.atleast_1d(E._arr(rlo)), np.atleast_1d(E._arr(rhi))


@dataclass(frozen=True)
class UncertaintySet:
    """Box of parameters [lo, hi] (one interval per coordinate) with a scan resolution."""

    lo: tuple
    hi: tuple
    resolution: int = 1001

    def __init__(self, lo, hi, resolution: int = 1001):
        lo_a, hi_a = _bounds(lo, hi, self)
        if lo_a.shape != hi_a.shape or lo_a.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if np.any(lo_a > hi_a):
            raise ValueError("need lo <= hi")
        if int(resolution) < 3:
            raise ValueError("resolution must be at least 3")
        object.__setattr__(self, "lo", tuple(lo_a.tolist()))
        object.__setattr__(self, "hi", tuple(hi_a.tolist()))
        object.__setattr__(self, "resolution", int(resolution))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def axis(self, k: int, resolution: int | None = None) -> np.ndarray:
        r = self._per_axis(resolution)
        t = np.arange(r) / (r - 1)
        a, b = self.lo[k], self.hi[k]
        if a == b:
            return np.array([a])
        g = a * (1 - t) + b * t
        g[0], g[-1] = a, b
        return g

    def _per_axis(self, resolution: int | None) -> int:
        r = int(resolution or self.resolution)
        while self.dim > 1 and r**self.dim > MAX_GRID and r > 3:
            r = max(3, int(r * 0.8))
        return r

    def grid(self, resolution: int | None = None) -> np.ndarray:
        axes = [self.axis(k, resolution) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def contains(self, v, tol: float = 1e-12) -> bool:
        v = np.atleast_1d(v)
        return bool(np.all(v >= np.array(self.lo) - tol) and np.all(v <= np.array(self.hi) + tol))


@dataclass(frozen=True)
class Constraint:
    expr: E.Expr
    uset: UncertaintySet
    kind: str = "inequality"

    def __post_init__(self):
        if self.kind not in ("inequality", "equality"):
            raise ValueError("kind must be 'inequality' or 'equality'")
        if self.expr.out_dim != 1:
            raise ValueError("constraints must be scalar")
        if self.expr.nv > self.uset.dim:
            raise ValueError(f"constraint reads {self.expr.nv} parameters, set has {self.uset.dim}")


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __init__(self, lo, hi):
        lo_a, hi_a = _bounds(lo, hi, self)
        if lo_a.shape != hi_a.shape or lo_a.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if np.any(lo_a > hi_a):
            raise ValueError("need lo <= hi")
        object.__setattr__(self, "lo", tuple(lo_a.tolist()))
        object.__setattr__(self, "hi", tuple(hi_a.tolist()))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.atleast_1d(x)
        return bool(np.all(x >= np.array(self.lo) - tol) and np.all(x <= np.array(self.hi) + tol))


@dataclass(eq=False)
class RobustProblem:
    """Objectives (scalar expressions in x), uncertain inequality and equality constraints.

    ``meta`` carries structure for special certificate forms (keys ``aup``
    or ``cul``) and never affects evaluation.
    """

    objectives: list
    constraints: list = field(default_factory=list)
    equalities: list = field(default_factory=list)
    box: Box | None = None
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.objectives = list(self.objectives)
        self.constraints = list(self.constraints)
        self.equalities = list(self.equalities)
        if not self.objectives:
            raise ValueError("at least one objective is required")
        if self.box is None:
            raise ValueError("an evaluation box is required")
        n = self.box.dim
        if np.any(np.array(self.box.lo) == np.array(self.box.hi)) and n == 0:
            raise ValueError("box is degenerate")
        for f in self.objectives:
            if f.out_dim != 1:
                raise ValueError("objective components must be scalar")
            if f.depends_v:
                raise ValueError("objectives may not depend on uncertain parameters")
            if f.nx > n:
                raise ValueError(f"objective reads {f.nx} coordinates, box has {n}")
        for c in self.constraints:
            if c.kind != "inequality":
                raise ValueError("inequality list holds an equality constraint")
            if c.expr.nx > n:
                raise ValueError("constraint dimension exceeds the box")
        for c in self.equalities:
            if c.kind != "equality":
                raise ValueError("equality list holds an inequality constraint")
            if c.expr.nx > n:
                raise ValueError("constraint dimension exceeds the box")
        self._cache: dict = {}

    @property
    def n(self) -> int:
        return self.box.dim

    @property
    def p(self) -> int:
        return len(self.objectives)

    def objective_values(self, X) -> np.ndarray:
        """Objective vectors at one point (shape (p,)) or a batch (shape (B, p))."""
        X = np.asarray(X, dtype=float)
        cols = [np.broadcast_to(E.evaluate(f, X), X.shape[:-1]) for f in self.objectives]
        return np.stack(cols, axis=-1)


# maximization over the parameter set ----------------------------------------

_INVPHI = (5**0.5 - 1) / 2


def _golden(f, a: float, b: float) -> tuple[float, float]:
    """Maximize f on [a, b]; returns (argmax, value)."""
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > GOLDEN_TOL:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    t = 0.5 * (a + b)
    return t, f(t)


def _golden_batch(f, a: np.ndarray, b: np.ndarray):
    """Independent golden-section maximizations, one per bracket, evaluated together."""
    a, b = a.astype(float).copy(), b.astype(float).copy()
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while np.any(b - a > GOLDEN_TOL):
        left = fc >= fd
        na = np.where(left, a, c)
        nb = np.where(left, d, b)
        nc = np.where(left, nb - _INVPHI * (nb - na), d)
        nd = np.where(left, c, na + _INVPHI * (nb - na))
        # one fresh evaluation per bracket: the new c (left) or the new d (right)
        fresh = f(np.where(left, nc, nd))
        fc, fd = np.where(left, fresh, fd), np.where(left, fc, fresh)
        a, b, c, d = na, nb, nc, nd
    t = 0.5 * (a + b)
    return t, f(t)


def _cluster(points: list[tuple[np.ndarray, float]]) -> list[np.ndarray]:
    pts = sorted(points, key=lambda pv: tuple(pv[0]))
    out: list[tuple[np.ndarray, float]] = []
    for p, val in pts:
        if out and np.max(np.abs(out[-1][0] - p)) <= CLUSTER_RADIUS:
            if val > out[-1][1]:
                out[-1] = (p, val)
            continue
        out.append((p, val))
    return [p for p, _ in out]


def worst_case(expr: E.Expr, uset: UncertaintySet, x) -> tuple[float, list[np.ndarray]]:
    """max over v in uset of expr(x, v), with all maximizers (ascending, clustered)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not expr.depends_v:
        return float(E.evaluate(expr, x, np.array(uset.lo))), [np.array(uset.lo)]
    G = uset.grid()
    vals = np.asarray(E.evaluate(expr, x[None, :], G), dtype=float)
    if uset.dim == 1:
        cands = _refine_1d(expr, uset, x, G[:, 0], vals)
    else:
        cands = _refine_nd(expr, uset, x, G, vals)
    best = max(val for _, val in cands)
    best = max(best, float(vals.max()))
    keep = [(p, val) for p, val in cands if val >= best - ACT_TOL]
    keep += [(G[k], float(vals[k])) for k in np.nonzero(vals >= best - ACT_TOL)[0]]
    return best, _cluster(keep)


def _refine_1d(expr, uset, x, g, vals):
    N = g.size
    pad = np.concatenate([[-np.inf], vals, [-np.inf]])
    loc = np.nonzero((vals >= pad[:-2]) & (vals >= pad[2:]))[0]
    slack = 2.0 * float(np.max(np.abs(np.diff(vals)))) + 1e-12 if N > 1 else 0.0
    top = vals.max()
    loc = [k for k in loc if vals[k] >= top - slack]
    loc = sorted(loc, key=lambda k: (-vals[k], k))[:64]
    if not loc:
        return []
    loc = np.array(loc)

    def f(t):
        return np.broadcast_to(E.evaluate(expr, x[None, :], t[:, None]), t.shape).astype(float)

    t, ft = _golden_batch(f, g[np.maximum(loc - 1, 0)], g[np.minimum(loc + 1, N - 1)])
    out = []
    for j, k in enumerate(loc):
        if ft[j] > vals[k]:
            out.append((np.array([t[j]]), float(ft[j])))
        else:
            out.append((np.array([g[k]]), float(vals[k])))
    return out


def _refine_nd(expr, uset, x, G, vals):
    d = uset.dim
    h = np.array([(uset.hi[k] - uset.lo[k]) / max(uset._per_axis(None) - 1, 1) for k in range(d)])
    order = np.argsort(-vals, kind="stable")[:8]
    out = []
    for k in order:
        p = G[k].copy()
        val = float(vals[k])
        for _ in range(3):
            for j in range(d):
                a = max(uset.lo[j], p[j] - h[j])
                b = min(uset.hi[j], p[j] + h[j])

                def f(t, j=j):
                    q = p.copy()
                    q[j] = t
                    return float(E.evaluate(expr, x, q))

                t, ft = _golden(f, a, b)
                if ft > val:
                    p[j], val = t, ft
        out.append((p, val))
    return out


def _batch_bounds(expr: E.Expr, uset: UncertaintySet, X: np.ndarray):
    """Lower bounds and Lipschitz slack of max_v expr(x, v) for each row of X."""
    if not expr.depends_v:
        val = np.broadcast_to(E.evaluate(expr, X, np.array(uset.lo)), X.shape[:1])
        return np.array(val, dtype=float), np.zeros(X.shape[0])
    G = uset.grid()
    lower = np.empty(X.shape[0])
    slack = np.empty(X.shape[0])
    chunk = max(1, 2_000_000 // G.shape[0])
    for s in range(0, X.shape[0], chunk):
        xs = X[s:s + chunk]
        vals = np.asarray(E.evaluate(expr, xs[:, None, :], G[None, :, :]), dtype=float)
        lower[s:s + chunk] = vals.max(axis=1)
        if G.shape[0] > 1:
            slack[s:s + chunk] = 2.0 * np.max(np.abs(np.diff(vals, axis=1)), axis=1) + 1e-12
        else:
            slack[s:s + chunk] = 0.0
    if uset.dim > 1:
        slack *= 2.0
    return lower, slack


def _memo(problem: RobustProblem, key, fn):
    cache = problem._cache
    if key not in cache:
        if len(cache) > 4096:
            cache.clear()
        cache[key] = fn()
    return cache[key]


def _key(kind, i, x):
    return (kind, i, np.asarray(x, dtype=float).tobytes())


def _check_box(problem: RobustProblem, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != problem.n:
        raise ValueError(f"point has {x.size} coordinates, problem has {problem.n}")
    if not problem.box.contains(x, 1e-9):
        raise E.DomainError("point lies outside the declared box")
    return x


def phi(problem: RobustProblem, i: int, x) -> float:
    """Worst-case value of inequality constraint i at x."""
    x = _check_box(problem, x)
    c = problem.constraints[i]
    return _memo(problem, _key("g", i, x), lambda: worst_case(c.expr, c.uset, x))[0]


def phi_max(problem: RobustProblem, x) -> float:
    """max_i phi_i(x); -inf without constraints."""
    return max((phi(problem, i, x) for i in range(len(problem.constraints))), default=-np.inf)


def active_uncertainty(problem: RobustProblem, i: int, x) -> list[np.ndarray]:
    """Parameters attaining phi_i(x), ascending and clustered."""
    x = _check_box(problem, x)
    c = problem.constraints[i]
    return [p.copy() for p in _memo(problem, _key("g", i, x), lambda: worst_case(c.expr, c.uset, x))[1]]


def equality_residual(problem: RobustProblem, j: int, x) -> float:
    """max over the parameter set of |h_j(x, v)|."""
    x = _check_box(problem, x)
    c = problem.equalities[j]
    return _memo(problem, _key("h", j, x), lambda: worst_case(E.Abs(c.expr), c.uset, x))[0]


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    phi: tuple
    eq_residual: tuple

    def __bool__(self) -> bool:
        return self.feasible

    def as_dict(self) -> dict:
        return {"feasible": self.feasible, "phi": list(self.phi), "eq_residual": list(self.eq_residual)}


def is_feasible(problem: RobustProblem, x, tol: float = FEAS_TOL) -> Feasibility:
    """Robust feasibility: phi_i(x) <= tol and max_v |h_j(x, v)| <= tol."""
    ph = tuple(phi(problem, i, x) for i in range(len(problem.constraints)))
    eq = tuple(equality_residual(problem, j, x) for j in range(len(problem.equalities)))
    ok = all(p <= tol for p in ph) and all(r <= tol for r in eq)
    return Feasibility(ok, ph, eq)


def grid_points(lo, hi, resolution) -> np.ndarray:
    """Lexicographic grid over a box; degenerate axes contribute one point."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    res = np.broadcast_to(np.atleast_1d(resolution), lo.shape)
    axes = []
    for a, b, r in zip(lo, hi, res):
        if a == b:
            axes.append(np.array([a]))
            continue
        if int(r) < 2:
            raise ValueError("grid resolution must be at least 2 per axis")
        t = np.arange(int(r)) / (int(r) - 1)
        ax = a * (1 - t) + b * t
        ax[0], ax[-1] = a, b
        axes.append(ax)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def feasible_mask(problem: RobustProblem, X: np.ndarray, tol: float = FEAS_TOL) -> np.ndarray:
    """Vectorized robust feasibility of many points; borderline rows are re-solved exactly."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    ok = np.ones(X.shape[0], dtype=bool)
    checks = [(c.expr, c.uset, "g", i) for i, c in enumerate(problem.constraints)]
    checks += [(E.Abs(c.expr), c.uset, "h", j) for j, c in enumerate(problem.equalities)]
    for expr, uset, kind, idx in checks:
        rows = np.nonzero(ok)[0]
        if rows.size == 0:
            break
        lower, slack = _batch_bounds(expr, uset, X[rows])
        bad = lower > tol
        unsure = ~bad & (lower + slack > tol)
        ok[rows[bad]] = False
        for r in rows[unsure]:
            val = _memo(problem, _key(kind, idx, X[r]), lambda r=r: worst_case(expr, uset, X[r]))[0]
            ok[r] = val <= tol
    return ok


def sample_feasible(problem: RobustProblem, box=None, resolution=101, tol: float = FEAS_TOL) -> np.ndarray:
    """Feasible points of a lexicographic grid over ``box`` (defaults to the problem box)."""
    b = problem.box if box is None else (box if isinstance(box, Box) else Box(*box))
    X = grid_points(b.lo, b.hi, resolution)
    X = X[[problem.box.contains(x, 1e-9) for x in X]]
    if X.shape[0] == 0:
        return X
    return X[feasible_mask(problem, X, tol)]
