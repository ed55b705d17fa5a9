"""Limiting-subdifferential calculus over expression trees.

``_sd(node, w, ...)`` computes the subdifferential of the scalarization
<w, node> in x, returned as a finite union of polytopes together with flags
that record whether every rule on the way held with equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .polyset import PolyUnion, Polytope, extreme_points

ACT_TOL = 1e-8
BALL_RESOLUTION = 64
MAX_MEMBERS = 512

__all__ = [
    "ACT_TOL",
    "BALL_RESOLUTION",
    "SubdiffResult",
    "ball_directions",
    "constraint_agg_set",
    "equality_agg_set",
    "primitive_subdiff",
    "scalarized_subdiff",
    "subdiff",
]


@dataclass(frozen=True)
class SubdiffResult:
    set: PolyUnion
    exact: bool
    trace: tuple[str, ...] = ()

    @property
    def exactness(self) -> str:
        return "exact" if self.exact else "outer-estimate"

    def hull(self) -> Polytope:
        return self.set.hull()


@dataclass
class _Part:
    members: list  # list of (k, n) vertex arrays
    exact: bool = True
    smooth: bool = True  # a single gradient obtained through smooth rules only
    regular: bool = True  # limiting and convex-analysis subdifferentials agree


@dataclass
class _Ctx:
    n: int
    free: frozenset
    trace: list = field(default_factory=list)
    ball: int = BALL_RESOLUTION

    def note(self, rule: str) -> None:
        if rule not in self.trace:
            self.trace.append(rule)


def ball_directions(m: int, k: int = BALL_RESOLUTION) -> np.ndarray:
    """Unit vectors whose hull approximates the Euclidean unit ball in R^m.

    m=1 is exact ({-1, 1}); m=2 uses a regular k-gon, whose inscribed hull
    contains the ball of radius cos(pi/k); m=3 uses a Fibonacci sphere.
    """
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        t = 2 * np.pi * np.arange(k) / k
        return np.column_stack([np.cos(t), np.sin(t)])
    if m == 3:
        i = np.arange(k) + 0.5
        phi = np.arccos(1 - 2 * i / k)
        th = np.pi * (1 + 5**0.5) * i
        return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    eye = np.eye(m)
    corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * min(m, 10))).reshape(min(m, 10), -1).T
    if m > 10:
        corners = np.hstack([corners, np.zeros((corners.shape[0], m - 10))])
    corners /= np.linalg.norm(corners, axis=1, keepdims=True)
    return np.vstack([eye, -eye, corners])


def _zero(ctx: _Ctx) -> _Part:
    return _Part([np.zeros((1, ctx.n))])


def _single(g) -> _Part:
    return _Part([np.asarray(g, dtype=float).reshape(1, -1)])


def _hull_of(arrs) -> np.ndarray:
    return extreme_points(np.vstack(arrs))


def _members_sum(A: list, B: list, ctx: _Ctx):
    out = []
    for a in A:
        for b in B:
            s = (a[:, None, :] + b[None, :, :]).reshape(-1, ctx.n)
            out.append(extreme_points(s))
    return out


def _combine(parts: list[_Part], ctx: _Ctx) -> _Part:
    """Sum rule: Minkowski sum of unions, distributing over members."""
    parts = [p for p in parts if p is not None]
    if not parts:
        return _zero(ctx)
    members = parts[0].members
    merged = False
    for p in parts[1:]:
        members = _members_sum(members, p.members, ctx)
        if len(members) > MAX_MEMBERS:
            members = [_hull_of(members)]
            merged = True
            ctx.note("union-merged")
    nonsmooth = sum(not p.smooth for p in parts)
    regular = all(p.regular for p in parts)
    exact = all(p.exact for p in parts) and (nonsmooth <= 1 or regular) and not merged
    if len(parts) > 1:
        ctx.note("sum")
    return _Part(_dedup_members(members), exact, all(p.smooth for p in parts), regular)


def _dedup_members(members: list) -> list:
    out, seen = [], set()
    for m in members:
        key = (m.shape, tuple(np.round(np.sort(m, axis=0).ravel(), 10)))
        if key not in seen:
            seen.add(key)
            out.append(m)
    return out


def _sd(node: E.Expr, w: np.ndarray, x: np.ndarray, v, ctx: _Ctx) -> _Part:
    w = np.asarray(w, dtype=float).reshape(-1)
    if not (node.x_support & ctx.free) or not np.any(w):
        return _zero(ctx)

    if isinstance(node, E.Var):
        g = np.zeros(ctx.n)
        if node.space == "x":
            for j, k in enumerate(node.index):
                if k in ctx.free:
                    g[k] += w[j]
        return _single(g)

    if isinstance(node, E.Affine):
        return _sd(node.arg, node.A.T @ w, x, v, ctx)
    if isinstance(node, E.Scale):
        return _sd(node.arg, node.factor * w, x, v, ctx)
    if isinstance(node, E.Neg):
        return _sd(node.arg, -w, x, v, ctx)
    if isinstance(node, E.Sum):
        return _combine([_sd(c, w, x, v, ctx) for c in node.children], ctx)
    if isinstance(node, E.Tuple):
        return _combine([_sd(c, w[j:j + 1], x, v, ctx) for j, c in enumerate(node.children)], ctx)

    om = float(w[0])
    if isinstance(node, E.Smooth):
        t = float(node.arg._ev(x, v)[..., 0])
        d = node.derivative(t)
        p = _sd(node.arg, [om * d], x, v, ctx)
        ctx.note("smooth-chain")
        return _Part(p.members, p.exact, p.smooth, p.regular and om * d >= 0 or p.smooth)

    if isinstance(node, E.Abs):
        t = float(node.arg._ev(x, v)[..., 0])
        if abs(t) > E.KINK_TOL:
            return _sd(node.arg, [om * np.sign(t)], x, v, ctx)
        return _kink(node.arg, np.array([[1.0], [-1.0]]), om, x, v, ctx, exact_dirs=True, label="abs-kink")

    if isinstance(node, (E.Norm, E.NormPower)):
        a = node.arg._ev(x, v)
        if isinstance(node, E.NormPower):
            if node.alpha == 0:
                return _zero(ctx)
            a = a - node.center
            om = om * node.alpha
        a = np.asarray(a, dtype=float).reshape(-1)
        r = float(np.linalg.norm(a))
        beta = node.beta if isinstance(node, E.NormPower) else 1.0
        if beta > 1:
            if r <= E.KINK_TOL:
                return _zero(ctx)
            return _sd(node.arg, om * beta * r ** (beta - 2) * a, x, v, ctx)
        if r > E.KINK_TOL:
            return _sd(node.arg, om * a / r, x, v, ctx)
        m = a.size
        dirs = ball_directions(m, ctx.ball)
        if m > 1:
            ctx.note(f"ball-discretized({len(dirs)})")
        return _kink(node.arg, dirs, om, x, v, ctx, exact_dirs=(m == 1), label="norm-kink")

    if isinstance(node, E.Max):
        vals = np.array([float(c._ev(x, v)[..., 0]) for c in node.children])
        top = vals.max()
        act = [i for i, val in enumerate(vals) if val >= top - ACT_TOL]
        if len(act) == 1:
            return _sd(node.children[act[0]], w, x, v, ctx)
        parts = [_sd(node.children[i], w, x, v, ctx) for i in act]
        if om > 0:
            ctx.note("max-hull")
            exact = all(p.exact and p.regular for p in parts)
            return _Part([_hull_of([m for p in parts for m in p.members])], exact, False, all(p.regular for p in parts))
        ctx.note("max-union")
        exact = all(p.smooth for p in parts) and len(act) <= 2
        return _Part(_dedup_members([m for p in parts for m in p.members]), exact, False, False)

    if isinstance(node, E.Product):
        a, b = node.children
        av, bv = float(a._ev(x, v)[..., 0]), float(b._ev(x, v)[..., 0])
        pa, pb = _sd(a, [om * bv], x, v, ctx), _sd(b, [om * av], x, v, ctx)
        res = _combine([pa, pb], ctx)
        fixed = not (a.x_support & ctx.free) or not (b.x_support & ctx.free)
        res.exact = pa.exact and pb.exact and (fixed or (pa.smooth and pb.smooth))
        res.regular = res.regular and fixed
        ctx.note("product")
        return res

    if isinstance(node, E.Compose):
        return _compose(node, w, x, v, ctx)

    raise NotImplementedError(f"no subdifferential rule for {type(node).__name__}")


def _kink(arg, dirs, om, x, v, ctx, *, exact_dirs: bool, label: str) -> _Part:
    """Subdifferential of om*psi(arg) where psi is |.| or a norm at its kink.

    ``dirs`` are the extreme points of the kink's unit ball.
    """
    parts = [_sd(arg, om * d, x, v, ctx) for d in dirs]
    smooth = all(p.smooth for p in parts)
    if om > 0:
        ctx.note(f"{label}-hull")
        return _Part([_hull_of([m for p in parts for m in p.members])], smooth and exact_dirs, False, smooth)
    ctx.note(f"{label}-union")
    return _Part(_dedup_members([m for p in parts for m in p.members]), smooth and exact_dirs, False, False)


def _compose(node: E.Compose, w, x, v, ctx: _Ctx) -> _Part:
    inner, outer = node.inner, node.outer
    wbar = np.asarray(inner._ev(x, v), dtype=float).reshape(-1)
    m = inner.out_dim
    ofree = frozenset(j for j in range(m) if inner.comp_supports[j] & ctx.free)
    sub = _Ctx(m, ofree, ctx.trace, ctx.ball)
    P = _sd(outer, w, wbar, v, sub)
    rows = {}
    for j in sorted(ofree):
        rows[j] = _sd(inner, np.eye(m)[j], x, v, ctx)
    if all(r.smooth for r in rows.values()):
        J = np.zeros((m, ctx.n))
        for j, r in rows.items():
            J[j] = r.members[0][0]
        fr = sorted(ofree)
        surj = bool(fr) and np.linalg.matrix_rank(J[fr]) == len(fr)
        ctx.note("chain-smooth-inner")
        members = _dedup_members([extreme_points(M @ J) for M in P.members])
        exact = P.exact and all(r.exact for r in rows.values()) and (surj or P.regular or P.smooth)
        return _Part(members, exact, P.smooth, P.regular)
    ctx.note("chain-nonsmooth-inner")
    members, exact = [], P.smooth and P.exact
    for M in P.members:
        parts = [_sd(inner, s, x, v, ctx) for s in M]
        exact = exact and all(p.exact for p in parts)
        if M.shape[0] == 1:
            members.extend(m_ for p in parts for m_ in p.members)
        else:
            members.append(_hull_of([m_ for p in parts for m_ in p.members]))
    return _Part(_dedup_members(members), exact, False, False)


# public API -----------------------------------------------------------------

def _point(e: E.Expr, x, v):
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if xa.ndim != 1:
        raise ValueError("subdifferentials are taken at a single point")
    if xa.size < e.nx:
        raise ValueError(f"point has {xa.size} coordinates, expression needs {e.nx}")
    va = None if v is None else np.atleast_1d(np.asarray(v, dtype=float))
    if e.nv and (va is None or va.size < e.nv):
        raise ValueError(f"expression needs {e.nv} parameter coordinates")
    return xa, va


def _result(part: _Part, ctx: _Ctx) -> SubdiffResult:
    return SubdiffResult(PolyUnion([Polytope(m) for m in part.members]), bool(part.exact), tuple(ctx.trace))


def subdiff(e: E.Expr, x, v=None, *, ball_resolution: int = BALL_RESOLUTION) -> SubdiffResult:
    """Limiting subdifferential in x of a scalar expression (v held fixed)."""
    if e.out_dim != 1:
        raise ValueError("subdiff needs a scalar expression; scalarize vector maps first")
    xa, va = _point(e, x, v)
    ctx = _Ctx(xa.size, frozenset(range(xa.size)), ball=ball_resolution)
    return _result(_sd(e, np.ones(1), xa, va, ctx), ctx)


_PRIMITIVES = (E.Abs, E.Norm, E.NormPower, E.Smooth, E.Affine, E.Var, E.Const)


def primitive_subdiff(e: E.Expr, x, v=None) -> PolyUnion:
    """Subdifferential of a leaf-level primitive (abs, norm, norm power, smooth, affine)."""
    if not isinstance(e, _PRIMITIVES):
        raise NotImplementedError(f"{type(e).__name__} is not a leaf-level primitive")
    return subdiff(e, x, v).set


def scalarized_subdiff(weights, components, x, v=None) -> SubdiffResult:
    """Sum-rule estimate of the subdifferential of sum_k w_k * component_k."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != len(components):
        raise ValueError("one weight per component is required")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    ctx = _Ctx(xa.size, frozenset(range(xa.size)))
    parts = []
    for wk, c in zip(w, components):
        if c.out_dim != 1:
            raise ValueError("components must be scalar")
        _, va = _point(c, xa, v)
        parts.append(_sd(c, [wk], xa, va, ctx))
    return _result(_combine(parts, ctx), ctx)


def constraint_agg_set(problem, i: int, x) -> Polytope:
    """Hull of the union of x-subdifferentials of constraint i over its active parameters."""
    from .robust import active_uncertainty

    con = problem.constraints[i]
    act = active_uncertainty(problem, i, x)
    if not act:
        raise RuntimeError(f"constraint {i + 1} has no maximizing parameter")
    verts = []
    for vb in act:
        verts.append(subdiff(con.expr, x, vb).set.all_vertices())
    return Polytope(extreme_points(np.vstack(verts)))


def constraint_agg_result(problem, i: int, x) -> SubdiffResult:
    """Like constraint_agg_set, also reporting exactness."""
    from .robust import active_uncertainty

    con = problem.constraints[i]
    res = [subdiff(con.expr, x, vb) for vb in active_uncertainty(problem, i, x)]
    P = Polytope(extreme_points(np.vstack([r.set.all_vertices() for r in res])))
    trace = tuple(dict.fromkeys(t for r in res for t in r.trace))
    return SubdiffResult(PolyUnion([P]), all(r.exact for r in res), trace)


def equality_agg_set(problem, j: int, x, resolution: int | None = None) -> Polytope:
    """Hull over the whole parameter set of the x-subdifferentials of h_j and -h_j."""
    con = problem.equalities[j]
    grid = con.uset.grid(resolution)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    verts = []
    for vb in grid:
        ctx = _Ctx(xa.size, frozenset(range(xa.size)))
        for s in (1.0, -1.0):
            part = _sd(con.expr, [s], xa, vb, ctx)
            verts.extend(part.members)
    return Polytope(extreme_points(np.vstack(verts)))
