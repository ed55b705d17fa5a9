"""Vertex-represented polytopes, unions of polytopes, and LP membership tests."""

from __future__ import annotations

import itertools
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .lp import LPIterationError, LPWitness, lp_solve

__all__ = [
    "DEDUP_TOL",
    "MEMBER_TOL",
    "LPIterationError",
    "LPWitness",
    "PolyUnion",
    "Polytope",
    "as_union",
    "fixed_weight_membership",
    "hull",
    "lp_solve",
    "point_in_polytope",
    "zero_in_weighted_sum",
]

DEDUP_TOL = 1e-10
MEMBER_TOL = 1e-8
MAX_SELECTIONS = 4096


def _dedup(V: np.ndarray, tol: float = DEDUP_TOL) -> np.ndarray:
    """Drop repeated points (first occurrence kept, order preserved)."""
    if V.shape[0] <= 1:
        return V
    if V.shape[0] > 8:
        keys = np.round(V / tol).astype(np.int64) if np.max(np.abs(V)) < 1e8 else V
        _, first = np.unique(keys, axis=0, return_index=True)
        V = V[np.sort(first)]
        if V.shape[0] > 64:
            return V
    kept = [V[0]]
    for row in V[1:]:
        if np.min(np.max(np.abs(np.asarray(kept) - row), axis=1)) > tol:
            kept.append(row)
    return np.asarray(kept)


def extreme_points(V: np.ndarray) -> np.ndarray:
    """Drop non-extreme vertices. Works in the affine hull of the points."""
    V = _dedup(np.asarray(V, dtype=float))
    if V.shape[0] <= 2:
        return V
    center = V.mean(axis=0)
    D = V - center
    _, s, Vt = np.linalg.svd(D, full_matrices=False)
    scale = max(1.0, float(s[0]))
    r = int(np.sum(s > 1e-9 * scale))
    if r == 0:
        return V[:1]
    coords = D @ Vt[:r].T
    if r == 1:
        t = coords[:, 0]
        idx = sorted({int(np.argmin(t)), int(np.argmax(t))})
        return V[idx]
    if coords.shape[0] <= r + 1:
        return V
    try:
        h = ConvexHull(coords)
    except QhullError:
        return V
    return V[np.sort(h.vertices)]


class Polytope:
    """Convex hull of a finite, non-empty vertex list in R^n."""

    __slots__ = ("_V",)

    def __init__(self, vertices, *, dedup_tol: float = DEDUP_TOL):
        V = np.asarray(vertices, dtype=float)
        if V.ndim == 1:
            V = V.reshape(1, -1)
        if V.ndim != 2 or V.shape[0] == 0:
            raise ValueError("a polytope needs at least one vertex")
        if not np.all(np.isfinite(V)):
            raise ValueError("vertices must be finite")
        V = _dedup(V, dedup_tol).copy()
        V.setflags(write=False)
        self._V = V

    @property
    def vertices(self) -> np.ndarray:
        return self._V

    @property
    def dim(self) -> int:
        return self._V.shape[1]

    def __len__(self) -> int:
        return self._V.shape[0]

    def __repr__(self) -> str:
        return f"Polytope({self._V.tolist()})"

    def reduced(self) -> "Polytope":
        return Polytope(extreme_points(self._V))

    def scaled(self, t: float) -> "Polytope":
        return Polytope(t * self._V)

    def translated(self, b) -> "Polytope":
        return Polytope(self._V + np.asarray(b, dtype=float))

    def mapped(self, M) -> "Polytope":
        """Image under p -> M p."""
        return Polytope(self._V @ np.atleast_2d(np.asarray(M, dtype=float)).T)

    def minkowski(self, other: "Polytope") -> "Polytope":
        S = (self._V[:, None, :] + other._V[None, :, :]).reshape(-1, self.dim)
        return Polytope(extreme_points(S))

    def contains(self, p, tol: float = MEMBER_TOL) -> bool:
        return point_in_polytope(p, self, tol)

    def same_set(self, other: "Polytope", tol: float = 1e-9) -> bool:
        """Set equality via the extreme points of both sides."""
        A = extreme_points(self._V)
        B = extreme_points(other._V)
        if A.shape[1] != B.shape[1]:
            return False

        def covered(X, Y):
            return all(np.min(np.max(np.abs(Y - x), axis=1)) <= tol for x in X)

        return covered(A, B) and covered(B, A)


class PolyUnion:
    """Finite union of polytopes sharing one ambient dimension."""

    __slots__ = ("_members",)

    def __init__(self, members: Iterable[Polytope]):
        ms = [m if isinstance(m, Polytope) else Polytope(m) for m in members]
        if not ms:
            raise ValueError("a union needs at least one member")
        n = ms[0].dim
        if any(m.dim != n for m in ms):
            raise ValueError("members must share one dimension")
        out, seen = [], set()
        for m in ms:
            key = tuple(np.round(np.sort(extreme_points(m.vertices), axis=0).ravel(), 9))
            key = (m.dim, len(extreme_points(m.vertices))) + key
            if key not in seen:
                seen.add(key)
                out.append(m)
        self._members = tuple(out)

    @property
    def members(self) -> tuple[Polytope, ...]:
        return self._members

    @property
    def dim(self) -> int:
        return self._members[0].dim

    def __len__(self) -> int:
        return len(self._members)

    def __iter__(self):
        return iter(self._members)

    def __repr__(self) -> str:
        return f"PolyUnion({[m.vertices.tolist() for m in self._members]})"

    def all_vertices(self) -> np.ndarray:
        return np.vstack([m.vertices for m in self._members])

    def hull(self) -> Polytope:
        return Polytope(extreme_points(self.all_vertices()))

    def scaled(self, t: float) -> "PolyUnion":
        return PolyUnion(m.scaled(t) for m in self._members)

    def mapped(self, M) -> "PolyUnion":
        return PolyUnion(m.mapped(M) for m in self._members)

    def contains(self, p, tol: float = MEMBER_TOL) -> bool:
        return any(m.contains(p, tol) for m in self._members)

    def same_set(self, other: "PolyUnion", tol: float = 1e-9) -> bool:
        """Member-wise equality, ignoring member order."""
        other = as_union(other)
        return all(any(a.same_set(b, tol) for b in other) for a in self) and all(
            any(b.same_set(a, tol) for a in self) for b in other
        )


def as_union(s) -> PolyUnion:
    if isinstance(s, PolyUnion):
        return s
    if isinstance(s, Polytope):
        return PolyUnion([s])
    return PolyUnion([Polytope(s)])


def hull(points: Sequence) -> Polytope:
    """Convex hull of the given points; redundant points may be kept."""
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        raise ValueError("hull of an empty point list")
    return Polytope(P)


def point_in_polytope(p, P: Polytope, tol: float = MEMBER_TOL) -> bool:
    """True iff p is a convex combination of P's vertices up to ``tol`` (L1)."""
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != P.dim:
        raise ValueError(f"point has dimension {p.size}, polytope {P.dim}")
    w = fixed_weight_membership([(1.0, P)], offset=-p, tol=tol)
    return w.feasible


def _selections(sets: list[PolyUnion]):
    sizes = [len(s) for s in sets]
    total = int(np.prod(sizes)) if sizes else 1
    if total > MAX_SELECTIONS:
        raise ValueError(f"{total} member selections exceed the cap {MAX_SELECTIONS}")
    return itertools.product(*[range(k) for k in sizes])


def fixed_weight_membership(terms, offset=None, tol: float = MEMBER_TOL) -> LPWitness:
    """Decide ``0 in offset + sum_k c_k P_k`` with the coefficients c_k fixed.

    Each P_k may be a polytope or a union (every member selection is tried).
    ``residual`` is the smallest L1 distance of the reconstructed sum to 0.
    Status ``feasible`` means residual <= tol.
    """
    terms = [(float(c), as_union(S)) for c, S in terms]
    dims = {S.dim for _, S in terms}
    if offset is not None:
        dims.add(np.asarray(offset).size)
    if len(dims) > 1:
        raise ValueError("terms have inconsistent dimensions")
    if not dims:
        raise ValueError("no terms given")
    n = dims.pop()
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float).reshape(-1)
    live = [(k, c, S) for k, (c, S) in enumerate(terms) if c != 0.0]

    best: LPWitness | None = None
    for sel in _selections([S for _, _, S in live]):
        blocks = [c * S.members[j].vertices for (_, c, S), j in zip(live, sel)]
        sizes = [B.shape[0] for B in blocks]
        nv = sum(sizes)
        # columns: vertex weights, then s+ and s- per coordinate
        A = np.zeros((n + len(blocks), nv + 2 * n))
        col = 0
        for t, B in enumerate(blocks):
            A[:n, col:col + B.shape[0]] = B.T
            A[n + t, col:col + B.shape[0]] = 1.0
            col += B.shape[0]
        A[:n, nv:nv + n] = np.eye(n)
        A[:n, nv + n:] = -np.eye(n)
        b = np.concatenate([-off, np.ones(len(blocks))])
        cost = np.concatenate([np.zeros(nv), np.ones(2 * n)])
        sol = lp_solve(cost, A, b)
        weights = [np.zeros(len(S.members[0].vertices)) for _, S in terms]
        start = 0
        for (k, _, S), j, sz in zip(live, sel, sizes):
            weights[k] = sol.x[start:start + sz].copy()
            start += sz
        recon = off + sum((B.T @ weights[k] for (k, _, _), B in zip(live, blocks)), np.zeros(n))
        resid = float(np.abs(recon).sum())
        full_sel = [0] * len(terms)
        for (k, _, _), j in zip(live, sel):
            full_sel[k] = j
        w = LPWitness(
            "feasible" if resid <= tol else "infeasible",
            sol.x,
            objective=sol.objective,
            residual=resid,
            iterations=sol.iterations,
            weights=weights,
            choice=tuple(full_sel),
        )
        if best is None or w.residual < best.residual:
            best = w
        if w.feasible:
            break
    assert best is not None
    return best


def zero_in_weighted_sum(
    obj_terms,
    con_terms=(),
    force_zero: Iterable[int] = (),
    normalization: str = "all",
    tol: float = MEMBER_TOL,
) -> LPWitness:
    """Search nonnegative (lam, mu) with ``0 in sum lam_k P_k + sum mu_i Q_i``.

    Per-vertex variables a_kj >= 0 replace lam_k P_k via sum_j a_kj = lam_k.
    ``normalization`` is ``"all"`` (sum lam + sum mu = 1, Fritz-John form)
    or ``"obj"`` (sum lam = 1, KKT form). Constraint terms listed in
    ``force_zero`` get mu_i = 0.
    """
    if normalization not in ("all", "obj"):
        raise ValueError("normalization must be 'all' or 'obj'")
    obj = [as_union(S) for S in obj_terms]
    con = [as_union(S) for S in con_terms]
    force = set(int(i) for i in force_zero)
    if any(i < 0 or i >= len(con) for i in force):
        raise ValueError("force_zero index out of range")
    dims = {S.dim for S in obj + con}
    if len(dims) != 1:
        raise ValueError("terms must share one ambient dimension")
    n = dims.pop()
    allsets = obj + con
    kinds = ["obj"] * len(obj) + ["con"] * len(con)
    free = [k for k in range(len(allsets)) if not (kinds[k] == "con" and (k - len(obj)) in force)]

    best = None
    for sel in _selections([allsets[k] for k in free]):
        blocks = [allsets[k].members[j].vertices for k, j in zip(free, sel)]
        sizes = [B.shape[0] for B in blocks]
        nv = sum(sizes)
        if nv == 0:
            break
        A = np.zeros((n + 1, nv))
        col = 0
        for k, B in zip(free, blocks):
            A[:n, col:col + B.shape[0]] = B.T
            if normalization == "all" or kinds[k] == "obj":
                A[n, col:col + B.shape[0]] = 1.0
            col += B.shape[0]
        if not np.any(A[n]):
            break
        b = np.zeros(n + 1)
        b[n] = 1.0
        sol = lp_solve(np.zeros(nv), A, b)
        weights = [np.zeros(len(S.members[0].vertices)) for S in allsets]
        start = 0
        for k, sz in zip(free, sizes):
            weights[k] = sol.x[start:start + sz].copy()
            start += sz
        full_sel = [0] * len(allsets)
        for k, j in zip(free, sel):
            full_sel[k] = j
        recon = sum((B.T @ weights[k] for k, B in zip(free, blocks)), np.zeros(n))
        resid = float(np.abs(recon).sum())
        ok = sol.status == "feasible" and resid <= tol
        w = LPWitness(
            "feasible" if ok else "infeasible",
            sol.x,
            objective=0.0,
            residual=resid if sol.status == "feasible" else sol.residual,
            iterations=sol.iterations,
            weights=weights,
            lam=np.array([weights[k].sum() for k in range(len(obj))]),
            mu=np.array([weights[len(obj) + i].sum() for i in range(len(con))]),
            choice=tuple(full_sel),
        )
        if best is None or (w.feasible and not best.feasible):
            best = w
        if w.feasible:
            break
    if best is None:
        best = LPWitness(
            "infeasible",
            np.zeros(0),
            residual=float("inf"),
            weights=[np.zeros(len(S.members[0].vertices)) for S in allsets],
            lam=np.zeros(len(obj)),
            mu=np.zeros(len(con)),
        )
    return best
