"""Builders for approximation and linear-operator problems, plus the worked fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .certify import Certificate
from .robust import Box, Constraint, RobustProblem, UncertaintySet

__all__ = [
    "AUPSpec",
    "BUILTIN_NAMES",
    "CULSpec",
    "NormTerm",
    "build_aup",
    "build_cul",
    "builtin_example",
    "concave_fixture",
    "random_convex_instance",
]


@dataclass(frozen=True)
class NormTerm:
    """alpha * ||T x - target||^beta."""

    T: list
    target: list
    alpha: object = 1
    beta: object = 1


@dataclass
class AUPSpec:
    r: list
    terms: list
    box: Box
    constraints: list = field(default_factory=list)
    equalities: list = field(default_factory=list)
    name: str = ""


@dataclass
class CULSpec:
    pairs: list  # (f_k over Y_k, T_k)
    box: Box
    constraints: list = field(default_factory=list)
    name: str = ""


def _xvec(n: int) -> E.Var:
    return E.X(list(range(n)))


def _term_dict(t: NormTerm) -> dict:
    return {"T": E._raw(t.T), "target": E._raw(t.target), "alpha": E._raw(t.alpha), "beta": E._raw(t.beta)}


def build_aup(spec: AUPSpec) -> RobustProblem:
    """Objectives r_k(x) + alpha_k ||T_k x - y0_k||^beta_k."""
    n = spec.box.dim
    if len(spec.r) != len(spec.terms):
        raise ValueError("one norm term per objective component is required")
    objs = []
    for r, t in zip(spec.r, spec.terms):
        T = np.atleast_2d(np.asarray(E._arr(E._raw(t.T)), dtype=float))
        if T.shape[1] != n:
            raise ValueError(f"operator has {T.shape[1]} columns, decision space has {n}")
        if E._arr(E._raw(t.target)).size != T.shape[0]:
            raise ValueError("target dimension must match the operator's rows")
        lin = E.Affine(E._raw(t.T), [0] * T.shape[0], _xvec(n))
        objs.append(E.Sum(r, E.NormPower(lin, t.target, t.alpha, t.beta)))
    meta = {"aup": {"r": list(spec.r), "terms": [_term_dict(t) for t in spec.terms]}}
    return RobustProblem(objs, spec.constraints, spec.equalities, spec.box, spec.name, meta)


def build_cul(spec: CULSpec) -> RobustProblem:
    """Objectives f_k(T_k x)."""
    n = spec.box.dim
    objs, pairs = [], []
    for f, T in spec.pairs:
        Tr = E._raw(T)
        Ta = np.atleast_2d(E._arr(Tr))
        if Ta.shape[1] != n:
            raise ValueError(f"operator has {Ta.shape[1]} columns, decision space has {n}")
        if f.nx > Ta.shape[0]:
            raise ValueError("objective reads more coordinates than the operator yields")
        objs.append(E.Compose(f, E.Affine(Tr, [0] * Ta.shape[0], _xvec(n))))
        pairs.append((f, Tr))
    return RobustProblem(objs, spec.constraints, [], spec.box, spec.name, {"cul": {"pairs": pairs}})


# fixtures -------------------------------------------------------------------

x0, x1 = E.X(0), E.X(1)
v0 = E.V(0)


def _ex32():
    F = E.Affine([["1/2", 0], [0, 1]], [0, -1], _xvec(2))
    f1 = -2 * x0 + abs(x1)
    f2 = E.recip_shift(x0) - 3 * x1 + 2
    f3 = E.invsqrt_shift(x0) - abs(x1 - 1) - 1
    objs = [E.Compose(f, F) for f in (f1, f2, f3)]
    z1, z2, u = E.X(0), E.X(1), E.X(2)
    g1 = E.Product(E.square(u), abs(z2)) + E.Max(z1, 2 * z1) - 3 * abs(u)
    g2 = -3 * abs(z1) + E.Product(u, z2) - 2
    G1 = E.Tuple(x0 + 1, x1, v0)
    G2 = E.Tuple(x0, 2 * x1, v0)
    U = UncertaintySet([-1], [1])
    cons = [Constraint(E.Compose(g1, G1), U), Constraint(E.Compose(g2, G2), U)]
    prob = RobustProblem(objs, cons, [], Box([-10, -10], [10, 10]), "ex3-2")
    s = np.sqrt(2) / 3
    return prob, np.array([-1.0, 1.0]), Certificate(y=[s, 0, s], mu=[1 / 3, 0])


def _r_components():
    r1 = 3 * abs(x0) + E.Scale("2/5", x1) + E.Const("4/5")
    r2 = E.Scale("1/4", E.square(x0)) + 2
    r3 = 2 * abs(x0) - E.Scale("1/8", E.square(x1)) + 1
    return [r1, r2, r3]


def _g_constraints():
    U = UncertaintySet([-1], ["-1/4"])
    g1 = (E.Product(E.Scale("1/4", E.square(v0)), abs(x0))
          + E.Product(E.Scale("1/2", E.square(v0)), x1)
          + E.Scale("1/4", abs(v0)))
    g2 = E.Scale("1/8", E.square(x0)) + E.Product(abs(v0), x1) + abs(v0) + E.Const("1/4")
    return [Constraint(g1, U), Constraint(g2, U)]


_T = [[[0, "1/2"], [1, 0]], [[1, 0], [0, "1/2"]], [[0, "1/2"], [0, "1/2"]]]


def _ex51():
    U = UncertaintySet([-1], ["-1/4"])
    h1 = E.Product(v0, -3 * x0 + x1 + 2)
    h2 = E.Product(v0, -3 * x0 - x1 - 2)
    targets = [[-1, 0], [0, -1], [-1, -1]]
    alphas = [2, 1, 1]
    terms = [NormTerm(T, y0, a, 1) for T, y0, a in zip(_T, targets, alphas)]
    spec = AUPSpec(
        _r_components(), terms, Box([-10, -25], [10, 5]),
        _g_constraints(),
        [Constraint(h1, U, "equality"), Constraint(h2, U, "equality")],
        "ex5-1",
    )
    cert = Certificate(y=[1, 0, 1], mu=[0, 1], sigma=[1, 0],
                       dual_vectors=([-0.4, 0], [0, 0], [-0.5, -0.5]))
    return build_aup(spec), np.array([0.0, -2.0]), cert


def _ex52():
    spec = CULSpec(list(zip(_r_components(), _T)), Box([-10, -25], [10, 5]), _g_constraints(), "ex5-2")
    return build_cul(spec), np.array([0.0, -2.0]), Certificate(y=[0, 0, 0.5], mu=[0, 0.5])


_BUILTINS = {"ex3-2": _ex32, "ex5-1": _ex51, "ex5-2": _ex52}
BUILTIN_NAMES = tuple(_BUILTINS)


def builtin_example(name: str):
    """Return (problem, candidate point, published multipliers) for a worked example."""
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ValueError(f"unknown example {name!r}; known: {', '.join(BUILTIN_NAMES)}") from None


def concave_fixture():
    """f(x) = -x^2 on [-2, 2], unconstrained; candidate 0."""
    prob = RobustProblem([-E.square(x0)], [], [], Box([-2], [2]), "concave")
    return prob, np.array([0.0])


_LATTICE = 0.2


def _lattice(rng, lo: int, hi: int) -> float:
    return round(int(rng.integers(lo, hi + 1)) * _LATTICE, 10)


def _random_objective(rng, j: int) -> E.Expr:
    c = _lattice(rng, -8, 8)
    t = E.X(j) - c if c else E.X(j)
    kind = int(rng.integers(0, 4))
    a = int(rng.integers(1, 4))
    if kind == 0:
        return a * abs(t) + float(rng.integers(0, 3))
    if kind == 1:
        return E.Scale(a, E.square(t)) + abs(t)
    if kind == 2:
        return E.Max(-a * t, int(rng.integers(1, 4)) * t)
    return E.Norm(E.Tuple(t, E.Const(0))) + E.Scale(_LATTICE, E.square(t))


def random_convex_instance(seed: int, resolution: int = 101) -> RobustProblem:
    """Separable convex 2-D instance on [-2, 2]^2 with lattice kinks.

    Each objective reads one coordinate. Constraints keep each coordinate in a
    robust interval [c - r, c + r]; minimizers, kinks and interval ends lie on
    the 0.2 lattice, so a 21x21 grid sees the true weakly efficient set.
    """
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 4))
    coords = [0, 1] + [int(rng.integers(0, 2)) for _ in range(p - 2)]
    objs = [_random_objective(rng, j) for j in coords]
    U = UncertaintySet([-1], [1], resolution)
    cons = []
    for j in range(2):
        c = _lattice(rng, -2, 2)
        r = _lattice(rng, 4, 7)
        t = E.X(j) - c if c else E.X(j)
        if rng.integers(0, 2):
            g = E.Product(v0, t) - r  # max over v is |t| - r
        else:
            g = E.Product(E.square(v0), abs(t)) - r  # two maximizers when t != 0
        cons.append(Constraint(g, U))
    return RobustProblem(objs, cons, [], Box([-2, -2], [2, 2]), f"random-{seed}")
