"""Expression trees for composite functions of a decision point x and a parameter v.

Every node evaluates under numpy broadcasting: ``x`` has shape (..., n) and
``v`` shape (..., d); the result has shape (..., out_dim). Nodes are immutable.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Real
from typing import Any

import numpy as np

KINK_TOL = 1e-12

__all__ = [
    "KINK_TOL",
    "DomainError",
    "Expr",
    "Var",
    "Const",
    "Affine",
    "Scale",
    "Neg",
    "Sum",
    "Abs",
    "Norm",
    "NormPower",
    "Max",
    "Compose",
    "Tuple",
    "Smooth",
    "Product",
    "SMOOTH_CATALOG",
    "X",
    "V",
    "const",
    "recip_shift",
    "invsqrt_shift",
    "square",
    "evaluate",
    "to_json",
    "from_json",
]


class DomainError(ValueError):
    """Evaluation outside a declared box or a primitive's domain."""


class Literal(Fraction):
    """Exact rational parsed from a string; remembers the text it came from."""

    __slots__ = ("text",)

    def __new__(cls, text: str):
        try:
            self = super().__new__(cls, text.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"bad numeric literal {text!r}: use decimals or p/q rationals") from exc
        self.text = text
        return self

    def __reduce__(self):
        return (Literal, (self.text,))


# raw numeric tokens (int, float, Fraction) are kept for faithful serialization
def _num(tok) -> float:
    if isinstance(tok, bool):
        raise TypeError("booleans are not numbers")
    if isinstance(tok, str):
        tok = Literal(tok)
    if isinstance(tok, (Real, Fraction)):
        return float(tok)
    raise TypeError(f"not a number: {tok!r}")


def _arr(raw) -> np.ndarray:
    if isinstance(raw, (list, tuple)):
        return np.array([_arr(r) for r in raw], dtype=float)
    if isinstance(raw, np.ndarray):
        return raw.astype(float)
    return np.array(_num(raw), dtype=float)


def _raw(obj):
    """Normalise user input into JSON-friendly raw tokens."""
    if isinstance(obj, np.ndarray):
        return _raw(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_raw(o) for o in obj]
    if isinstance(obj, str):
        return Literal(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _dump(raw):
    if isinstance(raw, list):
        return [_dump(r) for r in raw]
    if isinstance(raw, Literal):
        return raw.text
    if isinstance(raw, Fraction):
        return str(raw)
    return raw


_CURV_FLIP = {"constant": "constant", "affine": "affine", "convex": "concave",
              "concave": "convex", "unknown": "unknown"}
_SIGN_FLIP = {"zero": "zero", "nonneg": "nonpos", "nonpos": "nonneg", "unknown": "unknown"}


def _curv_add(a: str, b: str) -> str:
    order = ("constant", "affine")
    if a in order and b in order:
        return "affine" if "affine" in (a, b) else "constant"
    if a in order:
        return b
    if b in order:
        return a
    return a if a == b else "unknown"


def _sign_add(a: str, b: str) -> str:
    if a == "zero":
        return b
    if b == "zero":
        return a
    return a if a == b else "unknown"


class Expr:
    """Base class. Subclasses set ``out_dim``, supports, and implement ``_ev``."""

    op: str = ""
    out_dim: int = 1
    children: tuple = ()

    def _init_common(self, out_dim: int, comp_supports, v_support) -> None:
        self.out_dim = out_dim
        self.comp_supports = tuple(frozenset(s) for s in comp_supports)
        self.x_support = frozenset().union(*self.comp_supports) if self.comp_supports else frozenset()
        self.v_support = frozenset(v_support)

    # dimension bookkeeping
    @property
    def nx(self) -> int:
        return max(self.x_support) + 1 if self.x_support else 0

    @property
    def nv(self) -> int:
        return max(self.v_support) + 1 if self.v_support else 0

    @property
    def depends_x(self) -> bool:
        return bool(self.x_support)

    @property
    def depends_v(self) -> bool:
        return bool(self.v_support)

    @property
    def is_scalar(self) -> bool:
        return self.out_dim == 1

    def _ev(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def __call__(self, x, v=None):
        return evaluate(self, x, v)

    # curvature in x with v frozen; sign of the value
    @property
    def curvature(self) -> str:
        return "unknown"

    @property
    def sign(self) -> str:
        return "unknown"

    def params(self) -> dict:
        return {}

    def to_json(self) -> dict:
        return to_json(self)

    # operator sugar
    def __add__(self, other):
        return Sum(self, _lift(other))

    def __radd__(self, other):
        return Sum(_lift(other), self)

    def __sub__(self, other):
        return Sum(self, Neg(_lift(other)))

    def __rsub__(self, other):
        return Sum(_lift(other), Neg(self))

    def __neg__(self):
        return Neg(self)

    def __mul__(self, other):
        if isinstance(other, Expr):
            return Product(self, other)
        return Scale(other, self)

    def __rmul__(self, other):
        if isinstance(other, Expr):
            return Product(other, self)
        return Scale(other, self)

    def __abs__(self):
        return Abs(self)

    def __getitem__(self, i: int):
        if not 0 <= i < self.out_dim:
            raise IndexError(i)
        row = np.zeros((1, self.out_dim))
        row[0, i] = 1.0
        return Affine(row.tolist(), [0], self)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({', '.join(repr(c) for c in self.children)})"


def _lift(obj) -> Expr:
    return obj if isinstance(obj, Expr) else Const(obj)


def _scalar(e: Expr, who: str) -> Expr:
    if not isinstance(e, Expr):
        raise TypeError(f"{who} expects an expression")
    if e.out_dim != 1:
        raise ValueError(f"{who} expects a scalar operand, got dimension {e.out_dim}")
    return e


class Var(Expr):
    """Projection onto coordinates of x (space 'x') or v (space 'v')."""

    op = "var"

    def __init__(self, space: str, index):
        if space not in ("x", "v"):
            raise ValueError("space must be 'x' or 'v'")
        self.space = space
        self.vector = isinstance(index, (list, tuple, range, np.ndarray))
        idx = [int(i) for i in index] if self.vector else [int(index)]
        if not idx or min(idx) < 0:
            raise ValueError("indices must be non-negative")
        self.index = tuple(idx)
        sup = [{i} for i in idx] if space == "x" else [set() for _ in idx]
        self._init_common(len(idx), sup, idx if space == "v" else ())

    def _ev(self, x, v):
        src = x if self.space == "x" else v
        if src is None:
            raise ValueError("expression uses v but no v was supplied")
        return src[..., list(self.index)]

    @property
    def curvature(self):
        return "affine" if self.space == "x" else "constant"

    def params(self):
        return {"space": self.space, "index": list(self.index) if self.vector else self.index[0]}

    def __repr__(self):
        i = list(self.index) if self.vector else self.index[0]
        return f"{self.space}[{i}]"


class Const(Expr):
    op = "const"

    def __init__(self, value):
        self._rawv = _raw(value)
        val = _arr(self._rawv)
        self.value = np.atleast_1d(val)
        self.vector = val.ndim == 1
        if val.ndim > 1:
            raise ValueError("constants are scalars or vectors")
        self._init_common(self.value.size, [()] * self.value.size, ())

    def _ev(self, x, v):
        return self.value

    @property
    def curvature(self):
        return "constant"

    @property
    def sign(self):
        if np.all(self.value == 0):
            return "zero"
        if np.all(self.value >= 0):
            return "nonneg"
        if np.all(self.value <= 0):
            return "nonpos"
        return "unknown"

    def params(self):
        return {"value": _dump(self._rawv)}

    def __repr__(self):
        return repr(self.value.tolist() if self.vector else float(self.value[0]))


class Affine(Expr):
    """A @ arg + b."""

    op = "affine"

    def __init__(self, A, b, arg: Expr):
        self._rawA, self._rawb = _raw(A), _raw(b)
        self.A = np.atleast_2d(_arr(self._rawA))
        self.b = np.atleast_1d(_arr(self._rawb))
        if self.A.ndim != 2 or self.A.shape[1] != arg.out_dim:
            raise ValueError(f"matrix shape {self.A.shape} does not match argument dimension {arg.out_dim}")
        if self.b.size != self.A.shape[0]:
            raise ValueError("offset length must equal the number of matrix rows")
        self.arg = arg
        self.children = (arg,)
        sup = [set().union(*[arg.comp_supports[j] for j in np.nonzero(row)[0]]) for row in self.A]
        self._init_common(self.A.shape[0], sup, arg.v_support)

    def _ev(self, x, v):
        return self.arg._ev(x, v) @ self.A.T + self.b

    @property
    def curvature(self):
        c = self.arg.curvature
        if c in ("constant", "affine"):
            return c
        if self.A.shape == (1, 1):
            return c if self.A[0, 0] >= 0 else _CURV_FLIP[c]
        return "unknown"

    def params(self):
        return {"A": _dump(self._rawA), "b": _dump(self._rawb)}


class Scale(Expr):
    op = "scale"

    def __init__(self, factor, arg: Expr):
        self._rawf = _raw(factor)
        self.factor = _num(self._rawf)
        self.arg = arg
        self.children = (arg,)
        self._init_common(arg.out_dim, arg.comp_supports, arg.v_support)

    def _ev(self, x, v):
        return self.factor * self.arg._ev(x, v)

    @property
    def curvature(self):
        return self.arg.curvature if self.factor >= 0 else _CURV_FLIP[self.arg.curvature]

    @property
    def sign(self):
        if self.factor == 0:
            return "zero"
        return self.arg.sign if self.factor > 0 else _SIGN_FLIP[self.arg.sign]

    def params(self):
        return {"factor": _dump(self._rawf)}


class Neg(Expr):
    op = "neg"

    def __init__(self, arg: Expr):
        self.arg = arg
        self.children = (arg,)
        self._init_common(arg.out_dim, arg.comp_supports, arg.v_support)

    def _ev(self, x, v):
        return -self.arg._ev(x, v)

    @property
    def curvature(self):
        return _CURV_FLIP[self.arg.curvature]

    @property
    def sign(self):
        return _SIGN_FLIP[self.arg.sign]


class Sum(Expr):
    op = "sum"

    def __init__(self, *args: Expr):
        if len(args) == 1 and isinstance(args[0], (list, tuple)):
            args = tuple(args[0])
        if not args:
            raise ValueError("sum needs at least one term")
        flat = [_lift(a) for a in args]
        dims = {a.out_dim for a in flat}
        if len(dims) != 1:
            raise ValueError(f"sum terms have mismatched dimensions {sorted(dims)}")
        self.children = tuple(flat)
        d = dims.pop()
        sup = [set().union(*[a.comp_supports[i] for a in flat]) for i in range(d)]
        self._init_common(d, sup, set().union(*[a.v_support for a in flat]))

    def _ev(self, x, v):
        out = self.children[0]._ev(x, v)
        for c in self.children[1:]:
            out = out + c._ev(x, v)
        return out

    @property
    def curvature(self):
        c = "constant"
        for a in self.children:
            c = _curv_add(c, a.curvature)
        return c

    @property
    def sign(self):
        s = "zero"
        for a in self.children:
            s = _sign_add(s, a.sign)
        return s


class Abs(Expr):
    op = "abs"

    def __init__(self, arg: Expr):
        self.arg = _scalar(arg, "abs")
        self.children = (arg,)
        self._init_common(1, arg.comp_supports, arg.v_support)

    def _ev(self, x, v):
        return np.abs(self.arg._ev(x, v))

    @property
    def curvature(self):
        c, s = self.arg.curvature, self.arg.sign
        if c in ("constant", "affine"):
            return "convex" if c == "affine" else "constant"
        if (c == "convex" and s in ("nonneg", "zero")) or (c == "concave" and s in ("nonpos", "zero")):
            return "convex"
        return "unknown"

    @property
    def sign(self):
        return "nonneg"


class Norm(Expr):
    """Euclidean norm of a vector expression."""

    op = "norm"

    def __init__(self, arg: Expr):
        self.arg = arg
        self.children = (arg,)
        self._init_common(1, [arg.x_support], arg.v_support)

    def _ev(self, x, v):
        return np.linalg.norm(self.arg._ev(x, v), axis=-1, keepdims=True)

    @property
    def curvature(self):
        c = self.arg.curvature
        return {"constant": "constant", "affine": "convex"}.get(c, "unknown")

    @property
    def sign(self):
        return "nonneg"


class NormPower(Expr):
    """alpha * ||arg - center||^beta with alpha >= 0, beta >= 1."""

    op = "normpow"

    def __init__(self, arg: Expr, center=None, alpha=1, beta=1):
        self._rawc = _raw(center if center is not None else [0] * arg.out_dim)
        self._rawa, self._rawbeta = _raw(alpha), _raw(beta)
        self.center = np.atleast_1d(_arr(self._rawc))
        self.alpha, self.beta = _num(self._rawa), _num(self._rawbeta)
        if self.center.size != arg.out_dim:
            raise ValueError("center dimension must match the argument")
        if self.alpha < 0 or self.beta < 1:
            raise ValueError("need alpha >= 0 and beta >= 1")
        self.arg = arg
        self.children = (arg,)
        self._init_common(1, [arg.x_support], arg.v_support)

    def _ev(self, x, v):
        r = np.linalg.norm(self.arg._ev(x, v) - self.center, axis=-1, keepdims=True)
        return self.alpha * r**self.beta

    @property
    def curvature(self):
        c = self.arg.curvature
        if self.alpha == 0 or c == "constant":
            return "constant"
        return "convex" if c == "affine" else "unknown"

    @property
    def sign(self):
        return "nonneg"

    def params(self):
        return {"center": _dump(self._rawc), "alpha": _dump(self._rawa), "beta": _dump(self._rawbeta)}


class Max(Expr):
    op = "max"

    def __init__(self, *args: Expr):
        if len(args) == 1 and isinstance(args[0], (list, tuple)):
            args = tuple(args[0])
        if not args:
            raise ValueError("max needs at least one operand")
        args = tuple(_scalar(_lift(a), "max") for a in args)
        self.children = args
        self._init_common(1, [set().union(*[a.x_support for a in args])],
                          set().union(*[a.v_support for a in args]))

    def _ev(self, x, v):
        vals = [c._ev(x, v) for c in self.children]
        out = vals[0]
        for w in vals[1:]:
            out = np.maximum(out, w)
        return out

    @property
    def curvature(self):
        cs = {a.curvature for a in self.children}
        if cs <= {"constant"}:
            return "constant"
        if cs <= {"constant", "affine", "convex"}:
            return "convex" if len(self.children) > 1 else self.children[0].curvature
        return "unknown"

    @property
    def sign(self):
        ss = [a.sign for a in self.children]
        if any(s == "nonneg" for s in ss):
            return "nonneg"
        if all(s in ("nonpos", "zero") for s in ss):
            return "nonpos" if any(s == "nonpos" for s in ss) else "zero"
        return "unknown"


class Compose(Expr):
    """outer(inner(x, v), v): the outer's x-variables read the inner's output."""

    op = "compose"

    def __init__(self, outer: Expr, inner: Expr):
        if outer.nx > inner.out_dim:
            raise ValueError(f"outer reads {outer.nx} coordinates but inner yields {inner.out_dim}")
        self.outer, self.inner = outer, inner
        self.children = (outer, inner)
        sup = [set().union(*[inner.comp_supports[j] for j in s]) for s in outer.comp_supports]
        self._init_common(outer.out_dim, sup, outer.v_support | inner.v_support)

    def _ev(self, x, v):
        return self.outer._ev(self.inner._ev(x, v), v)

    @property
    def curvature(self):
        ci = self.inner.curvature
        if ci == "constant" or self.outer.curvature == "constant":
            return "constant"
        if ci == "affine":
            return self.outer.curvature
        return "unknown"

    @property
    def sign(self):
        return self.outer.sign


class Tuple(Expr):
    """Stack scalar expressions into a vector."""

    op = "tuple"

    def __init__(self, *args: Expr):
        if len(args) == 1 and isinstance(args[0], (list, tuple)):
            args = tuple(args[0])
        if not args:
            raise ValueError("tuple needs at least one item")
        args = tuple(_scalar(_lift(a), "tuple") for a in args)
        self.children = args
        self._init_common(len(args), [a.x_support for a in args], set().union(*[a.v_support for a in args]))

    def _ev(self, x, v):
        vals = [c._ev(x, v) for c in self.children]
        shape = np.broadcast_shapes(*[w.shape for w in vals])
        return np.concatenate([np.broadcast_to(w, shape) for w in vals], axis=-1)

    @property
    def curvature(self):
        cs = {a.curvature for a in self.children}
        if cs <= {"constant"}:
            return "constant"
        return "affine" if cs <= {"constant", "affine"} else "unknown"


def _recip_dom(t):
    if np.any(t <= -1):
        raise DomainError("1/(1+t) needs t > -1")


# name -> (value, derivative, domain check, convex, decreasing)
SMOOTH_CATALOG = {
    "square": (lambda t: t * t, lambda t: 2 * t, None),
    "recip1": (lambda t: 1.0 / (1.0 + t), lambda t: -1.0 / (1.0 + t) ** 2, _recip_dom),
    "invsqrt1": (lambda t: (1.0 + t) ** -0.5, lambda t: -0.5 * (1.0 + t) ** -1.5, _recip_dom),
}


class Smooth(Expr):
    """A named C^1 univariate function applied to a scalar expression."""

    op = "smooth"

    def __init__(self, name: str, arg: Expr):
        if name not in SMOOTH_CATALOG:
            raise ValueError(f"unknown smooth function {name!r}; choose from {sorted(SMOOTH_CATALOG)}")
        self.name = name
        self.arg = _scalar(arg, "smooth")
        self.children = (arg,)
        self._init_common(1, arg.comp_supports, arg.v_support)

    def _ev(self, x, v):
        t = self.arg._ev(x, v)
        f, _, dom = SMOOTH_CATALOG[self.name]
        if dom is not None:
            dom(t)
        return f(t)

    def derivative(self, t: float) -> float:
        f, df, dom = SMOOTH_CATALOG[self.name]
        if dom is not None:
            dom(np.asarray(t))
        return float(df(t))

    @property
    def curvature(self):
        c = self.arg.curvature
        if c == "constant":
            return "constant"
        if self.name == "square":
            return "convex" if c == "affine" else "unknown"
        # 1/(1+t) and 1/sqrt(1+t) are convex and decreasing on t > -1
        return "convex" if c in ("affine", "concave") else "unknown"

    @property
    def sign(self):
        return "nonneg"

    def params(self):
        return {"name": self.name}


class Product(Expr):
    """Product of two scalar expressions (for parameter-dependent coefficients)."""

    op = "product"

    def __init__(self, a: Expr, b: Expr):
        a, b = _scalar(_lift(a), "product"), _scalar(_lift(b), "product")
        self.children = (a, b)
        self._init_common(1, [a.x_support | b.x_support], a.v_support | b.v_support)

    def _ev(self, x, v):
        a, b = self.children
        return a._ev(x, v) * b._ev(x, v)

    @property
    def curvature(self):
        a, b = self.children
        for c, o in ((a, b), (b, a)):
            if c.curvature == "constant":
                oc = o.curvature
                if oc in ("constant", "affine"):
                    return oc
                if c.sign in ("nonneg", "zero"):
                    return oc if c.sign == "nonneg" else "constant"
                if c.sign == "nonpos":
                    return _CURV_FLIP[oc]
                return "unknown"
        return "unknown"

    @property
    def sign(self):
        sa, sb = (c.sign for c in self.children)
        if "zero" in (sa, sb):
            return "zero"
        if "unknown" in (sa, sb):
            return "unknown"
        return "nonneg" if sa == sb else "nonpos"


# builders -------------------------------------------------------------------

def X(index) -> Var:
    return Var("x", index)


def V(index) -> Var:
    return Var("v", index)


def const(value) -> Const:
    return Const(value)


def square(e: Expr) -> Smooth:
    return Smooth("square", e)


def recip_shift(e: Expr) -> Smooth:
    """1/(|e|+1)."""
    return Smooth("recip1", Abs(e))


def invsqrt_shift(e: Expr) -> Smooth:
    """1/sqrt(|e|+1)."""
    return Smooth("invsqrt1", Abs(e))


# evaluation -----------------------------------------------------------------

def evaluate(e: Expr, x, v=None, box=None):
    """Evaluate ``e`` at x (and v). Scalar expressions at a single point give a float.

    ``box`` is an optional (lo, hi) pair; points outside raise DomainError.
    """
    xa = np.asarray(x, dtype=float)
    if xa.ndim == 0:
        xa = xa.reshape(1)
    if xa.shape[-1] < e.nx:
        raise ValueError(f"x has {xa.shape[-1]} coordinates, expression needs {e.nx}")
    va = None
    if v is not None:
        va = np.asarray(v, dtype=float)
        if va.ndim == 0:
            va = va.reshape(1)
    if e.nv and (va is None or va.shape[-1] < e.nv):
        raise ValueError(f"expression needs {e.nv} parameter coordinates")
    if box is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
        if np.any(xa < lo - 1e-12) or np.any(xa > hi + 1e-12):
            raise DomainError("point lies outside the declared box")
    out = np.asarray(e._ev(xa, va), dtype=float)
    batch = np.broadcast_shapes(xa.shape[:-1], va.shape[:-1] if va is not None else ())
    out = np.broadcast_to(out, batch + (e.out_dim,))
    if e.out_dim == 1:
        out = out[..., 0]
        return float(out) if out.ndim == 0 else np.array(out)
    return np.array(out)


# JSON -----------------------------------------------------------------------

_FIELDS = {
    "var": ("space", "index"),
    "const": ("value",),
    "affine": ("A", "b", "arg"),
    "scale": ("factor", "arg"),
    "neg": ("arg",),
    "sum": ("args",),
    "abs": ("arg",),
    "norm": ("arg",),
    "normpow": ("arg", "center", "alpha", "beta"),
    "max": ("args",),
    "compose": ("outer", "inner"),
    "tuple": ("args",),
    "smooth": ("name", "arg"),
    "product": ("args",),
}


def to_json(e: Expr) -> dict:
    d: dict[str, Any] = {"op": e.op}
    d.update(e.params())
    if e.op in ("sum", "max", "tuple", "product"):
        d["args"] = [to_json(c) for c in e.children]
    elif e.op == "compose":
        d["outer"], d["inner"] = to_json(e.outer), to_json(e.inner)
    elif e.children:
        d["arg"] = to_json(e.children[0])
    return d


def _parse_raw(tok):
    if isinstance(tok, list):
        return [_parse_raw(t) for t in tok]
    if isinstance(tok, str):
        return Literal(tok)
    return tok


def from_json(d: dict) -> Expr:
    if not isinstance(d, dict) or "op" not in d:
        raise ValueError("expression nodes are objects with an 'op' field")
    op = d["op"]
    if op not in _FIELDS:
        raise ValueError(f"unknown op {op!r}")
    extra = set(d) - {"op", *_FIELDS[op]}
    if extra:
        raise ValueError(f"unknown fields for {op}: {sorted(extra)}")
    sub = {"arg", "outer", "inner"}
    get = lambda k: from_json(d[k]) if k in sub else _parse_raw(d[k])  # noqa: E731
    if op == "var":
        return Var(d["space"], d["index"])
    if op == "const":
        return Const(get("value"))
    if op == "affine":
        return Affine(get("A"), get("b"), get("arg"))
    if op == "scale":
        return Scale(get("factor"), get("arg"))
    if op == "neg":
        return Neg(get("arg"))
    if op == "abs":
        return Abs(get("arg"))
    if op == "norm":
        return Norm(get("arg"))
    if op == "normpow":
        return NormPower(get("arg"), get("center"), get("alpha"), get("beta"))
    if op == "compose":
        return Compose(get("outer"), get("inner"))
    if op == "smooth":
        return Smooth(d["name"], get("arg"))
    args = [from_json(a) for a in d["args"]]
    if op == "sum":
        return Sum(*args)
    if op == "max":
        return Max(*args)
    if op == "tuple":
        return Tuple(*args)
    if len(args) != 2:
        raise ValueError("product takes exactly two operands")
    return Product(*args)
