"""Dense two-phase primal simplex with Bland's anti-cycling rule.

Standard form: minimize c @ x subject to A @ x = b, x >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-12
COST_TOL = 1e-11
MAX_ITER = 10**6


class LPIterationError(RuntimeError):
    """Raised when the simplex exceeds its iteration cap."""


@dataclass
class LPWitness:
    """Outcome of an LP solve or a membership query built on one.

    ``x`` holds the primal solution. Membership helpers also fill ``weights``
    (one array of per-vertex weights per term), ``lam``/``mu`` (per-term
    totals) and ``choice`` (selected member of each union term).
    """

    status: str
    x: np.ndarray
    objective: float = float("nan")
    residual: float = float("nan")
    iterations: int = 0
    weights: list = field(default_factory=list)
    lam: np.ndarray | None = None
    mu: np.ndarray | None = None
    choice: tuple = ()

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def _pivot(T: np.ndarray, r: int, s: int) -> None:
    T[r] /= T[r, s]
    col = T[:, s].copy()
    col[r] = 0.0
    nz = np.nonzero(np.abs(col) > 0.0)[0]
    if nz.size:
        T[nz] -= np.outer(col[nz], T[r])


def _run(T: np.ndarray, basis: list[int], ncols: int, it: int, max_iter: int) -> tuple[str, int]:
    """Iterate on tableau T (last row = reduced costs, last col = rhs)."""
    m = T.shape[0] - 1
    while True:
        d = T[-1, :ncols]
        cand = np.nonzero(d < -COST_TOL)[0]
        if cand.size == 0:
            return "optimal", it
        s = int(cand[0])  # Bland: lowest index entering
        col = T[:m, s]
        rows = np.nonzero(col > PIVOT_TOL)[0]
        if rows.size == 0:
            return "unbounded", it
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))  # Bland: lowest basic index leaves
        _pivot(T, r, s)
        basis[r] = s
        it += 1
        if it >= max_iter:
            raise LPIterationError(f"simplex exceeded {max_iter} iterations")


def lp_solve(c, A_eq, b_eq, *, maximize: bool = False, max_iter: int = MAX_ITER) -> LPWitness:
    """Solve ``min c@x s.t. A_eq@x = b_eq, x >= 0`` (or max when ``maximize``).

    Status is ``feasible`` (optimal point found), ``infeasible`` or
    ``unbounded``. ``residual`` is the L1 violation ||A x - b||_1 of the
    returned point; for infeasible problems it is the phase-one optimum.
    """
    A = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b = np.asarray(b_eq, dtype=float).reshape(-1)
    c = np.asarray(c, dtype=float).reshape(-1)
    m, n = A.shape
    if b.size != m or c.size != n:
        raise ValueError("inconsistent LP dimensions")
    if maximize:
        c = -c
    if m == 0:
        if np.any(c < -COST_TOL):
            return LPWitness("unbounded", np.zeros(n), -np.inf, 0.0)
        return LPWitness("feasible", np.zeros(n), 0.0, 0.0)

    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))

    _, it = _run(T, basis, n + m, 0, max_iter)
    phase1 = -T[-1, -1]
    if phase1 > FEAS_TOL:
        x = np.zeros(n + m)
        x[basis] = T[:m, -1]
        return LPWitness("infeasible", np.clip(x[:n], 0, None), float("nan"), float(phase1), it)

    # drive artificial variables out of the basis, dropping redundant rows
    keep = []
    for i in range(m):
        if basis[i] >= n:
            nz = np.nonzero(np.abs(T[i, :n]) > 1e-9)[0]
            if nz.size:
                _pivot(T, i, int(nz[0]))
                basis[i] = int(nz[0])
                keep.append(i)
        else:
            keep.append(i)
    T = np.vstack([T[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = [basis[i] for i in keep]
    T[-1, :n] = c
    for i, j in enumerate(basis):
        if c[j] != 0.0:
            T[-1] -= c[j] * T[i]

    status, it = _run(T, basis, n, it, max_iter)
    x = np.zeros(n)
    x[basis] = T[:-1, -1]
    x = np.clip(x, 0.0, None)
    res = float(np.abs(A @ x - b).sum())
    if status == "unbounded":
        return LPWitness("unbounded", x, -np.inf if not maximize else np.inf, res, it)
    obj = float(c @ x)
    return LPWitness("feasible", x, -obj if maximize else obj, res, it)
