"""Acceptance criteria 1-9. Each test records one PASS/FAIL line shown in the terminal summary.

Run standalone with ``python tests/test_acceptance.py`` to print the lines directly.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from robustkkt import expr as E
from robustkkt import problem_file as PF
from robustkkt.apps import builtin_example, concave_fixture, random_convex_instance
from robustkkt.certify import (
    Certificate,
    check_certificate,
    check_cq,
    check_equality_certificate,
    check_linear_composite,
    find_fritz_john,
    find_kkt,
)
from robustkkt.polyset import Polytope
from robustkkt.robust import Box, RobustProblem, active_uncertainty, phi, sample_feasible
from robustkkt.subdiff import constraint_agg_set, equality_agg_set, subdiff
from robustkkt.verify import (
    converse_duality_check,
    dual_feasible,
    falsify_pseudo_convexity,
    grid_efficient_points,
    verify_weak_efficiency,
    weak_duality_audit,
)

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # standalone run
    ACCEPTANCE_LINES = []

S2 = np.sqrt(2)
N_RANDOM = 20


class Checks:
    """Named sub-checks; failures are collected rather than raised one by one."""

    def __init__(self):
        self.items: list[tuple[str, bool]] = []

    def __call__(self, name: str, ok) -> None:
        self.items.append((name, bool(ok)))

    @property
    def failed(self) -> list[str]:
        return [n for n, ok in self.items if not ok]


def _record(number: int, title: str, checks: Checks, seconds: float, limit: float) -> None:
    checks(f"time {seconds:.2f}s < {limit:g}s", seconds < limit)
    bad = checks.failed
    status = "PASS" if not bad else "FAIL"
    tail = f"{len(checks.items)} checks" if not bad else "failed: " + "; ".join(bad)
    line = f"criterion {number}: {status} - {title} ({tail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert not bad, line


def _same(union_or_poly, V) -> bool:
    P = union_or_poly.hull() if hasattr(union_or_poly, "members") else union_or_poly
    if hasattr(union_or_poly, "members") and len(union_or_poly.members) != 1:
        return False
    return P.same_set(Polytope(V), tol=1e-9)


# 1 -----------------------------------------------------------------------------

def test_criterion_1_first_example():
    c = Checks()
    t0 = time.perf_counter()
    prob, x, _ = builtin_example("ex3-2")
    c("phi_1 = 0", abs(phi(prob, 0, x)) <= 1e-8)
    c("phi_2 = -3", abs(phi(prob, 1, x) + 3) <= 1e-8)
    V1, V2 = active_uncertainty(prob, 0, x), active_uncertainty(prob, 1, x)
    c("V_1 = {0}", len(V1) == 1 and abs(V1[0][0]) <= 1e-6)
    c("V_2 = {1}", len(V2) == 1 and abs(V2[0][0] - 1) <= 1e-6)
    c("d(f1.F) = {-1}x[-1,1]", _same(subdiff(prob.objectives[0], x).set, [[-1, -1], [-1, 1]]))
    c("d(f2.F) = [-1/2,1/2]x{-3}", _same(subdiff(prob.objectives[1], x).set, [[-0.5, -3], [0.5, -3]]))
    c("d(f3.F) = [-sqrt2/2,sqrt2/2]x{-1,1}",
      _same(subdiff(prob.objectives[2], x).set, [[-S2 / 2, -1], [S2 / 2, -1], [-S2 / 2, 1], [S2 / 2, 1]]))
    c("aggregate 1 = [1,2]x{0}", constraint_agg_set(prob, 0, x).same_set(Polytope([[1, 0], [2, 0]])))
    c("aggregate 2 = [-3,3]x{4}", constraint_agg_set(prob, 1, x).same_set(Polytope([[-3, 4], [3, 4]])))
    c("check_cq holds", check_cq(prob, x).holds)
    v = check_certificate(prob, x, Certificate(y=[S2 / 3, 0, S2 / 3], mu=[1 / 3, 0]))
    c("published certificate holds", v.holds and v.residual <= 1e-8)
    c("find_kkt returns a certificate", find_kkt(prob, x) is not None)
    _record(1, "first worked example", c, time.perf_counter() - t0, 1.0)


# 2 -----------------------------------------------------------------------------

def test_criterion_2_approximation_example():
    c = Checks()
    t0 = time.perf_counter()
    prob, x, _ = builtin_example("ex5-1")
    r = prob.meta["aup"]["r"]
    c("dr1 = [-3,3]x{2/5}", _same(subdiff(r[0], x).set, [[-3, 0.4], [3, 0.4]]))
    c("dr2 = {(0,0)}", _same(subdiff(r[1], x).set, [[0, 0]]))
    c("dr3 = [-2,2]x{1/2}", _same(subdiff(r[2], x).set, [[-2, 0.5], [2, 0.5]]))
    c("constraint aggregate 1", constraint_agg_set(prob, 0, x).same_set(Polytope([[-1 / 64, 1 / 32], [1 / 64, 1 / 32]])))
    c("constraint aggregate 2", constraint_agg_set(prob, 1, x).same_set(Polytope([[0, 0.25]])))
    c("equality aggregate 1", equality_agg_set(prob, 0, x).same_set(Polytope([[3, -1], [-3, 1]])))
    c("equality aggregate 2", equality_agg_set(prob, 1, x).same_set(Polytope([[3, 1], [-3, -1]])))
    cert = Certificate(y=[1, 0, 1], mu=[0, 1], sigma=[1, 0], dual_vectors=([-0.4, 0], [0, 0], [-0.5, -0.5]))
    c("equality certificate holds", check_equality_certificate(prob, x, cert).holds)
    _record(2, "approximation example with equalities", c, time.perf_counter() - t0, 1.0)


# 3 -----------------------------------------------------------------------------

def test_criterion_3_linear_operator_example():
    c = Checks()
    t0 = time.perf_counter()
    prob, x, _ = builtin_example("ex5-2")
    f3, T3 = prob.meta["cul"]["pairs"][2]
    ybar = np.asarray(E._arr(T3)) @ x
    c("dr3(ybar3) = [-2,2]x{1/4}", _same(subdiff(f3, ybar).set, [[-2, 0.25], [2, 0.25]]))
    v = check_linear_composite(prob, x, Certificate(y=[0, 0, 0.5], mu=[0, 0.5]))
    c("published certificate holds", v.holds)
    c("||lam|| + ||mu|| = 1 after renormalization", abs(v.details["normalized_norm_sum"] - 1) <= 1e-12)
    _record(3, "linear-operator example", c, time.perf_counter() - t0, 1.0)


# 4 -----------------------------------------------------------------------------

def test_criterion_4_grid_audits():
    c = Checks()
    worst = 0.0
    for name, box, res in [("ex3-2", ([-4, -4], [0, 4]), 161), ("ex5-2", ([-2, -6], [2, -2]), 101)]:
        t0 = time.perf_counter()
        prob, x, _ = builtin_example(name)
        r = verify_weak_efficiency(prob, x, Box(*box), res)
        dt = time.perf_counter() - t0
        worst = max(worst, dt)
        c(f"{name} not dominated on {res}x{res} grid", r.verdict == "not-dominated-on-grid")
        c(f"{name} audit {dt:.2f}s < 10s", dt < 10)
    _record(4, "grid weak-efficiency audits", c, worst, 10.0)


# 5 -----------------------------------------------------------------------------

def test_criterion_5_fritz_john_necessity():
    c = Checks()
    t0 = time.perf_counter()
    total, failures = 0, []
    for seed in range(N_RANDOM):
        prob = random_convex_instance(seed)
        for z in grid_efficient_points(prob, resolution=21):
            total += 1
            if find_fritz_john(prob, z) is None:
                failures.append((seed, tuple(z)))
    c(f"Fritz-John LP feasible at all {total} grid-weakly-efficient points", not failures)
    c("instances produce candidates", total > 0)
    _record(5, "Fritz-John necessity on random convex instances", c, time.perf_counter() - t0, 60.0)


# 6 -----------------------------------------------------------------------------

x0, x1 = E.X(0), E.X(1)
CONVEX = [
    abs(x0) + 2 * abs(x1),
    E.Max(x0 + x1, x0 - x1, -2 * x0, 0.5 * x1 - 1),
    E.Norm(E.Tuple(x0 - 1, x1)),
    E.NormPower(E.Tuple(x0, x1), [0.5, 0], 1.5, 2),
    E.square(x0) + abs(x1 - x0),
    E.Compose(abs(E.X(0)) + E.square(E.X(1)), E.Affine([[1, 1], [1, -1]], [0, 0], E.X([0, 1]))),
]
KINKS = [[0, 0], [0, 0], [1, 0], [0.5, 0], [1, 1], [0, 0]]


def test_criterion_6_subgradient_properties():
    c = Checks()
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = np.inf
    for k in range(50):
        f = CONVEX[k % len(CONVEX)]
        x = rng.uniform(-2, 2, 2)
        if k % 5 == 0:
            x = np.array(KINKS[k % len(CONVEX)], float)  # include kinks among the points
        V = subdiff(f, x).set.all_vertices()
        Y = rng.uniform(-3, 3, size=(1000, 2))
        gap = np.asarray(E.evaluate(f, Y))[:, None] - E.evaluate(f, x) - (Y - x) @ V.T
        worst = min(worst, float(gap.min()))
    c(f"subgradient inequality (worst gap {worst:.1e} >= -1e-9)", worst >= -1e-9)
    bad = []
    for f, kink in zip(CONVEX, KINKS):
        x = np.array(kink, float)
        S = subdiff(f, x, ball_resolution=4096).set.hull()
        for d in rng.normal(size=(60, 2)):
            y = x + 1e-8 * d / np.linalg.norm(d)
            G = subdiff(f, y).set.all_vertices()
            if G.shape[0] == 1 and not S.contains(G[0], tol=1e-6):
                bad.append(tuple(kink))
    c("gradient limits at kinks lie in the computed set (tol 1e-6)", not bad)
    _record(6, "subgradient property suite", c, time.perf_counter() - t0, 30.0)


# 7 -----------------------------------------------------------------------------

def _duality_case(prob, z, resolution):
    k = find_kkt(prob, z)
    if k is None:
        return "no KKT certificate"
    d = dual_feasible(prob, z, k.y, k.mu)
    if not d.member:
        return "dual infeasible: " + d.diagnostics
    P = sample_feasible(prob, resolution=resolution)
    if weak_duality_audit(prob, P, [d], "weak"):
        return "weak-mode violation"
    if weak_duality_audit(prob, P, [d], "strong"):
        return "strong-mode violation"
    conv = converse_duality_check(prob, d, resolution=resolution, samples=40)
    if conv["status"] != "confirmed" or conv["grid"]["verdict"] != "not-dominated-on-grid":
        return "converse check: " + conv["status"]
    return None


def test_criterion_7_duality():
    c = Checks()
    t0 = time.perf_counter()
    prob, x, _ = builtin_example("ex3-2")
    err = _duality_case(prob, x, 61)
    c("ex3-2 duality chain" + ("" if err is None else f" ({err})"), err is None)
    fails = []
    for seed in range(N_RANDOM):
        p = random_convex_instance(seed)
        z = grid_efficient_points(p, resolution=21, order="pareto")[0]
        err = _duality_case(p, z, 21)
        if err:
            fails.append(f"seed {seed}: {err}")
    c(f"{N_RANDOM} random instances" + ("" if not fails else " (" + ", ".join(fails) + ")"), not fails)
    _record(7, "duality suite", c, time.perf_counter() - t0, 30.0)


# 8 -----------------------------------------------------------------------------

def test_criterion_8_pseudo_convexity():
    c = Checks()
    t0 = time.perf_counter()
    bowl = RobustProblem([abs(x0 + 1) + abs(x1), abs(x0 - 1) + abs(x1)], box=Box([-2, -2], [2, 2]))
    c("convex bowl fixture: none", not falsify_pseudo_convexity(bowl, [0, 0], "I", 200).counterexample)
    for seed in range(5):
        p = random_convex_instance(seed)
        z = grid_efficient_points(p, resolution=21)[0]
        c(f"random convex instance {seed}: none", not falsify_pseudo_convexity(p, z, "I", 100).counterexample)
    p, xb = concave_fixture()
    c("-x^2 at 0: counterexample", falsify_pseudo_convexity(p, xb, "I", 200).counterexample)
    _record(8, "pseudo-convexity falsifier", c, time.perf_counter() - t0, 30.0)


# 9 -----------------------------------------------------------------------------

COMMANDS = [
    ["feasible", "{f}"],
    ["subdiff", "{f}", "--objective", "1"],
    ["subdiff", "{f}", "--constraint", "1"],
    ["check-kkt", "{f}"],
    ["find-kkt", "{f}"],
    ["find-fj", "{f}"],
    ["check-cq", "{f}"],
    ["verify", "weak", "{f}", "--grid", "41x41"],
    ["verify", "pareto", "{f}", "--grid", "41x41"],
    ["pseudo-falsify", "{f}", "--samples", "40"],
    ["dual-check", "{f}"],
    ["report", "{f}", "--grid", "21x21", "--samples", "20"],
]


def test_criterion_9_determinism(tmp_path):
    c = Checks()
    t0 = time.perf_counter()
    path = tmp_path / "ex3-2.json"
    prob, x, cert = builtin_example("ex3-2")
    PF.dump(PF.export(prob, x, cert), path)
    for cmd in COMMANDS:
        argv = [a.format(f=path) for a in cmd] + ["--json"]
        outs = []
        for seed in ("1", "2"):
            env = dict(os.environ, PYTHONHASHSEED=seed)
            r = subprocess.run([sys.executable, "-m", "robustkkt.cli", *argv], capture_output=True, env=env)
            outs.append(r.stdout)
        c(f"{cmd[0]} {cmd[1] if cmd[0] in ('verify',) else ''}".strip() + " byte-identical",
          outs[0] == outs[1] and len(outs[0]) > 0)
    a = subprocess.run([sys.executable, "-m", "robustkkt.cli", "export-example", "ex5-1"], capture_output=True).stdout
    b = subprocess.run([sys.executable, "-m", "robustkkt.cli", "export-example", "ex5-1"], capture_output=True).stdout
    c("export-example byte-identical", a == b and len(a) > 0)
    _record(9, "deterministic --json output", c, time.perf_counter() - t0, 120.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
