import numpy as np
import pytest

from robustkkt import expr as E
from robustkkt.apps import builtin_example, concave_fixture, random_convex_instance
from robustkkt.certify import find_kkt
from robustkkt.robust import Box, RobustProblem, sample_feasible
from robustkkt.verify import (
    DualPoint,
    converse_duality_check,
    dual_feasible,
    falsify_pseudo_convexity,
    grid_efficient_points,
    simplex_lattice,
    sufficiency_pipeline,
    verify_efficiency,
    verify_weak_efficiency,
    weak_duality_audit,
)

x0, x1 = E.X(0), E.X(1)


def _bowl():
    # two convex objectives with minimizers (-1, 0) and (1, 0)
    return RobustProblem([abs(x0 + 1) + abs(x1), abs(x0 - 1) + abs(x1)], box=Box([-2, -2], [2, 2]))


def test_weak_and_pareto_audits():
    p = _bowl()
    assert not verify_weak_efficiency(p, [0, 0], resolution=21).dominated
    r = verify_weak_efficiency(p, [0, 1], resolution=21)
    assert r.dominated and r.witness_values[0] < 2 and r.witness_values[1] < 2
    assert verify_efficiency(p, [0, 1], resolution=21).dominated


def test_pareto_stricter_than_weak():
    # (0, 0.5) minimizes x0, so it is weakly efficient; (0, 0) dominates it
    p = RobustProblem([x0, abs(x1)], box=Box([0, -1], [1, 1]))
    assert not verify_weak_efficiency(p, [0, 0.5], resolution=11).dominated
    assert verify_efficiency(p, [0, 0.5], resolution=11).dominated


def test_report_serializes():
    d = verify_weak_efficiency(_bowl(), [0, 0], resolution=5).as_dict()
    assert d["verdict"] == "not-dominated-on-grid" and d["resolution"] == [5, 5]


def test_grid_efficient_points_segment():
    W = grid_efficient_points(_bowl(), resolution=21)
    assert np.all(np.abs(W[:, 1]) < 1e-12) and np.all(np.abs(W[:, 0]) <= 1 + 1e-12)


def test_simplex_lattice():
    L = simplex_lattice(3, 4)
    assert L.shape == (15, 3)
    np.testing.assert_allclose(L.sum(axis=1), 1)
    np.testing.assert_allclose(L[0], [1, 0, 0])


def test_pseudo_convexity_convex_fixture():
    r = falsify_pseudo_convexity(_bowl(), [0, 0], "I", 100)
    assert not r.counterexample
    assert not falsify_pseudo_convexity(_bowl(), [0, 0], "II", 100).counterexample


def test_pseudo_convexity_concave_fixture():
    p, x = concave_fixture()
    r = falsify_pseudo_convexity(p, x, "I", 50)
    assert r.counterexample
    assert r.witness["xstar"] == [0.0]


def test_pseudo_convexity_mode_validation():
    with pytest.raises(ValueError):
        falsify_pseudo_convexity(_bowl(), [0, 0], "III")


def test_pseudo_convexity_deterministic():
    p, x, _ = builtin_example("ex3-2")
    a = falsify_pseudo_convexity(p, x, "I", 40, seed=3).as_dict()
    b = falsify_pseudo_convexity(p, x, "I", 40, seed=3).as_dict()
    assert a == b


def test_sufficiency_pipeline_convex():
    out = sufficiency_pipeline(_bowl(), [0.5, 0], resolution=21, samples=60)
    assert out["stage"] == "complete"


def test_sufficiency_pipeline_non_stationary():
    out = sufficiency_pipeline(_bowl(), [0, 1], resolution=21, samples=20)
    assert out["stage"] == "kkt" and out["kkt"] is None


def test_dual_feasible_quantifiers():
    p, x, c = builtin_example("ex3-2")
    d = dual_feasible(p, x, c.y, c.mu)
    assert d.member and d.vbar[0] == (0.0,)
    strict = dual_feasible(p, x, c.y, c.mu, "all")
    assert strict.inclusion and not strict.sign_ok and not strict.member


def test_dual_feasible_validation():
    p, x, c = builtin_example("ex3-2")
    with pytest.raises(ValueError):
        dual_feasible(p, x, [0, 0, 0], c.mu)
    with pytest.raises(ValueError):
        dual_feasible(p, x, c.y, [-1, 0])
    with pytest.raises(ValueError):
        dual_feasible(p, x, c.y, c.mu, "some")


def test_weak_duality_audit_detects_violation():
    p = _bowl()
    dp = DualPoint((0.0, 1.0), (0.5, 0.5), (), True, True, True, (), "active", 0.0)
    P = sample_feasible(p, resolution=5)
    assert weak_duality_audit(p, P, [dp], "weak")
    with pytest.raises(ValueError):
        weak_duality_audit(p, P, [dp], "medium")


def test_duality_chain_on_random_instance():
    p = random_convex_instance(4)
    z = grid_efficient_points(p, resolution=21, order="pareto")[0]
    k = find_kkt(p, z)
    d = dual_feasible(p, z, k.y, k.mu)
    assert d.member
    P = sample_feasible(p, resolution=21)
    assert weak_duality_audit(p, P, [d], "weak") == []
    assert weak_duality_audit(p, P, [d], "strong") == []
    assert converse_duality_check(p, d, resolution=21, samples=40)["status"] == "confirmed"


def test_converse_not_applicable_when_infeasible():
    p, _, c = builtin_example("ex3-2")
    dp = DualPoint((0.0, 0.0), tuple(c.y), tuple(c.mu), False, False, False, (), "active", 1.0)
    assert converse_duality_check(p, dp)["status"] == "not applicable"
