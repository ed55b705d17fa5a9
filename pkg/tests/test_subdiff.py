import numpy as np
import pytest

from robustkkt import expr as E
from robustkkt.apps import builtin_example
from robustkkt.polyset import Polytope, PolyUnion
from robustkkt.subdiff import (
    ball_directions,
    constraint_agg_result,
    constraint_agg_set,
    equality_agg_set,
    primitive_subdiff,
    scalarized_subdiff,
    subdiff,
)

x0, x1, v0 = E.X(0), E.X(1), E.V(0)


def _fd_grad(f, x, h=1e-7):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (E.evaluate(f, x + e) - E.evaluate(f, x - e)) / (2 * h)
    return g


def test_abs_at_kink_is_interval():
    r = subdiff(abs(x0), [0.0])
    assert r.exact
    assert r.set.same_set(PolyUnion([Polytope([[-1], [1]])]))


def test_negative_abs_at_kink_is_two_points():
    r = subdiff(-abs(x0), [0.0])
    assert r.set.same_set(PolyUnion([Polytope([[-1]]), Polytope([[1]])]))
    assert r.exact


def test_max_hull_and_negated_union():
    f = E.Max(x0, 2 * x0)
    assert subdiff(f, [0.0]).set.same_set(PolyUnion([Polytope([[1], [2]])]))
    g = -f
    assert subdiff(g, [0.0]).set.same_set(PolyUnion([Polytope([[-1]]), Polytope([[-2]])]))


def test_smooth_points_match_finite_differences():
    f = E.square(x0) + 3 * E.Product(x0, x1) + E.recip_shift(x1)
    x = np.array([0.7, 1.3])
    r = subdiff(f, x)
    assert len(r.set.members) == 1 and r.set.all_vertices().shape[0] == 1
    np.testing.assert_allclose(r.set.all_vertices()[0], _fd_grad(f, x), atol=1e-6)


def test_euclidean_ball_is_flagged_inexact():
    r = subdiff(E.Norm(E.Tuple(x0, x1)), [0.0, 0.0])
    assert not r.exact
    assert r.exactness != "exact"
    V = r.set.all_vertices()
    assert V.shape[0] == 64
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0)
    fine = subdiff(E.Norm(E.Tuple(x0, x1)), [0.0, 0.0], ball_resolution=128)
    assert fine.set.all_vertices().shape[0] == 128


def test_one_dimensional_norm_is_exact():
    r = subdiff(E.Norm(E.Tuple(x0)), [0.0])
    assert r.exact


def test_ball_directions_unit():
    D = ball_directions(3)
    np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1.0)


def test_primitive_rejects_composites():
    with pytest.raises(NotImplementedError):
        primitive_subdiff(x0 + abs(x1), [0, 0])
    assert primitive_subdiff(abs(x0), [0.0]).hull().same_set(Polytope([[-1], [1]]))


def test_scalarized_rejects_negative_weights():
    with pytest.raises(ValueError):
        scalarized_subdiff([1, -1], [x0, x1], [0, 0])


def test_scalarized_sum_rule():
    r = scalarized_subdiff([2, 1], [abs(x0), x1], [0.0, 0.0])
    assert r.set.hull().same_set(Polytope([[-2, 1], [2, 1]]))


def test_chain_rule_through_affine_map():
    f = E.Compose(abs(E.X(0)), E.Affine([[1, 2]], [0], E.X([0, 1])))
    r = subdiff(f, [0.0, 0.0])
    assert r.exact
    assert r.set.hull().same_set(Polytope([[-1, -2], [1, 2]]))


def test_parameter_frozen_in_partial_subdifferential():
    # |v| does not move with x
    g = E.Product(v0, x0) + abs(v0)
    r = subdiff(g, [1.0], [0.0])
    assert r.set.hull().same_set(Polytope([[0.0]]))


# worked example 3.2 with the calculus applied to the printed functions

def test_first_example_objective_sets():
    prob, x, _ = builtin_example("ex3-2")
    s1 = subdiff(prob.objectives[0], x)
    assert s1.exact and s1.set.hull().same_set(Polytope([[-1, -1], [-1, 1]]))
    s2 = subdiff(prob.objectives[1], x).set.all_vertices()
    np.testing.assert_allclose(s2, [[2 / 9, -3]], atol=1e-12)
    s3 = subdiff(prob.objectives[2], x).set.all_vertices()
    np.testing.assert_allclose(s3, [[0.25 * 1.5 ** -1.5, 1]], atol=1e-12)


def test_first_example_constraint_aggregates():
    prob, x, _ = builtin_example("ex3-2")
    assert constraint_agg_set(prob, 0, x).same_set(Polytope([[1, 0], [2, 0]]))
    assert constraint_agg_set(prob, 1, x).same_set(Polytope([[3, 2]]))
    assert constraint_agg_result(prob, 0, x).exact


def test_second_example_sets():
    prob, x, _ = builtin_example("ex5-1")
    r = prob.meta["aup"]["r"]
    assert subdiff(r[0], x).set.hull().same_set(Polytope([[-3, 0.4], [3, 0.4]]))
    assert subdiff(r[1], x).set.hull().same_set(Polytope([[0, 0]]))
    assert subdiff(r[2], x).set.hull().same_set(Polytope([[-2, 0.5], [2, 0.5]]))
    assert constraint_agg_set(prob, 0, x).same_set(Polytope([[-1 / 64, 1 / 32], [1 / 64, 1 / 32]]))
    assert constraint_agg_set(prob, 1, x).same_set(Polytope([[0, 0.25]]))
    assert equality_agg_set(prob, 0, x).same_set(Polytope([[3, -1], [-3, 1]]))
    assert equality_agg_set(prob, 1, x).same_set(Polytope([[3, 1], [-3, -1]]))


def test_third_example_inner_set():
    prob, x, _ = builtin_example("ex5-2")
    f3, T3 = prob.meta["cul"]["pairs"][2]
    ybar = np.asarray(E._arr(T3)) @ x
    np.testing.assert_allclose(ybar, [-1, -1])
    V = subdiff(f3, ybar).set.all_vertices()
    np.testing.assert_allclose(V, [[-2, 0.25]])


# convex catalog property checks

CONVEX = [
    abs(x0) + 2 * abs(x1),
    E.Max(x0 + x1, x0 - x1, -2 * x0),
    E.Norm(E.Tuple(x0 - 1, x1)),
    E.NormPower(E.Tuple(x0, x1), [0.5, 0], 1.5, 2),
    E.square(x0) + abs(x1 - x0),
    E.Compose(abs(E.X(0)) + E.square(E.X(1)), E.Affine([[1, 1], [1, -1]], [0, 0], E.X([0, 1]))),
]


@pytest.mark.parametrize("k", range(len(CONVEX)))
def test_subgradient_inequality(k):
    f = CONVEX[k]
    assert f.curvature == "convex"
    rng = np.random.default_rng(k)
    for x in rng.uniform(-2, 2, size=(10, 2)):
        V = subdiff(f, x).set.all_vertices()
        Y = rng.uniform(-3, 3, size=(200, 2))
        fy = E.evaluate(f, Y)
        fx = E.evaluate(f, x)
        gap = fy[:, None] - fx - (Y - x) @ V.T
        assert gap.min() >= -1e-9


@pytest.mark.parametrize("k", range(len(CONVEX)))
def test_limits_of_gradients_at_kinks(k):
    f = CONVEX[k]
    kinks = {0: [0, 0], 1: [0, 0], 2: [1, 0], 3: [0.5, 0], 4: [1, 1], 5: [0, 0]}
    x = np.array(kinks[k], float)
    # 4096-gon balls: inscribed error 1 - cos(pi/4096) < 3e-7
    S = subdiff(f, x, ball_resolution=4096).set
    rng = np.random.default_rng(7)
    # gradients at nearby smooth points must approach the set
    for d in rng.normal(size=(40, 2)):
        y = x + 1e-8 * d / np.linalg.norm(d)
        Gy = subdiff(f, y).set.all_vertices()
        if Gy.shape[0] != 1:
            continue
        assert S.hull().contains(Gy[0], tol=1e-6)
    # and each vertex is such a limit (exact convex entries only)
    if subdiff(f, x).exact:
        ys = x + 1e-8 * rng.normal(size=(400, 2))
        G = np.array([subdiff(f, y).set.all_vertices()[0] for y in ys])
        for v in S.hull().vertices:
            assert np.min(np.abs(G - v).max(axis=1)) < 1e-6
