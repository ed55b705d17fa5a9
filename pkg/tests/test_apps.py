import numpy as np
import pytest

from robustkkt import expr as E
from robustkkt.apps import (
    AUPSpec,
    BUILTIN_NAMES,
    CULSpec,
    NormTerm,
    build_aup,
    build_cul,
    builtin_example,
    random_convex_instance,
)
from robustkkt.robust import Box, is_feasible

x0, x1 = E.X(0), E.X(1)


def test_builtin_names_and_unknown():
    assert set(BUILTIN_NAMES) == {"ex3-2", "ex5-1", "ex5-2"}
    with pytest.raises(ValueError):
        builtin_example("ex9-9")


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_fixture_points_are_feasible(name):
    prob, x, _ = builtin_example(name)
    assert is_feasible(prob, x)


def test_aup_objective_values():
    spec = AUPSpec([abs(x0)], [NormTerm([[1, 0], [0, 2]], [1, 0], 3, 1)], Box([-2, -2], [2, 2]))
    p = build_aup(spec)
    # |x0| + 3 ||(x0 - 1, 2 x1)||
    assert p.objective_values(np.array([0.0, 0.0]))[0] == pytest.approx(3)
    assert p.objective_values(np.array([1.0, 1.0]))[0] == pytest.approx(1 + 6)


def test_aup_dimension_checks():
    with pytest.raises(ValueError):
        build_aup(AUPSpec([x0], [NormTerm([[1, 0, 0]], [0])], Box([0, 0], [1, 1])))
    with pytest.raises(ValueError):
        build_aup(AUPSpec([x0], [NormTerm([[1, 0]], [0, 0])], Box([0, 0], [1, 1])))
    with pytest.raises(ValueError):
        build_aup(AUPSpec([x0, x1], [NormTerm([[1, 0]], [0])], Box([0, 0], [1, 1])))


def test_cul_objective_values():
    f = abs(E.X(0)) + E.X(1)
    p = build_cul(CULSpec([(f, [[1, 1], [0, 1]])], Box([-1, -1], [1, 1])))
    assert p.objective_values(np.array([0.5, -1.0]))[0] == pytest.approx(0.5 - 1)


def test_cul_dimension_checks():
    with pytest.raises(ValueError):
        build_cul(CULSpec([(x0, [[1, 0, 0]])], Box([0, 0], [1, 1])))
    with pytest.raises(ValueError):
        build_cul(CULSpec([(E.X(1), [[1, 0]])], Box([0, 0], [1, 1])))


def test_random_instances_are_seeded_and_convex():
    a, b = random_convex_instance(3), random_convex_instance(3)
    x = np.array([0.2, -0.4])
    np.testing.assert_array_equal(a.objective_values(x), b.objective_values(x))
    for s in range(20):
        p = random_convex_instance(s)
        assert p.n == 2 and 2 <= p.p <= 3
        assert all(f.curvature in ("convex", "affine") for f in p.objectives)
