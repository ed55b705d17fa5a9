import numpy as np
import pytest
from scipy.optimize import linprog

from robustkkt.lp import LPIterationError, lp_solve


def test_simple_feasible():
    w = lp_solve([1, 0], [[1, 1]], [1])
    assert w.feasible
    np.testing.assert_allclose(w.x, [0, 1])
    assert w.objective == pytest.approx(0)


def test_infeasible_reports_phase_one_gap():
    w = lp_solve([0], [[1]], [-1])
    assert w.status == "infeasible"
    assert w.residual > 0


def test_unbounded():
    w = lp_solve([-1, 0], [[1, -1]], [0])
    assert w.status == "unbounded"


def test_maximize_flag():
    w = lp_solve([1, 2], [[1, 1]], [3], maximize=True)
    assert w.objective == pytest.approx(6)


def test_redundant_rows_are_dropped():
    A = [[1, 1, 0], [2, 2, 0], [0, 1, 1]]
    w = lp_solve([1, 1, 1], A, [1, 2, 1])
    assert w.feasible
    np.testing.assert_allclose(np.asarray(A) @ w.x, [1, 2, 1], atol=1e-9)


def test_beale_cycling_example_terminates():
    # a classic degenerate LP on which Dantzig's rule cycles
    A = np.array([
        [0.25, -8, -1, 9, 1, 0, 0],
        [0.5, -12, -0.5, 3, 0, 1, 0],
        [0, 0, 1, 0, 0, 0, 1],
    ])
    c = np.array([-0.75, 20, -0.5, 6, 0, 0, 0])
    w = lp_solve(c, A, [0, 0, 1])
    ref = linprog(c, A_eq=A, b_eq=[0, 0, 1], bounds=(0, None), method="highs")
    assert w.objective == pytest.approx(ref.fun, abs=1e-9)


def test_iteration_cap():
    A = np.array([[1.0, 1, 1, 1]])
    with pytest.raises(LPIterationError):
        lp_solve([-1, -2, -3, -4], A, [1], max_iter=0)


@pytest.mark.parametrize("seed", range(40))
def test_matches_highs_on_random_lps(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 5), rng.integers(2, 8)
    A = rng.integers(-3, 4, size=(m, n)).astype(float)
    b = rng.integers(-3, 4, size=m).astype(float)
    c = rng.integers(-2, 4, size=n).astype(float)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    w = lp_solve(c, A, b)
    status = {0: "feasible", 2: "infeasible", 3: "unbounded"}[ref.status]
    assert w.status == status
    if status == "feasible":
        assert w.objective == pytest.approx(ref.fun, abs=1e-7)
        np.testing.assert_allclose(A @ w.x, b, atol=1e-8)
        assert np.all(w.x >= -1e-12)


def test_deterministic():
    A = np.array([[1.0, 1, 1], [1, -1, 0]])
    a, b = lp_solve([0, 0, 0], A, [1, 0]), lp_solve([0, 0, 0], A, [1, 0])
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations
