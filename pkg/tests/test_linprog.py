from itertools import combinations

import numpy as np
import pytest

from lyapcert.linprog import (EQ, GE, LE, LinearProgram, dump_lp_text, solve)


def box_lp():
    return LinearProgram(objective=[1.0, 1.0], A=[[1.0, 0.0], [0.0, 1.0]],
                         relations=[LE, LE], b=[1.0, 2.0],
                         bounds=[(0, None), (0, None)])


def random_instance(rng):
    A = rng.uniform(0.1, 1.0, size=(5, 8))
    b = rng.uniform(1.0, 2.0, size=5)
    c = rng.uniform(-1.0, 1.0, size=8)
    return LinearProgram(objective=c, A=A, relations=[LE] * 5, b=b,
                         bounds=[(0, None)] * 8)


def enumerate_vertices_best(lp):
    """Brute-force vertex enumeration over rows [A; -I] for x >= 0 feeds."""
    A = np.vstack([lp.A, -np.eye(lp.A.shape[1])])
    rhs = np.concatenate([lp.b, np.zeros(lp.A.shape[1])])
    n = lp.A.shape[1]
    best = -np.inf
    for combo in combinations(range(len(rhs)), n):
        sub = A[list(combo)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        v = np.linalg.solve(sub, rhs[list(combo)])
        if (A @ v <= rhs + 1e-9).all():
            best = max(best, float(lp.objective @ v))
    return best


def test_simple_box_maximum():
    result = solve(box_lp())
    assert result.status == "optimal"
    assert abs(result.value - 3.0) <= 1e-9
    assert np.allclose(result.x, [1.0, 2.0])


def test_trivial_infeasible_with_farkas():
    lp = LinearProgram(objective=[1.0], A=[[1.0], [1.0]], relations=[GE, LE],
                       b=[1.0, 0.0])
    result = solve(lp)
    assert result.status == "infeasible"
    y = result.farkas
    assert abs(y @ np.array([[1.0], [1.0]])).max() <= 1e-8
    assert y @ np.array([1.0, 0.0]) > 1e-8


def test_unbounded_with_ray():
    lp = LinearProgram(objective=[1.0, 0.0], A=[[1.0, 0.0]], relations=[GE],
                       b=[0.0])
    result = solve(lp)
    assert result.status == "unbounded"
    assert result.ray @ lp.objective > 0


def test_equality_rows_and_negative_rhs():
    lp = LinearProgram(objective=[2.0, 3.0], A=[[1.0, 1.0], [1.0, -1.0]],
                       relations=[EQ, GE], b=[4.0, -6.0],
                       bounds=[(0, None), (0, None)])
    result = solve(lp)
    assert result.status == "optimal"
    assert abs(result.value - 12.0) <= 1e-9
    assert np.allclose(result.x, [0.0, 4.0])


def test_minimize_sense():
    lp = LinearProgram(objective=[1.0], A=[[1.0]], relations=[GE], b=[2.0],
                       maximize=False)
    result = solve(lp)
    assert result.status == "optimal"
    assert abs(result.value - 2.0) <= 1e-9


def test_free_variables_default():
    lp = LinearProgram(objective=[1.0, -1.0], A=[[1.0, 1.0], [1.0, -1.0]],
                       relations=[LE, LE], b=[1.0, 3.0])
    # maximize x1 - x2 over the wedge: optimum at x1 + x2 = 1, x1 - x2 = 3
    result = solve(lp)
    assert result.status == "optimal"
    assert abs(result.value - 3.0) <= 1e-8
    assert np.allclose(result.x, [2.0, -1.0], atol=1e-8)


def test_random_instances_against_vertex_enumeration():
    rng = np.random.default_rng(31)
    for _ in range(40):
        lp = random_instance(rng)
        result = solve(lp)
        assert result.status == "optimal"
        assert abs(result.value - enumerate_vertices_best(lp)) <= 1e-7


def test_feasibility_of_optimal_points():
    rng = np.random.default_rng(32)
    for _ in range(20):
        lp = random_instance(rng)
        result = solve(lp)
        assert (lp.A @ result.x <= lp.b + 1e-8).all()
        assert result.x.min() >= -1e-8


def test_weak_duality_on_random_instances():
    rng = np.random.default_rng(33)
    for _ in range(30):
        lp = random_instance(rng)
        result = solve(lp)
        assert result.status == "optimal"
        assert abs(result.value - result.dual_value) <= 1e-7


def test_determinism_bytes_in_bytes_out():
    rng = np.random.default_rng(34)
    lp = random_instance(rng)
    a = solve(lp)
    b = solve(lp)
    assert a.pivot_log == b.pivot_log
    assert np.array_equal(a.x, b.x)
    assert a.value == b.value


def test_bad_shapes_rejected():
    with pytest.raises(ValueError):
        LinearProgram(objective=[1.0], A=[[1.0, 2.0]], relations=[LE], b=[1.0])
    with pytest.raises(ValueError):
        LinearProgram(objective=[1.0], A=[[1.0]], relations=["<"], b=[1.0])
    with pytest.raises(ValueError):
        LinearProgram(objective=[np.inf], A=[[1.0]], relations=[LE], b=[1.0])


def test_lp_text_dump():
    text = dump_lp_text(box_lp())
    assert text.startswith("Maximize")
    assert "c1:" in text and "Bounds" in text and text.endswith("End\n")
