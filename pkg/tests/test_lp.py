import itertools

import numpy as np
import pytest

from closurecert.lp import LinearProgram, solve


def vertex_oracle(lp):
    """Best objective over all basic feasible points, or None if none exist."""
    A, rel, b = lp.matrix()
    rows, rhs = [], []
    for a, r, v in zip(A, rel, b):
        rows.append(a)
        rhs.append(v)
    n = lp.n
    for k, (lo, hi) in enumerate(lp.bounds):
        e = np.zeros(n)
        e[k] = 1.0
        rows += [e, e]
        rhs += [lo, hi]
    rows, rhs = np.array(rows), np.array(rhs)
    c, sense = lp.objective
    best = None
    for idx in itertools.combinations(range(len(rows)), n):
        M = rows[list(idx)]
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, rhs[list(idx)])
        if lp.violation(x).max(initial=0.0) > 1e-7:
            continue
        if any(x[k] < lo - 1e-7 or x[k] > hi + 1e-7 for k, (lo, hi) in enumerate(lp.bounds)):
            continue
        v = float(c @ x)
        if best is None or (v > best if sense == "max" else v < best):
            best = v
    return best


def random_lp(rng):
    n = int(rng.integers(1, 5))
    m = int(rng.integers(0, 9))
    lp = LinearProgram([f"v{k}" for k in range(n)], bounds=[(-10.0, 10.0)] * n)
    for _ in range(m):
        a = np.round(rng.normal(size=n), 2)
        rel = ["<=", ">=", "="][int(rng.choice(3, p=[0.45, 0.45, 0.1]))]
        lp.add(a, rel, float(np.round(rng.normal() * 4, 2)))
    lp.objective = (np.round(rng.normal(size=n), 2), "max" if rng.random() < 0.5 else "min")
    return lp


def test_single_bound():
    lp = LinearProgram(["xi"], bounds=[(0.0, 10.0)])
    lp.add([1.0], "<=", 5.0)
    lp.objective = (np.array([1.0]), "max")
    r = solve(lp)
    assert r.feasible and r.x[0] == pytest.approx(5.0) and r.objective == pytest.approx(5.0)


def test_empty_polytope():
    lp = LinearProgram(["c"])
    lp.add([1.0], ">=", 1.0)
    lp.add([1.0], "<=", 0.0)
    assert not solve(lp).feasible


def test_degree_two_barrier_on_six_states_is_infeasible():
    eps = 0.01
    lp = LinearProgram(["c0", "c1", "c2"])
    for s in (1, 3, 5):
        lp.add([1.0, s, s * s], "<=", 0.0)
    for s in (2, 4):
        lp.add([1.0, s, s * s], ">=", eps)
    assert not solve(lp).feasible


def test_no_constraints_is_feasible():
    lp = LinearProgram(["a", "b"])
    r = solve(lp)
    assert r.feasible


def test_agrees_with_vertex_oracle_1e3():
    rng = np.random.Generator(np.random.PCG64(2024))
    for trial in range(1000):
        lp = random_lp(rng)
        want = vertex_oracle(lp)
        got = solve(lp)
        assert got.feasible == (want is not None), (trial, lp.dump())
        if want is not None:
            assert got.objective == pytest.approx(want, abs=1e-6), (trial, lp.dump())
            assert lp.violation(got.x).max(initial=0.0) <= 1e-9


def test_deterministic():
    rng = np.random.Generator(np.random.PCG64(5))
    for _ in range(50):
        lp = random_lp(rng)
        a, b = solve(lp), solve(lp)
        assert a.feasible == b.feasible and a.pivots == b.pivots
        if a.feasible:
            assert np.array_equal(a.x, b.x)


def test_many_rows_chunked():
    rng = np.random.Generator(np.random.PCG64(6))
    lp = LinearProgram(["a", "b", "t"], bounds=[(-10, 10)] * 3)
    pts = rng.uniform(-1, 1, size=(2000, 2))
    for p in pts:
        lp.add([p[0], p[1], -1.0], "<=", 0.0)
    lp.objective = (np.array([0.0, 0.0, 1.0]), "min")
    r = solve(lp)
    assert r.feasible
    assert lp.violation(r.x).max() <= 1e-9
