import json
import math

import numpy as np
import pytest
from conftest import DATA, problem, random_finite

from closurecert import expr as E
from closurecert.errors import EmptyRegionBudgetExceeded, FormatError, PartitionViolation
from closurecert.systems import (
    FiniteSystem,
    NotPersistent,
    Persistent,
    Safe,
    Unsafe,
    exact_persistence,
    exact_safety,
    exists_polynomial_barrier,
    load_problem,
    parse_region,
    poly_eval,
    sample_region,
    transitive_closure,
)


def naive_closure(s):
    rel = set(s.edges)
    while True:
        new = rel | {(a, d) for a, b in rel for c, d in s.edges if b == c}
        if new == rel:
            return frozenset(rel)
        rel = new


def test_kuramoto_problem_regions():
    p = problem("kuramoto1d.json")
    box = p.system.box["x1"]
    assert (box.lo, box.hi) == pytest.approx((0.0, 2 * math.pi))
    ib = p.init.bbox["x1"]
    ub = p.unsafe.bbox["x1"]
    assert (ib.lo, ib.hi) == pytest.approx((4 * math.pi / 9, 5 * math.pi / 9))
    assert (ub.lo, ub.hi) == pytest.approx((7 * math.pi / 9, 8 * math.pi / 9))
    assert p.system.step([0.0])[0] == pytest.approx(1.691)


def test_six_state_problem():
    p = problem("fig1.json")
    assert p.finite and p.init == {1, 3, 5} and p.unsafe == {2, 4}


def test_bundled_problems_load():
    for f in sorted((DATA / "problems").glob("*.json")):
        assert problem(f.name).spec in ("safety", "persistence", "ltl-nba")


def test_overlapping_labels_rejected():
    doc = {
        "kind": "continuous",
        "spec": "ltl-nba",
        "dimension": 1,
        "state_box": [[0, 1]],
        "dynamics": ["x1"],
        "init": {"box": [[0, 0.1]]},
        "labeling": [{"letter": ["a"], "region": {"box": [[0, 0.6]]}}, {"letter": [], "region": {"box": [[0.4, 1]]}}],
        "nba": {"hoa": "HOA: v1\nStates: 1\nStart: 0\nAP: 1 \"a\"\nacc-name: Buchi\nAcceptance: 1 Inf(0)\n--BODY--\nState: 0 {0}\n[0] 0\n[!0] 0\n--END--\n"},
    }
    with pytest.raises(PartitionViolation):
        load_problem(json.dumps(doc))


def test_overlapping_finite_labels_rejected():
    doc = {
        "kind": "finite",
        "spec": "ltl-nba",
        "states": 2,
        "initial": [0],
        "edges": [[0, 1], [1, 1]],
        "labeling": [{"letter": ["a"], "states": [0, 1]}, {"letter": [], "states": [1]}],
        "nba": {"hoa": "HOA: v1\nStates: 1\nStart: 0\nAP: 1 \"a\"\nacc-name: Buchi\nAcceptance: 1 Inf(0)\n--BODY--\nState: 0 {0}\n[0] 0\n[!0] 0\n--END--\n"},
    }
    with pytest.raises(PartitionViolation):
        load_problem(doc)


def test_format_errors():
    with pytest.raises(FormatError):
        load_problem(b"{not json")
    with pytest.raises(FormatError):
        load_problem({"spec": "liveness"})
    with pytest.raises(FormatError):
        load_problem({"kind": "finite", "spec": "safety", "states": 2, "initial": [0], "edges": [[0, 1], [1, 1]]})


def test_sample_region_points_inside():
    p = problem("kuramoto1d.json")
    pts = sample_region(p.init, 50, seed=7)
    assert pts.shape == (50, 1)
    assert np.all(pts >= 4 * math.pi / 9) and np.all(pts <= 5 * math.pi / 9)


def test_sample_region_zero_and_deterministic():
    p = problem("kuramoto1d.json")
    assert sample_region(p.init, 0, seed=1).shape == (0, 1)
    a = sample_region(p.unsafe, 200, seed=99)
    b = sample_region(p.unsafe, 200, seed=99)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, sample_region(p.unsafe, 200, seed=100))


def test_sample_empty_region():
    box = E.Box.from_bounds({"x1": (0.0, 1.0)})
    r = parse_region({"box": [[0, 1]], "constraints": ["x1 >= 1", "x1 <= 0"]}, 1, box, name="empty")
    with pytest.raises(EmptyRegionBudgetExceeded):
        sample_region(r, 5, seed=0)


def test_closure_examples():
    p = problem("fig1.json")
    assert transitive_closure(p.system) == {(1, 0), (2, 0), (3, 0), (4, 0), (5, 0), (0, 0)}
    assert transitive_closure(FiniteSystem(1, frozenset({0}), frozenset({(0, 0)}))) == {(0, 0)}
    assert transitive_closure(FiniteSystem(2, frozenset({0}), frozenset({(0, 1), (1, 1)}))) == {(0, 1), (1, 1)}


def test_closure_vs_naive_fixpoint_500():
    rng = np.random.Generator(np.random.PCG64(11))
    for _ in range(500):
        s = random_finite(rng, m_max=12)
        assert transitive_closure(s) == naive_closure(s)


def test_safety_examples():
    p = problem("fig1.json")
    assert isinstance(exact_safety(p.system, p.unsafe), Safe)
    s = FiniteSystem(2, frozenset({0}), frozenset({(0, 1), (1, 1)}))
    assert exact_safety(s, {1}) == Unsafe((0, 1))
    assert isinstance(exact_safety(s, set()), Safe)


def test_safety_matches_closure():
    rng = np.random.Generator(np.random.PCG64(12))
    for _ in range(300):
        s = random_finite(rng, m_max=9)
        u = {int(v) for v in np.flatnonzero(rng.random(s.m) < 0.3)}
        tc = transitive_closure(s)
        hit = any((a, b) in tc for a in s.init for b in u) or bool(s.init & u)
        r = exact_safety(s, u)
        assert isinstance(r, Unsafe) == hit
        if isinstance(r, Unsafe):
            assert r.path[0] in s.init and r.path[-1] in u
            assert all((a, b) in s.edges for a, b in zip(r.path, r.path[1:]))


def test_persistence_examples():
    s = FiniteSystem(1, frozenset({0}), frozenset({(0, 0)}))
    assert exact_persistence(s, {0}) == NotPersistent((), (0,))
    p = problem("fig1.json")
    assert isinstance(exact_persistence(p.system, {2, 4}), Persistent)
    assert isinstance(exact_persistence(p.system, set()), Persistent)


def test_persistence_lasso_is_valid():
    rng = np.random.Generator(np.random.PCG64(13))
    for _ in range(300):
        s = random_finite(rng, m_max=9)
        vf = {int(v) for v in np.flatnonzero(rng.random(s.m) < 0.3)}
        r = exact_persistence(s, vf)
        if isinstance(r, NotPersistent):
            walk = list(r.stem) + list(r.cycle) + [r.cycle[0]]
            assert walk[0] in s.init
            assert all((a, b) in s.edges for a, b in zip(walk, walk[1:]))
            assert set(r.cycle) & vf
        else:
            # no reachable vf state lies on a cycle
            tc = transitive_closure(s)
            reach = s.reachable(s.init)
            assert not any(v in reach and (v, v) in tc for v in vf)


def test_polynomial_barrier_examples():
    p = problem("fig1.json")
    assert not exists_polynomial_barrier(p.system, p.unsafe, 2, eps=0.01).feasible
    d1 = problem("thm4_d1.json")
    assert not exists_polynomial_barrier(d1.system, d1.unsafe, 1).feasible
    s = FiniteSystem(2, frozenset({0}), frozenset({(0, 0), (1, 1)}))
    r = exists_polynomial_barrier(s, {1}, 1)
    assert r.feasible
    assert poly_eval(r.coefficients, 0.0) <= 0 < poly_eval(r.coefficients, 1.0)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_alternating_family_has_no_degree_d_barrier(d):
    p = problem(f"thm4_d{d}.json")
    assert not exists_polynomial_barrier(p.system, p.unsafe, d).feasible


def test_feasible_barrier_rechecked_exhaustively():
    rng = np.random.Generator(np.random.PCG64(14))
    found = 0
    for _ in range(200):
        s = random_finite(rng, m_max=7)
        u = {int(v) for v in np.flatnonzero(rng.random(s.m) < 0.3)} - s.init
        r = exists_polynomial_barrier(s, u, int(rng.integers(1, 4)))
        if not r.feasible:
            continue
        found += 1
        B = [poly_eval(r.coefficients, float(k)) for k in range(s.m)]
        assert all(B[k] <= 1e-9 for k in s.init)
        assert all(B[k] > 0 for k in u)
        assert all(B[b] <= 1e-9 for a, b in s.edges if B[a] <= 1e-9)
    assert found > 20
