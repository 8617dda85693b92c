import itertools

import numpy as np
import pytest
from conftest import DATA, problem

from closurecert.automata import (
    Nba,
    ProductSystem,
    accepts_lasso,
    decompose_triplets,
    enumerate_simple_paths,
    parse_hoa,
    product_step,
    triplet_letter_pairs,
    unroll_once,
    write_hoa,
)
from closurecert.errors import HoaSyntaxError, PathTooShort, UnsupportedFeature
from closurecert.systems import FiniteSystem, Labeling

A, B, C_, D = (frozenset({x}) for x in "abcd")


def L(*aps):
    return frozenset(aps)


def test_parse_eventually_a():
    a = parse_hoa((DATA / "problems" / "fig7.hoa").read_text())
    assert a.n == 2 and a.initial == {0} and a.accepting == {1}
    assert a.successors(0, L()) == [0]
    assert a.successors(0, L("a")) == [1]
    assert a.successors(1, L()) == [1] and a.successors(1, L("a")) == [1]


def test_parse_two_room_automaton():
    a = parse_hoa((DATA / "problems" / "fig8.hoa").read_text())
    assert a.n == 4 and a.accepting == {2}
    assert a.successors(0, L("a0", "a1")) == [2]
    assert a.successors(2, L("a1")) == [2]
    assert a.successors(2, L()) == [1]
    assert a.successors(3, L("a0")) == [3]


def test_transition_acceptance_rejected():
    text = 'HOA: v1\nStates: 1\nStart: 0\nAP: 1 "a"\nAcceptance: 1 Inf(0)\n--BODY--\nState: 0\n[0] 0 {0}\n--END--\n'
    with pytest.raises(UnsupportedFeature):
        parse_hoa(text)


def test_other_acceptance_rejected():
    text = 'HOA: v1\nStates: 1\nStart: 0\nAP: 1 "a"\nAcceptance: 2 Inf(0)&Fin(1)\n--BODY--\nState: 0 {0}\n[0] 0\n--END--\n'
    with pytest.raises(UnsupportedFeature):
        parse_hoa(text)


def test_syntax_error_has_line():
    text = 'HOA: v1\nStates: 1\nStart: 0\nAP: 1 "a"\nAcceptance: 1 Inf(0)\n--BODY--\nState: 0 {0}\n[0 & ] 0\n--END--\n'
    with pytest.raises(HoaSyntaxError):
        parse_hoa(text)


def random_nba(rng, n_max=6, n_ap=3):
    n = int(rng.integers(1, n_max + 1))
    aps = [f"p{k}" for k in range(int(rng.integers(1, n_ap + 1)))]
    letters = [frozenset(c) for k in range(len(aps) + 1) for c in itertools.combinations(aps, k)]
    trans = set()
    for q in range(n):
        for a in letters:
            for r in range(n):
                if rng.random() < 0.15:
                    trans.add((q, a, r))
    init = frozenset({0})
    acc = frozenset(int(v) for v in np.flatnonzero(rng.random(n) < 0.35)) or frozenset({n - 1})
    return Nba(n, init, frozenset(trans), acc, tuple(letters))


def test_hoa_round_trip():
    rng = np.random.Generator(np.random.PCG64(21))
    for _ in range(100):
        a = random_nba(rng)
        b = parse_hoa(write_hoa(a))
        assert b.n == a.n and b.initial == a.initial and b.accepting == a.accepting
        assert b.transitions == a.transitions


def test_product_step_examples():
    nba = parse_hoa((DATA / "problems" / "fig7.hoa").read_text())
    s = FiniteSystem(2, frozenset({0}), frozenset({(0, 1), (1, 1)}))
    lab = Labeling(((L(), frozenset({0})), (L("a"), frozenset({1}))))
    p = ProductSystem(s, nba, lab)
    assert product_step(p, (0, 0)) == {(1, 0)}
    assert product_step(p, (1, 0)) == {(1, 1)}


def test_product_cartesian():
    nba = Nba(3, frozenset({0}), frozenset({(0, L(), 1), (0, L(), 2)}), frozenset({1}))
    s = FiniteSystem(3, frozenset({0}), frozenset({(0, 1), (0, 2), (1, 1), (2, 2)}))
    lab = Labeling(((L(), frozenset({0, 1, 2})),))
    assert len(product_step(ProductSystem(s, nba, lab), (0, 0))) == 4


def brute_product(s, nba, lab_of):
    """Reachable product edges built directly from the definition."""
    edges = set()
    start = {(x, q) for x in s.init for q in nba.initial}
    seen, todo = set(start), list(start)
    while todo:
        x, q = todo.pop()
        for (a, b) in s.edges:
            if a != x:
                continue
            for (p, sig, r) in nba.transitions:
                if p == q and sig == lab_of[x]:
                    edges.add(((x, q), (b, r)))
                    if (b, r) not in seen:
                        seen.add((b, r))
                        todo.append((b, r))
    return seen, edges


def test_product_vs_brute_force():
    rng = np.random.Generator(np.random.PCG64(22))
    for _ in range(150):
        nba = random_nba(rng, n_max=4, n_ap=2)
        m = int(rng.integers(1, 7))
        edges = {(k, int(rng.integers(m))) for k in range(m)} | {(int(rng.integers(m)), int(rng.integers(m))) for _ in range(m)}
        s = FiniteSystem(m, frozenset({0}), frozenset(edges))
        letters = list(nba.alphabet)
        lab_of = [letters[int(rng.integers(len(letters)))] for _ in range(m)]
        lab = Labeling(tuple((a, frozenset(k for k in range(m) if lab_of[k] == a)) for a in letters))
        states, want = brute_product(s, nba, lab_of)
        p = ProductSystem(s, nba, lab)
        got = {(st, t) for st in states for t in product_step(p, st)}
        assert got == want


def test_simple_paths_examples():
    fig2 = problem("fig2_finite.json").nba
    assert enumerate_simple_paths(fig2) == [(0, 1, 2, 3)]
    fig5 = problem("fig5_finite.json").nba
    assert enumerate_simple_paths(fig5) == [(0, 1, 2)]
    a = Nba(2, frozenset({0}), frozenset({(0, A, 1)}), frozenset({0, 1}))
    assert (0,) in enumerate_simple_paths(a)


def test_simple_paths_are_simple_and_valid():
    rng = np.random.Generator(np.random.PCG64(23))
    for _ in range(200):
        a = random_nba(rng)
        succ = a.succ_map()
        for p in enumerate_simple_paths(a):
            assert len(set(p)) == len(p)
            assert p[0] in a.initial and p[-1] in a.accepting
            assert all(r in succ[q] for q, r in zip(p, p[1:]))


def test_decompose_worked_example():
    fig2 = problem("fig2_finite.json").nba
    ts = decompose_triplets((0, 1, 2, 3), fig2)
    assert [t.states for t in ts] == [(0, 1, 2), (1, 2, 3)]
    a0, a1 = L("a0"), L("a1")
    assert ts[0].pairs == ((a1, a0),)
    assert ts[1].pairs == ((a0, a0),)
    with pytest.raises(PathTooShort):
        decompose_triplets((0, 1), fig2)
    assert len(decompose_triplets((0, 1, 2), fig2)) == 1


def test_unroll_matches_hand_construction():
    fig5 = problem("fig5_finite.json").nba
    u = unroll_once(fig5)
    names = {n: k for k, n in enumerate(u.names)}
    assert u.n == 6 and {"q2'", "q3'"} <= set(names)
    assert u.accepting == {names["q2'"]}
    q2, q2p, q3p = names["q2"], names["q2'"], names["q3'"]
    assert u.successors(q2, C_) == [q3p]
    assert u.successors(q3p, B) == [q2p]
    assert u.successors(q3p, A) == [q3p]
    assert u.successors(q2p, C_) == [q3p]
    assert enumerate_simple_paths(u) == [(0, 1, q2, q3p, q2p)]
    pairs = triplet_letter_pairs(u)
    assert (C_, B) in pairs and (C_, B) not in triplet_letter_pairs(fig5)


def test_unroll_without_accepting_successors():
    a = Nba(3, frozenset({0}), frozenset({(0, A, 1), (1, B, 2), (0, B, 0)}), frozenset({2}))
    u = unroll_once(a)
    reach = u.reachable_from(u.initial)
    assert u.n == a.n
    assert {t for t in u.transitions if t[0] in reach} == {t for t in a.transitions if t[0] in reach}


def test_double_unroll_stable_on_worked_example():
    fig5 = problem("fig5_finite.json").nba
    once = unroll_once(fig5)
    assert triplet_letter_pairs(unroll_once(once)) == triplet_letter_pairs(once)


def test_double_unroll_counterexample_for_self_loop():
    # one initial accepting state with a self-loop: a second unrolling exposes a new pair
    a = Nba(1, frozenset({0}), frozenset({(0, L("p0"), 0)}), frozenset({0}))
    once = unroll_once(a)
    twice = unroll_once(once)
    assert triplet_letter_pairs(once) == set()
    assert triplet_letter_pairs(twice) == {(L("p0"), L("p0"))}


def test_double_unroll_projects_onto_single_unroll():
    """Every edge of the twice-unrolled automaton maps to an edge of the once-unrolled one."""
    rng = np.random.Generator(np.random.PCG64(24))
    for _ in range(200):
        a = random_nba(rng)
        once = unroll_once(a)
        twice = unroll_once(once)
        base = {n.rstrip("'"): None for n in a.names}

        def proj(auto, q):
            return auto.names[q].rstrip("'")

        edges1 = {(proj(once, p), s, proj(once, r)) for p, s, r in once.transitions}
        for p, s, r in twice.transitions:
            assert (proj(twice, p), s, proj(twice, r)) in edges1
        assert all(proj(twice, q) in base for q in range(twice.n))


def test_unroll_preserves_lasso_acceptance():
    rng = np.random.Generator(np.random.PCG64(25))
    for _ in range(150):
        a = random_nba(rng, n_max=4, n_ap=2)
        u = unroll_once(a)
        letters = list(a.alphabet)
        for _ in range(5):
            stem = [letters[int(rng.integers(len(letters)))] for _ in range(int(rng.integers(0, 3)))]
            cyc = [letters[int(rng.integers(len(letters)))] for _ in range(int(rng.integers(1, 4)))]
            assert accepts_lasso(a, stem, cyc) == accepts_lasso(u, stem, cyc)
