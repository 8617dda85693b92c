"""State-triplet baseline: cut every simple accepting path with a barrier.

For a path q0 q1 ... qk in the NBA, a triplet (q, q', q'') with letters
(a, b) is cut when no trajectory can show letter b at or after a state with
letter a. That is witnessed by a barrier with initial set X_a and unsafe set
X_b. If every simple path from an initial to an accepting state has a cut
triplet, no run of the product visits an accepting state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import certificates as C
from .automata import Nba, decompose_triplets, enumerate_simple_paths, fmt_letter, unroll_once
from .errors import EmptyLabelRegion, FormatError
from .systems import ContinuousSystem, FiniteSystem, Problem

log = logging.getLogger(__name__)


@dataclass
class TripletVerification:
    cuts: list  # Cut, one per letter pair of each chosen triplet
    paths: list
    chosen: dict  # path -> triplet states that cut it
    nba: Nba
    unrolled: bool = False
    report: list = field(default_factory=list)

    verified = True

    def as_dict(self) -> dict:
        return {"status": "verified", "unrolled": self.unrolled, "paths": self.report}


@dataclass
class Inconclusive:
    uncut: list
    nba: Nba
    unrolled: bool = False
    report: list = field(default_factory=list)

    verified = False

    def as_dict(self) -> dict:
        names = self.nba.names
        return {
            "status": "inconclusive",
            "unrolled": self.unrolled,
            "uncut_paths": [[names[q] for q in p] for p in self.uncut],
            "paths": self.report,
        }


def triplet_problem(problem: Problem, a: frozenset, b: frozenset) -> Problem:
    """Barrier problem with initial set X_a and unsafe set X_b, same dynamics."""
    lab = problem.labeling
    if lab is None:
        raise FormatError("triplet problems need a labeling")
    ra, rb = lab.region(a), lab.region(b)
    for letter_, r in ((a, ra), (b, rb)):
        if r is None or (not problem.finite and r.empty_syntactically) or (problem.finite and not r):
            raise EmptyLabelRegion(letter_)
    s = problem.system
    if problem.finite:
        sys2 = FiniteSystem(s.m, frozenset(ra), s.edges, s.embedding)
        unsafe = frozenset(rb)
    else:
        sys2 = ContinuousSystem(s.n, s.box, ra, s.dynamics)
        unsafe = rb
    regions = dict(problem.regions)
    regions.update(init=ra, unsafe=rb)
    return Problem(f"{problem.name}:{fmt_letter(a)}->{fmt_letter(b)}", "safety", sys2, unsafe=unsafe, regions=regions)


def finite_barrier(tp: Problem):
    """Exact oracle: -1 on states reachable from the initial set, +1 elsewhere.

    Valid iff no unsafe state is reachable; returns None otherwise.
    """
    s = tp.system
    reach = s.reachable(s.init)
    if reach & set(tp.unsafe):
        return None
    reach = frozenset(reach)
    return lambda x: -1.0 if x in reach else 1.0


def _default_barrier_template(problem) -> C.Template:
    from . import expr as E

    xs = E.state_vars("x", problem.n)
    basis = (E.Const(1.0),) + tuple(E.Var(v) for v in xs) + tuple(E.Pow(E.Var(v), 2) for v in xs)
    return C.Template("barrier", basis)


def _find_barrier(problem, a, b, cfg, template):
    """Barrier separating letter a from letter b, or None."""
    if a == b:
        return None
    try:
        tp = triplet_problem(problem, a, b)
    except EmptyLabelRegion as exc:
        # a letter that labels nothing never occurs: a constant barrier cuts the pair
        return (lambda x: 1.0) if exc.letter == a else (lambda x: -1.0)
    if problem.finite:
        fn = finite_barrier(tp)
        if fn is None:
            return None
        cert = C.TableCertificate("barrier", fn)
        if not C.check_finite(cert, tp).verified:  # independent re-check
            return None
        return fn
    from .cegis import CegisConfig, Failure, synthesize

    res = synthesize(tp, template or _default_barrier_template(problem), cfg or CegisConfig())
    if isinstance(res, Failure):
        return None
    cert, _ = res
    if not C.check(cert, tp, "strengthened", margins=False).verified:
        return None
    return cert


def _attempt(problem, nba, cfg, template, cache):
    paths = enumerate_simple_paths(nba)
    chosen, uncut, report = {}, [], []
    cuts = {}
    names = nba.names
    for path in paths:
        entry = {"path": [names[q] for q in path], "triplets": []}
        hit = None
        if len(path) >= 3:
            for t in decompose_triplets(path, nba):
                pairs = sorted(t.pairs, key=lambda p: (sorted(p[0]), sorted(p[1])))
                found = {}
                for a, b in pairs:
                    if (a, b) not in cache:
                        cache[(a, b)] = _find_barrier(problem, a, b, cfg, template)
                    if cache[(a, b)] is None:
                        break
                    found[(a, b)] = cache[(a, b)]
                ok = bool(pairs) and len(found) == len(pairs)
                entry["triplets"].append(
                    {"states": [names[q] for q in t.states], "pairs": [[fmt_letter(a), fmt_letter(b)] for a, b in pairs], "cut": ok}
                )
                if ok:
                    hit = t
                    for (a, b), bar in found.items():
                        cuts[(t.states, a, b)] = C.Cut(t.states, a, b, bar)
                    break
        entry["cut"] = hit is not None
        report.append(entry)
        if hit is None:
            uncut.append(path)
        else:
            chosen[tuple(path)] = hit.states
    return paths, chosen, uncut, list(cuts.values()), report


def triplet_verify(problem: Problem, cfg=None, allow_unroll: bool = False, template: C.Template | None = None):
    """Cut every simple accepting path, optionally after one unrolling."""
    if problem.spec != "ltl-nba" or problem.nba is None:
        raise FormatError("triplet verification needs an ltl-nba problem with an NBA")
    cache = {}
    nba = problem.nba
    paths, chosen, uncut, cuts, report = _attempt(problem, nba, cfg, template, cache)
    unrolled = False
    if uncut and allow_unroll:
        nba = unroll_once(problem.nba)
        paths, chosen, uncut, cuts, report = _attempt(problem, nba, cfg, template, cache)
        unrolled = True
    if uncut:
        return Inconclusive(uncut, nba, unrolled, report)
    return TripletVerification(cuts, paths, chosen, nba, unrolled, report)


def covered(nba: Nba, cuts) -> list:
    """Simple paths left uncut by ``cuts`` (structural check only)."""
    have = {}
    for cu in cuts:
        have.setdefault(cu.triplet, set()).add((cu.first, cu.second))
    out = []
    for path in enumerate_simple_paths(nba):
        if len(path) < 3:
            out.append(path)
            continue
        if not any(t.pairs and set(t.pairs) <= have.get(t.states, set()) for t in decompose_triplets(path, nba)):
            out.append(path)
    return out


def subsume(tv: TripletVerification, problem: Problem, xi: float = 1.0):
    """Closure certificate for the product built from the triplet barriers."""
    cert = C.cc_from_triplet_barriers(tv.nba, tv.cuts, xi, problem)
    if not tv.cuts:
        # no accepting path at all; the certificate is plain automaton reachability
        cert.partition = None
        return cert
    ql, qr, mids = C.compute_ql_qr(tv.nba, [cu.triplet for cu in tv.cuts])
    cert.partition = {"Ql": sorted(ql), "Qr": sorted(qr), "middles": sorted(mids)}
    if not set(tv.nba.accepting) <= qr:
        log.warning("accepting states %s are not all reachable from every middle", sorted(set(tv.nba.accepting) - qr))
    return cert


def random_instance(rng: np.random.Generator, m: int = 6, n_q: int = 4, aps=("p", "r")):
    """Random finite labeled system and NBA, for property tests and demos."""
    from .automata import Nba
    from .systems import Labeling

    letters = [frozenset(c) for k in range(len(aps) + 1) for c in __import__("itertools").combinations(aps, k)]
    lab_of = [letters[int(rng.integers(len(letters)))] for _ in range(m)]
    edges = set()
    for s in range(m):
        for t in rng.choice(m, size=int(rng.integers(1, 3)), replace=False):
            edges.add((s, int(t)))
    init = frozenset(int(v) for v in rng.choice(m, size=int(rng.integers(1, 3)), replace=False))
    sysm = FiniteSystem(m, init, frozenset(edges))
    entries = tuple((a, frozenset(s for s in range(m) if lab_of[s] == a)) for a in letters)
    trans = set()
    for q in range(n_q):
        for a in letters:
            for r in range(n_q):
                if rng.random() < 0.25:
                    trans.add((q, a, r))
    acc = frozenset({int(rng.integers(n_q))})
    nba = Nba(n_q, frozenset({0}), frozenset(trans), acc, tuple(letters))
    return Problem("random", "ltl-nba", sysm, labeling=Labeling(entries), nba=nba)
