"""Büchi automata: HOA-subset reader/writer, products, simple paths, triplets, unrolling.

Accepted HOA header items: ``HOA``, ``name``, ``States``, ``Start`` (one
state per line, repeatable), ``AP``, ``acc-name`` (``Buchi``),
``Acceptance`` (``1 Inf(0)``), ``properties``, ``tool``. The body uses
explicit labels ``[expr]`` over AP indices with ``!``, ``&``, ``|``, ``t``,
``f`` and parentheses; acceptance is state based (``State: i {0}``).
Aliases, transition-based acceptance, implicit labels and other acceptance
conditions raise :class:`UnsupportedFeature`.
"""

from __future__ import annotations

import itertools
import re
import shlex
from collections import deque
from dataclasses import dataclass

from .errors import HoaSyntaxError, NoLetterForState, PathExplosion, PathTooShort, UnsupportedFeature

MAX_PATHS = 10**6


def letter(*aps) -> frozenset:
    return frozenset(aps)


def letter_key(a: frozenset) -> tuple:
    return (len(a), tuple(sorted(a)))


def fmt_letter(a: frozenset) -> str:
    return "{" + ",".join(sorted(a)) + "}"


@dataclass(frozen=True)
class Nba:
    n: int
    initial: frozenset
    transitions: frozenset  # {(q, letter, q')}
    accepting: frozenset
    alphabet: tuple = ()
    names: tuple = ()

    def __post_init__(self):
        if not self.names:
            object.__setattr__(self, "names", tuple(f"q{k}" for k in range(self.n)))
        letters = set(self.alphabet) | {a for _, a, _ in self.transitions}
        object.__setattr__(self, "alphabet", tuple(sorted(letters, key=letter_key)))
        for q, _, r in self.transitions:
            if not (0 <= q < self.n and 0 <= r < self.n):
                raise ValueError(f"transition ({q}, {r}) out of range")

    @classmethod
    def build(cls, n, initial, edges, accepting, alphabet=(), names=()):
        """``edges`` holds (q, letters, q') with ``letters`` an iterable of letters."""
        trans = set()
        for q, letters, r in edges:
            for a in letters:
                trans.add((q, frozenset(a), r))
        return cls(n, frozenset(initial), frozenset(trans), frozenset(accepting), tuple(frozenset(a) for a in alphabet), tuple(names))

    def successors(self, q: int, a: frozenset) -> list:
        return sorted(r for (p, b, r) in self.transitions if p == q and b == a)

    def next_states(self, q: int) -> list:
        return sorted({r for (p, _, r) in self.transitions if p == q})

    def letters(self, q: int, r: int) -> list:
        return sorted((b for (p, b, s) in self.transitions if p == q and s == r), key=letter_key)

    def succ_map(self) -> dict:
        out = {q: set() for q in range(self.n)}
        for p, _, r in self.transitions:
            out[p].add(r)
        return {q: sorted(v) for q, v in out.items()}

    def reachable_from(self, sources, min_steps: int = 0) -> set:
        succ = self.succ_map()
        frontier = deque(sources) if min_steps == 0 else deque(r for s in sources for r in succ[s])
        seen = set(frontier)
        while frontier:
            q = frontier.popleft()
            for r in succ[q]:
                if r not in seen:
                    seen.add(r)
                    frontier.append(r)
        return seen


# ---------------------------------------------------------------------------
# HOA


def _label_fn(text: str, n_ap: int, line: int):
    toks = re.findall(r"\d+|[!&|()tf]|\S", text)
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else None

    def take():
        nonlocal pos
        pos += 1
        return toks[pos - 1]

    def disj():
        left = conj()
        while peek() == "|":
            take()
            r = conj()
            left = (lambda a, b: lambda v: a(v) or b(v))(left, r)
        return left

    def conj():
        left = neg()
        while peek() == "&":
            take()
            r = neg()
            left = (lambda a, b: lambda v: a(v) and b(v))(left, r)
        return left

    def neg():
        if peek() == "!":
            take()
            inner = neg()
            return lambda v: not inner(v)
        return atom()

    def atom():
        t = take() if peek() is not None else None
        if t == "(":
            e = disj()
            if take() != ")":
                raise HoaSyntaxError("unbalanced parenthesis in label", line)
            return e
        if t == "t":
            return lambda v: True
        if t == "f":
            return lambda v: False
        if t is not None and t.isdigit():
            k = int(t)
            if k >= n_ap:
                raise HoaSyntaxError(f"AP index {k} out of range", line)
            return lambda v: k in v
        if t is not None and t.startswith("@"):
            raise UnsupportedFeature("aliases")
        raise HoaSyntaxError(f"bad label token {t!r}", line)

    fn = disj()
    if pos != len(toks):
        raise HoaSyntaxError(f"trailing label tokens {toks[pos:]}", line)
    return fn


def parse_hoa(text: str) -> Nba:
    lines = text.splitlines()
    header, body = {}, []
    starts, aps, n_states = [], None, None
    k = 0
    seen_hoa = False
    while k < len(lines):
        raw = lines[k].strip()
        k += 1
        if not raw:
            continue
        if raw == "--BODY--":
            break
        if ":" not in raw:
            raise HoaSyntaxError(f"expected 'name: value', got {raw!r}", k)
        key, val = raw.split(":", 1)
        key, val = key.strip(), val.strip()
        if key == "HOA":
            if val != "v1":
                raise UnsupportedFeature(f"HOA version {val}")
            seen_hoa = True
        elif key == "States":
            n_states = int(val)
        elif key == "Start":
            if "&" in val:
                raise UnsupportedFeature("alternating start states")
            starts.append(int(val))
        elif key == "AP":
            parts = shlex.split(val)
            cnt = int(parts[0])
            aps = tuple(parts[1:])
            if len(aps) != cnt:
                raise HoaSyntaxError("AP count does not match names", k)
        elif key == "Acceptance":
            if " ".join(val.split()) != "1 Inf(0)":
                raise UnsupportedFeature(f"acceptance {val}")
        elif key == "acc-name":
            if val.split()[0] != "Buchi":
                raise UnsupportedFeature(f"acc-name {val}")
        elif key == "Alias":
            raise UnsupportedFeature("aliases")
        elif key in ("name", "properties", "tool"):
            header[key] = val
        else:
            raise UnsupportedFeature(f"header item {key}")
    else:
        raise HoaSyntaxError("missing --BODY--", k)
    if not seen_hoa:
        raise HoaSyntaxError("missing 'HOA: v1' header", 1)
    if n_states is None:
        raise HoaSyntaxError("missing States header", k)
    aps = aps or ()
    valuations = [frozenset(s) for r in range(len(aps) + 1) for s in itertools.combinations(range(len(aps)), r)]
    trans, acc = set(), set()
    names = [f"q{i}" for i in range(n_states)]
    cur = None
    ended = False
    while k < len(lines):
        raw = lines[k].strip()
        k += 1
        if not raw:
            continue
        if raw == "--END--":
            ended = True
            break
        m = re.match(r'^State:\s*(?:\[[^\]]*\]\s*)?(\d+)\s*(".*?")?\s*(\{[\d\s]*\})?\s*$', raw)
        if raw.startswith("State:"):
            if re.match(r"^State:\s*\[", raw):
                raise UnsupportedFeature("state labels")
            if m is None:
                raise HoaSyntaxError(f"bad state line {raw!r}", k)
            cur = int(m.group(1))
            if not 0 <= cur < n_states:
                raise HoaSyntaxError(f"state {cur} out of range", k)
            if m.group(2):
                names[cur] = m.group(2).strip('"')
            if m.group(3):
                sets = m.group(3).strip("{}").split()
                if any(s != "0" for s in sets):
                    raise UnsupportedFeature("acceptance sets other than 0")
                if sets:
                    acc.add(cur)
            continue
        if cur is None:
            raise HoaSyntaxError("edge before any State line", k)
        em = re.match(r"^\[(.*)\]\s*(\d+)\s*(\{[\d\s]*\})?\s*$", raw)
        if em is None:
            if re.match(r"^\d+(\s|$)", raw):
                raise UnsupportedFeature("implicit labels")
            raise HoaSyntaxError(f"bad edge line {raw!r}", k)
        if em.group(3):
            raise UnsupportedFeature("transition-based acceptance")
        if "&" in em.group(2):
            raise UnsupportedFeature("universal branching")
        dst = int(em.group(2))
        if not 0 <= dst < n_states:
            raise HoaSyntaxError(f"target {dst} out of range", k)
        fn = _label_fn(em.group(1), len(aps), k)
        for v in valuations:
            if fn(v):
                trans.add((cur, frozenset(aps[i] for i in v), dst))
    if not ended:
        raise HoaSyntaxError("missing --END--", k)
    alphabet = tuple(frozenset(aps[i] for i in v) for v in valuations)
    return Nba(n_states, frozenset(starts), frozenset(trans), frozenset(acc), alphabet, tuple(names))


def write_hoa(a: Nba, name: str = "") -> str:
    aps = sorted(set().union(*a.alphabet)) if a.alphabet else []
    out = ["HOA: v1"]
    if name:
        out.append(f'name: "{name}"')
    out.append(f"States: {a.n}")
    for q in sorted(a.initial):
        out.append(f"Start: {q}")
    out.append(f"AP: {len(aps)}" + "".join(f' "{p}"' for p in aps))
    out.append("acc-name: Buchi")
    out.append("Acceptance: 1 Inf(0)")
    out.append("properties: state-acc explicit-labels")
    out.append("--BODY--")
    for q in range(a.n):
        out.append(f'State: {q} "{a.names[q]}"' + (" {0}" if q in a.accepting else ""))
        edges = sorted(((b, r) for (p, b, r) in a.transitions if p == q), key=lambda e: (e[1], letter_key(e[0])))
        for b, r in edges:
            cube = " & ".join(str(i) if p in b else f"!{i}" for i, p in enumerate(aps)) or "t"
            out.append(f"[{cube}] {r}")
    out.append("--END--")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Product


@dataclass(frozen=True)
class ProductSystem:
    system: object
    nba: Nba
    labeling: object

    def step(self, state) -> set:
        return product_step(self, state)


def product_step(p: ProductSystem, state) -> set:
    """Successors ``{(x', q')}`` of product state ``(x, q)``."""
    x, q = state
    sigma = p.labeling.letter_of(x)
    if sigma is None:
        raise NoLetterForState(f"no letter labels state {x!r}")
    targets = p.nba.successors(q, sigma)
    return {(xn, r) for xn in p.system.successors(x) for r in targets}


# ---------------------------------------------------------------------------
# Paths and triplets


def enumerate_simple_paths(a: Nba, limit: int = MAX_PATHS) -> list:
    """All repetition-free state sequences from an initial to an accepting state.

    Paths may pass through accepting states before their final one.
    Order is lexicographic in the state indices.
    """
    succ = a.succ_map()
    out = []

    def dfs(q, path, seen):
        if q in a.accepting:
            out.append(tuple(path))
            if len(out) > limit:
                raise PathExplosion(f"more than {limit} simple paths")
        for r in succ[q]:
            if r not in seen:
                seen.add(r)
                path.append(r)
                dfs(r, path, seen)
                path.pop()
                seen.discard(r)

    for s in sorted(a.initial):
        dfs(s, [s], {s})
    return out


@dataclass(frozen=True)
class Triplet:
    states: tuple  # (q, q', q'')
    pairs: tuple  # ((a, b), ...) letter pairs realizing the two edges

    def __repr__(self):
        ps = ", ".join(f"({fmt_letter(x)},{fmt_letter(y)})" for x, y in self.pairs)
        return f"Triplet({self.states}, [{ps}])"


def decompose_triplets(path, a: Nba) -> list:
    if len(path) < 3:
        raise PathTooShort(f"path {tuple(path)} has fewer than three states")
    out = []
    for k in range(len(path) - 2):
        q0, q1, q2 = path[k : k + 3]
        pairs = tuple((x, y) for x in a.letters(q0, q1) for y in a.letters(q1, q2))
        out.append(Triplet((q0, q1, q2), pairs))
    return out


def triplet_letter_pairs(a: Nba) -> set:
    pairs = set()
    for p in enumerate_simple_paths(a):
        if len(p) >= 3:
            for t in decompose_triplets(p, a):
                pairs.update(t.pairs)
    return pairs


def unroll_once(a: Nba) -> Nba:
    """Add primed copies of states reachable from an accepting state.

    Edges leaving accepting states are redirected to the primed copies of
    their targets, the primed copies repeat the original edges among
    themselves, and the primed accepting states become the new accepting set.
    """
    reach = sorted(a.reachable_from(a.accepting, min_steps=1))
    prime = {q: a.n + k for k, q in enumerate(reach)}
    trans = set()
    for p, b, r in a.transitions:
        if p in a.accepting:
            trans.add((p, b, prime[r]))
        else:
            trans.add((p, b, r))
        if p in prime:
            trans.add((prime[p], b, prime[r]))
    acc = frozenset(prime[q] for q in a.accepting if q in prime)
    names = a.names + tuple(a.names[q] + "'" for q in reach)
    return Nba(a.n + len(reach), a.initial, frozenset(trans), acc, a.alphabet, names)


def accepts_lasso(a: Nba, stem, cycle) -> bool:
    """Does ``a`` accept the ultimately periodic word ``stem cycle^omega``?"""
    stem, cycle = list(stem), list(cycle)
    if not cycle:
        raise ValueError("cycle must be non-empty")
    # product of automaton with the word positions
    L = len(stem) + len(cycle)

    def word(i):
        return stem[i] if i < len(stem) else cycle[i - len(stem)]

    def nxt(i):
        return i + 1 if i + 1 < L else len(stem)

    nodes = {(q, 0) for q in a.initial}
    frontier = deque(nodes)
    edges = {}
    while frontier:
        q, i = frontier.popleft()
        outs = [(r, nxt(i)) for r in a.successors(q, frozenset(word(i)))]
        edges[(q, i)] = outs
        for v in outs:
            if v not in nodes:
                nodes.add(v)
                frontier.append(v)
    # accepting node on a cycle of the reachable graph
    for v in nodes:
        if v[0] in a.accepting:
            seen, stack = set(), list(edges.get(v, []))
            while stack:
                u = stack.pop()
                if u == v:
                    return True
                if u in seen:
                    continue
                seen.add(u)
                stack.extend(edges.get(u, []))
    return False
