"""System models, regions, problem files, sampling and exact finite-state oracles.

Problem files are JSON. A continuous problem looks like::

    {
      "name": "kuramoto1d",
      "kind": "continuous",
      "dimension": 1,
      "constants": {"tau": 0.1, "K": 0.0006},
      "state_box": [[0, "2*pi"]],
      "dynamics": ["x1 + tau*0.01 + 0.1*K*sin(-x1) - 0.532*x1^2 + 1.69"],
      "init": {"box": [["4*pi/9", "5*pi/9"]]},
      "unsafe": {"box": [["7*pi/9", "8*pi/9"]]},
      "spec": "safety",
      "parameters": {"tau1": 1.0}
    }

A region is a clause or a list of clauses (their union). A clause is
``{"box": [[lo, hi], ...], "constraints": ["x1 + x2 <= 3", "x1 > 0"]}``;
either key may be omitted (a missing box means the state box). Bounds may
be numbers or constant expressions. ``labeling`` is a list of
``{"letter": [...], "region": <region>, "name": "..."}``; ``nba`` is
``{"hoa": "<text>"}`` or ``{"path": "file.hoa"}`` (relative to the problem
file). Named regions (``init``, ``unsafe``, ``vf``, ``X``, labeling names and
entries of ``regions``) can be used as ``ind(name)`` in templates.

Finite problems use ``"kind": "finite"`` with ``states``, ``initial``,
``edges`` (pairs), optional ``embedding`` (one vector per state, default the
state index), ``unsafe``/``vf`` as state lists, and ``labeling`` entries
``{"letter": [...], "states": [...]}``.
"""

from __future__ import annotations

import functools
import itertools
import json
import logging
import math
import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import expr as E
from .automata import Nba, parse_hoa
from .errors import (
    DimensionMismatch,
    EmptyRegionBudgetExceeded,
    FormatError,
    PartitionViolation,
)

log = logging.getLogger(__name__)

SAMPLE_ATTEMPTS = 10**6
SAMPLE_BATCH = 1024
SPECS = ("safety", "persistence", "ltl-nba")


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class Constraint:
    g: E.Expr  # over x1..xn
    strict: bool = False  # g > 0 instead of g >= 0

    def holds(self, v: float) -> bool:
        return v > 0.0 if self.strict else v >= 0.0


@dataclass(frozen=True)
class Clause:
    box: E.Box
    constraints: tuple = ()


class Region:
    """Union of clauses; each clause is a box intersected with inequalities."""

    def __init__(self, clauses: Sequence[Clause], dim: int, name: str = ""):
        self.clauses = tuple(clauses)
        self.dim = dim
        self.name = name
        self.names = E.state_vars("x", dim)
        for c in self.clauses:
            if c.box.dim != dim:
                raise DimensionMismatch(f"clause box has dimension {c.box.dim}, expected {dim}")

    def __repr__(self):
        return f"Region({self.name or '?'}, {len(self.clauses)} clauses)"

    @property
    def empty_syntactically(self) -> bool:
        return not self.clauses

    @property
    def bbox(self) -> E.Box:
        if not self.clauses:
            raise EmptyRegionBudgetExceeded(f"region {self.name!r} has no clauses")
        los = np.min([[iv.lo for iv in c.box.intervals] for c in self.clauses], axis=0)
        his = np.max([[iv.hi for iv in c.box.intervals] for c in self.clauses], axis=0)
        return E.Box(self.names, tuple(E.Interval(float(a), float(b)) for a, b in zip(los, his)))

    def contains(self, point) -> bool:
        point = [float(v) for v in point]
        if len(point) != self.dim:
            raise DimensionMismatch(f"point has dimension {len(point)}, expected {self.dim}")
        env = dict(zip(self.names, point))
        for c in self.clauses:
            if all(iv.lo <= v <= iv.hi for iv, v in zip(c.box.intervals, point)) and all(
                k.holds(E.eval_point(k.g, env)) for k in c.constraints
            ):
                return True
        return False

    def contains_array(self, cols) -> np.ndarray:
        cols = [np.asarray(c, dtype=float) for c in cols]
        if len(cols) != self.dim:
            raise DimensionMismatch(f"got {len(cols)} coordinate arrays, expected {self.dim}")
        shape = np.broadcast(*cols).shape
        env = dict(zip(self.names, cols))
        out = np.zeros(shape, dtype=bool)
        for c in self.clauses:
            m = np.ones(shape, dtype=bool)
            for iv, v in zip(c.box.intervals, cols):
                m &= (v >= iv.lo) & (v <= iv.hi)
            for k in c.constraints:
                g = np.broadcast_to(E.eval_array(k.g, env), shape)
                m &= (g > 0.0) if k.strict else (g >= 0.0)
            out |= m
        return out

    def classify(self, ivs) -> bool | None:
        """True if the box lies inside, False if it misses the region, None if unsure."""
        ivs = list(ivs)
        env = dict(zip(self.names, ivs))
        unsure = False
        for c in self.clauses:
            status = _classify_clause(c, ivs, env)
            if status is True:
                return True
            if status is None:
                unsure = True
        return None if unsure else False

    def cuts(self, ivs, k: int) -> list:
        """Coordinates along axis ``k`` where a clause boundary crosses the box interior."""
        ivs = list(ivs)
        lo, hi = ivs[k].lo, ivs[k].hi
        out = set()
        mid = {n: iv.mid for n, iv in zip(self.names, ivs)}
        for c in self.clauses:
            for v in (c.box.intervals[k].lo, c.box.intervals[k].hi):
                if lo < v < hi:
                    out.add(v)
            for con in c.constraints:
                if self.names[k] not in E.free_vars(con.g):
                    continue
                r = _root_along(con.g, mid, self.names[k], lo, hi)
                if r is not None:
                    out.add(r)
        return sorted(out)


def _classify_clause(c: Clause, ivs, env):
    inside_box = True
    for iv, b in zip(ivs, c.box.intervals):
        if iv.hi < b.lo or iv.lo > b.hi:
            return False
        if iv.lo < b.lo or iv.hi > b.hi:
            inside_box = False
    # evaluate constraints on the part of the box that meets the clause box
    clipped = {n: E.Interval(max(iv.lo, b.lo), min(iv.hi, b.hi)) for n, iv, b in zip(env, ivs, c.box.intervals)}
    all_true = inside_box
    for k in c.constraints:
        r = E.eval_box(k.g, clipped)
        if (r.hi <= 0.0) if k.strict else (r.hi < 0.0):
            return False
        if not ((r.lo > 0.0) if k.strict else (r.lo >= 0.0)):
            all_true = False
    return True if all_true else None


def _root_along(g, mid, name, lo, hi):
    from scipy.optimize import brentq

    def h(t):
        env = dict(mid)
        env[name] = t
        return E.eval_point(g, env)

    a, b = h(lo), h(hi)
    if a == 0.0 or b == 0.0 or (a > 0) == (b > 0):
        return None
    r = brentq(h, lo, hi, xtol=1e-13)
    return r if lo < r < hi else None


# ---------------------------------------------------------------------------
# Systems


@dataclass(frozen=True)
class ContinuousSystem:
    n: int
    box: E.Box
    init: Region
    dynamics: tuple  # n expressions over x1..xn

    def __post_init__(self):
        if len(self.dynamics) != self.n:
            raise DimensionMismatch(f"dynamics has {len(self.dynamics)} components, expected {self.n}")
        if self.box.dim != self.n:
            raise DimensionMismatch("state box dimension differs from the system dimension")

    @property
    def names(self) -> tuple:
        return E.state_vars("x", self.n)

    def step(self, x) -> tuple:
        env = dict(zip(self.names, map(float, x)))
        return tuple(E.eval_point(f, env) for f in self.dynamics)

    def step_array(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        env = {n: X[:, k] for k, n in enumerate(self.names)}
        return np.stack([np.broadcast_to(E.eval_array(f, env), X.shape[:1]) for f in self.dynamics], axis=1)

    def successors(self, x) -> list:
        return [self.step(x)]

    def dynamics_over(self, prefix: str) -> dict:
        """Map ``prefix``-variables to f applied to ``prefix``-variables, e.g. y_k -> f_k(y)."""
        sub = {f"x{k + 1}": E.Var(f"{prefix}{k + 1}") for k in range(self.n)}
        return {f"{prefix}{k + 1}": E.substitute(f, sub) for k, f in enumerate(self.dynamics)}


@dataclass(frozen=True)
class FiniteSystem:
    m: int
    init: frozenset
    edges: frozenset
    embedding: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise FormatError("a finite system needs at least one state")
        if not self.init:
            raise FormatError("the initial set must be non-empty")
        for a, b in self.edges:
            if not (0 <= a < self.m and 0 <= b < self.m):
                raise FormatError(f"edge ({a}, {b}) out of range")
        missing = set(range(self.m)) - {a for a, _ in self.edges}
        if missing:
            raise FormatError(f"states without successors: {sorted(missing)}")
        if self.embedding is None:
            object.__setattr__(self, "embedding", np.arange(self.m, dtype=float).reshape(-1, 1))

    @functools.cached_property
    def _succ(self) -> dict:
        out = {s: [] for s in range(self.m)}
        for a, b in sorted(self.edges):
            out[a].append(b)
        return out

    def successors(self, s: int) -> list:
        return self._succ[s]

    def matrix(self) -> np.ndarray:
        R = np.zeros((self.m, self.m), dtype=bool)
        for a, b in self.edges:
            R[a, b] = True
        return R

    def reachable(self, sources) -> set:
        succ = {s: [] for s in range(self.m)}
        for a, b in sorted(self.edges):
            succ[a].append(b)
        seen = set(sources)
        q = deque(sorted(seen))
        while q:
            s = q.popleft()
            for t in succ[s]:
                if t not in seen:
                    seen.add(t)
                    q.append(t)
        return seen


@dataclass(frozen=True)
class Labeling:
    """Ordered (letter, region) pairs; regions are :class:`Region` or state sets."""

    entries: tuple

    @property
    def letters(self) -> list:
        return [a for a, _ in self.entries]

    def region(self, a: frozenset):
        for b, r in self.entries:
            if b == frozenset(a):
                return r
        return None

    def letter_of(self, x):
        if isinstance(x, (int, np.integer)):
            for a, states in self.entries:
                if int(x) in states:
                    return a
            return None
        for a, r in self.entries:
            if r.contains(x):
                return a
        return None

    def letters_array(self, X: np.ndarray) -> np.ndarray:
        """Index into ``entries`` for each row of ``X`` (-1 when unlabeled)."""
        X = np.atleast_2d(X)
        out = np.full(X.shape[0], -1)
        for k in range(len(self.entries) - 1, -1, -1):
            m = self.entries[k][1].contains_array([X[:, j] for j in range(X.shape[1])])
            out[m] = k
        return out


@dataclass
class Problem:
    name: str
    spec: str
    system: object
    unsafe: object = None
    vf: object = None
    labeling: Labeling | None = None
    nba: Nba | None = None
    params: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    source: str = ""

    @property
    def finite(self) -> bool:
        return isinstance(self.system, FiniteSystem)

    @property
    def n(self) -> int:
        return self.system.n if not self.finite else self.system.embedding.shape[1]

    @property
    def init(self):
        return self.system.init

    def variables(self, prefixes=("x", "y", "z")) -> tuple:
        return tuple(v for p in prefixes for v in E.state_vars(p, self.n))

    def param(self, key, default=None):
        return self.params.get(key, default)


# ---------------------------------------------------------------------------
# Loading

_REL = re.compile(r"(>=|<=|>|<)")


def _const(v, consts) -> float:
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        e = _parse(v, (), consts)
        if not isinstance(e, E.Const):
            raise FormatError(f"bound {v!r} is not a constant expression")
        return e.value
    raise FormatError(f"bad numeric value {v!r}")


def _parse(text, variables, consts, regions=None) -> E.Expr:
    names = tuple(variables) + tuple(consts)
    e = E.parse_expr(text, names, regions)
    if consts:
        e = E.fold_constants(E.substitute(e, {k: E.Const(float(v)) for k, v in consts.items()}))
    return e


def _parse_constraint(text: str, n: int, consts) -> Constraint:
    parts = _REL.split(text)
    if len(parts) != 3:
        raise FormatError(f"constraint {text!r} needs exactly one of >=, <=, >, <")
    lhs, rel, rhs = parts
    xs = E.state_vars("x", n)
    a, b = _parse(lhs, xs, consts), _parse(rhs, xs, consts)
    g = E.Sub(a, b) if rel in (">=", ">") else E.Sub(b, a)
    return Constraint(E.fold_constants(g), rel in (">", "<"))


def _parse_box(spec, n: int, consts) -> E.Box:
    if len(spec) != n:
        raise DimensionMismatch(f"box has {len(spec)} intervals, expected {n}")
    ivs = []
    for pair in spec:
        if len(pair) != 2:
            raise FormatError(f"interval {pair!r} must have two endpoints")
        lo, hi = _const(pair[0], consts), _const(pair[1], consts)
        if not lo <= hi:
            raise FormatError(f"interval [{lo}, {hi}] is empty")
        ivs.append(E.Interval(lo, hi))
    return E.Box(E.state_vars("x", n), tuple(ivs))


def parse_region(spec, n: int, default_box: E.Box, consts=None, name: str = "") -> Region:
    consts = consts or {}
    if isinstance(spec, dict):
        spec = [spec]
    if not isinstance(spec, list):
        raise FormatError(f"region {name!r} must be a clause or a list of clauses")
    clauses = []
    for c in spec:
        if not isinstance(c, dict) or not set(c) <= {"box", "constraints"}:
            raise FormatError(f"bad clause in region {name!r}: {c!r}")
        box = _parse_box(c["box"], n, consts) if "box" in c else default_box
        cons = tuple(_parse_constraint(t, n, consts) for t in c.get("constraints", []))
        clauses.append(Clause(box, cons))
    return Region(clauses, n, name)


def _load_nba(spec, base: Path) -> Nba:
    if isinstance(spec, str):
        spec = {"path": spec}
    if "hoa" in spec:
        return parse_hoa(spec["hoa"])
    if "path" in spec:
        p = Path(spec["path"])
        if not p.is_absolute():
            p = base / p
        return parse_hoa(p.read_text())
    raise FormatError("nba needs 'hoa' or 'path'")


def load_problem(document, base: str | Path | None = None, validate: bool = True) -> Problem:
    """Build a :class:`Problem` from JSON text/bytes or an already decoded dict."""
    if isinstance(document, (bytes, bytearray)):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"problem file is not UTF-8: {exc}") from None
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc}") from None
    else:
        doc = document
    if not isinstance(doc, dict):
        raise FormatError("problem document must be a JSON object")
    base = Path(base) if base is not None else Path.cwd()
    spec = doc.get("spec")
    if spec not in SPECS:
        raise FormatError(f"spec must be one of {SPECS}, got {spec!r}")
    kind = doc.get("kind", "continuous")
    if kind == "finite":
        prob = _load_finite(doc, spec)
    elif kind == "continuous":
        prob = _load_continuous(doc, spec)
    else:
        raise FormatError(f"unknown problem kind {kind!r}")
    if "nba" in doc:
        prob.nba = _load_nba(doc["nba"], base)
    if spec == "ltl-nba":
        if prob.labeling is None or prob.nba is None:
            raise FormatError("ltl-nba problems need both 'labeling' and 'nba'")
        extra = set(prob.labeling.letters) - set(prob.nba.alphabet)
        if extra:
            raise FormatError(f"labeling letters {sorted(map(sorted, extra))} are not in the NBA alphabet")
    elif prob.labeling is not None:
        raise FormatError("'labeling' is only allowed for ltl-nba problems")
    if spec == "safety" and prob.unsafe is None:
        raise FormatError("safety problems need 'unsafe'")
    if spec == "persistence" and prob.vf is None:
        raise FormatError("persistence problems need 'vf'")
    prob.params = dict(doc.get("parameters", {}))
    for k, v in prob.params.items():
        if not isinstance(v, (int, float)) or not math.isfinite(v):
            raise FormatError(f"parameter {k!r} must be a finite number")
    if validate and prob.labeling is not None:
        validate_labeling(prob)
    return prob


def _load_continuous(doc, spec) -> Problem:
    try:
        n = int(doc["dimension"])
        consts = {k: float(v) for k, v in doc.get("constants", {}).items()}
        box = _parse_box(doc["state_box"], n, consts)
        xs = E.state_vars("x", n)
        dyn = tuple(_parse(t, xs, consts) for t in doc["dynamics"])
        init = parse_region(doc["init"], n, box, consts, "init")
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}") from None
    system = ContinuousSystem(n, box, init, dyn)
    regions = {"init": init, "X": Region([Clause(box)], n, "X")}
    prob = Problem(doc.get("name", ""), spec, system, regions=regions)
    for key in ("unsafe", "vf"):
        if key in doc:
            r = parse_region(doc[key], n, box, consts, key)
            setattr(prob, key, r)
            regions[key] = r
    for rname, rspec in doc.get("regions", {}).items():
        regions[rname] = parse_region(rspec, n, box, consts, rname)
    if "labeling" in doc:
        entries = []
        for k, ent in enumerate(doc["labeling"]):
            a = frozenset(ent["letter"])
            rname = ent.get("name", f"L{k}")
            r = parse_region(ent["region"], n, box, consts, rname)
            regions[rname] = r
            entries.append((a, r))
        if len({a for a, _ in entries}) != len(entries):
            raise FormatError("labeling lists a letter twice")
        prob.labeling = Labeling(tuple(entries))
    return prob


def _load_finite(doc, spec) -> Problem:
    try:
        m = int(doc["states"])
        init = frozenset(int(s) for s in doc["initial"])
        edges = frozenset((int(a), int(b)) for a, b in doc["edges"])
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}") from None
    emb = None
    if "embedding" in doc:
        emb = np.array(doc["embedding"], dtype=float)
        if emb.ndim == 1:
            emb = emb.reshape(-1, 1)
        if emb.shape[0] != m:
            raise DimensionMismatch(f"embedding has {emb.shape[0]} rows for {m} states")
    system = FiniteSystem(m, init, edges, emb)
    prob = Problem(doc.get("name", ""), spec, system)
    for key in ("unsafe", "vf"):
        if key in doc:
            states = frozenset(int(s) for s in doc[key])
            if any(not 0 <= s < m for s in states):
                raise FormatError(f"{key} lists a state out of range")
            setattr(prob, key, states)
    if "labeling" in doc:
        entries = tuple((frozenset(e["letter"]), frozenset(int(s) for s in e["states"])) for e in doc["labeling"])
        prob.labeling = Labeling(entries)
    return prob


def load_problem_file(path: str | Path, validate: bool = True) -> Problem:
    p = Path(path)
    prob = load_problem(p.read_bytes(), base=p.parent, validate=validate)
    prob.source = str(p)
    if not prob.name:
        prob.name = p.stem
    return prob


# ---------------------------------------------------------------------------
# Labeling validation


def validate_labeling(prob: Problem, rel_delta: float = 2.0**-10, budget: int = 200_000):
    lab = prob.labeling
    if prob.finite:
        seen = {}
        for a, states in lab.entries:
            for s in states:
                if s in seen:
                    raise PartitionViolation(f"letters {sorted(seen[s])} and {sorted(a)} overlap", s)
                seen[s] = a
        missing = set(range(prob.system.m)) - set(seen)
        if missing:
            raise PartitionViolation("states without a letter", min(missing))
        return
    X = prob.system.box
    regions = [r for _, r in lab.entries]
    for (a, ra), (b, rb) in itertools.combinations(lab.entries, 2):
        w = _find_point(X, lambda ivs: _both(ra, rb, ivs), lambda p: ra.contains(p) and rb.contains(p), rel_delta, budget)
        if w is not None:
            raise PartitionViolation(f"letters {sorted(a)} and {sorted(b)} overlap", w)
    w = _find_point(
        X,
        lambda ivs: _none(regions, ivs),
        lambda p: not any(r.contains(p) for r in regions),
        rel_delta,
        budget,
    )
    if w is not None:
        raise PartitionViolation("labeling does not cover the state box", w)


def _both(ra, rb, ivs):
    ca, cb = ra.classify(ivs), rb.classify(ivs)
    if ca is False or cb is False:
        return False
    if ca is True and cb is True:
        return True
    return None


def _none(regions, ivs):
    cs = [r.classify(ivs) for r in regions]
    if any(c is True for c in cs):
        return False
    if all(c is False for c in cs):
        return True
    return None


def _find_point(box: E.Box, cls, test, rel_delta, budget):
    """Branch-and-prune search for a point where ``test`` holds."""
    widths = box.widths()
    stack = [box]
    count = 0
    while stack:
        b = stack.pop()
        count += 1
        if count > budget:
            log.warning("labeling validation budget exhausted; accepting up to resolution")
            return None
        c = cls(list(b.intervals))
        mid = [iv.mid for iv in b.intervals]
        if c is False:
            continue
        if c is True or test(mid):
            return tuple(mid)
        rel = b.widths() / np.where(widths > 0, widths, 1.0)
        k = int(np.argmax(rel))
        if rel[k] <= rel_delta:
            continue
        lo, hi = b.split(b.names[k])
        stack.extend([hi, lo])
    return None


# ---------------------------------------------------------------------------
# Sampling


def sample_region(r: Region, count: int, seed: int) -> np.ndarray:
    """``count`` points of ``r`` by rejection sampling in its bounding box (PCG64 stream)."""
    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return np.zeros((0, r.dim))
    bb = r.bbox
    lo = np.array([iv.lo for iv in bb.intervals])
    hi = np.array([iv.hi for iv in bb.intervals])
    rng = np.random.Generator(np.random.PCG64(seed & 0xFFFFFFFFFFFFFFFF))
    out = []
    have = 0
    attempts = 0
    while have < count:
        if attempts >= SAMPLE_ATTEMPTS:
            raise EmptyRegionBudgetExceeded(f"found {have} of {count} points in {r.name!r} after {attempts} attempts")
        pts = lo + (hi - lo) * rng.random((SAMPLE_BATCH, r.dim))
        attempts += SAMPLE_BATCH
        ok = pts[r.contains_array([pts[:, k] for k in range(r.dim)])]
        out.append(ok[: count - have])
        have += len(out[-1])
    return np.concatenate(out, axis=0)


# ---------------------------------------------------------------------------
# Exact finite oracles


def closure_matrix(s: FiniteSystem) -> np.ndarray:
    R = s.matrix()
    for k in range(s.m):
        R |= np.outer(R[:, k], R[k, :])
    return R


def transitive_closure(s: FiniteSystem) -> frozenset:
    """Pairs (a, b) with b reachable from a in one or more steps (Warshall)."""
    R = closure_matrix(s)
    return frozenset((int(a), int(b)) for a, b in zip(*np.nonzero(R)))


@dataclass(frozen=True)
class Safe:
    pass


@dataclass(frozen=True)
class Unsafe:
    path: tuple


@dataclass(frozen=True)
class Persistent:
    pass


@dataclass(frozen=True)
class NotPersistent:
    stem: tuple
    cycle: tuple


def _bfs_path(s: FiniteSystem, sources, targets, min_steps=0):
    succ = {k: s.successors(k) for k in range(s.m)}
    parent = {}
    q = deque()
    for src in sorted(sources):
        if min_steps == 0 and src in targets:
            return [src]
        parent.setdefault(src, None)
        q.append(src)
    visited = set(q) if min_steps == 0 else set()
    while q:
        u = q.popleft()
        for v in succ[u]:
            if v in targets:
                path = [v]
                w = u
                while w is not None:
                    path.append(w)
                    w = parent.get(w)
                    if w is not None and len(path) > s.m + 1:
                        break
                return path[::-1]
            if v not in visited:
                visited.add(v)
                parent[v] = u
                q.append(v)
    return None


def exact_safety(s: FiniteSystem, unsafe) -> Safe | Unsafe:
    p = _bfs_path(s, s.init, set(unsafe))
    return Safe() if p is None else Unsafe(tuple(p))


def exact_persistence(s: FiniteSystem, vf) -> Persistent | NotPersistent:
    R = closure_matrix(s)
    reach = s.reachable(s.init)
    for v in sorted(reach):
        if v in vf and R[v, v]:
            stem = _bfs_path(s, s.init, {v})[:-1]
            cyc = _cycle_through(s, v)
            return NotPersistent(tuple(stem), tuple(cyc))
    return Persistent()


def _cycle_through(s: FiniteSystem, v: int) -> list:
    succ = {k: s.successors(k) for k in range(s.m)}
    parent = {}
    q = deque([v])
    seen = {v}
    while q:
        u = q.popleft()
        for w in succ[u]:
            if w == v:
                path = [u]
                while path[-1] != v:
                    path.append(parent[path[-1]])
                return path[::-1]
            if w not in seen:
                seen.add(w)
                parent[w] = u
                q.append(w)
    raise ValueError(f"state {v} is not on a cycle")


@dataclass(frozen=True)
class BarrierLpResult:
    feasible: bool
    coefficients: tuple = ()  # c_0..c_d of B(x) = sum c_k x^k
    sign_set: frozenset = frozenset()  # states with B <= 0
    sets_tried: int = 0


def exists_polynomial_barrier(
    s: FiniteSystem, unsafe, degree: int, eps: float = 1e-3, max_free: int = 16
) -> BarrierLpResult:
    """Decide whether a degree-``degree`` polynomial barrier exists on a 1-D embedding.

    The implication "B(x) <= 0 implies B(x') <= 0" is a disjunction, so the
    search enumerates every successor-closed set Z of states that contains
    the reachable states and avoids the unsafe ones, and solves one LP per Z:
    B <= 0 on Z and B >= t off Z, maximizing t.
    """
    from .lp import LinearProgram, solve

    unsafe = frozenset(unsafe)
    xs = s.embedding[:, 0].astype(float)
    reach = frozenset(s.reachable(s.init))
    if reach & unsafe:
        return BarrierLpResult(False)
    free = sorted(set(range(s.m)) - reach - unsafe)
    if len(free) > max_free:
        raise ValueError(f"{len(free)} undetermined states exceed the enumeration cap {max_free}")
    scale = max(1.0, float(np.max(np.abs(xs))))
    V = np.vander(xs / scale, degree + 1, increasing=True)
    names = [f"c{k}" for k in range(degree + 1)] + ["t"]
    seen = set()
    tried = 0
    for r in range(len(free) + 1):
        for extra in itertools.combinations(free, r):
            Z = frozenset(s.reachable(reach | set(extra)))
            if Z & unsafe or Z in seen:
                continue
            seen.add(Z)
            tried += 1
            lp = LinearProgram(names, bounds=[(-1.0, 1.0)] * (degree + 1) + [(-1.0, 1.0)])
            obj = np.zeros(degree + 2)
            obj[-1] = 1.0
            lp.objective = (obj, "max")
            for k in range(s.m):
                row = np.append(V[k], 0.0)
                if k in Z:
                    lp.add(row, "<=", 0.0)
                else:
                    lp.add(np.append(V[k], -1.0), ">=", 0.0)
            res = solve(lp)
            if res.feasible and res.objective > 1e-9:
                c = res.x[:-1] * (eps / res.objective)
                coeffs = tuple(float(c[k] / scale**k) for k in range(degree + 1))
                return BarrierLpResult(True, coeffs, Z, tried)
    return BarrierLpResult(False, sets_tried=tried)


def poly_eval(coeffs, x):
    return sum(c * x**k for k, c in enumerate(coeffs))
