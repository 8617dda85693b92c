"""Interval branch-and-prune: prove a claim over a box domain or find a counterexample.

Two claim shapes are supported:

* :class:`ForAllNonneg` -- ``expr >= 0`` everywhere on the domain;
* :class:`UnsatConj` -- no domain point satisfies every ``expr rel rhs``.

A :class:`Domain` is a box over named variables intersected with region
memberships (a region applied to a tuple of the variables). Box-shaped
clauses are folded into the search box up front; the remaining inequalities
are checked per box and per point.

Boxes are processed best-first by their interval bound, so the most
violating boxes surface first. Every box gets a midpoint test before it is
split. Splits follow indicator-region boundaries when an indicator in the
claim straddles the box, otherwise the widest dimension (relative to the
domain) is bisected.

Trace format (``FalsifierConfig.trace`` set to a list): one tuple per
terminal box ``(status, box, lo, hi)`` with status ``pruned``, ``outside``
or ``leaf``.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as E
from .errors import BudgetConfigInvalid, DimensionMismatch

log = logging.getLogger(__name__)


@dataclass
class FalsifierConfig:
    delta: float = 1e-3
    budget: int = 10**6
    eps: float = 1e-6
    trace: list | None = None

    def validate(self):
        if not self.delta > 0:
            raise BudgetConfigInvalid(f"delta must be positive, got {self.delta}")
        if self.budget < 1:
            raise BudgetConfigInvalid(f"budget must be at least 1, got {self.budget}")
        if self.eps < 0:
            raise BudgetConfigInvalid(f"eps must be non-negative, got {self.eps}")


@dataclass(frozen=True)
class Membership:
    region: object
    variables: tuple  # claim variables fed to the region, in region order


@dataclass(frozen=True)
class Domain:
    box: E.Box
    members: tuple = ()

    @classmethod
    def of(cls, bounds: dict, *members) -> Domain:
        return cls(E.Box.from_bounds(bounds), tuple(members))

    def contains(self, point: dict) -> bool:
        if not self.box.contains_point(point):
            return False
        return all(m.region.contains([point[v] for v in m.variables]) for m in self.members)


@dataclass(frozen=True)
class ForAllNonneg:
    expr: E.Expr
    domain: Domain


@dataclass(frozen=True)
class UnsatConj:
    conjuncts: tuple  # (expr, rel, rhs) with rel in >=, <=, >, <
    domain: Domain


@dataclass(frozen=True)
class Verified:
    boxes: int = 0


@dataclass(frozen=True)
class Counterexample:
    point: dict
    values: tuple

    def vector(self, names) -> np.ndarray:
        return np.array([self.point[n] for n in names])


@dataclass(frozen=True)
class Unknown:
    leaves: tuple  # a sample of unresolved boxes (smallest first)
    count: int
    reason: str  # "delta" or "budget"
    boxes: int = 0


# ---------------------------------------------------------------------------
# Domain pieces


@dataclass
class _Piece:
    box: E.Box
    residual: list  # (Constraint over claim vars)


def _single_var_affine(g: E.Expr):
    """If ``g`` is a*v + b with one variable, return (v, a, b)."""
    ex = E.Expanded.of(g)
    var, a, b = None, 0.0, 0.0
    for mono, c in ex.terms.items():
        if not mono:
            b = c
            continue
        if len(mono) != 1:
            return None
        atom, k = mono[0]
        if k != 1 or not isinstance(atom, E.Var):
            return None
        if var is not None and atom.name != var:
            return None
        var, a = atom.name, c
    if var is None or a == 0.0:
        return None
    return var, a, b


def _pieces(domain: Domain) -> list:
    choices = []
    for m in domain.members:
        if len(m.variables) != m.region.dim:
            raise DimensionMismatch(f"region {m.region.name!r} expects {m.region.dim} variables")
        ren = {f"x{k + 1}": E.Var(v) for k, v in enumerate(m.variables)}
        opts = []
        for cl in m.region.clauses:
            bounds = {v: cl.box.intervals[k] for k, v in enumerate(m.variables)}
            residual = []
            for con in cl.constraints:
                g = E.substitute(con.g, ren)
                aff = _single_var_affine(g)
                if aff is None:
                    residual.append((g, con.strict))
                    continue
                v, a, b = aff
                root = -b / a
                iv = bounds[v]
                # closure of the half-line; strictness is re-checked pointwise
                bounds[v] = E.Interval(iv.lo, min(iv.hi, root)) if a < 0 else E.Interval(max(iv.lo, root), iv.hi)
                if bounds[v].lo > bounds[v].hi:
                    break
                if con.strict:
                    residual.append((g, True))
            else:
                opts.append((bounds, residual))
        choices.append(opts)
    out = []
    for combo in itertools.product(*choices):
        ivs = dict(domain.box.as_dict())
        residual = []
        ok = True
        for bounds, res in combo:
            for v, iv in bounds.items():
                cur = ivs[v]
                lo, hi = max(cur.lo, iv.lo), min(cur.hi, iv.hi)
                if lo > hi:
                    ok = False
                    break
                ivs[v] = E.Interval(lo, hi)
            residual.extend(res)
        if ok:
            out.append(_Piece(E.Box(domain.box.names, tuple(ivs[n] for n in domain.box.names)), residual))
    return out


def _residual_status(residual, env):
    """False if some residual constraint fails on the whole box, True if all hold, else None."""
    status = True
    for g, strict in residual:
        r = E.eval_box(g, env)
        if (r.hi <= 0.0) if strict else (r.hi < 0.0):
            return False
        if not ((r.lo > 0.0) if strict else (r.lo >= 0.0)):
            status = None
    return status


def _residual_point(residual, point) -> bool:
    for g, strict in residual:
        v = E.eval_point(g, point)
        if not (v > 0.0 if strict else v >= 0.0):
            return False
    return True


# ---------------------------------------------------------------------------
# Bounds


class _Bounder:
    """Enclosure of an expression: intersection of plain and expanded interval forms."""

    def __init__(self, e: E.Expr):
        self.e = e
        self.ex = E.Expanded.of(e)
        self.inds = E.indicators(e)

    def box(self, env) -> E.Interval:
        a = E.eval_box(self.e, env)
        b = self.ex.eval_box(env)
        lo, hi = max(a.lo, b.lo), min(a.hi, b.hi)
        if lo > hi:
            # both are valid enclosures; rounding can only make them barely disjoint
            lo, hi = min(lo, hi), max(lo, hi)
        return E.Interval(lo, hi)

    def point(self, p) -> float:
        return E.eval_point(self.e, p)


def _normalize(conj) -> tuple:
    e, rel, rhs = conj
    rhs = E.as_expr(rhs)
    if rel in (">=", ">"):
        return E.Sub(E.as_expr(e), rhs), rel == ">"
    if rel in ("<=", "<"):
        return E.Sub(rhs, E.as_expr(e)), rel == "<"
    raise ValueError(f"unknown relation {rel!r}")


# ---------------------------------------------------------------------------
# Splitting


def split_policy(box: E.Box, indicators=(), scale: np.ndarray | None = None, delta: float = 0.0) -> list:
    """Children that exactly cover ``box``; indicator boundaries take priority."""
    widths = box.widths()
    if scale is None:
        scale = np.where(widths > 0, widths, 1.0)
    env = box.as_dict()
    best = None
    for ind in indicators:
        if not isinstance(ind, E.Indicator):
            continue
        ivs = [env[a] for a in ind.args]
        if ind.region.classify(ivs) is not None:
            continue
        for k, a in enumerate(ind.args):
            if env[a].width <= delta:
                continue
            for c in ind.region.cuts(ivs, k):
                iv = env[a]
                # prefer cuts that are not too close to an edge
                frac = min(c - iv.lo, iv.hi - c) / iv.width
                if frac < 1e-6:
                    continue
                score = env[a].width / scale[box.names.index(a)] * (0.5 + frac)
                if best is None or score > best[0]:
                    best = (score, a, c)
    if best is not None:
        _, a, c = best
        return list(box.split(a, c))
    rel = widths / scale
    if widths.max() <= delta:
        return [box]
    k = int(np.argmax(np.where(widths > delta, rel, -1.0)))
    return list(box.split(box.names[k]))


# ---------------------------------------------------------------------------
# Decision procedure


def _decide_plain(args):
    claim, delta, budget, eps = args
    return decide(claim, FalsifierConfig(delta, budget, eps))


def decide_many(claims: Sequence, cfg: FalsifierConfig | None = None, jobs: int = 1) -> list:
    """Decide independent claims, in a process pool when ``jobs > 1``.

    Results come back in input order, so the outcome does not depend on
    ``jobs``. Traces are only recorded in the sequential path.
    """
    cfg = cfg or FalsifierConfig()
    cfg.validate()
    claims = list(claims)
    if jobs <= 1 or len(claims) < 2 or cfg.trace is not None:
        return [decide(c, cfg) for c in claims]
    from concurrent.futures import ProcessPoolExecutor

    args = [(c, cfg.delta, cfg.budget, cfg.eps) for c in claims]
    with ProcessPoolExecutor(max_workers=min(jobs, len(claims))) as pool:
        return list(pool.map(_decide_plain, args))


def decide(claim, cfg: FalsifierConfig | None = None):
    cfg = cfg or FalsifierConfig()
    cfg.validate()
    if isinstance(claim, ForAllNonneg):
        parts = [(_Bounder(claim.expr), False)]
        mode = "nonneg"
    elif isinstance(claim, UnsatConj):
        parts = [(_Bounder(g), strict) for g, strict in map(_normalize, claim.conjuncts)]
        mode = "unsat"
    else:
        raise TypeError(f"unknown claim {claim!r}")
    names = claim.domain.box.names
    for b, _ in parts:
        missing = E.free_vars(b.e) - set(names)
        if missing:
            raise DimensionMismatch(f"domain lacks variables {sorted(missing)}")
    inds = []
    for b, _ in parts:
        for i in b.inds:
            if i not in inds:
                inds.append(i)
    scale = claim.domain.box.widths()
    scale = np.where(scale > 0, scale, 1.0)
    heap = []
    tie = itertools.count()
    for piece in _pieces(claim.domain):
        heapq.heappush(heap, (-np.inf, next(tie), piece.box, piece.residual))
    processed = 0
    leaves = []
    half_eps = 0.5 * cfg.eps
    while heap:
        if processed >= cfg.budget:
            rest = [h[2] for h in heap]
            return Unknown(tuple(sorted(leaves + rest, key=lambda b: b.widths().max())[:32]), len(leaves) + len(rest), "budget", processed)
        _, _, box, residual = heapq.heappop(heap)
        processed += 1
        env = box.as_dict()
        rs = _residual_status(residual, env) if residual else True
        if rs is False:
            _trace(cfg, "outside", box, None)
            continue
        ivs = [b.box(env) for b, _ in parts]
        if mode == "nonneg":
            iv = ivs[0]
            if iv.lo >= 0.0:
                _trace(cfg, "pruned", box, iv)
                continue
            key = iv.lo
        else:
            excluded = any((iv.hi <= 0.0) if strict else (iv.hi < 0.0) for iv, (_, strict) in zip(ivs, parts))
            if excluded:
                _trace(cfg, "pruned", box, None)
                continue
            key = -min(iv.hi for iv in ivs)
        # midpoint probe
        mid = box.midpoint()
        if rs is True or _residual_point(residual, mid):
            vals = tuple(b.point(mid) for b, _ in parts)
            if _violates(mode, vals, parts, half_eps):
                return Counterexample(mid, vals)
        children = split_policy(box, inds, scale, cfg.delta)
        if len(children) == 1:
            leaves.append(box)
            _trace(cfg, "leaf", box, ivs[0] if mode == "nonneg" else None)
            continue
        for ch in children:
            heapq.heappush(heap, (key, next(tie), ch, residual))
    if leaves:
        return Unknown(tuple(sorted(leaves, key=lambda b: b.widths().max())[:32]), len(leaves), "delta", processed)
    return Verified(processed)


def _violates(mode, vals, parts, half_eps) -> bool:
    if mode == "nonneg":
        return vals[0] <= -half_eps
    return all((v > 0.0) if strict else (v >= 0.0) for v, (_, strict) in zip(vals, parts))


def _trace(cfg, status, box, iv):
    if cfg.trace is not None:
        cfg.trace.append((status, box, None if iv is None else iv.lo, None if iv is None else iv.hi))


def format_trace(trace) -> str:
    lines = []
    for status, box, lo, hi in trace:
        dims = " ".join(f"{n}=[{iv.lo:.9g},{iv.hi:.9g}]" for n, iv in zip(box.names, box.intervals))
        bound = "" if lo is None else f" bound=[{lo:.9g},{hi:.9g}]"
        lines.append(f"{status} {dims}{bound}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Range bounding


@dataclass(frozen=True)
class MinBound:
    lower: float  # proven lower bound of the minimum
    upper: float  # attained value at ``argmin``
    argmin: dict | None = None
    boxes: int = 0


def bound_min(e: E.Expr, domain: Domain, tol: float = 1e-6, budget: int = 200_000, delta: float = 1e-9) -> MinBound:
    """Enclose ``min e`` over the domain to within ``tol`` (branch and bound)."""
    b = _Bounder(e)
    scale = domain.box.widths()
    scale = np.where(scale > 0, scale, 1.0)
    heap = []
    tie = itertools.count()
    best, arg = np.inf, None
    for piece in _pieces(domain):
        env = piece.box.as_dict()
        heapq.heappush(heap, (b.box(env).lo, next(tie), piece.box, piece.residual))
    n = 0
    lower = np.inf
    while heap:
        lo, _, box, residual = heapq.heappop(heap)
        if lo >= best - tol or n >= budget:
            lower = min(lower, lo)
            # everything remaining is at least lo
            break
        n += 1
        env = box.as_dict()
        if residual and _residual_status(residual, env) is False:
            continue
        mid = box.midpoint()
        if not residual or _residual_point(residual, mid):
            v = b.point(mid)
            if v < best:
                best, arg = v, mid
        for corner in _corners(box):
            if not residual or _residual_point(residual, corner):
                v = b.point(corner)
                if v < best:
                    best, arg = v, corner
        children = split_policy(box, b.inds, scale, delta)
        if len(children) == 1:
            lower = min(lower, b.box(env).lo)
            continue
        for ch in children:
            heapq.heappush(heap, (b.box(ch.as_dict()).lo, next(tie), ch, residual))
    if not heap and lower == np.inf:
        lower = best
    lower = min(lower, best)
    return MinBound(float(lower), float(best), arg, n)


def _corners(box: E.Box):
    if box.dim > 6:
        return []
    out = []
    for bits in itertools.product((0, 1), repeat=box.dim):
        out.append({n: (iv.hi if bit else iv.lo) for n, iv, bit in zip(box.names, box.intervals, bits)})
    return out


# ---------------------------------------------------------------------------
# Sampling-grade search


def sample_domain(domain: Domain, count: int, rng: np.random.Generator) -> dict:
    """``count`` points of the domain (rejection sampling per region piece)."""
    pieces = _pieces(domain)
    names = domain.box.names
    if not pieces:
        return {n: np.zeros(0) for n in names}
    vols = np.array([np.prod(p.box.widths()) for p in pieces])
    if not vols.sum() > 0:  # degenerate pieces (points, segments): weight them equally
        vols = np.ones(len(pieces))
    probs = vols / vols.sum()
    out = {n: [] for n in names}
    have = 0
    attempts = 0
    while have < count and attempts < 200:
        attempts += 1
        k = rng.choice(len(pieces), size=max(count, 64), p=probs)
        lo = np.array([[p.box.intervals[j].lo for j in range(len(names))] for p in pieces])
        hi = np.array([[p.box.intervals[j].hi for j in range(len(names))] for p in pieces])
        pts = lo[k] + (hi[k] - lo[k]) * rng.random((len(k), len(names)))
        env = {n: pts[:, j] for j, n in enumerate(names)}
        ok = np.ones(len(k), dtype=bool)
        for m in domain.members:
            ok &= m.region.contains_array([env[v] for v in m.variables])
        pts = pts[ok][: count - have]
        for j, n in enumerate(names):
            out[n].append(pts[:, j])
        have += len(pts)
    return {n: (np.concatenate(v) if v else np.zeros(0)) for n, v in out.items()}


def count_violations(claim, count: int, seed: int, eps: float = 0.0):
    """Evaluate the claim at ``count`` random domain points; return (violations, worst point, worst value)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    env = sample_domain(claim.domain, count, rng)
    n = len(next(iter(env.values()))) if env else 0
    if n == 0:
        return 0, None, None
    if isinstance(claim, ForAllNonneg):
        v = np.broadcast_to(E.eval_array(claim.expr, env), (n,))
        bad = v < -eps
        score = v
    else:
        bad = np.ones(n, dtype=bool)
        score = np.full(n, -np.inf)
        for conj in claim.conjuncts:
            g, strict = _normalize(conj)
            v = np.broadcast_to(E.eval_array(g, env), (n,))
            bad &= (v > 0.0) if strict else (v >= 0.0)
            score = np.maximum(score, -v)
    k = int(np.argmin(score))
    worst = {name: float(env[name][k]) for name in env}
    return int(bad.sum()), worst, float(score[k])
