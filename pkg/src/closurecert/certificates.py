"""Certificate templates, instances, checkers and constructive mappings.

Condition names used in reports:

* barrier: ``initial`` (B <= 0 on X0), ``unsafe`` (B > 0 on Xu),
  ``step`` (B(x) <= 0 implies B(f(x)) <= 0, or B(f(x)) <= B(x) when strengthened);
* closure certificates: ``transition`` (T(x, f(x)) >= 0), ``closure``
  (T(f(x), y) >= 0 implies T(x, y) >= 0, or tau1*T(f(x), y) <= T(x, y)),
  ``separation`` (T(x0, xu) <= -xi), ``decrease`` (the xi-decrease along
  consecutive visits, implication or tau2/tau3 strengthened form).

Certificate files are JSON::

    {"kind": "safety-cc", "basis": ["1", "y1"], "coefficients": [10, -4.094],
     "xi": 0.003, "tau1": 1}

Piecewise (``ltl-cc``) certificates key ``coefficients`` by NBA state pair,
written ``"i,j"`` with indices or state names.
"""

from __future__ import annotations

import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import expr as E
from . import falsifier as F
from .automata import Nba
from .errors import ArityMismatch, FormatError, MissingPiece, UnboundedTemplate, UncutPath

log = logging.getLogger(__name__)

KINDS = ("barrier", "safety-cc", "persistence-cc", "ltl-cc")
IMPLICATION_EPS = 1e-6
FINITE_TOL = 1e-9


# ---------------------------------------------------------------------------
# Templates and certificates


def _linear(basis, coeffs) -> E.Expr:
    out = None
    for p, c in zip(basis, coeffs):
        c = float(c)
        if c == 0.0:
            continue
        term = p if c == 1.0 else E.Mul(E.Const(c), p)
        if isinstance(p, E.Const):
            term = E.Const(c * p.value)
        out = term if out is None else E.Add(out, term)
    return E.Const(0.0) if out is None else out


@dataclass
class Template:
    kind: str
    basis: tuple  # Expr list shared by all pieces
    piece_basis: dict = field(default_factory=dict)  # (i, j) -> Expr tuple overriding ``basis``
    piecewise: bool = False
    text: tuple = ()

    def basis_for(self, piece=None) -> tuple:
        if piece is not None and piece in self.piece_basis:
            return self.piece_basis[piece]
        return self.basis

    def pieces(self, nba: Nba | None) -> list:
        if not self.piecewise:
            return [None]
        if nba is None:
            raise FormatError("piecewise templates need an NBA")
        return [(i, j) for i in range(nba.n) for j in range(nba.n)]


@dataclass
class Certificate:
    kind: str
    basis: tuple
    coefficients: object  # np.ndarray, or dict (i, j) -> np.ndarray for ltl-cc
    xi: float = 1e-3
    tau1: float = 1.0
    tau2: float = 0.0
    tau3: float = 0.0
    piece_basis: dict = field(default_factory=dict)
    nba: Nba | None = None  # automaton the pieces refer to, when it differs from the problem's

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FormatError(f"unknown certificate kind {self.kind!r}")
        if self.kind != "barrier" and not self.xi > 0:
            raise FormatError("xi must be positive")
        if min(self.tau1, self.tau2, self.tau3) < 0:
            raise FormatError("tau parameters must be non-negative")
        if isinstance(self.coefficients, dict):
            self.coefficients = {k: np.asarray(v, dtype=float) for k, v in self.coefficients.items()}
            vals = list(self.coefficients.values())
        else:
            self.coefficients = np.asarray(self.coefficients, dtype=float)
            vals = [self.coefficients]
        for v in vals:
            if not np.all(np.isfinite(v)):
                raise FormatError("coefficients must be finite")

    @property
    def piecewise(self) -> bool:
        return isinstance(self.coefficients, dict)

    def expr(self, piece=None) -> E.Expr:
        if self.piecewise:
            if piece not in self.coefficients:
                raise MissingPiece(*piece) if piece is not None else MissingPiece(-1, -1)
            basis = self.piece_basis.get(piece, self.basis)
            return _linear(basis, self.coefficients[piece])
        return _linear(self.basis, self.coefficients)

    def to_json(self, names=None) -> dict:
        d = {"kind": self.kind, "basis": [E.to_text(p) for p in self.basis]}
        if self.piecewise:
            d["coefficients"] = {f"{i},{j}": v.tolist() for (i, j), v in sorted(self.coefficients.items())}
        else:
            d["coefficients"] = self.coefficients.tolist()
        d.update(xi=self.xi, tau1=self.tau1, tau2=self.tau2, tau3=self.tau3)
        return d


def _variables_for(kind: str, n: int) -> tuple:
    if kind == "barrier":
        return E.state_vars("x", n)
    return E.state_vars("x", n) + E.state_vars("y", n)


def _parse_basis(texts, kind, problem) -> tuple:
    variables = _variables_for(kind, problem.n)
    out = []
    for t in texts:
        out.append(E.fold_constants(E.parse_expr(str(t), variables, problem.regions)))
    return tuple(out)


def _piece_key(key: str, nba: Nba | None):
    parts = [p.strip() for p in str(key).split(",")]
    if len(parts) != 2:
        raise FormatError(f"piece key {key!r} must be 'i,j'")
    out = []
    for p in parts:
        if p.isdigit():
            out.append(int(p))
        elif nba is not None and p in nba.names:
            out.append(nba.names.index(p))
        else:
            raise FormatError(f"unknown NBA state {p!r} in piece key {key!r}")
    return tuple(out)


def load_template(doc, problem) -> Template:
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid template JSON: {exc}") from None
    kind = doc.get("kind")
    if kind not in KINDS:
        raise FormatError(f"template kind must be one of {KINDS}")
    basis = _parse_basis(doc.get("basis", []), kind, problem)
    if not basis:
        raise FormatError("template basis is empty")
    piece_basis = {}
    for key, texts in doc.get("piece_basis", {}).items():
        piece_basis[_piece_key(key, problem.nba)] = _parse_basis(texts, kind, problem)
    piecewise = bool(doc.get("piecewise", kind == "ltl-cc"))
    return Template(kind, basis, piece_basis, piecewise, tuple(doc.get("basis", [])))


def load_template_file(path, problem) -> Template:
    return load_template(Path(path).read_text(), problem)


def load_certificate(doc, problem) -> Certificate:
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid certificate JSON: {exc}") from None
    kind = doc.get("kind")
    if kind not in KINDS:
        raise FormatError(f"certificate kind must be one of {KINDS}")
    basis = _parse_basis(doc.get("basis", []), kind, problem)
    raw = doc.get("coefficients")
    if isinstance(raw, dict):
        coeffs = {_piece_key(k, problem.nba): v for k, v in raw.items()}
        for v in coeffs.values():
            if len(v) != len(basis):
                raise FormatError("coefficient count differs from basis size")
    else:
        if raw is None or len(raw) != len(basis):
            raise FormatError("coefficient count differs from basis size")
        coeffs = raw
    kw = {k: float(doc[k]) for k in ("xi", "tau1", "tau2", "tau3") if k in doc}
    return Certificate(kind, basis, coeffs, **kw)


def load_certificate_file(path, problem) -> Certificate:
    return load_certificate(Path(path).read_text(), problem)


# ---------------------------------------------------------------------------
# Verdicts


@dataclass
class ConditionResult:
    condition: str
    status: str  # verified | falsified | unknown
    margin: float | None = None
    witness: dict | None = None
    value: float | None = None
    detail: str = ""
    boxes: int = 0

    def as_dict(self) -> dict:
        d = {"condition": self.condition, "status": self.status}
        if self.margin is not None:
            d["margin"] = self.margin
        if self.witness is not None:
            d["witness"] = {k: float(v) if not isinstance(v, (int, str)) else v for k, v in self.witness.items()}
        if self.value is not None:
            d["value"] = self.value
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class Verdict:
    conditions: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        st = [c.status for c in self.conditions]
        if "falsified" in st:
            return "falsified"
        if "unknown" in st:
            return "unknown"
        return "verified"

    @property
    def verified(self) -> bool:
        return self.status == "verified"

    def first(self, status="falsified") -> ConditionResult | None:
        for c in self.conditions:
            if c.status == status:
                return c
        return None

    def margins(self) -> dict:
        out = {}
        for c in self.conditions:
            if c.margin is not None:
                out[c.condition] = min(out.get(c.condition, np.inf), c.margin)
        return out

    def as_dict(self) -> dict:
        d = {"status": self.status, "conditions": [c.as_dict() for c in self.conditions]}
        d.update(self.extras)
        return d


# ---------------------------------------------------------------------------
# Claim construction for continuous problems


def _rename(e: E.Expr, src: str, dst: str, n: int) -> E.Expr:
    return E.substitute(e, {f"{src}{k + 1}": E.Var(f"{dst}{k + 1}") for k in range(n)})


def _at(e: E.Expr, first: str, second: str | None, n: int) -> E.Expr:
    """Certificate (over x, y) evaluated at variable groups ``first`` and ``second``."""
    m = {f"x{k + 1}": E.Var(f"{first}{k + 1}") for k in range(n)}
    if second is not None:
        m.update({f"y{k + 1}": E.Var(f"{second}{k + 1}") for k in range(n)})
    return E.substitute(e, m)


def _image(e: E.Expr, group: str, system, n: int) -> E.Expr:
    """Replace the ``group`` variables by f applied to them."""
    return E.substitute(e, system.dynamics_over(group))


def _domain(problem, *groups) -> F.Domain:
    """Product domain: each group is (prefix, region or None for X)."""
    bounds = {}
    members = []
    box = problem.system.box
    for prefix, region in groups:
        names = E.state_vars(prefix, problem.n)
        for k, v in enumerate(names):
            iv = box.intervals[k]
            bounds[v] = (iv.lo, iv.hi)
        if region is not None:
            members.append(F.Membership(region, names))
    return F.Domain(E.Box.from_bounds(bounds), tuple(members))


@dataclass
class _Cond:
    condition: str
    claim: object
    piece: tuple | None = None
    margin_expr: E.Expr | None = None  # expression whose minimum is the margin
    label: str = ""


def disjoint_claim(problem) -> F.UnsatConj:
    """No initial state is unsafe.

    The pair conditions only relate x0 to states reached in one or more
    steps, so an unsafe initial state has to be excluded separately.
    """
    hit = E.Indicator("unsafe", problem.unsafe, E.state_vars("x", problem.n))
    return F.UnsatConj(((hit, ">=", 0.5),), _domain(problem, ("x", problem.init)))


def initial_unsafe(problem, cfg: F.FalsifierConfig | None = None):
    """An initial state that is also unsafe, or None (Unknown also gives None)."""
    if problem.finite:
        both = sorted(set(problem.init) & set(problem.unsafe))
        return {"x0": both[0]} if both else None
    r = F.decide(disjoint_claim(problem), cfg)
    return r.point if isinstance(r, F.Counterexample) else None


def _cc_claims(c: Certificate, problem, mode: str, eps: float) -> list:
    n = problem.n
    sysm = problem.system
    T = c.expr()
    out = []
    t_x_fx = _image(_at(T, "x", "w", n), "w", sysm, n)
    # w is a placeholder for f(x)
    t_x_fx = E.substitute(_at(T, "x", "w", n), {f"w{k + 1}": sysm.dynamics_over("x")[f"x{k + 1}"] for k in range(n)})
    out.append(_Cond("transition", F.ForAllNonneg(t_x_fx, _domain(problem, ("x", None))), margin_expr=t_x_fx))
    t_xy = _at(T, "x", "y", n)
    t_fxy = E.substitute(t_xy, sysm.dynamics_over("x"))
    if mode == "strengthened":
        e = E.Sub(t_xy, E.Mul(E.Const(c.tau1), t_fxy))
        out.append(_Cond("closure", F.ForAllNonneg(e, _domain(problem, ("x", None), ("y", None))), margin_expr=e))
    else:
        conj = ((t_fxy, ">=", 0.0), (t_xy, "<=", -eps))
        out.append(_Cond("closure", F.UnsatConj(conj, _domain(problem, ("x", None), ("y", None)))))
    if c.kind == "safety-cc":
        out.append(_Cond("disjoint", disjoint_claim(problem)))
        sep = E.Sub(E.Const(-c.xi), t_xy)
        out.append(
            _Cond(
                "separation",
                F.ForAllNonneg(sep, _domain(problem, ("x", problem.init), ("y", problem.unsafe))),
                margin_expr=E.Mul(E.Const(-1.0), t_xy),
            )
        )
    else:
        t_0y = _at(T, "x", "y", n)
        t_0z = _at(T, "x", "z", n)
        t_yz = _at(T, "y", "z", n)
        dom = _domain(problem, ("x", problem.init), ("y", problem.vf), ("z", problem.vf))
        if mode == "strengthened":
            e = t_0y - E.Const(c.xi) - t_0z - E.Const(c.tau2) * t_0y - E.Const(c.tau3) * t_yz
            out.append(_Cond("decrease", F.ForAllNonneg(E.fold_constants(e), dom), margin_expr=e))
        else:
            conj = ((t_0y, ">=", 0.0), (t_yz, ">=", 0.0), (t_0z - t_0y + E.Const(c.xi), ">=", eps))
            out.append(_Cond("decrease", F.UnsatConj(conj, dom)))
    return out


def _barrier_claims(c: Certificate, problem, mode: str, eps: float) -> list:
    B = c.expr()
    out = [
        _Cond("initial", F.ForAllNonneg(E.Mul(E.Const(-1.0), B), _domain(problem, ("x", problem.init))), margin_expr=E.Mul(E.Const(-1.0), B)),
        _Cond("unsafe", F.UnsatConj(((B, "<=", 0.0),), _domain(problem, ("x", problem.unsafe))), margin_expr=B),
    ]
    Bf = E.substitute(B, problem.system.dynamics_over("x"))
    if mode == "strengthened":
        e = E.Sub(B, Bf)
        out.append(_Cond("step", F.ForAllNonneg(e, _domain(problem, ("x", None))), margin_expr=e))
    else:
        out.append(_Cond("step", F.UnsatConj(((B, "<=", 0.0), (Bf, ">=", eps)), _domain(problem, ("x", None)))))
    return out


def _ltl_claims(c: Certificate, problem, mode: str, eps: float) -> list:
    nba = c.nba or problem.nba
    n = problem.n
    sysm = problem.system
    fx = sysm.dynamics_over("x")
    lab = problem.labeling
    out = []
    pieces = {}

    def piece(i, j):
        if (i, j) not in pieces:
            if (i, j) not in c.coefficients:
                raise MissingPiece(i, j)
            pieces[(i, j)] = c.expr((i, j))
        return pieces[(i, j)]

    for i in range(nba.n):
        for j in range(nba.n):
            piece(i, j)
    for sigma, region in lab.entries:
        if region.empty_syntactically:
            continue
        for i in range(nba.n):
            for i2 in nba.successors(i, sigma):
                tag = f"{nba.names[i]}-{_fmt(sigma)}->{nba.names[i2]}"
                e = E.substitute(_at(piece(i, i2), "x", "x", n), {})
                # T_{i,i'}(x, f(x))
                e = E.substitute(_at(piece(i, i2), "x", "w", n), {f"w{k + 1}": fx[f"x{k + 1}"] for k in range(n)})
                out.append(_Cond("transition", F.ForAllNonneg(e, _domain(problem, ("x", region))), (i, i2), e, tag))
                for j in range(nba.n):
                    t_xy = _at(piece(i, j), "x", "y", n)
                    t_fxy = E.substitute(_at(piece(i2, j), "x", "y", n), fx)
                    dom = _domain(problem, ("x", region), ("y", None))
                    jt = f"{tag} j={nba.names[j]}"
                    if mode == "strengthened":
                        e = E.Sub(t_xy, E.Mul(E.Const(c.tau1), t_fxy))
                        out.append(_Cond("closure", F.ForAllNonneg(e, dom), (i, j), e, jt))
                    else:
                        conj = ((t_fxy, ">=", 0.0), (t_xy, "<=", -eps))
                        out.append(_Cond("closure", F.UnsatConj(conj, dom), (i, j), None, jt))
    for s in sorted(nba.initial):
        for l1 in sorted(nba.accepting):
            for l2 in sorted(nba.accepting):
                t_0y = _at(piece(s, l1), "x", "y", n)
                t_0z = _at(piece(s, l2), "x", "z", n)
                t_yz = _at(piece(l1, l2), "y", "z", n)
                dom = _domain(problem, ("x", problem.init), ("y", None), ("z", None))
                tag = f"s={nba.names[s]} l={nba.names[l1]} l'={nba.names[l2]}"
                if mode == "strengthened":
                    e = t_0y - E.Const(c.xi) - t_0z - E.Const(c.tau2) * t_0y - E.Const(c.tau3) * t_yz
                    out.append(_Cond("decrease", F.ForAllNonneg(e, dom), (s, l1), e, tag))
                else:
                    conj = ((t_0y, ">=", 0.0), (t_yz, ">=", 0.0), (t_0z - t_0y + E.Const(c.xi), ">=", eps))
                    out.append(_Cond("decrease", F.UnsatConj(conj, dom), (s, l1), None, tag))
    return out


def _fmt(sigma) -> str:
    return "{" + ",".join(sorted(sigma)) + "}"


def build_claims(c: Certificate, problem, mode: str = "strengthened", eps: float = IMPLICATION_EPS) -> list:
    if mode not in ("strengthened", "implication"):
        raise ValueError(f"mode must be strengthened or implication, got {mode!r}")
    if problem.finite:
        raise TypeError("finite problems are checked exhaustively")
    if c.kind == "barrier":
        _expect_arity(c, 1, problem)
        return _barrier_claims(c, problem, mode, eps)
    _expect_arity(c, 2, problem)
    if c.kind == "ltl-cc":
        return _ltl_claims(c, problem, mode, eps)
    return _cc_claims(c, problem, mode, eps)


def _expect_arity(c: Certificate, arity: int, problem):
    allowed = set(E.state_vars("x", problem.n))
    if arity == 2:
        allowed |= set(E.state_vars("y", problem.n))
    bases = [c.basis] + list(c.piece_basis.values())
    for basis in bases:
        for p in basis:
            extra = E.free_vars(p) - allowed
            if extra:
                raise ArityMismatch(f"{c.kind} basis uses {sorted(extra)}; allowed {sorted(allowed)}")


# ---------------------------------------------------------------------------
# Continuous checking


def _run(conds, cfg: F.FalsifierConfig, margins: bool, margin_budget: int, jobs: int = 1) -> Verdict:
    v = Verdict()
    results = F.decide_many([cond.claim for cond in conds], cfg, jobs)
    for cond, res in zip(conds, results):
        detail = cond.label
        if isinstance(res, F.Counterexample):
            val = res.values[0] if len(res.values) == 1 else None
            v.conditions.append(ConditionResult(cond.condition, "falsified", witness=res.point, value=val, detail=detail))
            continue
        if isinstance(res, F.Unknown):
            leaf = res.leaves[0] if res.leaves else None
            det = f"{detail} {res.reason}: {res.count} unresolved boxes".strip()
            wit = leaf.midpoint() if leaf is not None else None
            v.conditions.append(ConditionResult(cond.condition, "unknown", witness=wit, detail=det, boxes=res.boxes))
            continue
        m = None
        if margins and cond.margin_expr is not None:
            mb = F.bound_min(cond.margin_expr, cond.claim.domain, tol=1e-7, budget=margin_budget)
            m = mb.lower
        v.conditions.append(ConditionResult(cond.condition, "verified", margin=m, detail=detail, boxes=res.boxes))
    return v


def check(
    c: Certificate,
    problem,
    mode: str = "strengthened",
    cfg: F.FalsifierConfig | None = None,
    margins: bool = True,
    margin_budget: int = 50_000,
    jobs: int = 1,
) -> Verdict:
    """Prove or refute every condition of ``c`` on ``problem``."""
    cfg = cfg or F.FalsifierConfig()
    if problem.finite:
        return check_finite(c, problem, mode)
    conds = build_claims(c, problem, mode, cfg.eps)
    v = _run(conds, cfg, margins, margin_budget, jobs)
    if c.kind in ("persistence-cc", "ltl-cc"):
        v.extras["bound"] = boundedness(c, problem)
    if c.kind == "ltl-cc":
        v.extras["piece_activations"] = piece_activations(c, problem, conds)
    v.extras["mode"] = mode
    return v


def check_barrier(c, problem, mode="strengthened", cfg=None, **kw) -> Verdict:
    if c.kind != "barrier":
        raise ArityMismatch(f"expected a barrier, got {c.kind}")
    return check(c, problem, mode, cfg, **kw)


def check_safety_cc(c, problem, mode="strengthened", cfg=None, **kw) -> Verdict:
    if c.kind != "safety-cc":
        raise ArityMismatch(f"expected a safety-cc, got {c.kind}")
    return check(c, problem, mode, cfg, **kw)


def check_persistence_cc(c, problem, mode="strengthened", cfg=None, **kw) -> Verdict:
    if c.kind != "persistence-cc":
        raise ArityMismatch(f"expected a persistence-cc, got {c.kind}")
    return check(c, problem, mode, cfg, **kw)


def check_ltl_cc(c, problem, mode="strengthened", cfg=None, **kw) -> Verdict:
    if c.kind != "ltl-cc":
        raise ArityMismatch(f"expected an ltl-cc, got {c.kind}")
    return check(c, problem, mode, cfg, **kw)


def boundedness(c: Certificate, problem) -> float:
    """Upper endpoint of an enclosure of the certificate over X x X (max over pieces)."""
    n = problem.n
    box = problem.system.box
    env = {}
    for p in ("x", "y"):
        for k, v in enumerate(E.state_vars(p, n)):
            env[v] = box.intervals[k]
    keys = list(c.coefficients) if c.piecewise else [None]
    top = -np.inf
    for k in keys:
        iv = E.eval_box(c.expr(k), env)
        if not np.isfinite(iv.hi):
            raise UnboundedTemplate(f"certificate piece {k} has no finite upper bound")
        top = max(top, iv.hi)
    return float(top)


def piece_activations(c: Certificate, problem, conds=None) -> dict:
    """How many conditions reference each piece."""
    conds = conds if conds is not None else build_claims(c, problem)
    nba = c.nba or problem.nba
    counts = {f"{nba.names[i]},{nba.names[j]}": 0 for i in range(nba.n) for j in range(nba.n)}
    for cond in conds:
        for key in _pieces_used(cond, nba):
            counts[key] += 1
    return counts


def _pieces_used(cond, nba) -> set:
    # recover the pieces from the condition label
    out = set()
    lbl = cond.label
    if cond.condition == "transition":
        i_name, rest = lbl.split("-", 1)
        i2_name = rest.split("->", 1)[1]
        out.add(f"{i_name},{i2_name}")
    elif cond.condition == "closure":
        head, j_name = lbl.rsplit(" j=", 1)
        i_name, rest = head.split("-", 1)
        i2_name = rest.split("->", 1)[1]
        out.update({f"{i_name},{j_name}", f"{i2_name},{j_name}"})
    else:
        parts = dict(p.split("=") for p in lbl.split())
        s, l1, l2 = parts["s"], parts["l"], parts["l'"]
        out.update({f"{s},{l1}", f"{s},{l2}", f"{l1},{l2}"})
    return out


def sample_check(c: Certificate, problem, mode: str = "strengthened", count: int = 10_000, seed: int = 0) -> Verdict:
    """Sampling-grade validation: ``count`` seeded tuples per condition instance."""
    conds = build_claims(c, problem, mode)
    v = Verdict()
    for k, cond in enumerate(conds):
        bad, worst, score = F.count_violations(cond.claim, count, seed + k)
        if bad:
            v.conditions.append(
                ConditionResult(cond.condition, "falsified", witness=worst, value=score, detail=f"{cond.label} {bad}/{count} samples violate".strip())
            )
        else:
            v.conditions.append(ConditionResult(cond.condition, "verified", margin=score, detail=cond.label))
    v.extras["mode"] = mode
    v.extras["samples_per_condition"] = count
    if c.kind == "ltl-cc":
        v.extras["piece_activations"] = piece_activations(c, problem, conds)
    return v


# ---------------------------------------------------------------------------
# Finite systems: exhaustive checks


class TableCertificate:
    """Certificate given by a Python function on finite states.

    ``fn(x, y)`` for safety/persistence, ``fn(x, i, y, j)`` for LTL, and
    ``fn(x)`` for barriers.
    """

    def __init__(self, kind: str, fn, xi: float = 1.0, nba: Nba | None = None, tau1=1.0, tau2=0.0, tau3=0.0):
        self.kind = kind
        self.fn = fn
        self.xi = xi
        self.nba = nba
        self.tau1, self.tau2, self.tau3 = tau1, tau2, tau3

    def __call__(self, *args):
        return self.fn(*args)


def _finite_fn(c, problem):
    """Value function over state indices for either certificate representation."""
    if isinstance(c, TableCertificate):
        return c.fn
    emb = problem.system.embedding
    n = emb.shape[1]
    xs = E.state_vars("x", n)
    ys = E.state_vars("y", n)
    if c.kind == "barrier":
        e = c.expr()
        vals = [E.eval_point(e, dict(zip(xs, emb[s]))) for s in range(problem.system.m)]
        return lambda s: vals[s]
    m = problem.system.m
    if c.piecewise:
        tables = {}
        for key in c.coefficients:
            e = c.expr(key)
            tables[key] = np.array([[E.eval_point(e, {**dict(zip(xs, emb[a])), **dict(zip(ys, emb[b]))}) for b in range(m)] for a in range(m)])
        return lambda a, i, b, j: tables[(i, j)][a, b] if (i, j) in tables else _missing(i, j)
    e = c.expr()
    table = np.array([[E.eval_point(e, {**dict(zip(xs, emb[a])), **dict(zip(ys, emb[b]))}) for b in range(m)] for a in range(m)])
    return lambda a, b: table[a, b]


def _missing(i, j):
    raise MissingPiece(i, j)


def check_finite(c, problem, mode: str = "implication") -> Verdict:
    """Exhaustive check over every state (pair/triple) of a finite problem."""
    s = problem.system
    T = _finite_fn(c, problem)
    states = range(s.m)
    succ = {a: s.successors(a) for a in states}
    v = Verdict()
    tol = FINITE_TOL

    def fail(name, wit, val, detail=""):
        v.conditions.append(ConditionResult(name, "falsified", witness=wit, value=float(val), detail=detail))

    def ok(name, margin=None):
        v.conditions.append(ConditionResult(name, "verified", margin=None if margin is None else float(margin)))

    strengthened = mode == "strengthened"
    if c.kind == "barrier":
        bad = [x for x in sorted(s.init) if T(x) > tol]
        fail("initial", {"x": bad[0]}, T(bad[0])) if bad else ok("initial")
        bad = [x for x in sorted(problem.unsafe) if not T(x) > 0]
        fail("unsafe", {"x": bad[0]}, T(bad[0])) if bad else ok("unsafe")
        bad = []
        for x in states:
            for x2 in succ[x]:
                viol = T(x2) > T(x) + tol if strengthened else (T(x) <= 0 and T(x2) > tol)
                if viol:
                    bad.append((x, x2))
        fail("step", {"x": bad[0][0], "x'": bad[0][1]}, T(bad[0][1])) if bad else ok("step")
        return v
    if c.kind in ("safety-cc", "persistence-cc"):
        worst = None
        for x in states:
            for x2 in succ[x]:
                if T(x, x2) < -tol and worst is None:
                    worst = (x, x2)
        fail("transition", {"x": worst[0], "x'": worst[1]}, T(*worst)) if worst else ok("transition")
        worst = None
        for x in states:
            for x2 in succ[x]:
                for y in states:
                    viol = c.tau1 * T(x2, y) > T(x, y) + tol if strengthened else (T(x2, y) >= 0 and T(x, y) < -tol)
                    if viol and worst is None:
                        worst = (x, x2, y)
        fail("closure", {"x": worst[0], "x'": worst[1], "y": worst[2]}, T(worst[0], worst[2])) if worst else ok("closure")
        if c.kind == "safety-cc":
            both = sorted(set(s.init) & set(problem.unsafe))
            fail("disjoint", {"x0": both[0]}, 0.0, "initial state is unsafe") if both else ok("disjoint")
            vals = [(T(x0, xu), x0, xu) for x0 in sorted(s.init) for xu in sorted(problem.unsafe)]
            bad = [t for t in vals if t[0] > -c.xi + tol]
            if bad:
                fail("separation", {"x0": bad[0][1], "xu": bad[0][2]}, bad[0][0])
            else:
                ok("separation", -max(t[0] for t in vals) if vals else None)
        else:
            worst = None
            for x0 in sorted(s.init):
                for y in sorted(problem.vf):
                    for z in sorted(problem.vf):
                        a, b, d = T(x0, y), T(y, z), T(x0, z)
                        if strengthened:
                            viol = a - c.xi - d < c.tau2 * a + c.tau3 * b - tol
                        else:
                            viol = a >= 0 and b >= 0 and d > a - c.xi + tol
                        if viol and worst is None:
                            worst = (x0, y, z)
            fail("decrease", {"x0": worst[0], "y": worst[1], "z": worst[2]}, T(worst[0], worst[2])) if worst else ok("decrease")
        return v
    return _check_finite_ltl(c, problem, T, strengthened)


def _check_finite_ltl(c, problem, T, strengthened) -> Verdict:
    s = problem.system
    nba = c.nba or problem.nba
    lab = problem.labeling
    v = Verdict()
    tol = FINITE_TOL
    states = range(s.m)
    Q = range(nba.n)
    trans_bad = closure_bad = None
    for x in states:
        sigma = lab.letter_of(x)
        for i in Q:
            for i2 in nba.successors(i, sigma):
                for x2 in s.successors(x):
                    if trans_bad is None and T(x, i, x2, i2) < -tol:
                        trans_bad = (x, i, x2, i2)
                    if closure_bad is not None:
                        continue
                    for y in states:
                        for j in Q:
                            a, b = T(x2, i2, y, j), T(x, i, y, j)
                            viol = c.tau1 * a > b + tol if strengthened else (a >= 0 and b < -tol)
                            if viol:
                                closure_bad = (x, i, x2, i2, y, j)
                                break
                        if closure_bad is not None:
                            break
    if trans_bad:
        x, i, x2, i2 = trans_bad
        v.conditions.append(ConditionResult("transition", "falsified", witness={"x": x, "i": i, "x'": x2, "i'": i2}, value=float(T(*trans_bad))))
    else:
        v.conditions.append(ConditionResult("transition", "verified"))
    if closure_bad:
        x, i, x2, i2, y, j = closure_bad
        v.conditions.append(
            ConditionResult("closure", "falsified", witness={"x": x, "i": i, "x'": x2, "i'": i2, "y": y, "j": j}, value=float(T(x, i, y, j)))
        )
    else:
        v.conditions.append(ConditionResult("closure", "verified"))
    dec_bad = None
    for x0 in sorted(s.init):
        for q0 in sorted(nba.initial):
            for y in states:
                for l1 in sorted(nba.accepting):
                    a = T(x0, q0, y, l1)
                    for z in states:
                        for l2 in sorted(nba.accepting):
                            b, d = T(y, l1, z, l2), T(x0, q0, z, l2)
                            if strengthened:
                                viol = a - c.xi - d < c.tau2 * a + c.tau3 * b - tol
                            else:
                                viol = a >= 0 and b >= 0 and d > a - c.xi + tol
                            if viol and dec_bad is None:
                                dec_bad = (x0, q0, y, l1, z, l2)
    if dec_bad:
        x0, q0, y, l1, z, l2 = dec_bad
        v.conditions.append(
            ConditionResult("decrease", "falsified", witness={"x0": x0, "s": q0, "y": y, "l": l1, "z": z, "l'": l2}, value=float(T(x0, q0, z, l2)))
        )
    else:
        v.conditions.append(ConditionResult("decrease", "verified"))
    return v


# ---------------------------------------------------------------------------
# Constructions


def cc_from_barrier(barrier, gamma: float = 1.0, problem=None) -> TableCertificate:
    """Closure certificate from a barrier: 0 if B(x) > 0 or B(y) <= 0, else -gamma.

    ``barrier`` is either a callable on states or a barrier :class:`Certificate`
    (evaluated on the finite embedding of ``problem``).
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    B = barrier if callable(barrier) else _finite_fn(barrier, problem)

    def fn(x, y):
        return 0.0 if (B(x) > 0 or B(y) <= 0) else -gamma

    return TableCertificate("safety-cc", fn, xi=gamma)


def compute_ql_qr(a: Nba, triplets) -> tuple:
    """Split NBA states around the middles of the chosen cut triplets."""
    triplets = list(triplets)
    if not triplets:
        raise ValueError("at least one triplet is needed")
    middles = {t[1] for t in triplets}
    reach_from = {m: a.reachable_from([m], min_steps=1) for m in middles}
    ql = set()
    for q in range(a.n):
        if q in middles:
            continue
        if any(m in a.reachable_from([q], min_steps=1) for m in middles):
            ql.add(q)
    qr = set(range(a.n))
    for m in middles:
        qr &= reach_from[m]
    qr -= middles
    return frozenset(ql), frozenset(qr), frozenset(middles)


@dataclass(frozen=True)
class Cut:
    triplet: tuple  # (q, q', q'')
    first: frozenset  # letter on q -> q'
    second: frozenset  # letter on q' -> q''
    barrier: object  # callable on states, or Certificate


def _barrier_fn(b, problem):
    if callable(b) and not isinstance(b, Certificate):
        return b
    if problem is not None and problem.finite:
        return _finite_fn(b, problem)
    e = b.expr()
    names = E.state_vars("x", problem.n)
    return lambda x: E.eval_point(e, dict(zip(names, x)))


def cc_from_triplet_barriers(a: Nba, cuts, xi: float = 1.0, problem=None, check_paths: bool = True) -> TableCertificate:
    """Closure certificate for the product from barriers that cut NBA triplets.

    Each cut barrier is nonpositive after its first letter has been read and
    stays so, which rules out its second letter from then on. The set of
    nonpositive barriers at a state (its "armed" set) only grows along
    trajectories. The certificate is 0 on ((x, i), (y, j)) when automaton
    state j with armed set armed(y) is reachable from (i, armed(x)) in the
    finite abstraction over (state, armed set), and -xi otherwise.
    """
    from .automata import decompose_triplets, enumerate_simple_paths

    cuts = list(cuts)
    if check_paths:
        cut_pairs = {}
        for cu in cuts:
            cut_pairs.setdefault(cu.triplet, set()).add((cu.first, cu.second))
        for path in enumerate_simple_paths(a):
            if len(path) < 3:
                raise UncutPath(path)
            ok = False
            for t in decompose_triplets(path, a):
                if t.pairs and set(t.pairs) <= cut_pairs.get(t.states, set()):
                    ok = True
                    break
            if not ok:
                raise UncutPath(path)
    fns = [_barrier_fn(cu.barrier, problem) for cu in cuts]
    letters = list(a.alphabet)
    arm = {sig: frozenset(k for k, cu in enumerate(cuts) if cu.first == sig) for sig in letters}
    block = {sig: frozenset(k for k, cu in enumerate(cuts) if cu.second == sig) for sig in letters}
    reach_cache = {}

    def reach(i, A0, B):
        """Automaton states j such that (j, B) is reachable from (i, A0) in >= 1 step.

        Armed sets only grow, and a smaller set never disables a letter, so
        it suffices to track the least armed set along each path and require
        it to stay inside B. The starting set A0 is exact, so the first
        letter must already have its arming barriers in A0.
        """
        key = (i, A0, B)
        if key in reach_cache:
            return reach_cache[key]
        out = set()
        if A0 <= B:
            seen = set()
            dq = deque()
            for sig in letters:
                if arm[sig] <= A0 and not block[sig] & A0:
                    for q2 in a.successors(i, sig):
                        if (q2, A0) not in seen:
                            seen.add((q2, A0))
                            dq.append((q2, A0))
            while dq:
                q, A = dq.popleft()
                out.add(q)
                for sig in letters:
                    A2 = A | arm[sig]
                    if not A2 <= B or block[sig] & A2:
                        continue
                    for q2 in a.successors(q, sig):
                        if (q2, A2) not in seen:
                            seen.add((q2, A2))
                            dq.append((q2, A2))
        reach_cache[key] = frozenset(out)
        return reach_cache[key]

    def armed(x):
        return frozenset(k for k, f in enumerate(fns) if f(x) <= 0)

    def fn(x, i, y, j):
        return 0.0 if j in reach(i, armed(x), armed(y)) else -xi

    return TableCertificate("ltl-cc", fn, xi=xi, nba=a)


def cc_from_triplet_barriers_literal(a: Nba, cuts, xi: float = 1.0, problem=None) -> TableCertificate:
    """The case-defined certificate built from Q_l, Q_r and the triplet middles.

    Kept for comparison; on some instances it violates the transition
    condition (see tests).
    """
    ql, qr, middles = compute_ql_qr(a, [cu.triplet for cu in cuts])
    by_middle = {}
    for cu in cuts:
        by_middle.setdefault(cu.triplet[1], []).append(_barrier_fn(cu.barrier, problem))

    def B(m, x):
        return max(f(x) for f in by_middle[m])

    def fn(x, i, y, j):
        if i in middles:
            if B(i, x) <= 0:
                if j in qr:
                    return -xi
                if j in ql or j == i:
                    return 0.0 if B(i, y) <= 0 else -xi
                return 0.0
            return 0.0
        if j in middles:
            if i in ql:
                return 0.0 if B(j, y) <= 0 else -xi
            return 0.0
        if i in ql and j in qr:
            return -xi
        return 0.0

    return TableCertificate("ltl-cc", fn, xi=xi, nba=a)
