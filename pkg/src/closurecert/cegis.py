"""Counterexample-guided synthesis of certificates from linear templates.

Each iteration fits the template to the current samples with a linear
program built from the strengthened conditions, then searches for
counterexamples (random prescreen first, branch-and-prune second) and adds
them to the samples.

Candidate selection is lexicographic: maximize xi; then, keeping
xi >= xi*/2, maximize a margin eta on the transition rows (and on the
initial rows of barriers); then, keeping eta >= eta*/2, minimize sum |c|.
Backing off to half of each optimum keeps candidates away from the sample
constraints they would otherwise touch, which is what lets interval
pruning succeed instead of stalling at tight points.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import certificates as C
from . import expr as E
from . import falsifier as F
from . import lp as LP
from .errors import NumericalBreakdown
from .systems import sample_region

log = logging.getLogger(__name__)

DEDUP_TOL = 1e-12

# which sample set each witness variable group feeds, per (kind, condition)
_CC = ("safety-cc", "persistence-cc")
ROUTES = {
    ("barrier", "initial"): {"x": "X0"},
    ("barrier", "unsafe"): {"x": "U"},
    ("barrier", "step"): {"x": "X1"},
    **{(k, "transition"): {"x": "X1"} for k in _CC},
    **{(k, "closure"): {"x": "X1", "y": "X2"} for k in _CC},
    ("safety-cc", "separation"): {"x": "X0", "y": "U"},
    ("persistence-cc", "decrease"): {"x": "X0", "y": "VF", "z": "VF"},
    ("ltl-cc", "transition"): {"x": "L"},
    ("ltl-cc", "closure"): {"x": "L", "y": "X2"},
    ("ltl-cc", "decrease"): {"x": "X0", "y": "X2", "z": "X2"},
}


@dataclass
class CegisConfig:
    n: int = 50
    n_vf: int | None = None  # defaults to 2n
    tau1: float = 1.0
    tau2: float = 0.0
    tau3: float = 0.0
    xi_min: float = 1e-3
    xi_max: float = 10.0
    eta_max: float = 1.0
    coeff_bound: float = 10.0
    max_iters: int = 200
    seed: int = 0
    prescreen: int = 10_000
    max_rows: int = 6_000  # per condition instance; cross products beyond this are subsampled
    include_corners: bool = True
    falsifier: F.FalsifierConfig = field(default_factory=F.FalsifierConfig)
    refine_steps: int = 2  # retries with delta/10 when the falsifier is inconclusive
    jobs: int = 1  # worker processes for the final proof check

    def validate(self):
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if min(self.tau1, self.tau2, self.tau3) < 0:
            raise ValueError("tau parameters must be non-negative")
        if not self.xi_min > 0 or self.xi_max < self.xi_min:
            raise ValueError("need 0 < xi_min <= xi_max")
        if not self.coeff_bound > 0:
            raise ValueError("coefficient bound must be positive")
        self.falsifier.validate()
        return self

    @classmethod
    def for_problem(cls, problem, **overrides):
        """Defaults taken from the problem's ``parameters`` block, then overrides."""
        kw = {}
        for key in ("tau1", "tau2", "tau3", "xi_min"):
            if key in problem.params:
                kw[key] = float(problem.params[key])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw).validate()


# ---------------------------------------------------------------------------
# Samples


@dataclass
class SampleSets:
    """Point sets keyed by role: X1, X2 (state set), X0, U (unsafe), VF, and
    one set per letter (key ``("L", letter)``) for LTL problems."""

    sets: dict
    tuples: list = field(default_factory=list)  # (condition, label, witness dict)

    def size(self, key) -> int:
        a = self.sets.get(key)
        return 0 if a is None else len(a)

    def sizes(self) -> dict:
        return {(k if isinstance(k, str) else "L" + C._fmt(k[1])): len(v) for k, v in self.sets.items()}

    def copy(self) -> SampleSets:
        return SampleSets({k: v.copy() for k, v in self.sets.items()}, list(self.tuples))


def _corners(region) -> list:
    pts = []
    for cl in region.clauses:
        lo = [iv.lo for iv in cl.box.intervals]
        hi = [iv.hi for iv in cl.box.intervals]
        for bits in range(2 ** len(lo)):
            p = [hi[k] if bits >> k & 1 else lo[k] for k in range(len(lo))]
            if region.contains(p):
                pts.append(p)
    return pts


def _draw(region, count, seed, corners) -> np.ndarray:
    n = region.dim
    pts = sample_region(region, count, seed) if count else np.zeros((0, n))
    pts = np.asarray(pts, dtype=float).reshape(-1, n)
    if corners:
        extra = np.array(_corners(region), dtype=float).reshape(-1, n)
        pts = np.vstack([extra, pts])
    return pts


def initial_samples(problem, kind: str, cfg: CegisConfig) -> SampleSets:
    n_vf = cfg.n_vf if cfg.n_vf is not None else 2 * cfg.n
    s = cfg.seed
    X = problem.regions["X"]
    sets = {
        "X1": _draw(X, cfg.n, s + 1, cfg.include_corners),
        "X2": _draw(X, cfg.n, s + 2, cfg.include_corners),
        "X0": _draw(problem.init, cfg.n, s + 3, cfg.include_corners),
    }
    if problem.unsafe is not None:
        sets["U"] = _draw(problem.unsafe, cfg.n, s + 4, cfg.include_corners)
    if problem.vf is not None:
        sets["VF"] = _draw(problem.vf, n_vf, s + 5, cfg.include_corners)
    if kind == "ltl-cc":
        for k, (a, r) in enumerate(problem.labeling.entries):
            if not r.empty_syntactically:
                sets[("L", a)] = _draw(r, cfg.n, s + 10 + k, cfg.include_corners)
    return SampleSets(sets)


def _append(arr: np.ndarray, p: np.ndarray) -> tuple:
    if len(arr) and np.min(np.max(np.abs(arr - p), axis=1)) <= DEDUP_TOL:
        return arr, False
    return np.vstack([arr, p[None, :]]), True


def insert_counterexample(samples: SampleSets, condition: str, witness: dict, kind: str, problem=None, label: str = "") -> SampleSets:
    """Route each component of ``witness`` to the set its condition quantifies over.

    Near-duplicates (max-norm distance <= 1e-12) are dropped. The full tuple
    is also kept so that its own LP row is always present.
    """
    route = ROUTES.get((kind, condition))
    if route is None:
        raise ValueError(f"no routing for condition {condition!r} of {kind}")
    out = samples.copy()
    changed = False
    for prefix, key in route.items():
        names = sorted((v for v in witness if v.startswith(prefix) and v[len(prefix):].isdigit()), key=lambda v: int(v[len(prefix):]))
        if not names:
            continue
        p = np.array([witness[v] for v in names], dtype=float)
        if key == "L":
            a = problem.labeling.letter_of(tuple(p)) if problem is not None else None
            if a is None:
                continue
            key = ("L", a)
        arr = out.sets.get(key, np.zeros((0, len(p))))
        out.sets[key], added = _append(arr, p)
        changed |= added
    if changed:
        out.tuples.append((condition, label, dict(witness)))
    return out


# ---------------------------------------------------------------------------
# LP construction


@dataclass(frozen=True)
class _Term:
    weight: float
    piece: tuple | None
    first: tuple  # (prefix, apply f)
    second: tuple | None


@dataclass
class _Instance:
    condition: str
    label: str
    groups: dict  # prefix -> sample-set key
    terms: tuple
    xi: float = 0.0  # coefficient of xi in the row (row >= 0)
    eta: float = 0.0  # coefficient of eta


def instances(kind: str, problem, nba, cfg: CegisConfig) -> list:
    """Strengthened condition instances, one per LP row family."""
    t1, t2, t3 = cfg.tau1, cfg.tau2, cfg.tau3
    X, FX = ("x", False), ("x", True)
    Y, Z = ("y", False), ("z", False)
    out = []
    if kind == "barrier":
        out.append(_Instance("initial", "", {"x": "X0"}, (_Term(-1.0, None, X, None),), eta=-1.0))
        out.append(_Instance("unsafe", "", {"x": "U"}, (_Term(1.0, None, X, None),), xi=-1.0))
        out.append(_Instance("step", "", {"x": "X1"}, (_Term(1.0, None, X, None), _Term(-1.0, None, FX, None))))
        return out
    if kind in _CC:
        out.append(_Instance("transition", "", {"x": "X1"}, (_Term(1.0, None, X, FX),), eta=-1.0))
        out.append(_Instance("closure", "", {"x": "X1", "y": "X2"}, (_Term(1.0, None, X, Y), _Term(-t1, None, FX, Y))))
        if kind == "safety-cc":
            out.append(_Instance("separation", "", {"x": "X0", "y": "U"}, (_Term(-1.0, None, X, Y),), xi=-1.0))
        else:
            terms = (_Term(1.0 - t2, None, X, Y), _Term(-1.0, None, X, Z), _Term(-t3, None, Y, Z))
            out.append(_Instance("decrease", "", {"x": "X0", "y": "VF", "z": "VF"}, terms, xi=-1.0))
        return out
    names = nba.names
    for sigma, region in problem.labeling.entries:
        if not problem.finite and region.empty_syntactically:
            continue
        key = ("L", sigma)
        for i in range(nba.n):
            for i2 in nba.successors(i, sigma):
                tag = f"{names[i]}-{C._fmt(sigma)}->{names[i2]}"
                out.append(_Instance("transition", tag, {"x": key}, (_Term(1.0, (i, i2), X, FX),), eta=-1.0))
                for j in range(nba.n):
                    terms = (_Term(1.0, (i, j), X, Y), _Term(-t1, (i2, j), FX, Y))
                    out.append(_Instance("closure", f"{tag} j={names[j]}", {"x": key, "y": "X2"}, terms))
    for s in sorted(nba.initial):
        for l1 in sorted(nba.accepting):
            for l2 in sorted(nba.accepting):
                terms = (_Term(1.0 - t2, (s, l1), X, Y), _Term(-1.0, (s, l2), X, Z), _Term(-t3, (l1, l2), Y, Z))
                tag = f"s={names[s]} l={names[l1]} l'={names[l2]}"
                out.append(_Instance("decrease", tag, {"x": "X0", "y": "X2", "z": "X2"}, terms, xi=-1.0))
    return out


class _Layout:
    """Column layout: coefficients of every piece, then xi and eta."""

    def __init__(self, template: C.Template, nba):
        self.pieces = template.pieces(nba)
        self.template = template
        self.offset = {}
        k = 0
        for p in self.pieces:
            self.offset[p] = k
            k += len(template.basis_for(p))
        self.ncoef = k
        self.xi = k
        self.eta = k + 1
        self.n = k + 2

    def names(self) -> list:
        out = []
        for p in self.pieces:
            tag = "" if p is None else f"[{p[0]},{p[1]}]"
            out += [f"c{m}{tag}" for m in range(len(self.template.basis_for(p)))]
        return out + ["xi", "eta"]

    def unpack(self, x: np.ndarray):
        if self.pieces == [None]:
            return x[: self.ncoef].copy()
        return {p: x[self.offset[p] : self.offset[p] + len(self.template.basis_for(p))].copy() for p in self.pieces}


def _points(samples, problem, key, images):
    """(points, images) arrays for a set key; finite problems use edges for f."""
    if problem.finite:
        s = problem.system
        emb = s.embedding
        states = _finite_states(problem, key)
        if images:
            pairs = [(a, b) for a in states for b in s.successors(a)]
            src = np.array([emb[a] for a, _ in pairs]).reshape(-1, emb.shape[1])
            dst = np.array([emb[b] for _, b in pairs]).reshape(-1, emb.shape[1])
            return src, dst
        return emb[sorted(states)].reshape(-1, emb.shape[1]), None
    P = samples.sets.get(key)
    if P is None:
        return np.zeros((0, problem.n)), None
    return P, (problem.system.step_array(P) if images else None)


def _finite_states(problem, key):
    s = problem.system
    if key in ("X1", "X2"):
        return list(range(s.m))
    if key == "X0":
        return sorted(s.init)
    if key == "U":
        return sorted(problem.unsafe or ())
    if key == "VF":
        return sorted(problem.vf or ())
    if isinstance(key, tuple) and key[0] == "L":
        return sorted(x for x in range(s.m) if problem.labeling.letter_of(x) == key[1])
    raise KeyError(key)


def _features(basis, first, second, n) -> np.ndarray:
    env = {f"x{k + 1}": first[:, k] for k in range(n)}
    if second is not None:
        env.update({f"y{k + 1}": second[:, k] for k in range(n)})
    R = first.shape[0]
    return np.column_stack([np.broadcast_to(np.asarray(E.eval_array(p, env), dtype=float), (R,)) for p in basis]) if basis else np.zeros((R, 0))


def _rows(inst: _Instance, data: dict, layout: _Layout, n: int) -> np.ndarray:
    """Row block (R x layout.n) for index tuples already expanded into ``data``:
    data[prefix] = (points, images) with equal row counts."""
    R = next(iter(data.values()))[0].shape[0]
    M = np.zeros((R, layout.n))
    for t in inst.terms:
        a = data[t.first[0]][1 if t.first[1] else 0]
        b = None if t.second is None else data[t.second[0]][1 if t.second[1] else 0]
        basis = layout.template.basis_for(t.piece)
        off = layout.offset[t.piece]
        M[:, off : off + len(basis)] += t.weight * _features(basis, a, b, n)
    M[:, layout.xi] += inst.xi
    M[:, layout.eta] += inst.eta
    return M


def _expand(inst, samples, problem, cfg, rng):
    """Index tuples over the instance's groups, capped by ``cfg.max_rows``."""
    prefixes = list(inst.groups)
    needs_image = {g[0] for t in inst.terms for g in (t.first, t.second) if g is not None and g[1]}
    arrays = {p: _points(samples, problem, inst.groups[p], p in needs_image) for p in prefixes}
    sizes = [arrays[p][0].shape[0] for p in prefixes]
    total = int(np.prod(sizes)) if sizes else 0
    if total == 0:
        return None
    if problem.finite or total <= cfg.max_rows:
        idx = np.array(list(np.ndindex(*sizes)), dtype=int).reshape(-1, len(prefixes))
    else:
        flat = rng.choice(total, size=cfg.max_rows, replace=False)
        idx = np.column_stack(np.unravel_index(np.sort(flat), sizes))
    data = {}
    for k, p in enumerate(prefixes):
        P, FP = arrays[p]
        data[p] = (P[idx[:, k]], None if FP is None else FP[idx[:, k]])
    return data


def _tuple_data(inst, witness, problem):
    data = {}
    for p in inst.groups:
        names = E.state_vars(p, problem.n)
        if not all(v in witness for v in names):
            return None
        P = np.array([[witness[v] for v in names]], dtype=float)
        data[p] = (P, problem.system.step_array(P))
    return data


def build_candidate_lp(template: C.Template, samples: SampleSets, cfg: CegisConfig, problem, nba=None) -> LP.LinearProgram:
    """LP over the template coefficients, xi and eta; one row per (condition, sample tuple)."""
    nba = nba or problem.nba
    layout = _Layout(template, nba)
    bounds = [(-cfg.coeff_bound, cfg.coeff_bound)] * layout.ncoef + [(cfg.xi_min, cfg.xi_max), (0.0, cfg.eta_max)]
    lp = LP.LinearProgram(layout.names(), bounds=bounds)
    obj = np.zeros(layout.n)
    obj[layout.xi] = 1.0
    lp.objective = (obj, "max")
    rng = np.random.Generator(np.random.PCG64(cfg.seed + 7919))
    insts = instances(template.kind, problem, nba, cfg)
    by_key = {(i.condition, i.label): i for i in insts}
    blocks = []
    for inst in insts:
        data = _expand(inst, samples, problem, cfg, rng)
        if data is not None:
            blocks.append(_rows(inst, data, layout, problem.n))
    if not problem.finite:
        for cond, label, wit in samples.tuples:
            inst = by_key.get((cond, label))
            if inst is None:
                continue
            data = _tuple_data(inst, wit, problem)
            if data is not None:
                blocks.append(_rows(inst, data, layout, problem.n))
    for M in blocks:
        for row in M:
            lp.constraints.append((row, LP.GE, 0.0))
    lp.layout = layout
    return lp


# ---------------------------------------------------------------------------
# The loop


@dataclass
class Failure:
    reason: str  # InfeasibleLP | MaxIterations | FalsifierBudget | NumericalBreakdown | InitialUnsafe
    history: list
    detail: str = ""

    def as_dict(self) -> dict:
        return {"status": "failure", "reason": self.reason, "detail": self.detail, "iterations": self.history}


@dataclass
class SynthesisReport:
    iterations: list
    verdict: C.Verdict
    samples: dict
    wall_time: float

    def as_dict(self) -> dict:
        return {
            "status": "success",
            "iterations": self.iterations,
            "verdict": self.verdict.as_dict(),
            "samples": self.samples,
            "wall_time": self.wall_time,
        }


def _candidate(lp: LP.LinearProgram, cfg: CegisConfig):
    """Lexicographic solve; returns (x, xi*, eta*) or None when infeasible."""
    layout = lp.layout
    r1 = LP.solve(lp)
    if not r1.feasible:
        return None
    xi_star = float(r1.x[layout.xi])
    lp2 = LP.LinearProgram(lp.names, list(lp.constraints), list(lp.bounds))
    lo2 = max(cfg.xi_min, 0.5 * xi_star)
    lp2.bounds[layout.xi] = (lo2, cfg.xi_max)
    obj = np.zeros(layout.n)
    obj[layout.eta] = 1.0
    lp2.objective = (obj, "max")
    r2 = LP.solve(lp2)
    if not r2.feasible:  # numerically marginal; fall back to the first solution
        return r1.x, xi_star, 0.0
    eta_star = float(r2.x[layout.eta])
    # minimize sum |c| through t >= c, t >= -c
    m = layout.ncoef
    names = lp.names + [f"t{k}" for k in range(m)]
    bounds = list(lp2.bounds) + [(0.0, cfg.coeff_bound)] * m
    bounds[layout.eta] = (0.5 * eta_star, cfg.eta_max)
    lp3 = LP.LinearProgram(names, [], bounds)
    for row, rel, rhs in lp.constraints:
        lp3.constraints.append((np.concatenate([row, np.zeros(m)]), rel, rhs))
    for k in range(m):
        a = np.zeros(layout.n + m)
        a[layout.n + k] = 1.0
        a[k] = -1.0
        lp3.constraints.append((a.copy(), LP.GE, 0.0))
        a[k] = 1.0
        lp3.constraints.append((a, LP.GE, 0.0))
    obj = np.zeros(layout.n + m)
    obj[layout.n :] = 1.0
    lp3.objective = (obj, "min")
    r3 = LP.solve(lp3)
    if not r3.feasible:
        return r2.x, xi_star, eta_star
    return r3.x[: layout.n], xi_star, eta_star


def _make_cert(template, layout, x, cfg, nba, problem) -> C.Certificate:
    coeffs = layout.unpack(x)
    if isinstance(coeffs, dict):
        coeffs = {k: np.where(np.abs(v) < 1e-9, 0.0, v) for k, v in coeffs.items()}
    else:
        coeffs = np.where(np.abs(coeffs) < 1e-9, 0.0, coeffs)
    # half of the LP value, so the xi-rows are not tight at the samples
    xi = 0.5 * float(x[layout.xi])
    cert = C.Certificate(
        template.kind,
        template.basis,
        coeffs,
        xi=xi,
        tau1=cfg.tau1,
        tau2=cfg.tau2,
        tau3=cfg.tau3,
        piece_basis=dict(template.piece_basis),
    )
    if nba is not problem.nba:
        cert.nba = nba
    return cert


def _find_counterexample(cond, cfg: CegisConfig, seed: int):
    """(witness, via) or (None, status) with status 'verified' or 'unknown'."""
    half = 0.5 * cfg.falsifier.eps
    if cfg.prescreen:
        bad, worst, score = F.count_violations(cond.claim, cfg.prescreen, seed, eps=half)
        if bad:
            return worst, "prescreen"
    fc = cfg.falsifier
    for step in range(cfg.refine_steps + 1):
        res = F.decide(cond.claim, fc)
        if isinstance(res, F.Counterexample):
            return res.point, "falsifier"
        if isinstance(res, F.Verified):
            return None, "verified"
        if res.reason == "budget":
            break
        fc = replace(fc, delta=fc.delta / 10.0)
    return None, "unknown"


def synthesize(problem, template: C.Template, cfg: CegisConfig | None = None, nba=None):
    """Run the loop. Returns (Certificate, SynthesisReport) or a :class:`Failure`."""
    cfg = (cfg or CegisConfig()).validate()
    t0 = time.perf_counter()
    nba = nba or problem.nba
    C._expect_arity(
        C.Certificate(template.kind, template.basis, {} if template.piecewise else np.zeros(len(template.basis))),
        1 if template.kind == "barrier" else 2,
        problem,
    )
    _check_kind(template.kind, problem)
    if template.kind == "safety-cc":
        bad = C.initial_unsafe(problem, cfg.falsifier)
        if bad is not None:
            return Failure("InitialUnsafe", [], f"initial state {bad} is unsafe")
    samples = initial_samples(problem, template.kind, cfg) if not problem.finite else SampleSets({})
    history = []
    for it in range(1, cfg.max_iters + 1):
        lp = build_candidate_lp(template, samples, cfg, problem, nba)
        rec = {"iteration": it, "lp_rows": len(lp.constraints), "lp_vars": lp.n, "samples": samples.sizes()}
        try:
            cand = _candidate(lp, cfg)
        except NumericalBreakdown as exc:
            rec["lp"] = "breakdown"
            history.append(rec)
            return Failure("NumericalBreakdown", history, str(exc))
        if cand is None:
            again = LP.solve(lp)  # failure honesty: confirm with a fresh solve
            rec["lp"] = "infeasible" if not again.feasible else "feasible on re-solve"
            history.append(rec)
            if again.feasible:
                return Failure("NumericalBreakdown", history, "LP feasibility changed between solves")
            return Failure("InfeasibleLP", history, f"no candidate in the template for {lp.constraints.__len__()} sample rows")
        x, xi_star, eta_star = cand
        cert = _make_cert(template, lp.layout, x, cfg, nba, problem)
        rec.update(xi=cert.xi, xi_star=xi_star, eta_star=eta_star, coefficients=_coeff_json(cert, nba))
        if problem.finite:
            v = C.check_finite(cert, problem, mode="strengthened")
            history.append(rec)
            if v.verified:
                return cert, SynthesisReport(history, v, {}, time.perf_counter() - t0)
            return Failure("MaxIterations", history, "exhaustive LP solution failed the exhaustive check")
        conds = [c for c in C.build_claims(cert, problem, "strengthened", cfg.falsifier.eps) if c.condition != "disjoint"]
        found = []
        unknown = []
        for k, cond in enumerate(conds):
            wit, via = _find_counterexample(cond, cfg, cfg.seed * 100_003 + it * 1_009 + k)
            if wit is not None:
                found.append((cond, wit, via))
            elif via == "unknown":
                unknown.append(cond)
        rec["counterexamples"] = [{"condition": c.condition, "label": c.label, "via": via, "witness": w} for c, w, via in found]
        rec["time"] = time.perf_counter() - t0
        history.append(rec)
        log.info("iteration %d: xi=%.4g, %d counterexamples, %d rows", it, cert.xi, len(found), len(lp.constraints))
        if not found:
            if unknown:
                return Failure("FalsifierBudget", history, f"inconclusive: {[c.condition + ' ' + c.label for c in unknown]}")
            verdict = C.check(cert, problem, "strengthened", cfg.falsifier, margins=True, margin_budget=20_000, jobs=cfg.jobs)
            if not verdict.verified:  # success must be re-validated independently
                return Failure("FalsifierBudget", history, f"final check returned {verdict.status}")
            return cert, SynthesisReport(history, verdict, samples.sizes(), time.perf_counter() - t0)
        for cond, wit, _ in found:
            samples = insert_counterexample(samples, cond.condition, wit, template.kind, problem, cond.label)
    return Failure("MaxIterations", history, f"no certificate after {cfg.max_iters} iterations")


def _check_kind(kind, problem):
    need = {"barrier": "safety", "safety-cc": "safety", "persistence-cc": "persistence", "ltl-cc": "ltl-nba"}[kind]
    if problem.spec != need:
        raise C.ArityMismatch(f"template kind {kind} does not fit a {problem.spec} problem")


def _coeff_json(cert, nba):
    if cert.piecewise:
        return {f"{nba.names[i]},{nba.names[j]}": v.tolist() for (i, j), v in sorted(cert.coefficients.items())}
    return cert.coefficients.tolist()
