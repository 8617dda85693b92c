"""End-to-end acceptance checks, one PASS/FAIL line per criterion.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import problem, certificate, random_finite, template  # noqa: E402

from closurecert import certificates as C  # noqa: E402
from closurecert import expr as E  # noqa: E402
from closurecert import falsifier as F  # noqa: E402
from closurecert.automata import triplet_letter_pairs, unroll_once  # noqa: E402
from closurecert.cegis import CegisConfig, Failure, synthesize  # noqa: E402
from closurecert.lp import solve  # noqa: E402
from closurecert.systems import (  # noqa: E402
    Persistent,
    Problem,
    Safe,
    exact_persistence,
    exact_safety,
    exists_polynomial_barrier,
    transitive_closure,
)
from closurecert.triplet import random_instance, subsume, triplet_verify  # noqa: E402

RESULTS = []  # (criterion, ok, detail), printed by the conftest summary hook


def record(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------


def criterion_1():
    p = problem("fig1.json")
    lp, t_lp = timed(exists_polynomial_barrier, p.system, p.unsafe, 2)
    v, t_cc = timed(C.check_safety_cc, certificate("fig1_cc.json", p), p)
    ok = (not lp.feasible) and v.verified and t_lp < 1 and t_cc < 1
    return ok, f"degree-2 barrier LP infeasible={not lp.feasible} ({t_lp:.3f}s), T=-y verified={v.verified} ({t_cc:.3f}s)"


def criterion_2():
    t0 = time.perf_counter()
    parts, ok = [], True
    for d in (1, 2, 3, 4):
        p = problem(f"thm4_d{d}.json")
        infeasible = not exists_polynomial_barrier(p.system, p.unsafe, d).feasible
        res = synthesize(p, template("linear_cc.tmpl", p))
        verified = not isinstance(res, Failure) and C.check_finite(res[0], p).verified
        ok &= infeasible and verified
        parts.append(f"d={d}: barrier infeasible={infeasible}, linear CC verified={verified}")
    total = time.perf_counter() - t0
    ok &= total < 5
    return ok, "; ".join(parts) + f"; total {total:.2f}s"


def criterion_3():
    p = problem("appendixA.json")
    v, t = timed(C.check_safety_cc, certificate("appendixA_cc.json", p), p)
    m = v.margins().get("separation")
    ok = v.verified and m is not None and m >= 0.49 and t < 1
    return ok, f"verified={v.verified}, separation margin={m}, {t:.3f}s"


def criterion_4():
    p = problem("kuramoto1d.json")
    c = certificate("paper_cc.json", p)
    v, t = timed(C.check_safety_cc, c, p, cfg=F.FalsifierConfig(delta=1e-3))
    m = v.margins().get("separation")
    ok = v.verified and c.tau1 == 1.0 and m is not None and 0.002 <= m <= 0.005 and t < 30
    return ok, f"verified={v.verified}, tau1={c.tau1}, separation margin={m:.7f} (window [0.002, 0.005]), {t:.2f}s"


def criterion_5():
    p = problem("kuramoto1d.json")
    cfg = CegisConfig.for_problem(p, tau1=1.0, seed=42)
    res, t = timed(synthesize, p, template("linear_cc.tmpl", p), cfg)
    if isinstance(res, Failure):
        return False, f"linear CC synthesis failed: {res.reason} after {t:.1f}s"
    cert, report = res
    iters = len(report.iterations)
    checked = C.check_safety_cc(cert, p).verified
    bad = synthesize(p, template("linear_barrier.tmpl", p), CegisConfig.for_problem(p))
    barrier_ok = isinstance(bad, Failure) and bad.reason == "InfeasibleLP"
    ok = iters <= 200 and checked and barrier_ok and t < 15 * 60
    reason = bad.reason if isinstance(bad, Failure) else "unexpected success"
    return ok, (
        f"linear CC found in {iters} iterations, {t:.1f}s, re-check verified={checked}; " f"linear barrier -> {reason}"
    )


def criterion_6():
    cases = (
        ("kuramoto2d.json", "kuramoto2d_cc.json", (1.0, 1.0, 0.0, 1.0)),
        ("tworoom.json", "tworoom_cc.json", (1.0, 0.4, 0.1, 0.5)),
    )
    ok, parts, witnesses = True, [], []
    for pn, cn, params in cases:
        p = problem(pn)
        c = certificate(cn, p)
        have = (c.tau1, c.tau2, c.tau3, c.xi)
        v = C.sample_check(c, p, count=10_000, seed=0)
        bad = [r for r in v.conditions if r.status != "verified"]
        ok &= have == params and not bad
        parts.append(f"{pn} (tau1,tau2,tau3,xi)={have}: {len(bad)}/{len(v.conditions)} conditions violated")
        for r in bad:
            witnesses.append(f"    {pn} {r.condition} [{r.detail}] value={r.value:.6g} at {r.witness}")
    detail = "; ".join(parts)
    if witnesses:
        detail += "\n" + "\n".join(witnesses)
    return ok, detail


def _isotonicity(trials=100_000):
    from test_expr import random_box, random_expr

    rng = np.random.Generator(np.random.PCG64(7))
    done = 0
    while done < trials:
        e, box = random_expr(rng), random_box(rng)
        iv = E.eval_box(e, box)
        for _ in range(10):
            pt = {n: rng.uniform(b.lo, b.hi) for n, b in zip(box.names, box.intervals)}
            v = E.eval_point(e, pt)
            if math.isfinite(v) and not iv.lo <= v <= iv.hi:
                return False, f"{E.to_text(e)} at {pt}"
            done += 1
    return True, f"{done} trials"


def _lp_oracle(trials=1000):
    from test_lp import random_lp, vertex_oracle

    rng = np.random.Generator(np.random.PCG64(2024))
    for k in range(trials):
        lp = random_lp(rng)
        want, got = vertex_oracle(lp), solve(lp)
        if got.feasible != (want is not None) or (want is not None and abs(got.objective - want) > 1e-6):
            return False, f"trial {k} disagrees"
    return True, f"{trials} trials"


def _closure(systems=500):
    from test_systems import naive_closure

    rng = np.random.Generator(np.random.PCG64(5))
    for k in range(systems):
        s = random_finite(rng)
        if transitive_closure(s) != naive_closure(s):
            return False, f"system {k}"
    return True, f"{systems} systems"


def _cc_from_barrier(instances=1000):
    from test_certificates import random_valid_barrier

    rng = np.random.Generator(np.random.PCG64(44))
    done = 0
    while done < instances:
        s = random_finite(rng, m_max=7)
        u = {int(v) for v in np.flatnonzero(rng.random(s.m) < 0.3)}
        B = random_valid_barrier(rng, s, u)
        if B is None:
            continue
        p = Problem("r", "safety", s, unsafe=frozenset(u))
        t = C.cc_from_barrier(B, float(rng.uniform(0.1, 3)), p)
        if not C.check_finite(t, p).verified:
            return False, f"instance {done}"
        done += 1
    return True, f"{instances} instances"


def _subsumption(instances=200):
    rng = np.random.Generator(np.random.PCG64(1))
    done = 0
    while done < instances:
        p = random_instance(rng)
        tv = triplet_verify(p)
        if not tv.verified:
            continue
        done += 1
        if not C.check_finite(subsume(tv, p), p).verified:
            return False, f"instance {done}"
    return True, f"{instances} instances"


def _unrolling(nbas=200):
    from test_automata import random_nba

    rng = np.random.Generator(np.random.PCG64(9))
    bad = []
    for k in range(nbas):
        a = random_nba(rng)
        once = unroll_once(a)
        new = triplet_letter_pairs(unroll_once(once)) - triplet_letter_pairs(once)
        if new:
            bad.append((k, a.n, sorted((sorted(x), sorted(y)) for x, y in new)[0]))
    if bad:
        k, n, pair = bad[0]
        return False, f"{len(bad)}/{nbas} NBAs gain pairs on a second unrolling; first: NBA #{k} ({n} states) gains {pair}"
    return True, f"{nbas} NBAs"


def _falsifier(claims=150):
    from test_falsifier import random_claim

    rng = np.random.Generator(np.random.PCG64(31))
    cfg = F.FalsifierConfig(delta=1e-4, budget=20_000)
    verified = 0
    for k in range(claims):
        claim = random_claim(rng)
        if isinstance(F.decide(claim, cfg), F.Verified):
            verified += 1
            bad, pt, _ = F.count_violations(claim, 100_000, seed=k)
            if bad:
                return False, f"claim {k} violated at {pt}"
    return True, f"{verified} verified claims x 1e5 samples"


def criterion_7():
    suites = (
        ("isotonicity", _isotonicity),
        ("lp-oracle", _lp_oracle),
        ("closure-fixpoint", _closure),
        ("cc-from-barrier", _cc_from_barrier),
        ("subsumption", _subsumption),
        ("unrolling-stability", _unrolling),
        ("falsifier-sampling", _falsifier),
    )
    ok, parts = True, []
    for name, fn in suites:
        good, detail = fn()
        ok &= good
        parts.append(f"{name} {'ok' if good else 'FAILED'} ({detail})")
    return ok, "; ".join(parts)


def _closure_cc(tc):
    return lambda x, y: 0.0 if (x, y) in tc else -1.0


def _visit_rank(s, vf):
    """Most visits to vf on a path from an initial state to each state."""
    r = {y: (1 if y in vf else 0) for y in s.init}
    for _ in range(s.m * (len(vf) + 2)):
        changed = False
        for a, b in s.edges:
            if a in r:
                v = r[a] + (1 if b in vf else 0)
                if v > r.get(b, -1):
                    r[b] = v
                    changed = True
        if not changed:
            break
    return r


def _rank_cc(s, vf, tc):
    r = _visit_rank(s, vf)
    K = max(r.values(), default=0)
    return lambda x, y: float(K - r.get(y, 0)) if (x, y) in tc else -1.0


def _candidates(rng, s, vf, tc):
    out = []
    for a in (-1.0, 0.0, 1.0):
        for b in (-1.0, 0.0, 1.0):
            for c in (-1.0, 0.0, 1.0):
                out.append(lambda x, y, a=a, b=b, c=c: a + b * x + c * y)
    for _ in range(10):
        tab = rng.choice([-1.0, 0.0, 1.0], size=(s.m, s.m))
        out.append(lambda x, y, tab=tab: tab[x, y])
    return out


def criterion_8(systems=500):
    rng = np.random.Generator(np.random.PCG64(8))
    mismatches, valid_safety, valid_persist = [], 0, 0
    for k in range(systems):
        s = random_finite(rng, m_max=6)
        tc = transitive_closure(s)
        unsafe = frozenset(int(v) for v in np.flatnonzero(rng.random(s.m) < 0.3))
        vf = frozenset(int(v) for v in np.flatnonzero(rng.random(s.m) < 0.3))
        ps = Problem("r", "safety", s, unsafe=unsafe)
        pp = Problem("r", "persistence", s, vf=vf)
        safe = isinstance(exact_safety(s, unsafe), Safe)
        persistent = isinstance(exact_persistence(s, vf), Persistent)
        for fn in [_closure_cc(tc)] + _candidates(rng, s, vf, tc):
            for mode in ("implication", "strengthened"):
                if C.check_finite(C.TableCertificate("safety-cc", fn), ps, mode).verified:
                    valid_safety += 1
                    if not safe:
                        mismatches.append(f"system {k}: safety CC valid ({mode}) but unsafe")
        for fn in [_rank_cc(s, vf, tc)] + _candidates(rng, s, vf, tc):
            if C.check_finite(C.TableCertificate("persistence-cc", fn), pp, "implication").verified:
                valid_persist += 1
                if not persistent:
                    mismatches.append(f"system {k}: persistence CC valid but not persistent")
        # the constructed certificates exist exactly when the property holds
        if C.check_finite(C.TableCertificate("safety-cc", _closure_cc(tc)), ps).verified != safe:
            mismatches.append(f"system {k}: closure-set CC disagrees with exact safety")
        if C.check_finite(C.TableCertificate("persistence-cc", _rank_cc(s, vf, tc)), pp).verified != persistent:
            mismatches.append(f"system {k}: visit-rank CC disagrees with exact persistence")
    detail = f"{systems} systems, {valid_safety} valid safety CCs, {valid_persist} valid persistence CCs, {len(mismatches)} discrepancies"
    if mismatches:
        detail += "; first: " + mismatches[0]
    return not mismatches, detail


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(n):
    ok, detail = CRITERIA[n - 1]()
    assert record(n, ok, detail), detail


if __name__ == "__main__":
    failed = 0
    for n, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        failed += not record(n, ok, detail)
    sys.exit(1 if failed else 0)
