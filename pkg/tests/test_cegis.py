import numpy as np
import pytest
from conftest import problem, template

from closurecert import certificates as C
from closurecert import expr as E
from closurecert import falsifier as F
from closurecert import lp as LP
from closurecert.cegis import (
    CegisConfig,
    Failure,
    SampleSets,
    build_candidate_lp,
    initial_samples,
    insert_counterexample,
    synthesize,
)
from closurecert.systems import load_problem


def strip_time(history):
    return [{k: v for k, v in rec.items() if k != "time"} for rec in history]


def test_six_state_lp_admits_minus_y():
    p = problem("fig1.json")
    t = template("linear_cc.tmpl", p)
    cfg = CegisConfig.for_problem(p)
    lp = build_candidate_lp(t, SampleSets({}), cfg, p)
    assert LP.solve(lp).feasible
    x = np.zeros(lp.n)
    x[: 3] = [0.0, 0.0, -1.0]
    x[lp.layout.xi] = 1.0
    assert lp.violation(x).max() <= 1e-9


def test_kuramoto_linear_barrier_lp_infeasible():
    p = problem("kuramoto1d.json")
    t = template("linear_barrier.tmpl", p)
    cfg = CegisConfig.for_problem(p, n=200)
    lp = build_candidate_lp(t, initial_samples(p, "barrier", cfg), cfg, p)
    assert not LP.solve(lp).feasible


def test_no_samples_means_bounds_only():
    p = problem("kuramoto1d.json")
    t = template("linear_cc.tmpl", p)
    cfg = CegisConfig.for_problem(p, n=0, include_corners=False)
    lp = build_candidate_lp(t, initial_samples(p, "safety-cc", cfg), cfg, p)
    assert len(lp.constraints) == 0
    assert LP.solve(lp).feasible


def test_synthesis_on_six_state_example():
    p = problem("fig1.json")
    res = synthesize(p, template("linear_cc.tmpl", p))
    assert not isinstance(res, Failure)
    cert, report = res
    assert C.check_finite(cert, p, "strengthened").verified
    assert C.check_finite(cert, p, "implication").verified


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_synthesis_on_alternating_family(d):
    p = problem(f"thm4_d{d}.json")
    res = synthesize(p, template("linear_cc.tmpl", p))
    assert not isinstance(res, Failure)
    assert C.check_finite(res[0], p).verified


def test_kuramoto_synthesis_seed_42():
    p = problem("kuramoto1d.json")
    cfg = CegisConfig.for_problem(p, tau1=1.0, seed=42)
    res = synthesize(p, template("linear_cc.tmpl", p), cfg)
    assert not isinstance(res, Failure), res
    cert, report = res
    assert len(report.iterations) <= 200
    assert C.check_safety_cc(cert, p).verified


def test_kuramoto_linear_barrier_fails_honestly():
    p = problem("kuramoto1d.json")
    t = template("linear_barrier.tmpl", p)
    cfg = CegisConfig.for_problem(p)
    res = synthesize(p, t, cfg)
    assert isinstance(res, Failure) and res.reason == "InfeasibleLP"
    assert res.history[-1]["lp"] == "infeasible"
    # the first iteration's LP is rebuilt independently and solved again
    lp = build_candidate_lp(t, initial_samples(p, "barrier", cfg), cfg, p)
    assert not LP.solve(lp).feasible


def test_determinism():
    p = problem("kuramoto1d.json")
    t = template("linear_cc.tmpl", p)
    a = synthesize(p, t, CegisConfig.for_problem(p, n=3, seed=1))
    b = synthesize(p, t, CegisConfig.for_problem(p, n=3, seed=1))
    assert strip_time(a[1].iterations) == strip_time(b[1].iterations)


def test_counterexamples_refute_their_candidate():
    p = problem("kuramoto1d.json")
    t = template("linear_cc.tmpl", p)
    cfg = CegisConfig.for_problem(p, n=3, seed=1)
    cert, report = synthesize(p, t, cfg)
    seen = 0
    for rec in report.iterations:
        cand = C.Certificate("safety-cc", t.basis, rec["coefficients"], xi=rec["xi"], tau1=cfg.tau1)
        conds = {(c.condition, c.label): c for c in C.build_claims(cand, p)}
        for cx in rec["counterexamples"]:
            claim = conds[(cx["condition"], cx["label"])].claim
            assert isinstance(claim, F.ForAllNonneg)
            assert E.eval_point(claim.expr, cx["witness"]) <= -cfg.falsifier.eps / 2
            seen += 1
    assert seen >= 1
    # the final certificate is accepted by the independent checker
    assert C.check(cert, p).verified


def test_routing_separation_witness():
    s = SampleSets({"X0": np.zeros((0, 1)), "U": np.zeros((0, 1))})
    out = insert_counterexample(s, "separation", {"x1": 1.5, "y1": 2.5}, "safety-cc")
    assert out.sets["X0"].tolist() == [[1.5]] and out.sets["U"].tolist() == [[2.5]]
    again = insert_counterexample(out, "separation", {"x1": 1.5, "y1": 2.5}, "safety-cc")
    assert again.sets["X0"].tolist() == [[1.5]] and again.sets["U"].tolist() == [[2.5]]
    assert len(again.tuples) == len(out.tuples) == 1
    # the input sets are not mutated
    assert s.size("X0") == 0


def test_routing_decrease_witness():
    s = SampleSets({})
    out = insert_counterexample(s, "decrease", {"x1": 0.1, "y1": 0.2, "z1": 0.3}, "persistence-cc")
    assert out.sets["X0"].tolist() == [[0.1]]
    assert out.sets["VF"].tolist() == [[0.2], [0.3]]


def test_routing_unknown_condition():
    with pytest.raises(ValueError):
        insert_counterexample(SampleSets({}), "nonsense", {"x1": 0.0}, "safety-cc")


def test_config_validation():
    with pytest.raises(ValueError):
        CegisConfig(tau1=-1).validate()
    with pytest.raises(ValueError):
        CegisConfig(xi_min=0).validate()
    p = problem("kuramoto1d.json")
    assert CegisConfig.for_problem(p, tau1=0.5).tau1 == 0.5
    assert CegisConfig.for_problem(p).xi_min == pytest.approx(1e-3)


def test_wrong_template_kind():
    p = problem("kuramoto1d.json")
    t = C.load_template({"kind": "persistence-cc", "basis": ["1", "y1"]}, p)
    with pytest.raises(C.ArityMismatch):
        synthesize(p, t)


def test_persistence_synthesis_small():
    doc = {"spec": "persistence", "kind": "finite", "states": 3, "initial": [0], "edges": [[0, 1], [1, 2], [2, 2]], "vf": [0]}
    p = load_problem(doc)
    t = C.load_template({"kind": "persistence-cc", "basis": ["1", "x1", "y1"]}, p)
    res = synthesize(p, t, CegisConfig.for_problem(p, tau2=1.0))
    assert not isinstance(res, Failure)
    assert C.check_finite(res[0], p, "strengthened").verified
    # with vf = {0, 1} the strengthened decrease needs T(0,1) <= -xi while the
    # transition 0 -> 1 needs T(0,1) >= 0, so the LP must be infeasible
    p2 = load_problem({**doc, "vf": [0, 1]})
    res2 = synthesize(p2, C.load_template({"kind": "persistence-cc", "basis": ["1", "x1", "y1"]}, p2), CegisConfig.for_problem(p2, tau2=1.0))
    assert isinstance(res2, Failure) and res2.reason == "InfeasibleLP"


def test_unsafe_initial_state_fails_before_any_lp():
    p = load_problem({"kind": "finite", "spec": "safety", "states": 2, "initial": [0, 1], "edges": [[0, 0], [1, 1]], "unsafe": [1]})
    res = synthesize(p, template("linear_cc.tmpl", p))
    assert isinstance(res, Failure) and res.reason == "InitialUnsafe" and res.history == []
