"""Synthesize a linear closure certificate for the 1-D Kuramoto oscillator.

Shows the per-iteration progress of the counterexample loop, then re-checks
the result and compares it with the hand-written certificate.
"""

import argparse
from importlib import resources

from closurecert import certificates as C
from closurecert import expr as E
from closurecert.cegis import CegisConfig, Failure, synthesize
from closurecert.systems import load_problem_file

DATA = resources.files("closurecert") / "data"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--tau1", type=float, default=1.0)
    args = ap.parse_args()

    p = load_problem_file(DATA / "problems" / "kuramoto1d.json")
    tmpl = C.load_template_file(DATA / "templates" / "linear_cc.tmpl", p)
    cfg = CegisConfig.for_problem(p, tau1=args.tau1, seed=args.seed)
    res = synthesize(p, tmpl, cfg)
    if isinstance(res, Failure):
        print("synthesis failed:", res.reason, res.detail)
        return
    cert, report = res
    for rec in report.iterations:
        cex = rec.get("counterexamples", [])
        print(f"iter {rec['iteration']:3d}  rows={rec['lp_rows']:5d}  xi={rec['xi']:.4g}  counterexamples={len(cex)}")
    print("certificate: T(x, y) =", E.to_text(cert.expr()))
    v = C.check_safety_cc(cert, p)
    print("re-check:", v.status, "margins:", v.margins())

    ref = C.load_certificate_file(DATA / "certificates" / "paper_cc.json", p)
    v = C.check_safety_cc(ref, p)
    print("reference certificate:", v.status, "separation margin:", round(v.margins()["separation"], 7))

    bar = C.load_template_file(DATA / "templates" / "linear_barrier.tmpl", p)
    res = synthesize(p, bar, CegisConfig.for_problem(p))
    print("linear barrier:", res.reason if isinstance(res, Failure) else "found")


if __name__ == "__main__":
    main()
