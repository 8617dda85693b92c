"""Finite systems where a closure certificate is simpler than any barrier.

Prints, for the six-state example and the d = 1..4 family, whether a
polynomial barrier of the given degree exists and whether a linear closure
certificate is found and verified exhaustively.
"""

from importlib import resources

from closurecert import certificates as C
from closurecert.cegis import Failure, synthesize
from closurecert.systems import exists_polynomial_barrier, load_problem_file

DATA = resources.files("closurecert") / "data"


def load(name):
    return load_problem_file(DATA / "problems" / name)


def main():
    p = load("fig1.json")
    print("six-state example:", sorted(p.init), "initial,", sorted(p.unsafe), "unsafe")
    for d in (1, 2, 3):
        r = exists_polynomial_barrier(p.system, p.unsafe, d)
        print(f"  degree-{d} barrier: {'found' if r.feasible else 'none'}")
    cc = C.load_certificate_file(DATA / "certificates" / "fig1_cc.json", p)
    print("  T(x,y) = -y:", C.check_safety_cc(cc, p).status)

    for d in (1, 2, 3, 4):
        p = load(f"thm4_d{d}.json")
        barrier = exists_polynomial_barrier(p.system, p.unsafe, d).feasible
        tmpl = C.load_template_file(DATA / "templates" / "linear_cc.tmpl", p)
        res = synthesize(p, tmpl)
        if isinstance(res, Failure):
            print(f"d={d}: barrier={'yes' if barrier else 'no'}, linear CC failed ({res.reason})")
            continue
        cert, _ = res
        print(f"d={d}: barrier of degree {d}: {'yes' if barrier else 'no'}; linear CC {cert.coefficients.round(3).tolist()} "
              f"-> {C.check_finite(cert, p).status}")


if __name__ == "__main__":
    main()
