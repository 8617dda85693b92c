"""State-triplet verification and its conversion into a closure certificate.

Runs the baseline on the two small automata, with and without one
unrolling, and checks the closure certificate built from the barriers.
"""

from importlib import resources

import numpy as np

from closurecert import certificates as C
from closurecert.systems import load_problem_file
from closurecert.triplet import random_instance, subsume, triplet_verify

DATA = resources.files("closurecert") / "data"


def show(name, allow_unroll):
    p = load_problem_file(DATA / "problems" / name)
    res = triplet_verify(p, allow_unroll=allow_unroll)
    print(f"{name} (unroll={'on' if allow_unroll else 'off'}): {res.as_dict()['status']}")
    for entry in res.report:
        cut = [t["states"] for t in entry["triplets"] if t["cut"]]
        print(f"  path {' '.join(entry['path'])}: {'cut by ' + ' '.join(cut[0]) if cut else 'uncut'}")
    if res.verified:
        cert = subsume(res, p)
        print("  subsumed closure certificate:", C.check_finite(cert, p).status, "partition:", cert.partition)


def main():
    show("fig2_finite.json", False)
    show("fig5_finite.json", False)
    show("fig5_finite.json", True)

    rng = np.random.Generator(np.random.PCG64(1))
    done = ok = 0
    while done < 50:
        p = random_instance(rng)
        tv = triplet_verify(p)
        if tv.verified:
            done += 1
            ok += C.check_finite(subsume(tv, p), p).verified
    print(f"random instances: {ok}/{done} subsumed certificates verified")


if __name__ == "__main__":
    main()
