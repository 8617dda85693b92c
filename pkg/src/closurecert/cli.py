"""Command-line front end.

Every command prints one JSON report on stdout. Exit codes: 0 when the
verdict is positive, 1 when it is negative or inconclusive, 2 for usage,
IO and format errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import certificates as C
from .cegis import CegisConfig, Failure, synthesize
from .errors import ClosureCertError
from .falsifier import FalsifierConfig
from .systems import (
    NotPersistent,
    Unsafe,
    exact_persistence,
    exact_safety,
    exists_polynomial_barrier,
    load_problem_file,
    transitive_closure,
)

log = logging.getLogger("closurecert")

DATA = Path(__file__).parent / "data"
_SEARCH = {"problem": "problems", "certificate": "certificates", "template": "templates"}


class UsageError(Exception):
    pass


def resolve(path: str, what: str) -> Path:
    """Use ``path`` if it exists, otherwise look it up among the bundled files."""
    p = Path(path)
    if p.exists():
        return p
    bundled = DATA / _SEARCH[what] / p.name
    if p.parent == Path(".") and bundled.exists():
        return bundled
    raise UsageError(f"{what} file not found: {path}")


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple, set, frozenset)):
        items = sorted(o, key=repr) if isinstance(o, (set, frozenset)) else o
        return [_jsonable(v) for v in items]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        v = float(o)
        return v if np.isfinite(v) else str(v)
    return o


def report_digest(report: dict) -> str:
    """Hash of the report without wall-clock fields; equal seeds give equal digests."""

    def strip(o):
        if isinstance(o, dict):
            return {k: strip(v) for k, v in o.items() if k not in ("timings", "time", "wall_time")}
        if isinstance(o, list):
            return [strip(v) for v in o]
        return o

    text = json.dumps(strip(_jsonable(report)), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _emit(report: dict, out: str | None) -> None:
    report = _jsonable(report)
    report["report_digest"] = report_digest(report)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def _base(args, command: str, problem_path: Path) -> dict:
    return {
        "command": command,
        "problem": str(problem_path),
        "problem_digest": _digest(problem_path),
        "seed": args.seed,
        "version": __version__,
    }


# ---------------------------------------------------------------------------
# Commands


def cmd_check(args) -> tuple[int, dict]:
    t0 = time.perf_counter()
    ppath = resolve(args.problem, "problem")
    cpath = resolve(args.certificate, "certificate")
    problem = load_problem_file(ppath)
    cert = C.load_certificate_file(cpath, problem)
    rep = _base(args, "check", ppath)
    rep.update(certificate=str(cpath), certificate_digest=_digest(cpath), mode=args.mode)
    t1 = time.perf_counter()
    if args.sample:
        v = C.sample_check(cert, problem, args.mode, count=args.sample, seed=args.seed)
        rep["grade"] = "sampled"
    else:
        cfg = FalsifierConfig(delta=args.delta, budget=args.budget)
        v = C.check(cert, problem, args.mode, cfg, margins=not args.no_margins, jobs=args.jobs)
        rep["grade"] = "exhaustive" if problem.finite else "proof"
    rep["verdict"] = v.status
    rep["result"] = v.as_dict()
    rep["margins"] = v.margins()
    bad = v.first("falsified") or v.first("unknown")
    if bad is not None:
        rep["witness"] = bad.as_dict()
    rep["timings"] = {"load": t1 - t0, "check": time.perf_counter() - t1}
    return (0 if v.verified else 1), rep


def cmd_synth(args) -> tuple[int, dict]:
    t0 = time.perf_counter()
    ppath = resolve(args.problem, "problem")
    tpath = resolve(args.template, "template")
    problem = load_problem_file(ppath)
    template = C.load_template_file(tpath, problem)
    try:
        cfg = CegisConfig.for_problem(
            problem,
            tau1=args.tau1,
            tau2=args.tau2,
            tau3=args.tau3,
            xi_min=args.xi_min,
            n=args.n,
            seed=args.seed,
            max_iters=args.max_iters,
            jobs=args.jobs,
            falsifier=FalsifierConfig(delta=args.delta),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rep = _base(args, "synth", ppath)
    rep.update(template=str(tpath), config={k: getattr(cfg, k) for k in ("n", "tau1", "tau2", "tau3", "xi_min", "max_iters")})
    t1 = time.perf_counter()
    res = synthesize(problem, template, cfg)
    rep["timings"] = {"load": t1 - t0, "synth": time.perf_counter() - t1}
    if isinstance(res, Failure):
        rep["verdict"] = "failure"
        rep["result"] = res.as_dict()
        return 1, rep
    cert, report = res
    doc = cert.to_json(problem.nba.names if problem.nba is not None else None)
    rep["verdict"] = "verified"
    rep["certificate"] = doc
    rep["result"] = report.as_dict()
    rep["margins"] = report.verdict.margins()
    if args.out:
        Path(args.out).write_text(json.dumps(_jsonable(doc), indent=2) + "\n")
        rep["certificate_file"] = args.out
    return 0, rep


def cmd_triplet(args) -> tuple[int, dict]:
    from .triplet import subsume, triplet_verify

    t0 = time.perf_counter()
    ppath = resolve(args.problem, "problem")
    problem = load_problem_file(ppath)
    if problem.spec != "ltl-nba" or problem.nba is None:
        raise UsageError("triplet needs an ltl-nba problem with an automaton")
    cfg = CegisConfig.for_problem(problem, seed=args.seed, jobs=args.jobs, falsifier=FalsifierConfig(delta=args.delta))
    rep = _base(args, "triplet", ppath)
    res = triplet_verify(problem, cfg, allow_unroll=args.allow_unroll)
    rep["result"] = res.as_dict()
    rep["verdict"] = "verified" if res.verified else "inconclusive"
    if res.verified:
        rep["barriers"] = [
            {
                "triplet": [res.nba.names[q] for q in cu.triplet],
                "letters": [sorted(cu.first), sorted(cu.second)],
                "barrier": _barrier_text(cu.barrier),
            }
            for cu in res.cuts
        ]
        if problem.finite:
            cert = subsume(res, problem)
            rep["subsumption"] = {"partition": cert.partition, "check": C.check_finite(cert, problem, "implication").status}
    rep["timings"] = {"total": time.perf_counter() - t0}
    return (0 if res.verified else 1), rep


def _barrier_text(b) -> str:
    if isinstance(b, C.Certificate):
        return str(b.expr())
    return "table"


def cmd_finite(args) -> tuple[int, dict]:
    t0 = time.perf_counter()
    ppath = resolve(args.problem, "problem")
    problem = load_problem_file(ppath)
    if not problem.finite:
        raise UsageError("finite analyses need a finite problem")
    s = problem.system
    rep = _base(args, f"finite {args.analysis}", ppath)
    if args.analysis == "closure":
        pairs = sorted(transitive_closure(s))
        rep.update(verdict="computed", closure=[list(p) for p in pairs])
        code = 0
    elif args.analysis == "safety":
        if problem.unsafe is None:
            raise UsageError("problem has no unsafe set")
        r = exact_safety(s, problem.unsafe)
        if isinstance(r, Unsafe):
            rep.update(verdict="unsafe", path=list(r.path))
            code = 1
        else:
            rep.update(verdict="safe")
            code = 0
    elif args.analysis == "persistence":
        if problem.vf is None:
            raise UsageError("problem has no persistence set")
        r = exact_persistence(s, problem.vf)
        if isinstance(r, NotPersistent):
            rep.update(verdict="not-persistent", stem=list(r.stem), cycle=list(r.cycle))
            code = 1
        else:
            rep.update(verdict="persistent")
            code = 0
    else:
        if args.degree is None or args.degree < 0:
            raise UsageError("barrier-lp needs a non-negative degree")
        if problem.unsafe is None:
            raise UsageError("problem has no unsafe set")
        r = exists_polynomial_barrier(s, problem.unsafe, args.degree)
        rep.update(degree=args.degree, sets_tried=r.sets_tried)
        if r.feasible:
            rep.update(verdict="feasible", coefficients=list(r.coefficients))
            code = 0
        else:
            rep.update(verdict="infeasible")
            code = 1
    rep["timings"] = {"total": time.perf_counter() - t0}
    return code, rep


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="closurecert", description="Closure certificate checking and synthesis.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, delta=1e-3):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--delta", type=float, default=delta, help="minimum box width for the falsifier")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", help="also write the report (check, triplet) or certificate (synth) here")

    p = sub.add_parser("check", help="prove or refute a certificate")
    p.add_argument("problem")
    p.add_argument("certificate")
    p.add_argument("--mode", choices=("strengthened", "implication"), default="strengthened")
    p.add_argument("--budget", type=int, default=10**6, help="falsifier box budget")
    p.add_argument("--sample", type=int, default=0, metavar="N", help="sampling-grade check with N samples")
    p.add_argument("--no-margins", action="store_true")
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", help="synthesize a certificate from a template")
    p.add_argument("problem")
    p.add_argument("template")
    p.add_argument("--tau1", type=float)
    p.add_argument("--tau2", type=float)
    p.add_argument("--tau3", type=float)
    p.add_argument("--xi-min", type=float)
    p.add_argument("--n", type=int, default=50, help="initial samples per set")
    p.add_argument("--max-iters", type=int, default=200)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("triplet", help="state-triplet baseline")
    p.add_argument("problem")
    p.add_argument("--allow-unroll", action="store_true")
    common(p)
    p.set_defaults(func=cmd_triplet)

    p = sub.add_parser("finite", help="exact analyses of finite systems")
    p.add_argument("problem")
    p.add_argument("analysis", choices=("closure", "safety", "persistence", "barrier-lp"))
    p.add_argument("degree", type=int, nargs="?")
    common(p)
    p.set_defaults(func=cmd_finite)
    return ap


def _setup_logging() -> None:
    level = os.environ.get("CLOSURE_CERT_LOG", "WARNING").upper()
    if level.isdigit():
        lvl = int(level)
    else:
        lvl = getattr(logging, level, None)
        if not isinstance(lvl, int):
            lvl = logging.WARNING
    logging.basicConfig(level=lvl, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        code, rep = args.func(args)
    except (UsageError, ClosureCertError, OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    rep["exit_code"] = code
    out = args.out if args.command != "synth" else None
    _emit(rep, out)
    return code


if __name__ == "__main__":
    sys.exit(main())
