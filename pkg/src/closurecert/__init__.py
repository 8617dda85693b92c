"""Closure certificates: checking, synthesis and baselines for discrete-time systems."""

__version__ = "0.1.0"

from .automata import Nba, enumerate_simple_paths, parse_hoa, unroll_once, write_hoa
from .certificates import (
    Certificate,
    Template,
    Verdict,
    cc_from_barrier,
    cc_from_triplet_barriers,
    check,
    check_barrier,
    check_finite,
    check_ltl_cc,
    check_persistence_cc,
    check_safety_cc,
    compute_ql_qr,
    load_certificate,
    load_certificate_file,
    load_template,
    load_template_file,
    sample_check,
)
from .cegis import CegisConfig, Failure, synthesize
from .expr import parse_expr
from .falsifier import FalsifierConfig, decide
from .lp import LinearProgram, solve
from .systems import load_problem, load_problem_file
from .triplet import subsume, triplet_verify

__all__ = [name for name in dir() if not name.startswith("_")]
