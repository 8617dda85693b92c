import sys
from pathlib import Path

import numpy as np
import pytest

from closurecert import certificates as C
from closurecert.systems import FiniteSystem, load_problem_file

DATA = Path(__file__).resolve().parents[1] / "src" / "closurecert" / "data"


def problem(name):
    return load_problem_file(DATA / "problems" / name)


def certificate(name, prob):
    return C.load_certificate_file(DATA / "certificates" / name, prob)


def template(name, prob):
    return C.load_template_file(DATA / "templates" / name, prob)


def random_finite(rng, m_max=8, p_edge=0.3):
    """Random total transition relation with a non-empty initial set."""
    m = int(rng.integers(1, m_max + 1))
    edges = set()
    for s in range(m):
        row = rng.random(m) < p_edge
        if not row.any():
            row[int(rng.integers(m))] = True
        edges.update((s, int(t)) for t in np.flatnonzero(row))
    init = frozenset(int(v) for v in np.flatnonzero(rng.random(m) < 0.3)) or frozenset({0})
    return FiniteSystem(m, init, frozenset(edges))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
