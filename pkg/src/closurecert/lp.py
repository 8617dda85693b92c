"""Dense two-phase simplex with Bland's anti-cycling rule.

Variables are boxed (finite bounds are required). Bounds are shifted so every
variable becomes ``0 <= z <= u``; the upper bounds are kept as explicit rows.
Large programs are solved by row generation: a subset of rows is solved, then
the most violated remaining rows are added until none is violated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalBreakdown

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
COST_TOL = 1e-10

LE, GE, EQ = "<=", ">=", "="


@dataclass
class LinearProgram:
    names: list
    constraints: list = field(default_factory=list)  # (coeffs, relation, rhs)
    bounds: list = field(default_factory=list)  # (lo, hi) per variable
    objective: tuple | None = None  # (coeffs, "max" | "min")

    def __post_init__(self):
        n = len(self.names)
        if not self.bounds:
            self.bounds = [(-10.0, 10.0)] * n
        if len(self.bounds) != n:
            raise DimensionMismatch("one (lo, hi) bound is needed per variable")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ValueError(f"bad variable bound ({lo}, {hi})")

    @property
    def n(self) -> int:
        return len(self.names)

    def add(self, coeffs, relation: str, rhs: float):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n,):
            raise DimensionMismatch(f"row has {coeffs.shape} coefficients, expected {self.n}")
        if relation not in (LE, GE, EQ):
            raise ValueError(f"unknown relation {relation!r}")
        self.constraints.append((coeffs, relation, float(rhs)))

    def matrix(self):
        if not self.constraints:
            return np.zeros((0, self.n)), [], np.zeros(0)
        A = np.array([c for c, _, _ in self.constraints])
        rel = [r for _, r, _ in self.constraints]
        b = np.array([r for _, _, r in self.constraints])
        return A, rel, b

    def violation(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation amount (0 when satisfied)."""
        A, rel, b = self.matrix()
        if not rel:
            return np.zeros(0)
        ax = A @ x
        out = np.zeros(len(rel))
        for k, r in enumerate(rel):
            if r == LE:
                out[k] = max(0.0, ax[k] - b[k])
            elif r == GE:
                out[k] = max(0.0, b[k] - ax[k])
            else:
                out[k] = abs(ax[k] - b[k])
        return out

    def dump(self) -> str:
        """Plain-text listing: one line per row, ``name`` headers first."""
        lines = ["vars " + " ".join(self.names)]
        lines.append("bounds " + " ".join(f"[{lo:g},{hi:g}]" for lo, hi in self.bounds))
        if self.objective is not None:
            c, d = self.objective
            lines.append(f"{d} " + " ".join(f"{v:g}" for v in c))
        for c, r, b in self.constraints:
            lines.append(" ".join(f"{v:g}" for v in c) + f" {r} {b:g}")
        return "\n".join(lines)


@dataclass
class LpResult:
    feasible: bool
    x: np.ndarray | None = None
    objective: float | None = None
    pivots: int = 0

    def value(self, lp: LinearProgram) -> dict:
        return dict(zip(lp.names, self.x))


def _bland_simplex(T: np.ndarray, basis: list, ncols: int, allowed: np.ndarray) -> int:
    """Minimize the cost row T[-1] in place. Returns the pivot count."""
    pivots = 0
    m = T.shape[0] - 1
    while True:
        cost = T[-1, :ncols]
        cand = np.nonzero((cost < -COST_TOL) & allowed)[0]
        if cand.size == 0:
            return pivots
        j = int(cand[0])
        col = T[:m, j]
        pos = col > PIVOT_TOL
        if not pos.any():
            # cannot happen with boxed variables; treat as breakdown
            raise NumericalBreakdown("unbounded direction in a boxed program")
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / col[pos]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + 1e-12 * max(1.0, abs(rmin)))[0]
        i = min(ties, key=lambda r: basis[r])
        _pivot(T, i, j)
        basis[i] = j
        pivots += 1
        if pivots > 50000:
            raise NumericalBreakdown("simplex iteration limit reached")


def _pivot(T, i, j):
    p = T[i, j]
    if abs(p) < PIVOT_TOL:
        raise NumericalBreakdown(f"pivot {p:.3e} below tolerance")
    T[i] /= p
    col = T[:, j].copy()
    col[i] = 0.0
    nz = np.nonzero(col)[0]
    if nz.size:
        T[nz] -= np.outer(col[nz], T[i])


def _solve_dense(lp: LinearProgram, rows: list) -> LpResult:
    n = lp.n
    lo = np.array([b[0] for b in lp.bounds])
    hi = np.array([b[1] for b in lp.bounds])
    A_list, b_list, kinds = [], [], []
    for k in rows:
        c, r, rhs = lp.constraints[k]
        A_list.append(c)
        b_list.append(rhs - c @ lo)
        kinds.append(r)
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        A_list.append(e)
        b_list.append(hi[k] - lo[k])
        kinds.append(LE)
    A = np.array(A_list) if A_list else np.zeros((0, n))
    b = np.array(b_list)
    m = len(kinds)
    # equilibrate rows; feasibility is unchanged and pivots stay well scaled
    scale = np.max(np.abs(A), axis=1) if m else np.zeros(0)
    scale[scale == 0.0] = 1.0
    A = A / scale[:, None]
    b = b / scale
    # flip rows so rhs >= 0
    for i in range(m):
        if b[i] < 0:
            A[i] = -A[i]
            b[i] = -b[i]
            kinds[i] = {LE: GE, GE: LE, EQ: EQ}[kinds[i]]
    n_slack = sum(1 for k in kinds if k != EQ)
    n_art = sum(1 for k in kinds if k != LE)
    ncols = n + n_slack + n_art
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = [0] * m
    s = n
    a = n + n_slack
    art_cols = []
    for i, k in enumerate(kinds):
        if k == LE:
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        elif k == GE:
            T[i, s] = -1.0
            s += 1
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
        else:
            T[i, a] = 1.0
            basis[i] = a
            art_cols.append(a)
            a += 1
    allowed = np.ones(ncols, dtype=bool)
    pivots = 0
    if art_cols:
        T[-1, :] = 0.0
        T[-1, art_cols] = 1.0
        for i in range(m):
            if basis[i] in art_cols:
                T[-1] -= T[i]
        pivots += _bland_simplex(T, basis, ncols, allowed)
        if -T[-1, -1] > FEAS_TOL:
            return LpResult(False, pivots=pivots)
        art_set = set(art_cols)
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] in art_set:
                nz = np.nonzero(np.abs(T[i, : n + n_slack]) > 1e-9)[0]
                if nz.size:
                    _pivot(T, i, int(nz[0]))
                    basis[i] = int(nz[0])
        allowed[art_cols] = False
        T[:m, art_cols] = 0.0
        for i in range(m):
            if basis[i] in art_set:
                T[i, :] = 0.0  # redundant row
    # phase 2
    cvec = np.zeros(n)
    if lp.objective is not None:
        cobj, direction = lp.objective
        cvec = np.asarray(cobj, dtype=float) * (-1.0 if direction == "max" else 1.0)
    T[-1, :] = 0.0
    T[-1, :n] = cvec
    for i in range(m):
        j = basis[i]
        if j < n and T[-1, j] != 0.0 and T[i, j] != 0.0:
            T[-1] -= T[-1, j] * T[i]
    pivots += _bland_simplex(T, basis, ncols, allowed)
    z = np.zeros(ncols)
    for i in range(m):
        z[basis[i]] = T[i, -1]
    x = np.clip(z[:n] + lo, lo, hi)
    x = _polish(A, b, kinds, basis, n, n_slack, x - lo, lo, hi)
    obj = None
    if lp.objective is not None:
        obj = float(np.asarray(lp.objective[0]) @ x)
    return LpResult(True, x, obj, pivots)


def _polish(A, b, kinds, basis, n, n_slack, z0, lo, hi):
    # recompute the basic solution from the original rows to shed tableau drift
    m = len(kinds)
    S = np.zeros((m, n + n_slack))
    S[:, :n] = A
    s = n
    for i, k in enumerate(kinds):
        if k == LE:
            S[i, s] = 1.0
            s += 1
        elif k == GE:
            S[i, s] = -1.0
            s += 1
    cols = [j for j in basis if j < n + n_slack]
    if len(cols) != m:
        return z0 + lo
    try:
        zb = np.linalg.solve(S[:, cols], b)
    except np.linalg.LinAlgError:
        return z0 + lo
    z = np.zeros(n + n_slack)
    z[cols] = zb
    if np.max(np.abs(z[:n] - z0)) > 1e-6:
        return z0 + lo
    return np.clip(z[:n] + lo, lo, hi)


def solve(lp: LinearProgram, chunk: int = 300) -> LpResult:
    """Solve ``lp``; feasible answers satisfy every row within ``FEAS_TOL``."""
    total = len(lp.constraints)
    if total <= chunk:
        active = list(range(total))
    else:
        # seed with an evenly spread subset, then add violated rows
        active = sorted(set(np.linspace(0, total - 1, chunk // 2).astype(int).tolist()))
    while True:
        res = _solve_dense(lp, active)
        if not res.feasible:
            log.debug("LP infeasible on %d of %d rows", len(active), total)
            return res
        viol = lp.violation(res.x)
        bad = np.nonzero(viol > FEAS_TOL)[0]
        if bad.size == 0:
            return res
        act = set(active)
        missing = [int(k) for k in bad[np.argsort(-viol[bad], kind="stable")] if int(k) not in act]
        if not missing:
            raise NumericalBreakdown(f"active rows violated by {viol.max():.3e} after solve")
        active = sorted(set(active) | set(missing[: max(50, chunk // 3)]))
