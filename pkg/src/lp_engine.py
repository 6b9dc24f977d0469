#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
@Time    : 2026/09/03 09:20
@File    : lp_engine.py

Dense two-phase simplex over small linear programs.

Every optimization in the scheduler (single-coflow min-CCT, max-min MCF and
the oracle used by the tests) is expressed as a ``LinearProgram`` and handed
to ``solve``. Pivoting is Dantzig's rule with lowest-index tie breaks, falling
back to Bland's rule after a streak of degenerate pivots; both are fixed so two
solves of the same program walk the same pivots.
"""
import itertools
import math
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from utils.errors import LpNumericalError, OptimizerError
from utils.log import Logger
from utils.utils import StrEnum

logger = Logger('LpEngine')

PIVOT_TOL = 1e-9
COST_TOL = 1e-9
FEAS_TOL = 1e-9
CHECK_TOL = 1e-6
BLAND_AFTER = 50
LP_DUMP_ENV = "TERRA_LP_DUMP"

_dump_counter = itertools.count()
_dump_lock = threading.Lock()


class Sense(StrEnum):
    LE = "<="
    EQ = "="
    GE = ">="


class LpStatus(StrEnum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class Constraint:
    coeffs: Dict[int, float]
    sense: Sense
    rhs: float
    name: str


@dataclass
class LpSolution:
    status: LpStatus
    objective: float = float("nan")
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL

    def value(self, index: int) -> float:
        return float(self.values[index])


class LinearProgram:
    """Variables with bounds, a linear objective and linear rows."""

    def __init__(self, name: str = "lp", maximize: bool = True):
        self.name = name
        self.maximize = maximize
        self.names: List[str] = []
        self.lower: List[float] = []
        self.upper: List[Optional[float]] = []
        self.objective: Dict[int, float] = {}
        self.constraints: List[Constraint] = []

    @property
    def num_variables(self) -> int:
        return len(self.names)

    def add_variable(self, name: Optional[str] = None, lower: float = 0.0, upper: Optional[float] = None) -> int:
        if not math.isfinite(lower) or lower < 0:
            raise OptimizerError(f"variable {name}: lower bound must be finite and >= 0, got {lower}")
        if upper is not None and (not math.isfinite(upper) or upper < lower):
            raise OptimizerError(f"variable {name}: invalid upper bound {upper}")
        index = len(self.names)
        self.names.append(name or f"x{index}")
        self.lower.append(float(lower))
        self.upper.append(None if upper is None else float(upper))
        return index

    def add_constraint(self, coeffs: Union[Mapping[int, float], Iterable[Tuple[int, float]]],
                       sense: Union[Sense, str], rhs: float, name: Optional[str] = None) -> int:
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: Dict[int, float] = {}
        for index, value in items:
            self._check_index(index)
            row[index] = row.get(index, 0.0) + float(value)
        self._check_finite(row.values(), rhs)
        self.constraints.append(Constraint(row, Sense(sense), float(rhs), name or f"c{len(self.constraints)}"))
        return len(self.constraints) - 1

    def set_objective(self, coeffs: Mapping[int, float], maximize: Optional[bool] = None):
        for index in coeffs:
            self._check_index(index)
        self._check_finite(coeffs.values(), 0.0)
        self.objective = {i: float(v) for i, v in coeffs.items()}
        if maximize is not None:
            self.maximize = maximize

    def _check_index(self, index: int):
        if not 0 <= index < len(self.names):
            raise OptimizerError(f"{self.name}: unknown variable index {index}")

    def _check_finite(self, values: Iterable[float], rhs: float):
        if not math.isfinite(rhs) or any(not math.isfinite(v) for v in values):
            raise OptimizerError(f"{self.name}: non-finite coefficient")

    def to_lp_format(self) -> str:
        """CPLEX LP text, for cross-checking against external solvers."""
        names = [re.sub(r"[^A-Za-z0-9_.]", "_", n) for n in self.names]

        def expr(coeffs: Mapping[int, float]) -> str:
            terms = [f"{'-' if v < 0 else '+'} {abs(v):.12g} {names[i]}" for i, v in sorted(coeffs.items()) if v != 0]
            text = " ".join(terms) if terms else "0 " + (names[0] if names else "")
            return text[2:] if text.startswith("+ ") else text

        lines = [f"\\ {self.name}", "Maximize" if self.maximize else "Minimize", f" obj: {expr(self.objective)}",
                 "Subject To"]
        for c in self.constraints:
            lines.append(f" {re.sub(r'[^A-Za-z0-9_.]', '_', c.name)}: {expr(c.coeffs)} {c.sense.value} {c.rhs:.12g}")
        lines.append("Bounds")
        for name, lo, up in zip(names, self.lower, self.upper):
            lines.append(f" {lo:.12g} <= {name}" + (f" <= {up:.12g}" if up is not None else ""))
        lines.append("End")
        return "\n".join(lines) + "\n"


def _pivot(T: np.ndarray, row: int, col: int):
    pivot_row = T[row] / T[row, col]
    T -= np.outer(T[:, col], pivot_row)
    T[row] = pivot_row


def _objective_row(T: np.ndarray, basis: List[int], cost: np.ndarray) -> np.ndarray:
    row = np.zeros(T.shape[1])
    row[:len(cost)] = cost
    for i, b in enumerate(basis):
        if cost[b] != 0.0:
            row -= cost[b] * T[i]
    return row


def _simplex(T: np.ndarray, basis: List[int], ncols: int, max_iterations: int) -> Tuple[LpStatus, int]:
    """Minimize the cost held in the last row of ``T`` over the first ``ncols`` columns."""
    m = T.shape[0] - 1
    degenerate = 0
    for iteration in range(max_iterations):
        reduced = T[-1, :ncols]
        candidates = np.flatnonzero(reduced < -COST_TOL)
        if candidates.size == 0:
            return LpStatus.OPTIMAL, iteration
        if degenerate >= BLAND_AFTER:
            col = int(candidates[0])
        else:
            col = int(candidates[np.argmin(reduced[candidates])])
        column = T[:m, col]
        positive = np.flatnonzero(column > PIVOT_TOL)
        if positive.size == 0:
            return LpStatus.UNBOUNDED, iteration
        ratios = T[positive, -1] / column[positive]
        best = ratios.min()
        ties = positive[ratios <= best + 1e-12 * (1.0 + abs(best))]
        row = int(min(ties, key=lambda r: basis[r]))
        degenerate = degenerate + 1 if best <= FEAS_TOL else 0
        _pivot(T, row, col)
        basis[row] = col
        rhs = T[:m, -1]
        rhs[(rhs < 0) & (rhs > -FEAS_TOL)] = 0.0
    raise LpNumericalError(f"simplex did not converge in {max_iterations} pivots")


def _dump(lp: LinearProgram):
    directory = os.environ.get(LP_DUMP_ENV)
    if not directory:
        return
    with _dump_lock:
        seq = next(_dump_counter)
    Path(directory).mkdir(parents=True, exist_ok=True)
    (Path(directory) / f"{lp.name}-{seq:06d}.lp").write_text(lp.to_lp_format(), encoding="utf-8")


def solve(lp: LinearProgram, max_iterations: Optional[int] = None) -> LpSolution:
    """Solve ``lp``; infeasibility and unboundedness come back as statuses.

    Raises:
        LpNumericalError: the pivots did not converge or the optimum violates a row.
    """
    _dump(lp)
    n = lp.num_variables
    lower = np.array(lp.lower, dtype=float)
    c = np.zeros(n)
    for i, v in lp.objective.items():
        c[i] = v

    rows: List[np.ndarray] = []
    rhs: List[float] = []
    senses: List[Sense] = []
    for con in lp.constraints:
        a = np.zeros(n)
        for i, v in con.coeffs.items():
            a[i] = v
        rows.append(a)
        rhs.append(con.rhs - float(a @ lower))
        senses.append(con.sense)
    for i, up in enumerate(lp.upper):
        if up is not None:
            a = np.zeros(n)
            a[i] = 1.0
            rows.append(a)
            rhs.append(up - lower[i])
            senses.append(Sense.LE)

    A_rows, b_vals, s_vals = [], [], []
    for a, b, s in zip(rows, rhs, senses):
        scale = np.abs(a).max() if n else 0.0
        if scale == 0.0:
            violated = (s == Sense.LE and b < -FEAS_TOL) or (s == Sense.GE and b > FEAS_TOL) or \
                (s == Sense.EQ and abs(b) > FEAS_TOL)
            if violated:
                return LpSolution(LpStatus.INFEASIBLE)
            continue
        a, b = a / scale, b / scale
        if b < 0:
            a, b = -a, -b
            s = {Sense.LE: Sense.GE, Sense.GE: Sense.LE, Sense.EQ: Sense.EQ}[s]
        A_rows.append(a)
        b_vals.append(b)
        s_vals.append(s)

    m = len(A_rows)
    n_slack = sum(1 for s in s_vals if s != Sense.EQ)
    n_art = sum(1 for s in s_vals if s != Sense.LE)
    art_start = n + n_slack
    width = art_start + n_art
    T = np.zeros((m + 1, width + 1))
    basis: List[int] = []
    slack_j, art_j = n, art_start
    for i, (a, b, s) in enumerate(zip(A_rows, b_vals, s_vals)):
        T[i, :n] = a
        T[i, -1] = b
        if s == Sense.LE:
            T[i, slack_j] = 1.0
            basis.append(slack_j)
            slack_j += 1
        elif s == Sense.GE:
            T[i, slack_j] = -1.0
            slack_j += 1
            T[i, art_j] = 1.0
            basis.append(art_j)
            art_j += 1
        else:
            T[i, art_j] = 1.0
            basis.append(art_j)
            art_j += 1

    limit = max_iterations or max(1000, 50 * (m + width))
    iterations = 0

    if n_art:
        cost1 = np.zeros(width)
        cost1[art_start:] = 1.0
        T[-1] = _objective_row(T, basis, cost1)
        status, it = _simplex(T, basis, width, limit)
        iterations += it
        if -T[-1, -1] > FEAS_TOL * max(1.0, float(np.sum(b_vals))):
            return LpSolution(LpStatus.INFEASIBLE, iterations=iterations)
        # drive artificials out of the basis, dropping redundant rows
        i = 0
        while i < len(basis):
            if basis[i] >= art_start:
                candidates = np.abs(T[i, :art_start])
                j = int(np.argmax(candidates)) if art_start else 0
                if art_start and candidates[j] > PIVOT_TOL:
                    _pivot(T, i, j)
                    basis[i] = j
                else:
                    T = np.delete(T, i, axis=0)
                    del basis[i]
                    continue
            i += 1
        T = np.hstack([T[:, :art_start], T[:, -1:]])
        T[:-1, -1] = np.maximum(T[:-1, -1], 0.0)

    width = art_start
    cost2 = np.zeros(width)
    cscale = np.abs(c).max() if n else 0.0
    if cscale > 0:
        cost2[:n] = (-c if lp.maximize else c) / cscale
    T[-1] = _objective_row(T, basis, cost2)
    status, it = _simplex(T, basis, width, limit)
    iterations += it
    if status == LpStatus.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, iterations=iterations)

    x = np.zeros(width)
    for i, b in enumerate(basis):
        x[b] = T[i, -1]
    values = np.maximum(x[:n], 0.0) + lower
    _verify(lp, values)
    return LpSolution(LpStatus.OPTIMAL, float(c @ values), values, iterations)


def _verify(lp: LinearProgram, values: np.ndarray):
    for con in lp.constraints:
        lhs = sum(v * values[i] for i, v in con.coeffs.items())
        scale = max([1.0, abs(con.rhs)] + [abs(v) for v in con.coeffs.values()])
        gap = (lhs - con.rhs) / scale
        if (con.sense == Sense.LE and gap > CHECK_TOL) or (con.sense == Sense.GE and gap < -CHECK_TOL) or \
                (con.sense == Sense.EQ and abs(gap) > CHECK_TOL):
            raise LpNumericalError(f"{lp.name}: row {con.name} violated by {gap:.3e} at the optimum")
