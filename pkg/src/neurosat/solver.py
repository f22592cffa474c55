"""Complete DPLL solver used to label data and verify decoded assignments.

Iterative DPLL: two-watched-literal unit propagation, a static branching
order (most occurrences first, ties to the lower index), true branch first,
chronological backtracking.  No clause learning and no pure-literal rule, so
the statistics are a deterministic function of the formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cnf import CnfFormula, eval_formula


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class SolveStats:
    decisions: int = 0
    propagations: int = 0
    conflicts: int = 0


@dataclass
class SolveResult:
    sat: bool
    assignment: tuple[bool, ...] | None = None
    stats: SolveStats = field(default_factory=SolveStats)

    def __bool__(self) -> bool:
        return self.sat


def check(f: CnfFormula, assignment: Sequence[bool]) -> bool:
    return eval_formula(f, assignment)


class _Dpll:
    def __init__(self, f: CnfFormula):
        n = self.n = f.n_vars
        self.litval = [0] * (2 * n + 1)  # indexed by lit + n
        self.watches: list[list[int]] = [[] for _ in range(2 * n + 1)]
        self.clauses: list[list[int]] = []
        self.units: list[int] = []
        self.has_empty = False
        counts = [0] * (n + 1)
        for c in f.clauses:
            lits = list(dict.fromkeys(c))
            for l in lits:
                counts[abs(l)] += 1
            s = set(lits)
            if any(-l in s for l in lits):
                continue
            if not lits:
                self.has_empty = True
            elif len(lits) == 1:
                self.units.append(lits[0])
            else:
                ci = len(self.clauses)
                self.clauses.append(lits)
                self.watches[lits[0] + n].append(ci)
                self.watches[lits[1] + n].append(ci)
        self.order = sorted(range(1, n + 1), key=lambda v: (-counts[v], v))
        self.rank = [0] * (n + 1)
        for r, v in enumerate(self.order):
            self.rank[v] = r
        self.order_pos = 0
        self.trail: list[int] = []
        self.qhead = 0
        self.stats = SolveStats()

    def _assign(self, lit: int) -> bool:
        n = self.n
        v = self.litval[lit + n]
        if v:
            return v > 0
        self.litval[lit + n] = 1
        self.litval[n - lit] = -1
        self.trail.append(lit)
        return True

    def _undo(self, pos: int) -> None:
        n = self.n
        trail = self.trail
        litval = self.litval
        low = self.order_pos
        rank = self.rank
        while len(trail) > pos:
            lit = trail.pop()
            litval[lit + n] = 0
            litval[n - lit] = 0
            r = rank[abs(lit)]
            if r < low:
                low = r
        self.order_pos = low
        self.qhead = pos

    def _propagate(self) -> bool:
        n = self.n
        trail = self.trail
        litval = self.litval
        watches = self.watches
        clauses = self.clauses
        stats = self.stats
        while self.qhead < len(trail):
            false_lit = -trail[self.qhead]
            self.qhead += 1
            wl = watches[false_lit + n]
            i = 0
            end = len(wl)
            while i < end:
                ci = wl[i]
                c = clauses[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                first = c[0]
                if litval[first + n] > 0:
                    i += 1
                    continue
                for k in range(2, len(c)):
                    if litval[c[k] + n] >= 0:
                        c[1], c[k] = c[k], c[1]
                        watches[c[1] + n].append(ci)
                        end -= 1
                        wl[i] = wl[end]
                        wl.pop()
                        break
                else:
                    if litval[first + n] < 0:
                        return False
                    litval[first + n] = 1
                    litval[n - first] = -1
                    trail.append(first)
                    stats.propagations += 1
                    i += 1
        return True

    def _pick(self) -> int | None:
        n = self.n
        order = self.order
        litval = self.litval
        pos = self.order_pos
        while pos < n and litval[order[pos] + n] != 0:
            pos += 1
        self.order_pos = pos
        return order[pos] if pos < n else None

    def solve(self, max_conflicts: int | None = None) -> SolveResult:
        stats = self.stats
        if self.has_empty:
            return SolveResult(False, None, stats)
        for u in self.units:
            if not self._assign(u):
                return SolveResult(False, None, stats)
            stats.propagations += 1
        stack: list[tuple[int, bool, int]] = []
        while True:
            if not self._propagate():
                stats.conflicts += 1
                if max_conflicts is not None and stats.conflicts > max_conflicts:
                    raise BudgetExceeded(f"conflict limit {max_conflicts} exceeded")
                while stack:
                    lit, flipped, pos = stack.pop()
                    self._undo(pos)
                    if not flipped:
                        stack.append((-lit, True, pos))
                        self._assign(-lit)
                        break
                else:
                    return SolveResult(False, None, stats)
                continue
            v = self._pick()
            if v is None:
                n = self.n
                values = tuple(self.litval[v + n] > 0 for v in range(1, n + 1))
                return SolveResult(True, values, stats)
            stats.decisions += 1
            stack.append((v, False, len(self.trail)))
            self._assign(v)


def solve(f: CnfFormula, max_conflicts: int | None = None) -> SolveResult:
    """Decide ``f``. Raises :class:`BudgetExceeded` past ``max_conflicts`` conflicts."""
    return _Dpll(f).solve(max_conflicts)


def brute_force(f: CnfFormula, chunk_bits: int = 16) -> SolveResult:
    """Exhaustive check over all 2^n assignments (n <= 24).

    Assignments are enumerated as integers k with x_v = bit (v - 1) of k; the
    first satisfying one is returned.
    """
    n = f.n_vars
    if n > 24:
        raise ValueError(f"brute_force supports at most 24 variables, got {n}")
    if any(len(c) == 0 for c in f.clauses):
        return SolveResult(False)
    total = 1 << n
    step = 1 << min(n, chunk_bits)
    shifts = np.arange(n, dtype=np.int64)
    for start in range(0, total, step):
        ks = np.arange(start, min(start + step, total), dtype=np.int64)
        bits = ((ks[:, None] >> shifts[None, :]) & 1).astype(bool)
        ok = np.ones(len(ks), dtype=bool)
        for c in f.clauses:
            sat_c = np.zeros(len(ks), dtype=bool)
            for lit in c:
                col = bits[:, abs(lit) - 1]
                sat_c |= col if lit > 0 else ~col
            ok &= sat_c
            if not ok.any():
                break
        hit = np.flatnonzero(ok)
        if hit.size:
            return SolveResult(True, tuple(bool(b) for b in bits[hit[0]]))
    return SolveResult(False)


def unit_propagate(f: CnfFormula) -> CnfFormula:
    """Residual formula after exhaustive unit propagation.

    Satisfied clauses are dropped and false literals deleted; a conflict yields
    a formula holding one empty clause.  The variable count is unchanged.
    """
    clauses = [list(dict.fromkeys(c)) for c in f.clauses]
    while True:
        unit = next((c[0] for c in clauses if len(c) == 1), None)
        if any(len(c) == 0 for c in clauses):
            return CnfFormula(f.n_vars, [()])
        if unit is None:
            return CnfFormula(f.n_vars, clauses)
        nxt = []
        for c in clauses:
            if unit in c:
                continue
            nxt.append([l for l in c if l != -unit])
        clauses = nxt
