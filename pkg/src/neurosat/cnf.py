"""CNF formulas, DIMACS I/O and the literal/clause graph view.

Literals are signed DIMACS integers (``3`` is x3, ``-3`` is not-x3). Inside
matrices, literal ``x_i`` lives at row ``i - 1`` and ``-x_i`` at row
``n + i - 1`` so that negation is a half rotation of the rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class DimacsError(ValueError):
    pass


@dataclass(frozen=True, init=False)
class CnfFormula:
    n_vars: int
    clauses: tuple[tuple[int, ...], ...]

    def __init__(self, n_vars: int, clauses: Iterable[Iterable[int]] = ()):
        cls = tuple(tuple(int(l) for l in c) for c in clauses)
        if n_vars < 0:
            raise ValueError("n_vars must be non-negative")
        for c in cls:
            for lit in c:
                if lit == 0 or abs(lit) > n_vars:
                    raise ValueError(f"literal {lit} out of range for {n_vars} variables")
        object.__setattr__(self, "n_vars", int(n_vars))
        object.__setattr__(self, "clauses", cls)

    @property
    def n_clauses(self) -> int:
        return len(self.clauses)

    @property
    def n_lits(self) -> int:
        return 2 * self.n_vars

    def replace_clause(self, j: int, clause: Sequence[int]) -> "CnfFormula":
        cls = list(self.clauses)
        cls[j] = tuple(clause)
        return CnfFormula(self.n_vars, cls)

    def __repr__(self) -> str:
        body = ", ".join("|".join(str(l) for l in c) for c in self.clauses[:8])
        more = ", ..." if self.n_clauses > 8 else ""
        return f"CnfFormula(n={self.n_vars}, m={self.n_clauses}: {body}{more})"


def lit_index(lit: int, n_vars: int) -> int:
    """Row of ``lit`` in a 2n-row literal matrix."""
    v = abs(lit)
    if lit == 0 or v > n_vars:
        raise ValueError(f"literal {lit} out of range for {n_vars} variables")
    return v - 1 if lit > 0 else n_vars + v - 1


def index_lit(i: int, n_vars: int) -> int:
    if not 0 <= i < 2 * n_vars:
        raise ValueError(f"row {i} out of range for {n_vars} variables")
    return i + 1 if i < n_vars else -(i - n_vars + 1)


def parse_dimacs(text: bytes | str, strict: bool = False) -> CnfFormula:
    """Parse DIMACS CNF.

    Lenient mode (the default) drops repeated literals inside a clause, keeps
    tautological clauses, accepts a final clause without its ``0`` and grows
    ``n`` when a literal exceeds the header.  Strict mode rejects all of these
    and also a clause count that disagrees with the header.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii")
    header: tuple[int, int] | None = None
    clauses: list[tuple[int, ...]] = []
    current: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            # SATLIB end marker
            break
        if line.startswith("p"):
            parts = line.split()
            if header is not None:
                raise DimacsError(f"line {lineno}: duplicate header")
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: malformed header {line!r}")
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError:
                raise DimacsError(f"line {lineno}: malformed header {line!r}") from None
            if header[0] < 0 or header[1] < 0:
                raise DimacsError(f"line {lineno}: negative counts in header")
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause before header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"line {lineno}: bad token {tok!r}") from None
            if lit == 0:
                clauses.append(_finish_clause(current, strict, lineno))
                current = []
            else:
                current.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        if strict:
            raise DimacsError("last clause is not terminated by 0")
        clauses.append(_finish_clause(current, strict, -1))
    n, m = header
    top = max((abs(l) for c in clauses for l in c), default=0)
    if top > n:
        if strict:
            raise DimacsError(f"variable {top} exceeds header count {n}")
        log.warning("variable %d exceeds header count %d; growing n", top, n)
        n = top
    if len(clauses) != m:
        if strict:
            raise DimacsError(f"header says {m} clauses, found {len(clauses)}")
        log.warning("header says %d clauses, found %d", m, len(clauses))
    return CnfFormula(n, clauses)


def _finish_clause(lits: list[int], strict: bool, lineno: int) -> tuple[int, ...]:
    seen: set[int] = set()
    out = []
    for lit in lits:
        if lit in seen:
            if strict:
                raise DimacsError(f"line {lineno}: repeated literal {lit}")
            continue
        if -lit in seen and strict:
            raise DimacsError(f"line {lineno}: tautological clause")
        seen.add(lit)
        out.append(lit)
    return tuple(out)


def write_dimacs(f: CnfFormula) -> bytes:
    lines = [f"p cnf {f.n_vars} {f.n_clauses}"]
    lines.extend(" ".join([*map(str, c), "0"]) for c in f.clauses)
    return ("\n".join(lines) + "\n").encode("ascii")


def eval_formula(f: CnfFormula, assignment: Sequence[bool]) -> bool:
    if len(assignment) != f.n_vars:
        raise ValueError(f"assignment has {len(assignment)} values, formula has {f.n_vars} variables")
    for c in f.clauses:
        for lit in c:
            if bool(assignment[abs(lit) - 1]) == (lit > 0):
                break
        else:
            return False
    return True


@dataclass(frozen=True, eq=False)
class BipartiteAdjacency:
    """Sparse literal-by-clause incidence; entry (i, j) iff literal row i occurs in clause j."""

    n_lits: int
    n_clauses: int
    lit_idx: np.ndarray
    clause_idx: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.lit_idx)

    def entries(self) -> set[tuple[int, int]]:
        return set(zip(self.lit_idx.tolist(), self.clause_idx.tolist()))

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n_lits, self.n_clauses))
        out[self.lit_idx, self.clause_idx] = 1.0
        return out

    def csr(self) -> sp.csr_matrix:
        """M as CSR (rows = literals)."""
        return sp.csr_matrix(
            (np.ones(self.nnz), (self.lit_idx, self.clause_idx)),
            shape=(self.n_lits, self.n_clauses),
        )


def adjacency(f: CnfFormula) -> BipartiteAdjacency:
    n = f.n_vars
    pairs = sorted({(lit_index(l, n), j) for j, c in enumerate(f.clauses) for l in c}, key=lambda p: (p[1], p[0]))
    lit = np.array([p[0] for p in pairs], dtype=np.int64)
    cl = np.array([p[1] for p in pairs], dtype=np.int64)
    return BipartiteAdjacency(2 * n, f.n_clauses, lit, cl)


def flip_rows(rows: np.ndarray) -> np.ndarray:
    """Swap each literal row with the row of its negation."""
    r = rows.shape[0]
    if r % 2:
        raise ValueError("flip_rows needs an even number of rows")
    n = r // 2
    return np.concatenate([rows[n:], rows[:n]], axis=0)


def permute_vars(f: CnfFormula, perm: Sequence[int]) -> CnfFormula:
    """Rename variable ``v`` (1-based) to ``perm[v - 1] + 1``."""
    return CnfFormula(f.n_vars, [[(perm[abs(l) - 1] + 1) * (1 if l > 0 else -1) for l in c] for c in f.clauses])


def permute_lit_rows(rows: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    """Row-space image of :func:`permute_vars`: row of x_v moves to row of x_perm(v)."""
    n = rows.shape[0] // 2
    perm = np.asarray(perm)
    out = np.empty_like(rows)
    out[perm] = rows[:n]
    out[perm + n] = rows[n:]
    return out


def negate_var(f: CnfFormula, v: int) -> CnfFormula:
    return CnfFormula(f.n_vars, [[-l if abs(l) == v else l for l in c] for c in f.clauses])
