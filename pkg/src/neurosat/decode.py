"""Turning a trained classifier into a solver: assignment and unsat-core decoding."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import ParamTree
from .cnf import CnfFormula
from .model import Batch, run, vote
from .solver import check


@dataclass
class ClusterResult:
    centers: np.ndarray  # [2, d]
    labels: np.ndarray  # [r], values in {0, 1}
    sse: list[float] = field(default_factory=list)  # objective after every sweep

    @property
    def sizes(self) -> tuple[int, int]:
        k1 = int(self.labels.sum())
        return len(self.labels) - k1, k1


def _assign(rows: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, float]:
    d0 = ((rows - centers[0]) ** 2).sum(axis=1)
    d1 = ((rows - centers[1]) ** 2).sum(axis=1)
    labels = (d1 < d0).astype(np.int64)
    return labels, float(np.where(labels == 1, d1, d0).sum())


def kmeans2(rows: np.ndarray, seed: int = 0, max_sweeps: int = 100, tol: float = 1e-9) -> ClusterResult:
    """Lloyd's algorithm with k = 2 and farthest-pair initialization.

    The first center is the row of largest norm, the second the row farthest
    from it; ties go to the lower row index.  Initialization is fully
    deterministic, so ``seed`` is accepted for interface symmetry only.
    Rows equidistant from both centers join cluster 0.  An emptied cluster
    keeps its previous center.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError("kmeans2 needs at least two rows")
    first = int(np.argmax((rows**2).sum(axis=1)))
    second = int(np.argmax(((rows - rows[first]) ** 2).sum(axis=1)))
    centers = np.stack([rows[first], rows[second]])
    labels, sse = _assign(rows, centers)
    history = [sse]
    for _ in range(max_sweeps):
        new = centers.copy()
        for k in (0, 1):
            members = rows[labels == k]
            if len(members):
                new[k] = members.mean(axis=0)
        moved = float(np.abs(new - centers).max())
        centers = new
        labels, sse = _assign(rows, centers)
        history.append(sse)
        if moved < tol:
            break
    return ClusterResult(centers, labels, history)


def partition(L: np.ndarray, c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    """Variables whose literal pair sits closer to (c1, c2) than to (c2, c1); ties count as closer."""
    n = L.shape[0] // 2
    pos, neg = L[:n], L[n:]

    def d(a, c):
        return ((a - c) ** 2).sum(axis=1)

    return d(pos, c1) + d(neg, c2) <= d(pos, c2) + d(neg, c1)


def decode_assignments(L: np.ndarray, seed: int = 0) -> tuple[tuple[bool, ...], tuple[bool, ...]]:
    """Cluster the literal embeddings and return both candidate assignments.

    Candidate A sets the variables on the first center's side true,
    candidate B is its complement.
    """
    if L.shape[0] % 2:
        raise ValueError("literal matrix needs an even number of rows")
    cl = kmeans2(L, seed)
    part = partition(L, cl.centers[0], cl.centers[1])
    a = tuple(bool(x) for x in part)
    return a, tuple(not x for x in a)


def decode_from_votes(votes: np.ndarray) -> tuple[bool, ...]:
    """Diagnostic read-off: x_i is true when its positive literal out-votes its negation."""
    n = len(votes) // 2
    return tuple(bool(x) for x in votes[:n] > votes[n:])


@dataclass
class SolveAttempt:
    solved: bool
    assignment: tuple[bool, ...] | None
    iterations_used: int
    logit_trace: list[float] = field(default_factory=list)


def solve_batch_with_model(
    formulas: Sequence[CnfFormula],
    params: ParamTree,
    t_max: int,
    decode_every: int = 1,
    decode_at_end: bool = False,
    from_votes: bool = False,
    seed: int = 0,
) -> list[SolveAttempt]:
    """Run message passing on all formulas at once and try to decode each one.

    Every ``decode_every`` iterations (or only at ``t_max`` when
    ``decode_at_end``) both clustering candidates are checked; the first one
    that satisfies the formula is kept.  A problem that is never decoded ends
    up unsolved after ``t_max`` iterations; unsatisfiability is never claimed.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    batch = Batch(formulas)
    attempts = [SolveAttempt(False, None, t_max) for _ in formulas]
    rows = [batch.literal_rows(p) for p in range(len(formulas))]

    def on_step(t, state, tape):
        votes, logits = vote(tape, state, batch, params)
        flat_votes = votes.data.reshape(-1)
        due = t == t_max if decode_at_end else (t % decode_every == 0 or t == t_max)
        for p, f in enumerate(formulas):
            att = attempts[p]
            att.logit_trace.append(float(logits.data[p]))
            if att.solved or not due:
                continue
            if from_votes:
                cands = [decode_from_votes(flat_votes[rows[p]])]
            else:
                cands = decode_assignments(state.L.data[rows[p]], seed)
            for cand in cands:
                if check(f, cand):
                    att.solved, att.assignment, att.iterations_used = True, cand, t
                    break
        return False

    run(batch, params, t_max, on_step)
    return attempts


def solve_with_model(f: CnfFormula, params: ParamTree, t_max: int, decode_every: int = 1, **kw) -> SolveAttempt:
    return solve_batch_with_model([f], params, t_max, decode_every, **kw)[0]


@dataclass
class CoreDecode:
    literals: frozenset[int]  # literal row indices
    ambiguous: bool


def decode_core_literals(L: np.ndarray, seed: int = 0) -> CoreDecode:
    """The smaller of the two embedding clusters; equal sizes pick row 0's cluster and flag it."""
    if L.shape[0] < 2:
        raise ValueError("need at least two literal rows")
    cl = kmeans2(L, seed)
    n0, n1 = cl.sizes
    if n0 == n1:
        k, amb = int(cl.labels[0]), True
    else:
        k, amb = (0 if n0 < n1 else 1), False
    return CoreDecode(frozenset(int(i) for i in np.flatnonzero(cl.labels == k)), amb)
