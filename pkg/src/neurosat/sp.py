"""Survey Propagation with reinforcement, the learning-free baseline.

Surveys ``eta[a -> i]`` follow Braunstein-Mezard-Zecchina and are updated
asynchronously, clause by clause in a fresh random order every sweep.
Reinforcement gives every variable a fictitious unit clause pointing at its
current polarity; its survey strength ramps linearly from 0 to 1.  These
fields enter the clause updates, while each polarity follows the bias
computed from the real clauses alone (ties keep the old polarity).  The
assignment read off the polarities is checked after every sweep.  No
decimation.

Products of ``1 - eta`` are kept per (variable, sign) as a log-sum of the
nonzero factors plus a count of exact zeros, so removing one factor from a
product stays exact when surveys reach 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .cnf import CnfFormula
from .solver import check

_TINY = 1e-300


@dataclass
class SpResult:
    solved: bool
    assignment: tuple[bool, ...] | None
    sweeps: int
    max_residual: float
    converged: bool = False
    failure: str | None = None
    history: list[float] = field(default_factory=list)


@numba.njit(cache=True)
def _sweep(ptr, var, side, eta, order, pol, strength, damping, lg, zc):
    # rebuild the per-(sign, variable) products so drift never accumulates
    lg[:] = 0.0
    zc[:] = 0
    for e in range(var.shape[0]):
        f = 1.0 - eta[e]
        if f <= _TINY:
            zc[side[e], var[e]] += 1
        else:
            lg[side[e], var[e]] += math.log(f)
    ext = 1.0 - strength
    residual = 0.0
    r = np.empty(64)
    for a in order:
        s, t = ptr[a], ptr[a + 1]
        k = t - s
        if k > r.shape[0]:
            r = np.empty(2 * k)
        for q in range(k):
            e = s + q
            v, sd = var[e], side[e]
            f = 1.0 - eta[e]
            same_log, same_zero = lg[sd, v], zc[sd, v]
            if f <= _TINY:
                same_zero -= 1
            else:
                same_log -= math.log(f)
            p_same = 0.0 if same_zero > 0 else math.exp(same_log)
            p_opp = 0.0 if zc[1 - sd, v] > 0 else math.exp(lg[1 - sd, v])
            if pol[v] == 2 * sd - 1:
                p_same *= ext
            else:
                p_opp *= ext
            pi_u = (1.0 - p_opp) * p_same
            den = pi_u + (1.0 - p_same) * p_opp + p_same * p_opp
            r[q] = pi_u / den if den > 0.0 else 0.0
        for q in range(k):
            prod = 1.0
            for w in range(k):
                if w != q:
                    prod *= r[w]
            e = s + q
            new = min(1.0, damping * eta[e] + (1.0 - damping) * prod)
            residual = max(residual, abs(new - eta[e]))
            v, sd = var[e], side[e]
            f_old, f_new = 1.0 - eta[e], 1.0 - new
            if f_old <= _TINY:
                zc[sd, v] -= 1
            else:
                lg[sd, v] -= math.log(f_old)
            if f_new <= _TINY:
                zc[sd, v] += 1
            else:
                lg[sd, v] += math.log(f_new)
            eta[e] = new
    return residual


def _biases(n: int, var: np.ndarray, side: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = 1.0 - eta
    zero = f <= _TINY
    logs = np.log(np.where(zero, 1.0, f))
    prod = []
    for s in (0, 1):
        mask = side == s
        lg = np.bincount(var, logs * mask, n)
        zc = np.bincount(var, zero & mask, n)
        prod.append(np.where(zc > 0, 0.0, np.exp(lg)))
    p_neg, p_pos = prod
    return (1.0 - p_pos) * p_neg, (1.0 - p_neg) * p_pos


def sp_solve(
    f: CnfFormula,
    max_sweeps: int = 1000,
    tol: float = 1e-4,
    damping: float = 0.5,
    ramp_sweeps: int = 200,
    seed: int = 0,
) -> SpResult:
    """Run reinforced SP; ``solved`` only when the read-off assignment satisfies ``f``.

    ``ramp_sweeps`` is the number of sweeps over which the reinforcement
    strength rises from 0 to 1.  ``converged`` reports whether the last
    sweep moved no survey by more than ``tol``.
    """
    if max_sweeps < 1 or ramp_sweeps < 1 or not 0.0 <= damping < 1.0:
        raise ValueError("need max_sweeps >= 1, ramp_sweeps >= 1, 0 <= damping < 1")
    n = f.n_vars
    rng = np.random.default_rng(seed)
    lits = [lit for c in f.clauses for lit in c]
    var = np.array([abs(lit) - 1 for lit in lits], dtype=np.int64)
    side = np.array([lit > 0 for lit in lits], dtype=np.int64)
    ptr = np.zeros(f.n_clauses + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(c) for c in f.clauses])
    eta = rng.random(len(var))
    pol = np.where(rng.random(n) < 0.5, 1, -1).astype(np.int64)
    lg = np.zeros((2, n))
    zc = np.zeros((2, n), dtype=np.int64)
    history: list[float] = []
    residual = math.inf
    for t in range(1, max_sweeps + 1):
        order = rng.permutation(f.n_clauses).astype(np.int64)
        strength = min(1.0, t / ramp_sweeps)
        residual = float(_sweep(ptr, var, side, eta, order, pol, strength, damping, lg, zc))
        history.append(residual)
        if not np.isfinite(eta).all():
            return SpResult(False, None, t, residual, False, "non-finite survey", history)
        w_plus, w_minus = _biases(n, var, side, eta)
        pol = np.where(w_plus > w_minus, 1, np.where(w_minus > w_plus, -1, pol)).astype(np.int64)
        assignment = tuple(bool(x) for x in pol > 0)
        if check(f, assignment):
            return SpResult(True, assignment, t, residual, residual < tol, None, history)
    return SpResult(False, None, max_sweeps, residual, residual < tol, None, history)


def gen_random_ksat(n: int, m: int, k: int, seed: int | np.random.Generator) -> CnfFormula:
    """Uniform random k-SAT: k distinct variables per clause, fair signs."""
    if k > n:
        raise ValueError("k must not exceed n")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    clauses = []
    for _ in range(m):
        vs = rng.choice(n, size=k, replace=False) + 1
        neg = rng.random(k) < 0.5
        clauses.append(tuple(int(-v if s else v) for v, s in zip(vs, neg)))
    return CnfFormula(n, clauses)
