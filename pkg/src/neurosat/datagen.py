"""Paired sat/unsat problem generators (SR and SRC) and the small unsat cores.

Every pair is drawn from its own RNG stream keyed by ``(seed, pair_index)``,
so datasets are identical whatever the worker count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .cnf import CnfFormula, eval_formula, write_dimacs
from .solver import brute_force, solve

MANIFEST_SCHEMA = 1
MAX_CLAUSES = 10_000


class GenerationOverflow(RuntimeError):
    pass


@dataclass(frozen=True)
class GenConfig:
    n_min: int = 10
    n_max: int = 40
    seed: int = 0
    bernoulli_p: float = 0.3
    geometric_p: float = 0.4
    clause_base: int = 2

    def __post_init__(self):
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        for p in (self.bernoulli_p, self.geometric_p):
            if not 0 < p < 1:
                raise ValueError("probabilities must lie in (0, 1)")


@dataclass(frozen=True)
class SamplePair:
    sat_problem: CnfFormula
    unsat_problem: CnfFormula
    flipped: tuple[int, int]
    n_vars: int
    core_name: str | None = None
    core_indices: tuple[int, ...] = ()
    # SRC only: site negated in the final sampled clause of both members
    last_flip: tuple[int, int] | None = None


@dataclass(frozen=True)
class UnsatCore:
    name: str
    n_vars: int
    clauses: tuple[tuple[int, ...], ...]
    weakened: tuple[tuple[int, ...], ...]
    weakened_site: tuple[int, int]


def pair_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def sample_clause(n: int, rng: np.random.Generator, cfg: GenConfig = GenConfig()) -> tuple[int, ...]:
    # numpy's geometric counts trials to first success: support {1, 2, ...}
    k = cfg.clause_base + int(rng.binomial(1, cfg.bernoulli_p)) + int(rng.geometric(cfg.geometric_p))
    k = min(k, n)
    vs = rng.choice(n, size=k, replace=False) + 1
    neg = rng.random(k) < 0.5
    return tuple(int(-v if s else v) for v, s in zip(vs, neg))


def _grow_until_unsat(n: int, clauses: list[tuple[int, ...]], rng, cfg: GenConfig) -> None:
    model = solve(CnfFormula(n, clauses)).assignment
    if model is None:
        raise ValueError("starting clauses are already unsatisfiable")
    while True:
        if len(clauses) >= MAX_CLAUSES:
            raise GenerationOverflow(f"no unsat problem after {MAX_CLAUSES} clauses")
        c = sample_clause(n, rng, cfg)
        clauses.append(c)
        # a model of the prefix that also satisfies c witnesses satisfiability
        if any(model[abs(l) - 1] == (l > 0) for l in c):
            continue
        res = solve(CnfFormula(n, clauses))
        if not res.sat:
            return
        model = res.assignment


def sample_sr_pair(n: int, rng: np.random.Generator, cfg: GenConfig = GenConfig()) -> SamplePair:
    if n < 2:
        raise ValueError("SR(n) needs n >= 2")
    clauses: list[tuple[int, ...]] = []
    _grow_until_unsat(n, clauses, rng, cfg)
    unsat = CnfFormula(n, clauses)
    last = clauses[-1]
    pos = int(rng.integers(len(last)))
    flipped_clause = tuple(-l if i == pos else l for i, l in enumerate(last))
    sat = unsat.replace_clause(len(clauses) - 1, flipped_clause)
    if not solve(sat).sat:
        raise AssertionError("negated final clause did not yield a satisfiable problem")
    return SamplePair(sat, unsat, (len(clauses) - 1, pos), n)


def pigeonhole(pigeons: int, holes: int) -> CnfFormula:
    """Pigeon i in hole j is variable (i - 1) * holes + j."""
    if pigeons < 1 or holes < 1:
        raise ValueError("need at least one pigeon and one hole")

    def x(i, j):
        return i * holes + j + 1

    clauses = [tuple(x(i, j) for j in range(holes)) for i in range(pigeons)]
    for j in range(holes):
        for i in range(pigeons):
            for i2 in range(i + 1, pigeons):
                clauses.append((-x(i, j), -x(i2, j)))
    return CnfFormula(pigeons * holes, clauses)


# Knuth, TAOCP 4B, 7.2.2.2 eq. (7): the eight three-literal clauses on four variables
_KNUTH_R = (
    (1, 2, -3), (2, 3, -4), (3, 4, 1), (4, -1, 2),
    (-1, -2, 3), (-2, -3, 4), (-3, -4, -1), (-4, 1, -2),
)


def _make_core(name: str, f: CnfFormula) -> UnsatCore:
    if brute_force(f).sat:
        raise AssertionError(f"core {name} is satisfiable")
    for j, c in enumerate(f.clauses):
        for p in range(len(c)):
            w = f.replace_clause(j, tuple(-l if i == p else l for i, l in enumerate(c)))
            if brute_force(w).sat:
                return UnsatCore(name, f.n_vars, f.clauses, w.clauses, (j, p))
    raise AssertionError(f"no single negation makes core {name} satisfiable")


def knuth_core_r() -> UnsatCore:
    return _make_core("r", CnfFormula(4, _KNUTH_R))


def pigeonhole_core(pigeons: int, holes: int) -> UnsatCore:
    return _make_core(f"pp{pigeons}{holes}", pigeonhole(pigeons, holes))


def get_core(name: str) -> UnsatCore:
    name = name.lower()
    if name == "r":
        return knuth_core_r()
    if name == "pp21":
        return pigeonhole_core(2, 1)
    if name == "pp32":
        return pigeonhole_core(3, 2)
    raise ValueError(f"unknown core {name!r} (expected r, pp21 or pp32)")


CORE_NAMES = ("r", "pp21", "pp32")


def sample_src_pair(n: int, core: UnsatCore, rng: np.random.Generator, cfg: GenConfig = GenConfig()) -> SamplePair:
    if n <= core.n_vars:
        raise ValueError(f"SRC needs n > {core.n_vars} for core {core.name}")
    k = len(core.clauses)
    clauses = list(core.weakened)
    _grow_until_unsat(n, clauses, rng, cfg)
    last = clauses[-1]
    pos = int(rng.integers(len(last)))
    clauses[-1] = tuple(-l if i == pos else l for i, l in enumerate(last))
    p_s = CnfFormula(n, clauses)
    p_u = CnfFormula(n, list(core.clauses) + clauses[k:])
    if not solve(p_s).sat or solve(p_u).sat:
        raise AssertionError("SRC pair failed its labels")
    return SamplePair(
        p_s, p_u, core.weakened_site, n,
        core_name=core.name, core_indices=tuple(range(k)), last_flip=(len(clauses) - 1, pos),
    )


# --- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSpec:
    kind: str  # "sr" or "src"
    n_min: int
    n_max: int
    pairs: int
    seed: int
    cores: tuple[str, ...] = CORE_NAMES


def _gen_one(args) -> SamplePair:
    spec, idx = args
    rng = pair_rng(spec.seed, idx)
    n = int(rng.integers(spec.n_min, spec.n_max + 1))
    if spec.kind == "sr":
        return sample_sr_pair(n, rng)
    core = get_core(spec.cores[int(rng.integers(len(spec.cores)))])
    return sample_src_pair(max(n, core.n_vars + 1), core, rng)


def generate_pairs(spec: DatasetSpec, workers: int = 1) -> Iterator[SamplePair]:
    """Yield pairs in index order, fanning generation out to ``workers`` processes."""
    jobs = ((spec, i) for i in range(spec.pairs))
    if workers <= 1:
        yield from map(_gen_one, jobs)
        return
    with ProcessPoolExecutor(workers) as ex:
        yield from ex.map(_gen_one, jobs, chunksize=16)


def write_dataset(pairs: Sequence[SamplePair] | Iterator[SamplePair], out: str | os.PathLike, extra: dict | None = None) -> Path:
    """Write DIMACS files plus ``manifest.jsonl``; returns the manifest path."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for pid, pair in enumerate(pairs):
        for label, f in ((1, pair.sat_problem), (0, pair.unsat_problem)):
            name = f"pair{pid:06d}_{'sat' if label else 'unsat'}.cnf"
            (out / name).write_bytes(write_dimacs(f))
            rec = {
                "schema": MANIFEST_SCHEMA,
                "file": name,
                "label": label,
                "n": f.n_vars,
                "m": f.n_clauses,
                "pair_id": pid,
                "flipped": list(pair.flipped),
            }
            if pair.core_name is not None:
                rec["core"] = pair.core_name
                rec["core_indices"] = list(pair.core_indices)
                rec["last_flip"] = list(pair.last_flip)
            if extra:
                rec.update(extra)
            records.append(rec)
    return write_manifest(out, records)


def write_manifest(out: Path, records: list[dict]) -> Path:
    path = Path(out) / "manifest.jsonl"
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


def read_manifest(path: str | os.PathLike) -> tuple[Path, list[dict]]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.jsonl"
    with open(path, encoding="ascii") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    for r in records:
        if r.get("schema") != MANIFEST_SCHEMA:
            raise ValueError(f"{path}: unsupported manifest schema {r.get('schema')!r}")
    return path.parent, records


def load_dataset(path: str | os.PathLike) -> list[tuple[CnfFormula, int, dict]]:
    from .cnf import parse_dimacs

    root, records = read_manifest(path)
    return [(parse_dimacs((root / r["file"]).read_bytes()), int(r["label"]), r) for r in records]
