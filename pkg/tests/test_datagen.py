import numpy as np
import pytest

from oracles import naive_sat

from neurosat.cnf import CnfFormula
from neurosat.datagen import (
    CORE_NAMES,
    DatasetSpec,
    GenConfig,
    generate_pairs,
    get_core,
    load_dataset,
    pair_rng,
    pigeonhole,
    read_manifest,
    sample_clause,
    sample_sr_pair,
    sample_src_pair,
    write_dataset,
)
from neurosat.solver import brute_force


def clause_diff(f: CnfFormula, g: CnfFormula):
    assert f.n_clauses == g.n_clauses
    return [j for j, (a, b) in enumerate(zip(f.clauses, g.clauses)) if a != b]


def test_clause_length_distribution():
    rng = np.random.default_rng(0)
    ks = np.array([len(sample_clause(100, rng)) for _ in range(20_000)])
    assert ks.min() == 3
    # 2 + Bernoulli(0.3) + Geometric(0.4) on {1, 2, ...}: mean 2 + 0.3 + 2.5
    assert abs(ks.mean() - 4.8) < 0.05
    assert abs((ks == 3).mean() - 0.7 * 0.4) < 0.01


def test_clause_length_clamped_and_distinct():
    rng = np.random.default_rng(1)
    for _ in range(500):
        c = sample_clause(3, rng)
        assert len(c) == 3 and len({abs(l) for l in c}) == 3


def test_sr_pair_properties():
    for i in range(40):
        rng = pair_rng(7, i)
        n = int(rng.integers(3, 9))
        p = sample_sr_pair(n, rng)
        assert naive_sat(n, p.sat_problem.clauses)
        assert not naive_sat(n, p.unsat_problem.clauses)
        (j,) = clause_diff(p.sat_problem, p.unsat_problem)
        assert p.flipped[0] == j == p.unsat_problem.n_clauses - 1
        a, b = p.sat_problem.clauses[j], p.unsat_problem.clauses[j]
        diff = [q for q in range(len(a)) if a[q] != b[q]]
        assert diff == [p.flipped[1]] and a[diff[0]] == -b[diff[0]]
        # every proper prefix of the unsat member is satisfiable
        assert naive_sat(n, p.unsat_problem.clauses[:-1])


def test_sr_needs_two_vars():
    with pytest.raises(ValueError):
        sample_sr_pair(1, np.random.default_rng(0))


def test_pigeonhole_counts():
    assert pigeonhole(2, 1).n_clauses == 3
    assert pigeonhole(3, 2).n_clauses == 9
    assert pigeonhole(3, 2).n_vars == 6
    assert not brute_force(pigeonhole(4, 3)).sat
    assert brute_force(pigeonhole(3, 3)).sat


@pytest.mark.parametrize("name,n_vars,n_clauses", [("r", 4, 8), ("pp21", 2, 3), ("pp32", 6, 9)])
def test_cores(name, n_vars, n_clauses):
    core = get_core(name)
    assert core.n_vars == n_vars and len(core.clauses) == n_clauses
    assert not naive_sat(n_vars, core.clauses)
    assert naive_sat(n_vars, core.weakened)
    j, p = core.weakened_site
    assert core.weakened[j][p] == -core.clauses[j][p]


def test_knuth_r_every_clause_needed():
    core = get_core("r")
    for j in range(8):
        assert naive_sat(4, core.clauses[:j] + core.clauses[j + 1 :])


def test_unknown_core():
    with pytest.raises(ValueError):
        get_core("pp43")


@pytest.mark.parametrize("name", CORE_NAMES)
def test_src_pair(name):
    core = get_core(name)
    k = len(core.clauses)
    for i in range(10):
        p = sample_src_pair(core.n_vars + 4, core, pair_rng(3, i))
        n = p.n_vars
        assert naive_sat(n, p.sat_problem.clauses) and not naive_sat(n, p.unsat_problem.clauses)
        assert p.unsat_problem.clauses[:k] == core.clauses
        assert p.sat_problem.clauses[:k] == core.weakened
        assert p.sat_problem.clauses[k:] == p.unsat_problem.clauses[k:]
        assert clause_diff(p.sat_problem, p.unsat_problem) == [core.weakened_site[0]]
        assert p.core_indices == tuple(range(k))


def test_src_too_small():
    with pytest.raises(ValueError):
        sample_src_pair(6, get_core("pp32"), np.random.default_rng(0))


def test_gen_config_validation():
    with pytest.raises(ValueError):
        GenConfig(n_min=5, n_max=4)
    with pytest.raises(ValueError):
        GenConfig(bernoulli_p=1.0)


def test_worker_count_does_not_change_data():
    spec = DatasetSpec("sr", 5, 8, 12, seed=4)
    a = list(generate_pairs(spec, 1))
    b = list(generate_pairs(spec, 2))
    assert a == b


def test_write_and_load(tmp_path):
    pairs = list(generate_pairs(DatasetSpec("src", 8, 10, 4, seed=1)))
    path = write_dataset(pairs, tmp_path)
    root, recs = read_manifest(path)
    assert len(recs) == 8 and all(r["schema"] == 1 for r in recs)
    assert {r["label"] for r in recs} == {0, 1}
    assert all("core" in r and "last_flip" in r for r in recs)
    data = load_dataset(tmp_path)
    for (f, y, rec), pair in zip(data, [q for p in pairs for q in (p.sat_problem, p.unsat_problem)]):
        assert f == pair


def test_manifest_schema_checked(tmp_path):
    (tmp_path / "manifest.jsonl").write_text('{"schema": 2, "file": "x.cnf"}\n')
    with pytest.raises(ValueError):
        read_manifest(tmp_path)
