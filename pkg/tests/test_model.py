import json

import numpy as np
import pytest

from conftest import random_formula

from neurosat.cnf import CnfFormula, negate_var, permute_vars
from neurosat.datagen import DatasetSpec, generate_pairs
from neurosat.model import (
    Batch,
    BatchTooLarge,
    ModelConfig,
    TrainConfig,
    init_params,
    load_model,
    loss_and_grads,
    make_batches,
    model_config,
    predict,
    predict_batch,
    train,
)


@pytest.fixture(scope="module")
def params():
    return init_params(ModelConfig(d=8), seed=3)


def test_param_count():
    # 2d inits + 2 message MLPs + vote MLP + clause LSTM (in d) + literal LSTM (in 2d)
    d = 16
    mlp = 4 * (d * d + d)
    vote = 3 * (d * d + d) + d + 1
    lstm = lambda din: din * 4 * d + d * 4 * d + 8 * d + 2 * d  # noqa: E731
    assert init_params(ModelConfig()).n_params() == 2 * d + 2 * mlp + vote + lstm(d) + lstm(2 * d) == 8481
    assert model_config(init_params(ModelConfig(d=8, mlp_hidden_layers=2))) == ModelConfig(8, 2)


def test_batch_layout():
    b = Batch([CnfFormula(2, [(1, -2)]), CnfFormula(3, [(-3,), (2, 3)])])
    assert b.total_vars == 5 and b.total_clauses == 3 and b.n_nodes == 13
    dense = b.M.toarray()
    # rows: x1 x2 | y1 y2 y3 | -x1 -x2 | -y1 -y2 -y3
    assert dense[0, 0] == 1 and dense[6, 0] == 1
    assert dense[9, 1] == 1 and dense[3, 2] == 1 and dense[4, 2] == 1
    assert dense.sum() == 5
    assert list(b.literal_rows(1)) == [2, 3, 4, 7, 8, 9]
    assert list(b.lit_seg) == [0, 0, 1, 1, 1, 0, 0, 1, 1, 1]


def test_batched_equals_single(params, rng):
    fs = [random_formula(rng, n_max=6, m_max=12) for _ in range(6)]
    fs = [f for f in fs if f.n_vars > 0]
    joint = predict_batch(fs, params, 4)
    single = np.array([predict(f, params, 4).logit for f in fs])
    assert np.allclose(joint, single, rtol=1e-10, atol=1e-12)


def test_invariances(params, rng):
    for _ in range(10):
        f = random_formula(rng, n_max=7, m_max=20)
        base = predict(f, params, 3).logit
        perm = rng.permutation(f.n_vars)
        clause_perm = CnfFormula(f.n_vars, [f.clauses[i] for i in rng.permutation(f.n_clauses)])
        for g in (permute_vars(f, perm), clause_perm, negate_var(f, int(rng.integers(1, f.n_vars + 1)))):
            assert abs(predict(g, params, 3).logit - base) <= 1e-9 * max(1.0, abs(base))


def test_predict_records(params):
    f = CnfFormula(3, [(1, 2), (-1, 3)])
    p = predict(f, params, 5, record=True, record_embeddings=True)
    assert len(p.votes) == 5 and p.votes[0].shape == (6,)
    assert len(p.embeddings) == 5 and p.embeddings[-1].shape == (6, 8)
    assert np.array_equal(p.final_L, p.embeddings[-1])
    assert abs(p.logit - p.votes[-1].mean()) < 1e-12
    with pytest.raises(ValueError):
        predict(f, params, 0)


def test_make_batches_budget():
    fs = [(CnfFormula(3, [(1,)] * k), 0) for k in (1, 2, 3, 4)]
    bs = make_batches(fs, 15)
    assert [len(b) for b in bs] == [2, 1, 1]
    assert sum(bs, []) == fs
    with pytest.raises(BatchTooLarge):
        make_batches([(CnfFormula(10, [(1,)]), 0)], 15)


def test_loss_and_grads_budget(params):
    f = CnfFormula(5, [(1, 2)])
    with pytest.raises(BatchTooLarge):
        loss_and_grads([(f, 1)], params, 1, node_budget=5)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(n_min=5, n_max=4)


def test_train_deterministic(tmp_path):
    pairs = list(generate_pairs(DatasetSpec("sr", 3, 5, 8, seed=0)))
    cfg = TrainConfig(d=4, T=2, node_budget=200, epochs=2, eval_every=3, lr=1e-3)
    held = [(pairs[0].sat_problem, 1), (pairs[0].unsat_problem, 0)]
    for run in ("a", "b"):
        train(cfg, pairs, tmp_path / run, held)
    for name in ("metrics.jsonl", "final.nsat"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = [json.loads(l) for l in (tmp_path / "a" / "metrics.jsonl").read_text().splitlines()]
    assert {"step", "loss", "accuracy", "grad_norm"} <= set(rows[0])
    assert all("eval_accuracy" in r for r in rows if r["step"] % 3 == 0)
    assert all("wallclock" not in r for r in rows)
    assert len((tmp_path / "a" / "timing.jsonl").read_text().splitlines()) == len(rows)
    params, hyper = load_model(tmp_path / "a" / "final.nsat")
    assert hyper["d"] == 4 and params.step == rows[-1]["step"]
