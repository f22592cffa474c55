"""NeuroSAT: literal/clause message passing with layer-norm LSTM updates and a vote readout.

LSTM convention: in each update the message bracket is the cell input, the
cell's hidden output ``h`` is the emitted embedding (``C`` or ``L``) and its
carried cell state ``c`` is what we store as ``C_h`` / ``L_h``.  The clause
update runs first and the literal update consumes the fresh clause
embeddings.

Several problems are batched as one disjoint graph.  Literal rows are laid
out as ``[positive literals of every problem; negative literals of every
problem]`` so a single half rotation implements Flip across the whole batch.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .autodiff import (
    ParamTree,
    Tape,
    Tensor,
    adam_step,
    clip_global_norm,
    init_lstm,
    init_mlp,
    load_checkpoint,
    lstm_cell,
    mlp_forward,
    save_checkpoint,
)
from .cnf import CnfFormula

log = logging.getLogger(__name__)

REFERENCE_LR = 2e-5


class BatchTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d: int = 16
    mlp_hidden_layers: int = 3


def init_params(cfg: ModelConfig, seed: int = 0) -> ParamTree:
    rng = np.random.default_rng(seed)
    d = cfg.d
    p = ParamTree()
    p.add("l_init", rng.normal(0.0, 1.0 / np.sqrt(d), size=d))
    p.add("c_init", rng.normal(0.0, 1.0 / np.sqrt(d), size=d))
    init_mlp(p, "l_msg", d, d, d, cfg.mlp_hidden_layers, rng)
    init_mlp(p, "c_msg", d, d, d, cfg.mlp_hidden_layers, rng)
    init_mlp(p, "l_vote", d, d, 1, cfg.mlp_hidden_layers, rng)
    init_lstm(p, "c_update", d, d, rng)
    init_lstm(p, "l_update", 2 * d, d, rng)
    return p


def model_config(params: ParamTree) -> ModelConfig:
    d = params["l_init"].shape[0]
    layers = sum(1 for k in params if k.startswith("l_msg.w")) - 1
    return ModelConfig(d=d, mlp_hidden_layers=layers)


class Batch:
    """Disjoint union of several formulas as one literal/clause graph."""

    def __init__(self, formulas: Sequence[CnfFormula]):
        if not formulas:
            raise ValueError("empty batch")
        self.formulas = list(formulas)
        ns = np.array([f.n_vars for f in formulas])
        ms = np.array([f.n_clauses for f in formulas])
        if np.any(ns < 1):
            raise ValueError("every formula needs at least one variable")
        self.n_vars = ns
        self.n_clauses = ms
        self.var_off = np.concatenate([[0], np.cumsum(ns)[:-1]])
        self.clause_off = np.concatenate([[0], np.cumsum(ms)[:-1]])
        N = self.total_vars = int(ns.sum())
        self.total_clauses = int(ms.sum())
        rows, cols = [], []
        for p, f in enumerate(formulas):
            vo, co = int(self.var_off[p]), int(self.clause_off[p])
            for j, c in enumerate(f.clauses):
                for lit in set(c):
                    v = abs(lit) - 1 + vo
                    rows.append(v if lit > 0 else N + v)
                    cols.append(co + j)
        data = np.ones(len(rows))
        self.M = sp.csr_matrix((data, (rows, cols)), shape=(2 * N, self.total_clauses))
        self.MT = self.M.T.tocsr()
        self.M.sort_indices()
        self.MT.sort_indices()
        seg = np.repeat(np.arange(len(formulas)), ns)
        self.lit_seg = np.concatenate([seg, seg])

    @property
    def n_problems(self) -> int:
        return len(self.formulas)

    @property
    def n_nodes(self) -> int:
        return 2 * self.total_vars + self.total_clauses

    def literal_rows(self, p: int) -> np.ndarray:
        """Batch rows of problem ``p``'s literals in that problem's own ``lit_index`` order."""
        vo, n = int(self.var_off[p]), int(self.n_vars[p])
        pos = np.arange(vo, vo + n)
        return np.concatenate([pos, pos + self.total_vars])


@dataclass
class MessageState:
    L: Tensor
    C: Tensor
    L_h: Tensor
    C_h: Tensor
    t: int = 0


def init_state(tape: Tape, batch: Batch, params: ParamTree) -> MessageState:
    d = params["l_init"].shape[0]
    return MessageState(
        L=tape.tile(params["l_init"], 2 * batch.total_vars),
        C=tape.tile(params["c_init"], batch.total_clauses),
        L_h=Tensor(np.zeros((2 * batch.total_vars, d))),
        C_h=Tensor(np.zeros((batch.total_clauses, d))),
    )


def iterate(tape: Tape, state: MessageState, batch: Batch, params: ParamTree) -> MessageState:
    l_msg = mlp_forward(tape, params.subtree("l_msg"), state.L)
    c_in = tape.spmm(batch.MT, l_msg, batch.M)
    C, C_h = lstm_cell(tape, params.subtree("c_update"), c_in, state.C, state.C_h)
    c_msg = mlp_forward(tape, params.subtree("c_msg"), C)
    l_in = tape.concat_cols([tape.flip(state.L), tape.spmm(batch.M, c_msg, batch.MT)])
    L, L_h = lstm_cell(tape, params.subtree("l_update"), l_in, state.L, state.L_h)
    return MessageState(L, C, L_h, C_h, state.t + 1)


def vote(tape: Tape, state: MessageState, batch: Batch, params: ParamTree) -> tuple[Tensor, Tensor]:
    """Per-literal votes ``[2N, 1]`` and per-problem mean-vote logits ``[P]``."""
    votes = mlp_forward(tape, params.subtree("l_vote"), state.L)
    return votes, tape.segment_mean(votes, batch.lit_seg, batch.n_problems)


@dataclass
class Prediction:
    logit: float
    votes: list[np.ndarray] = field(default_factory=list)  # per iteration, each [2n]
    embeddings: list[np.ndarray] = field(default_factory=list)  # per iteration, each [2n, d]
    final_L: np.ndarray | None = None


def run(batch: Batch, params: ParamTree, T: int, on_step: Callable[[int, MessageState, Tape], bool] | None = None) -> tuple[MessageState, Tape]:
    """Inference-only message passing; ``on_step(t, state, tape)`` may return True to stop early."""
    tape = Tape(grad=False)
    state = init_state(tape, batch, params)
    for _ in range(T):
        state = iterate(tape, state, batch, params)
        if on_step is not None and on_step(state.t, state, tape):
            break
    return state, tape


def predict(f: CnfFormula, params: ParamTree, T: int, record: bool = False, record_embeddings: bool = False) -> Prediction:
    if T < 1:
        raise ValueError("T must be >= 1")
    batch = Batch([f])
    votes_hist: list[np.ndarray] = []
    emb_hist: list[np.ndarray] = []

    def on_step(t, state, tape):
        if record:
            v, _ = vote(tape, state, batch, params)
            votes_hist.append(v.data.reshape(-1).copy())
        if record_embeddings:
            emb_hist.append(state.L.data.copy())
        return False

    state, tape = run(batch, params, T, on_step)
    _, logit = vote(tape, state, batch, params)
    return Prediction(float(logit.data[0]), votes_hist, emb_hist, state.L.data.copy())


def predict_batch(formulas: Sequence[CnfFormula], params: ParamTree, T: int) -> np.ndarray:
    batch = Batch(formulas)
    state, tape = run(batch, params, T)
    return vote(tape, state, batch, params)[1].data.copy()


def loss_and_grads(
    problems: Sequence[tuple[CnfFormula, int]],
    params: ParamTree,
    T: int,
    l2: float = 1e-10,
    node_budget: int | None = None,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Mean sigmoid cross-entropy plus ``l2 * sum(theta^2)``.

    Gradients are accumulated into ``params`` (and also returned); the third
    value is the per-problem logits.
    """
    if not problems:
        raise ValueError("empty batch")
    batch = Batch([f for f, _ in problems])
    if node_budget is not None and batch.n_nodes > node_budget:
        raise BatchTooLarge(f"batch has {batch.n_nodes} nodes, budget {node_budget}")
    labels = np.array([y for _, y in problems], dtype=float)
    tape = Tape()
    state = init_state(tape, batch, params)
    for _ in range(T):
        state = iterate(tape, state, batch, params)
    _, logits = vote(tape, state, batch, params)
    loss = tape.sigmoid_ce(logits, labels)
    if l2:
        loss = tape.add_scalars(loss, tape.scale(tape.sum_squares(params.tensors()), l2))
    tape.backward(loss)
    return float(loss.data), params.grads(), logits.data.copy()


# --- training ---------------------------------------------------------------

@dataclass
class TrainConfig:
    d: int = 16
    T: int = 8
    lr: float = 2e-4
    clip: float = 0.65
    l2: float = 1e-10
    node_budget: int = 2000
    n_min: int = 5
    n_max: int = 10
    pairs: int = 20_000
    epochs: int = 1
    seed: int = 0
    eval_every: int = 200
    eval_pairs: int = 200
    eval_n: int = 10
    ckpt_every: int = 0

    def __post_init__(self):
        for name in ("d", "T", "node_budget", "n_min", "n_max", "pairs", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0 or self.clip <= 0 or self.l2 < 0:
            raise ValueError("lr and clip must be positive, l2 non-negative")
        if self.n_min > self.n_max:
            raise ValueError("n_min > n_max")

    def hyper(self) -> dict:
        return asdict(self)


def node_count(f: CnfFormula) -> int:
    return 2 * f.n_vars + f.n_clauses


def make_batches(problems: Sequence[tuple[CnfFormula, int]], budget: int) -> list[list[tuple[CnfFormula, int]]]:
    """Greedy fill: start a new batch whenever the next problem would exceed ``budget`` nodes."""
    batches: list[list[tuple[CnfFormula, int]]] = []
    cur: list[tuple[CnfFormula, int]] = []
    used = 0
    for prob in problems:
        k = node_count(prob[0])
        if k > budget:
            raise BatchTooLarge(f"problem with {k} nodes exceeds budget {budget}")
        if cur and used + k > budget:
            batches.append(cur)
            cur, used = [], 0
        cur.append(prob)
        used += k
    if cur:
        batches.append(cur)
    return batches


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean((np.asarray(logits) > 0) == (np.asarray(labels) > 0.5)))


def evaluate_logits(problems: Sequence[tuple[CnfFormula, int]], params: ParamTree, T: int, budget: int) -> np.ndarray:
    out = []
    for b in make_batches(problems, budget):
        out.append(predict_batch([f for f, _ in b], params, T))
    return np.concatenate(out) if out else np.zeros(0)


def train(
    cfg: TrainConfig,
    pairs: Iterable,
    out_dir: str | Path | None = None,
    held_out: Sequence[tuple[CnfFormula, int]] = (),
    params: ParamTree | None = None,
) -> tuple[ParamTree, list[dict]]:
    """Train on both members of every pair with greedy node-budget batching.

    Pairs are shuffled each epoch; the two members of a pair stay adjacent.

    ``metrics.jsonl`` is a deterministic function of config and data; wall
    clock times go to ``timing.jsonl`` next to it.  Checkpoints are written
    every ``ckpt_every`` steps (0 = only the final one) as ``ckpt_<step>.nsat``
    and ``final.nsat``.
    """
    pairs = list(pairs)
    if params is None:
        params = init_params(ModelConfig(d=cfg.d), seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    out = Path(out_dir) if out_dir is not None else None
    metrics_fh = timing_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_fh = open(out / "metrics.jsonl", "w", encoding="ascii", newline="\n")
        timing_fh = open(out / "timing.jsonl", "w", encoding="ascii", newline="\n")
    log_rows: list[dict] = []
    t0 = time.perf_counter()
    step = 0
    held_labels = np.array([y for _, y in held_out])

    def emit(row: dict) -> None:
        log_rows.append(row)
        if metrics_fh is not None:
            metrics_fh.write(json.dumps(row, sort_keys=True) + "\n")
            metrics_fh.flush()
            timing_fh.write(json.dumps({"step": row["step"], "wallclock": round(time.perf_counter() - t0, 3)}) + "\n")
            timing_fh.flush()

    def checkpoint(name: str) -> None:
        if out is not None:
            (out / name).write_bytes(save_checkpoint(params, cfg.hyper()))

    try:
        for epoch in range(cfg.epochs):
            # both members of a pair stay adjacent so they usually share a batch
            problems = []
            for i in rng.permutation(len(pairs)):
                problems.append((pairs[i].sat_problem, 1))
                problems.append((pairs[i].unsat_problem, 0))
            batches = make_batches(problems, cfg.node_budget)
            for b in batches:
                loss, _, logits = loss_and_grads(b, params, cfg.T, cfg.l2)
                gnorm = clip_global_norm(params, cfg.clip)
                adam_step(params, cfg.lr)
                step += 1
                row = {
                    "step": step,
                    "epoch": epoch,
                    "loss": round(loss, 10),
                    "accuracy": round(accuracy(logits, [y for _, y in b]), 6),
                    "grad_norm": round(gnorm, 10),
                }
                if held_out and cfg.eval_every and step % cfg.eval_every == 0:
                    hl = evaluate_logits(held_out, params, cfg.T, cfg.node_budget)
                    row["eval_accuracy"] = round(accuracy(hl, held_labels), 6)
                    log.info("step %d loss %.4f eval acc %.3f", step, loss, row["eval_accuracy"])
                emit(row)
                if cfg.ckpt_every and step % cfg.ckpt_every == 0:
                    checkpoint(f"ckpt_{step:07d}.nsat")
        checkpoint("final.nsat")
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
            timing_fh.close()
    return params, log_rows


def load_model(path: str | Path) -> tuple[ParamTree, dict]:
    return load_checkpoint(Path(path).read_bytes())
