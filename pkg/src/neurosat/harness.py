"""Evaluation, iteration sweeps, figure data and dataset audits.

Every artifact is written deterministically: JSON with sorted keys, CSV with
fixed float formatting, and no timestamps.

Artifact schemas
----------------
``eval.json``     {"aggregates": {...}, "records": [...], "T": ..., "decode_t": ...}
``eval.csv``      id,label,logit,predicted,solved,iterations_used
``sweep.csv``     n,T,solved,total,rate   (rate = fraction of sat problems decoded within T)
``votes.csv``     t,var,pos_vote,neg_vote (one block of n rows per iteration)
``votes.pgm``     binary graymap, one row per variable, two columns per
                  iteration (x_i then not x_i) plus a separator column;
                  128 is a zero vote, darker is negative (unsat-leaning),
                  brighter is positive (sat-leaning), scaled by max |vote|
``pca.csv``       t,lit,pc1,pc2,truth (truth is 1/0 under an oracle model, empty when unsat)
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .autodiff import ParamTree
from .cnf import CnfFormula, index_lit, parse_dimacs
from .datagen import read_manifest
from .decode import solve_batch_with_model
from .model import make_batches, predict, predict_batch
from .solver import solve

log = logging.getLogger(__name__)


def _f(x: float) -> str:
    return f"{x:.6f}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="ascii")


# --- evaluation -------------------------------------------------------------

@dataclass
class EvalRecord:
    id: str
    label: int
    logit: float
    predicted: int
    solved: bool = False
    iterations_used: int | None = None


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)

    def _acc(self, keep: Callable[[EvalRecord], bool]) -> float | None:
        rs = [r for r in self.records if keep(r)]
        return sum(r.predicted == r.label for r in rs) / len(rs) if rs else None

    @property
    def accuracy(self) -> float | None:
        return self._acc(lambda r: True)

    @property
    def accuracy_sat(self) -> float | None:
        return self._acc(lambda r: r.label == 1)

    @property
    def accuracy_unsat(self) -> float | None:
        return self._acc(lambda r: r.label == 0)

    @property
    def false_sat_rate(self) -> float | None:
        a = self.accuracy_unsat
        return None if a is None else 1.0 - a

    @property
    def percent_solved(self) -> float | None:
        sat = [r for r in self.records if r.label == 1]
        return 100.0 * sum(r.solved for r in sat) / len(sat) if sat else None

    def aggregates(self) -> dict:
        return {
            "n": len(self.records),
            "accuracy": self.accuracy,
            "accuracy_sat": self.accuracy_sat,
            "accuracy_unsat": self.accuracy_unsat,
            "false_sat_rate": self.false_sat_rate,
            "percent_sat_solved": self.percent_solved,
        }

    def summary(self) -> str:
        lines = []
        for k, v in self.aggregates().items():
            lines.append(f"{k:<20} {'-' if v is None else (v if isinstance(v, int) else f'{v:.4f}')}")
        return "\n".join(lines) + "\n"

    def write(self, out: str | Path, meta: Mapping | None = None) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"aggregates": self.aggregates(), "records": [asdict(r) for r in self.records], **(meta or {})}
        (out / "eval.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="ascii")
        _write_csv(
            out / "eval.csv",
            ["id", "label", "logit", "predicted", "solved", "iterations_used"],
            [[r.id, r.label, _f(r.logit), r.predicted, int(r.solved), "" if r.iterations_used is None else r.iterations_used] for r in self.records],
        )
        (out / "eval.txt").write_text(self.summary(), encoding="ascii")


Predictor = Callable[[Sequence[CnfFormula]], np.ndarray]


def evaluate(
    problems: Sequence[tuple[str, CnfFormula, int]],
    params: ParamTree | None,
    T: int,
    decode: bool = False,
    decode_t: int | None = None,
    node_budget: int = 4000,
    predictor: Predictor | None = None,
    out: str | Path | None = None,
) -> EvalReport:
    """Classify every problem with ``T`` iterations; optionally decode with ``decode_t`` (default ``T``).

    ``predictor`` replaces the network (formulas -> logits), e.g. an
    oracle-backed stub; decoding then needs ``params`` all the same.
    """
    if predictor is None:
        if params is None:
            raise ValueError("need params or a predictor")

        def predictor(fs):
            return predict_batch(fs, params, T)

    report = EvalReport()
    items = [(f, i) for i, (_, f, _) in enumerate(problems)]
    logits = np.zeros(len(problems))
    attempts: dict[int, tuple[bool, int | None]] = {}
    for b in make_batches(items, node_budget):
        idx = [i for _, i in b]
        fs = [f for f, _ in b]
        logits[idx] = predictor(fs)
        if decode:
            for i, a in zip(idx, solve_batch_with_model(fs, params, decode_t or T)):
                attempts[i] = (a.solved, a.iterations_used if a.solved else None)
    for i, (pid, _, y) in enumerate(problems):
        solved, used = attempts.get(i, (False, None))
        report.records.append(EvalRecord(str(pid), int(y), float(logits[i]), int(logits[i] > 0), solved, used))
    if out is not None:
        report.write(out, {"T": T, "decode_t": (decode_t or T) if decode else None})
    return report


# --- iteration sweep --------------------------------------------------------

def sweep_iterations(
    params: ParamTree,
    datasets: Mapping[int, Sequence[CnfFormula]],
    t_list: Sequence[int],
    node_budget: int = 4000,
    out: str | Path | None = None,
) -> list[tuple[int, int, int, int, float]]:
    """Solve rate as a function of T for each n, rows ``(n, T, solved, total, rate)``.

    One run to ``max(t_list)`` per dataset suffices: a problem counts as
    solved at T when it was first decoded at an iteration <= T, so rates are
    non-decreasing in T by construction.
    """
    rows: list[tuple[int, int, int, int, float]] = []
    ts = sorted(set(int(t) for t in t_list))
    if ts:
        for n in sorted(datasets):
            fs = list(datasets[n])
            first: list[int | None] = []
            for b in make_batches([(f, 0) for f in fs], node_budget):
                first += [a.iterations_used if a.solved else None for a in solve_batch_with_model([f for f, _ in b], params, ts[-1])]
            for t in ts:
                k = sum(1 for u in first if u is not None and u <= t)
                rows.append((n, t, k, len(fs), k / len(fs) if fs else 0.0))
    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(out, ["n", "T", "solved", "total", "rate"], [[n, t, k, m, _f(r)] for n, t, k, m, r in rows])
        out.with_suffix(".svg").write_text(sweep_svg(rows), encoding="ascii")
    return rows


def sweep_svg(rows: Sequence[tuple[int, int, int, int, float]], width: int = 480, height: int = 320) -> str:
    """Line chart of rate against T, one polyline per n."""
    pad = 40
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{pad}" y="{pad // 2}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>']
    if rows:
        t_max = max(r[1] for r in rows)
        t_min = min(r[1] for r in rows)
        span = max(t_max - t_min, 1)
        ns = sorted({r[0] for r in rows})
        for j, n in enumerate(ns):
            pts = []
            for _, t, _, _, rate in (r for r in rows if r[0] == n):
                x = pad + (t - t_min) / span * (width - 2 * pad)
                y = pad // 2 + (1.0 - rate) * (height - 2 * pad)
                pts.append(f"{x:.1f},{y:.1f}")
            shade = int(200 * j / max(len(ns) - 1, 1))
            parts.append(f'<polyline fill="none" stroke="rgb({shade},0,{200 - shade})" points="{" ".join(pts)}"/>')
            parts.append(f'<text x="{width - pad + 4}" y="{pad + 14 * j}" font-size="10">n={n}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- figures ----------------------------------------------------------------

def vote_trajectory(params: ParamTree, f: CnfFormula, T: int) -> np.ndarray:
    """Votes per iteration as ``[T, n, 2]`` (column 0 is x_i, column 1 is not x_i)."""
    pred = predict(f, params, T, record=True)
    n = f.n_vars
    return np.stack([np.stack([v[:n], v[n:]], axis=1) for v in pred.votes])


def write_pgm(path: Path, traj: np.ndarray) -> None:
    T, n, _ = traj.shape
    scale = float(np.abs(traj).max()) or 1.0
    img = np.full((n, 3 * T), 128, dtype=np.uint8)
    for t in range(T):
        img[:, 3 * t : 3 * t + 2] = np.clip(np.round(128 + 127 * traj[t] / scale), 0, 255).astype(np.uint8)
    path.write_bytes(f"P5\n{3 * T} {n}\n255\n".encode("ascii") + img.tobytes())


def viz_votes(params: ParamTree, f: CnfFormula, T: int, out: str | Path) -> np.ndarray:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    traj = vote_trajectory(params, f, T)
    rows = [[t + 1, v + 1, _f(traj[t, v, 0]), _f(traj[t, v, 1])] for t in range(traj.shape[0]) for v in range(f.n_vars)]
    _write_csv(out / "votes.csv", ["t", "var", "pos_vote", "neg_vote"], rows)
    write_pgm(out / "votes.pgm", traj)
    return traj


@dataclass
class Pca:
    components: np.ndarray  # [2, d]
    variances: np.ndarray  # [2]
    mean: np.ndarray  # [d]

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) @ self.components.T


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if nz.size and v[nz[0]] < 0 else v


def pca2(x: np.ndarray, iters: int = 200, tol: float = 1e-9) -> Pca:
    """Top two principal components by power iteration with deflation.

    The start vector is fixed (``1, 2, ..., d`` normalized, orthogonalized
    against earlier components), and each component's first nonzero loading
    is made positive.
    """
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(len(x), 1)
    d = cov.shape[0]
    comps, lams = [], []
    for _ in range(min(2, d)):
        v = np.arange(1, d + 1, dtype=float)
        for c in comps:
            v -= (v @ c) * c
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = cov @ v
            for c in comps:
                w -= (w @ c) * c
            nw = np.linalg.norm(w)
            if nw < 1e-300:
                break
            w /= nw
            done = min(np.linalg.norm(w - v), np.linalg.norm(w + v)) < tol
            v = w
            if done:
                break
        lam = float(v @ cov @ v)
        comps.append(_fix_sign(v))
        lams.append(max(lam, 0.0))
    while len(comps) < 2:
        comps.append(np.zeros(d))
        lams.append(0.0)
    return Pca(np.stack(comps), np.array(lams), mean)


def viz_pca(params: ParamTree, f: CnfFormula, T: int, step: int = 1, out: str | Path | None = None) -> list[tuple]:
    """Per recorded iteration (every ``step``, plus ``T``), project the 2n literal embeddings to 2D."""
    if step < 1:
        raise ValueError("step must be >= 1")
    pred = predict(f, params, T, record_embeddings=True)
    res = solve(f)
    n = f.n_vars
    rows: list[tuple] = []
    for t, L in enumerate(pred.embeddings, start=1):
        if t % step and t != T:
            continue
        xy = pca2(L).project(L)
        for i in range(2 * n):
            lit = index_lit(i, n)
            truth = "" if not res.sat else int(res.assignment[abs(lit) - 1] == (lit > 0))
            rows.append((t, lit, _f(xy[i, 0]), _f(xy[i, 1]), truth))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "pca.csv", ["t", "lit", "pc1", "pc2", "truth"], rows)
    return rows


# --- audit ------------------------------------------------------------------

@dataclass
class AuditReport:
    checked: int
    mismatches: list[str]
    missing: list[str]
    warning: str | None = None

    @property
    def ok(self) -> bool:
        return not self.mismatches and not self.missing


def audit(manifest: str | Path, frac: float, seed: int = 0) -> AuditReport:
    """Re-solve a random ``frac`` of the manifest's problems and compare with the stored labels."""
    if not 0.0 <= frac <= 1.0:
        raise ValueError("frac must be in [0, 1]")
    root, records = read_manifest(manifest)
    missing = [r["file"] for r in records if not (root / r["file"]).is_file()]
    k = int(round(frac * len(records)))
    if k == 0:
        return AuditReport(0, [], missing, "nothing sampled; labels unchecked")
    rng = np.random.default_rng(seed)
    picks = sorted(rng.choice(len(records), size=k, replace=False)) if k < len(records) else range(len(records))
    bad = []
    for i in picks:
        r = records[i]
        if r["file"] in missing:
            continue
        f = parse_dimacs((root / r["file"]).read_bytes())
        if "label" not in r or int(solve(f).sat) != int(r["label"]):
            bad.append(r["file"])
    return AuditReport(k, bad, missing)
