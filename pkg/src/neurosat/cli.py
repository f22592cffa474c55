"""Command line entry point: ``neurosat <command> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVED, EXIT_UNSAT = 0, 1, 2, 10, 20

EPILOG = """exit codes:
  0   success (solver commands: no assignment found)
  1   usage error
  2   data error (unreadable input, bad manifest, failed audit)
  10  solved: a verified assignment was printed
  20  solve only: proved unsatisfiable

NEUROSAT_DATA_DIR sets the default output root."""


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(args, default: str) -> Path:
    if args.out:
        return Path(args.out)
    return Path(os.environ.get("NEUROSAT_DATA_DIR", ".")) / default


def _read_cnf(path: str):
    from .cnf import DimacsError, parse_dimacs

    try:
        return parse_dimacs(Path(path).read_bytes())
    except (OSError, DimacsError) as e:
        raise DataError(f"{path}: {e}") from e


def _load_ckpt(path: str):
    from .model import load_model

    try:
        return load_model(path)[0]
    except (OSError, ValueError) as e:
        raise DataError(f"{path}: {e}") from e


def _print_model(assignment) -> None:
    lits = [str(i + 1 if v else -(i + 1)) for i, v in enumerate(assignment)]
    print("v " + " ".join(lits + ["0"]))


# --- commands ---------------------------------------------------------------

def cmd_gen(args) -> int:
    from .datagen import CORE_NAMES, DatasetSpec, generate_pairs, write_dataset

    out = _out_dir(args, f"gen_{args.kind}")
    if args.kind in ("sr", "src"):
        cores = CORE_NAMES if args.kind == "sr" or args.core == "all" else (args.core,)
        spec = DatasetSpec(args.kind, args.n_min, args.n_max, args.pairs, args.seed, cores)
        path = write_dataset(generate_pairs(spec, args.threads), out)
    elif args.kind == "graphs":
        from .graphs import graph_problems, write_graph_dataset

        probs = graph_problems(args.family, args.task, args.k, args.count, args.seed, args.n_nodes, sat_only=args.sat_only)
        path = write_graph_dataset(probs, out)
    else:
        from .cnf import write_dimacs
        from .datagen import MANIFEST_SCHEMA, write_manifest
        from .solver import solve
        from .sp import gen_random_ksat

        out.mkdir(parents=True, exist_ok=True)
        recs = []
        for i in range(args.count):
            f = gen_random_ksat(args.n, args.m, args.k, np.random.default_rng([args.seed, i]))
            name = f"ksat{i:06d}.cnf"
            (out / name).write_bytes(write_dimacs(f))
            recs.append({"schema": MANIFEST_SCHEMA, "file": name, "n": f.n_vars, "m": f.n_clauses, "k": args.k, "label": int(solve(f).sat)})
        path = write_manifest(out, recs)
    print(path)
    return EXIT_OK


def cmd_solve(args) -> int:
    from .solver import BudgetExceeded, solve

    f = _read_cnf(args.cnf)
    try:
        res = solve(f, args.max_conflicts)
    except BudgetExceeded:
        print("UNKNOWN")
        return EXIT_OK
    print("SAT" if res.sat else "UNSAT")
    if res.sat:
        _print_model(res.assignment)
    s = res.stats
    print(f"c decisions {s.decisions} propagations {s.propagations} conflicts {s.conflicts}")
    return EXIT_SOLVED if res.sat else EXIT_UNSAT


def cmd_solve_nn(args) -> int:
    from .decode import solve_with_model

    params = _load_ckpt(args.ckpt)
    f = _read_cnf(args.cnf)
    att = solve_with_model(f, params, args.t_max, args.decode_every, seed=args.seed)
    if not att.solved:
        print("UNKNOWN")
        return EXIT_OK
    print("SAT")
    _print_model(att.assignment)
    print(f"c iterations {att.iterations_used}")
    return EXIT_SOLVED


def cmd_sp(args) -> int:
    from .sp import sp_solve

    f = _read_cnf(args.cnf)
    res = sp_solve(f, args.max_sweeps, args.tol, args.damping, args.ramp_sweeps, args.seed)
    print("SAT" if res.solved else "UNKNOWN")
    if res.solved:
        _print_model(res.assignment)
    print(f"c sweeps {res.sweeps} max_residual {res.max_residual:.3g} converged {int(res.converged)}")
    return EXIT_SOLVED if res.solved else EXIT_OK


def _pairs_from_manifest(path):
    from .datagen import SamplePair, load_dataset

    by_id: dict[int, dict] = {}
    try:
        data = load_dataset(path)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"{path}: {e}") from e
    for f, y, rec in data:
        if "pair_id" not in rec:
            raise DataError(f"{path}: training data needs paired records")
        by_id.setdefault(rec["pair_id"], {})[y] = (f, rec)
    pairs = []
    for pid in sorted(by_id):
        d = by_id[pid]
        if set(d) != {0, 1}:
            raise DataError(f"{path}: pair {pid} incomplete")
        pairs.append(SamplePair(d[1][0], d[0][0], tuple(d[0][1]["flipped"]), d[1][0].n_vars))
    return pairs


def cmd_train(args) -> int:
    from .datagen import DatasetSpec, generate_pairs
    from .model import REFERENCE_LR, TrainConfig, train

    fields = {f.name for f in dataclasses.fields(TrainConfig)}
    conf: dict = {}
    if args.config:
        try:
            conf = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as e:
            raise DataError(f"{args.config}: {e}") from e
        unknown = set(conf) - fields
        if unknown:
            raise DataError(f"{args.config}: unknown fields {sorted(unknown)}")
    for name in fields - {"seed"}:
        v = getattr(args, "cfg_" + name)
        if v is not None:
            conf[name] = v
    if args.paper_lr:
        conf["lr"] = REFERENCE_LR
    if args.seed is not None:
        conf["seed"] = args.seed
    cfg = TrainConfig(**conf)
    if args.data:
        pairs = _pairs_from_manifest(args.data)
    else:
        pairs = list(generate_pairs(DatasetSpec("sr", cfg.n_min, cfg.n_max, cfg.pairs, cfg.seed), args.threads))
    held = []
    if cfg.eval_every:
        for p in generate_pairs(DatasetSpec("sr", cfg.eval_n, cfg.eval_n, cfg.eval_pairs, cfg.seed + 1), args.threads):
            held += [(p.sat_problem, 1), (p.unsat_problem, 0)]
    out = _out_dir(args, "train")
    train(cfg, pairs, out, held)
    print(out / "final.nsat")
    return EXIT_OK


def _eval_problems(path):
    from .datagen import load_dataset

    try:
        return [(rec["file"], f, y) for f, y, rec in load_dataset(path)]
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"{path}: {e}") from e


def cmd_eval(args) -> int:
    from .harness import evaluate

    params = _load_ckpt(args.ckpt)
    rep = evaluate(_eval_problems(args.data), params, args.T, args.decode, args.decode_t, out=_out_dir(args, "eval"))
    sys.stdout.write(rep.summary())
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .datagen import DatasetSpec, generate_pairs
    from .harness import sweep_iterations

    params = _load_ckpt(args.ckpt)
    sets = {}
    for n in args.n:
        spec = DatasetSpec("sr", n, n, args.count, args.seed + n)
        sets[n] = [p.sat_problem for p in generate_pairs(spec, args.threads)]
    out = _out_dir(args, "sweep")
    rows = sweep_iterations(params, sets, args.T, out=out / "sweep.csv")
    for n, t, k, m, r in rows:
        print(f"n={n:<4} T={t:<4} {k}/{m} {r:.3f}")
    return EXIT_OK


def cmd_viz_votes(args) -> int:
    from .harness import viz_votes

    out = _out_dir(args, "viz_votes")
    viz_votes(_load_ckpt(args.ckpt), _read_cnf(args.cnf), args.T, out)
    print(out / "votes.csv")
    return EXIT_OK


def cmd_viz_pca(args) -> int:
    from .harness import viz_pca

    out = _out_dir(args, "viz_pca")
    viz_pca(_load_ckpt(args.ckpt), _read_cnf(args.cnf), args.T, args.step, out)
    print(out / "pca.csv")
    return EXIT_OK


def cmd_audit(args) -> int:
    from .harness import audit

    try:
        rep = audit(args.manifest, args.frac, args.seed or 0)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"{args.manifest}: {e}") from e
    if rep.warning:
        print(f"warning: {rep.warning}", file=sys.stderr)
    print(f"checked {rep.checked} mismatches {len(rep.mismatches)} missing {len(rep.missing)}")
    for name in rep.mismatches:
        print(f"mismatch {name}")
    for name in rep.missing:
        print(f"missing {name}")
    return EXIT_OK if rep.ok else EXIT_DATA


def cmd_calibrate(args) -> int:
    from .graphs import calibrate_graphs

    table = calibrate_graphs(args.n_nodes, args.target_edges, args.samples, args.seed or 0)
    text = json.dumps(table, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=1, help="worker processes for data generation")
    common.add_argument("--out", default=None, help="output directory or file")

    p = _Parser(prog="neurosat", description="SAT classification and solving by message passing.", epilog=EPILOG,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help, leaf=True):
        sp = sub.add_parser(name, parents=[common] if leaf else [], help=help, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(fn=fn)
        return sp

    g = add("gen", cmd_gen, "generate a dataset", leaf=False)
    gsub = g.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind in ("sr", "src"):
        k = gsub.add_parser(kind, parents=[common])
        k.add_argument("--n-min", type=int, default=10)
        k.add_argument("--n-max", type=int, default=40)
        k.add_argument("--pairs", type=int, default=100)
        if kind == "src":
            k.add_argument("--core", choices=["r", "pp21", "pp32", "all"], default="all")
    k = gsub.add_parser("graphs", parents=[common])
    k.add_argument("--family", required=True)
    k.add_argument("--task", choices=["color", "clique", "domset", "vcover"], required=True)
    k.add_argument("--k", type=int, default=None, help="default: drawn from the task's range")
    k.add_argument("--count", type=int, default=100)
    k.add_argument("--n-nodes", type=int, default=10)
    k.add_argument("--sat-only", action="store_true")
    k = gsub.add_parser("ksat", parents=[common])
    k.add_argument("--n", type=int, default=100)
    k.add_argument("--m", type=int, default=300)
    k.add_argument("--k", type=int, default=3)
    k.add_argument("--count", type=int, default=100)

    s = add("solve", cmd_solve, "exact DPLL solve of a DIMACS file")
    s.add_argument("cnf")
    s.add_argument("--max-conflicts", type=int, default=None)

    s = add("solve-nn", cmd_solve_nn, "decode an assignment with a trained model")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--cnf", required=True)
    s.add_argument("--t-max", type=int, default=32)
    s.add_argument("--decode-every", type=int, default=1)

    s = add("sp", cmd_sp, "survey propagation with reinforcement")
    s.add_argument("--cnf", required=True)
    s.add_argument("--max-sweeps", type=int, default=1000)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--damping", type=float, default=0.5)
    s.add_argument("--ramp-sweeps", type=int, default=200)

    from .model import TrainConfig

    s = add("train", cmd_train, "train a model")
    s.add_argument("--config", help="JSON file with TrainConfig fields; flags override it")
    s.add_argument("--data", help="paired manifest to train on instead of generating SR(U(n_min, n_max))")
    s.add_argument("--paper-lr", action="store_true", help="use the original learning rate 2e-5 (overrides --lr)")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "seed":  # the global --seed
            continue
        s.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, type=type(f.default), default=None,
                       help=f"default {f.default}")

    s = add("eval", cmd_eval, "classification (and decoding) report on a dataset")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--T", type=int, default=26)
    s.add_argument("--decode", action="store_true")
    s.add_argument("--decode-t", type=int, default=None)

    s = add("sweep", cmd_sweep, "solve rate against iterations on fresh SR(n) sets")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=int, nargs="+", default=[10, 20, 40])
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--T", type=int, nargs="*", default=[8, 16, 32, 64])

    s = add("viz-votes", cmd_viz_votes, "per-iteration literal votes as CSV and PGM")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--cnf", required=True)
    s.add_argument("--T", type=int, default=32)

    s = add("viz-pca", cmd_viz_pca, "2D PCA of literal embeddings per iteration")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--cnf", required=True)
    s.add_argument("--T", type=int, default=32)
    s.add_argument("--step", type=int, default=1)

    s = add("audit", cmd_audit, "re-check manifest labels with the exact solver")
    s.add_argument("--manifest", required=True)
    s.add_argument("--frac", type=float, default=0.1)

    s = add("calibrate-graphs", cmd_calibrate, "fit graph family parameters to a mean edge count")
    s.add_argument("--n-nodes", type=int, default=10)
    s.add_argument("--target-edges", type=float, default=17.0)
    s.add_argument("--samples", type=int, default=2000)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is None and args.command not in ("train",):
        args.seed = 0
    try:
        return args.fn(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
