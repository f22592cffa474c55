"""Small random graphs and their coloring / clique / domset / vertex-cover CNF encodings."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from typing import Iterable

import numpy as np

from .cnf import CnfFormula

FAMILIES = ("erdos_renyi", "barabasi_albert", "forest_fire", "random_regular", "static_power_law", "random_geometric")
TASKS = ("color", "clique", "domset", "vcover")
# k ranges used for the cross-domain corpus
TASK_K = {"color": (3, 4, 5), "clique": (3, 4, 5), "domset": (2, 3, 4), "vcover": (4, 5, 6)}


class InfeasibleGraphParams(ValueError):
    pass


@dataclass(frozen=True, init=False)
class Graph:
    n_nodes: int
    edges: frozenset[tuple[int, int]]

    def __init__(self, n_nodes: int, edges: Iterable[tuple[int, int]] = ()):
        es = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError("self-loops are not allowed")
            if not (0 <= u < n_nodes and 0 <= v < n_nodes):
                raise ValueError(f"edge ({u}, {v}) out of range")
            es.add((min(u, v), max(u, v)))
        object.__setattr__(self, "n_nodes", int(n_nodes))
        object.__setattr__(self, "edges", frozenset(es))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def neighbors(self) -> list[set[int]]:
        nb: list[set[int]] = [set() for _ in range(self.n_nodes)]
        for u, v in self.edges:
            nb[u].add(v)
            nb[v].add(u)
        return nb

    def degrees(self) -> list[int]:
        return [len(s) for s in self.neighbors()]

    def edge_list(self) -> list[list[int]]:
        return [list(e) for e in sorted(self.edges)]


# --- generators -------------------------------------------------------------

def _mixture(rng: np.random.Generator, values, weights) -> int:
    return int(values[int(rng.choice(len(values), p=np.asarray(weights) / np.sum(weights)))])


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    pairs = list(itertools.combinations(range(n), 2))
    keep = rng.random(len(pairs)) < p
    return Graph(n, [e for e, k in zip(pairs, keep) if k])


def barabasi_albert(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Preferential attachment: start from m isolated nodes, each new node links to m distinct targets."""
    if not 1 <= m < n:
        raise InfeasibleGraphParams(f"Barabasi-Albert needs 1 <= m < n (m={m}, n={n})")
    edges = []
    repeated: list[int] = []
    targets = list(range(m))
    for new in range(m, n):
        edges.extend((t, new) for t in targets)
        repeated.extend(targets)
        repeated.extend([new] * m)
        chosen: list[int] = []
        while len(chosen) < m and new + 1 < n:
            t = repeated[int(rng.integers(len(repeated)))]
            if t not in chosen:
                chosen.append(t)
        targets = chosen
    return Graph(n, edges)


def forest_fire(n: int, p_forward: float, rng: np.random.Generator) -> Graph:
    """Undirected forest-fire growth: each node picks an ambassador and burns outward.

    From every burning node a Geometric number of unburned neighbours (mean
    ``p / (1 - p)``) catches fire; the new node links to everything burned.
    """
    if not 0 <= p_forward < 1:
        raise InfeasibleGraphParams("forest fire needs 0 <= p < 1")
    nb: list[set[int]] = [set() for _ in range(n)]
    for new in range(1, n):
        amb = int(rng.integers(new))
        burned = {amb}
        frontier = [amb]
        while frontier:
            nxt = []
            for w in frontier:
                fresh = sorted(nb[w] - burned)
                # failures before the first success of a (1 - p) coin
                count = int(rng.geometric(1.0 - p_forward)) - 1
                if count and fresh:
                    pick = rng.permutation(len(fresh))[:count]
                    for i in pick:
                        burned.add(fresh[i])
                        nxt.append(fresh[i])
            frontier = nxt
        for w in burned:
            nb[new].add(w)
            nb[w].add(new)
    return Graph(n, [(u, v) for u in range(n) for v in nb[u] if u < v])


def random_regular(n: int, k: int, rng: np.random.Generator, max_tries: int = 10_000) -> Graph:
    """Uniform simple k-regular graph by pairing with rejection."""
    if n * k % 2 or k >= n or k < 0:
        raise InfeasibleGraphParams(f"no simple {k}-regular graph on {n} nodes")
    stubs = np.repeat(np.arange(n), k)
    for _ in range(max_tries):
        perm = rng.permutation(stubs)
        es = set()
        for u, v in zip(perm[0::2].tolist(), perm[1::2].tolist()):
            e = (min(u, v), max(u, v))
            if u == v or e in es:
                break
            es.add(e)
        else:
            return Graph(n, es)
    raise InfeasibleGraphParams("pairing did not produce a simple graph")


def static_power_law(n: int, m: int, exponent: float, rng: np.random.Generator, max_tries: int = 100_000) -> Graph:
    """Goh-Kahng-Kim static model: m edges between nodes drawn with weight i^(-1/(exponent-1))."""
    if exponent <= 2:
        raise InfeasibleGraphParams("power-law exponent must exceed 2")
    if m > n * (n - 1) // 2:
        raise InfeasibleGraphParams(f"{m} edges do not fit on {n} nodes")
    alpha = 1.0 / (exponent - 1.0)
    w = np.arange(1, n + 1, dtype=float) ** -alpha
    w /= w.sum()
    es: set[tuple[int, int]] = set()
    tries = 0
    while len(es) < m:
        tries += 1
        if tries > max_tries:
            raise InfeasibleGraphParams("could not place all edges")
        u, v = rng.choice(n, size=2, p=w).tolist()
        if u != v:
            es.add((min(u, v), max(u, v)))
    return Graph(n, es)


def random_geometric(n: int, radius: float, rng: np.random.Generator) -> Graph:
    pts = rng.random((n, 2))
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    return Graph(n, [(u, v) for u, v in itertools.combinations(range(n), 2) if d2[u, v] <= radius * radius])


@dataclass(frozen=True)
class GraphDistribution:
    family: str
    params: dict

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")


def default_distribution(family: str) -> GraphDistribution:
    table = calibration_table()
    return GraphDistribution(family, dict(table["families"][family]))


def calibration_table() -> dict:
    with resources.files("neurosat").joinpath("data/graph_calibration.json").open("r") as fh:
        return json.load(fh)


def gen_graph(dist: GraphDistribution, n_nodes: int, rng: np.random.Generator) -> Graph:
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    p = dist.params
    fam = dist.family
    if fam == "erdos_renyi":
        return erdos_renyi(n_nodes, p["p"], rng)
    if fam == "barabasi_albert":
        return barabasi_albert(n_nodes, _mixture(rng, p["m"], p["weights"]), rng)
    if fam == "forest_fire":
        return forest_fire(n_nodes, p["p_forward"], rng)
    if fam == "random_regular":
        return random_regular(n_nodes, _mixture(rng, p["k"], p["weights"]), rng)
    if fam == "static_power_law":
        return static_power_law(n_nodes, p["m"], p["exponent"], rng)
    return random_geometric(n_nodes, p["radius"], rng)


# --- encodings --------------------------------------------------------------

def at_most_k(xs: list[int], k: int, next_var: int) -> tuple[list[tuple[int, ...]], int]:
    """Sinz sequential counter for sum(xs) <= k.

    Register ``s[i][j]`` means "at least j + 1 of xs[0..i] are true". Returns
    the clauses and the next unused variable index.
    """
    n = len(xs)
    if k >= n:
        return [], next_var
    if k == 0:
        return [(-x,) for x in xs], next_var
    s = [[next_var + i * k + j for j in range(k)] for i in range(n - 1)]
    next_var += (n - 1) * k
    cls: list[tuple[int, ...]] = [(-xs[0], s[0][0])]
    cls += [(-s[0][j],) for j in range(1, k)]
    for i in range(1, n - 1):
        cls.append((-xs[i], s[i][0]))
        cls.append((-s[i - 1][0], s[i][0]))
        for j in range(1, k):
            cls.append((-xs[i], -s[i - 1][j - 1], s[i][j]))
            cls.append((-s[i - 1][j], s[i][j]))
        cls.append((-xs[i], -s[i - 1][k - 1]))
    cls.append((-xs[n - 1], -s[n - 2][k - 1]))
    return cls, next_var


def encode_coloring(g: Graph, k: int) -> CnfFormula:
    """Node v takes color c via variable v * k + c + 1."""
    if k < 1:
        raise ValueError("need at least one color")

    def x(v, c):
        return v * k + c + 1

    cls: list[tuple[int, ...]] = []
    for v in range(g.n_nodes):
        cls.append(tuple(x(v, c) for c in range(k)))
        cls += [(-x(v, a), -x(v, b)) for a, b in itertools.combinations(range(k), 2)]
    for u, v in sorted(g.edges):
        cls += [(-x(u, c), -x(v, c)) for c in range(k)]
    return CnfFormula(g.n_nodes * k, cls)


def encode_clique(g: Graph, k: int, symmetry_breaking: bool = False) -> CnfFormula:
    """Slot i holds node v via variable i * n + v + 1."""
    n = g.n_nodes
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n_nodes")

    def y(i, v):
        return i * n + v + 1

    cls: list[tuple[int, ...]] = []
    for i in range(k):
        cls.append(tuple(y(i, v) for v in range(n)))
        cls += [(-y(i, u), -y(i, v)) for u, v in itertools.combinations(range(n), 2)]
    for i, j in itertools.combinations(range(k), 2):
        for v in range(n):
            cls.append((-y(i, v), -y(j, v)))
        for u in range(n):
            for v in range(n):
                if u == v:
                    continue
                if (symmetry_breaking and u > v) or not g.has_edge(u, v):
                    cls.append((-y(i, u), -y(j, v)))
    return CnfFormula(n * k, cls)


def encode_dominating_set(g: Graph, k: int) -> CnfFormula:
    """Node v is selected via variable v + 1; counter registers follow."""
    n = g.n_nodes
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n_nodes")
    nb = g.neighbors()
    cls = [tuple([v + 1] + [u + 1 for u in sorted(nb[v])]) for v in range(n)]
    card, top = at_most_k(list(range(1, n + 1)), k, n + 1)
    return CnfFormula(top - 1, cls + card)


def encode_vertex_cover(g: Graph, k: int) -> CnfFormula:
    n = g.n_nodes
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n_nodes")
    cls = [(u + 1, v + 1) for u, v in sorted(g.edges)]
    card, top = at_most_k(list(range(1, n + 1)), k, n + 1)
    return CnfFormula(top - 1, cls + card)


ENCODERS = {
    "color": encode_coloring,
    "clique": encode_clique,
    "domset": encode_dominating_set,
    "vcover": encode_vertex_cover,
}


def encode(task: str, g: Graph, k: int) -> CnfFormula:
    return ENCODERS[task](g, k)


# --- calibration ------------------------------------------------------------

def _mean_edges(family: str, params: dict, n: int, samples: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    dist = GraphDistribution(family, params)
    return float(np.mean([gen_graph(dist, n, rng).n_edges for _ in range(samples)]))


def _bisect(fn, lo: float, hi: float, target: float, steps: int) -> float:
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _two_point_mix(lo_val: int, hi_val: int, lo_edges: float, hi_edges: float, target: float) -> list[float]:
    w_lo = (hi_edges - target) / (hi_edges - lo_edges)
    return [round(w_lo, 6), round(1 - w_lo, 6)]


def calibrate_graphs(n_nodes: int = 10, target_edges: float = 17.0, samples: int = 2000, seed: int = 0) -> dict:
    """Fit each family's free parameter so the mean edge count hits ``target_edges``.

    Continuous parameters are bisected on Monte Carlo means (common random
    numbers); integer parameters become a two-point mixture.
    """
    fams: dict[str, dict] = {}
    pairs = n_nodes * (n_nodes - 1) / 2
    fams["erdos_renyi"] = {"p": round(target_edges / pairs, 6)}

    m_lo = max(1, int(np.floor((n_nodes - np.sqrt(n_nodes**2 - 4 * target_edges)) / 2)))
    e = [_mean_edges("barabasi_albert", {"m": [m], "weights": [1]}, n_nodes, samples, seed) for m in (m_lo, m_lo + 1)]
    fams["barabasi_albert"] = {"m": [m_lo, m_lo + 1], "weights": _two_point_mix(m_lo, m_lo + 1, e[0], e[1], target_edges)}

    pf = _bisect(lambda p: _mean_edges("forest_fire", {"p_forward": p}, n_nodes, samples, seed), 0.0, 0.95, target_edges, 20)
    fams["forest_fire"] = {"p_forward": round(pf, 6)}

    deg = 2 * target_edges / n_nodes
    k_lo = int(np.floor(deg))
    if (n_nodes * k_lo) % 2:
        k_lo -= 1
    k_hi = k_lo + 1 if (n_nodes * (k_lo + 1)) % 2 == 0 else k_lo + 2
    e_lo, e_hi = n_nodes * k_lo / 2, n_nodes * k_hi / 2
    fams["random_regular"] = {"k": [k_lo, k_hi], "weights": _two_point_mix(k_lo, k_hi, e_lo, e_hi, target_edges)}

    fams["static_power_law"] = {"m": int(round(target_edges)), "exponent": 2.5}

    r = _bisect(lambda r: _mean_edges("random_geometric", {"radius": r}, n_nodes, samples, seed), 0.0, 1.5, target_edges, 25)
    fams["random_geometric"] = {"radius": round(r, 6)}

    return {"n_nodes": n_nodes, "target_edges": target_edges, "samples": samples, "seed": seed, "families": fams}


# --- corpus -----------------------------------------------------------------

@dataclass(frozen=True)
class GraphProblem:
    family: str
    task: str
    k: int
    graph: Graph
    formula: CnfFormula
    label: int | None = None  # oracle satisfiability when computed


def graph_problems(
    family: str,
    task: str,
    k: int | None,
    count: int,
    seed: int,
    n_nodes: int = 10,
    label: bool = True,
    sat_only: bool = False,
) -> list[GraphProblem]:
    """``count`` encoded problems; problem ``i`` uses ``default_rng([seed, i])``.

    ``k=None`` draws k uniformly from ``TASK_K[task]``.  With ``sat_only``
    unsatisfiable encodings are discarded and sampling continues until
    ``count`` problems are kept.
    """
    from .solver import solve

    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    dist = default_distribution(family)
    out: list[GraphProblem] = []
    i = 0
    while len(out) < count:
        rng = np.random.default_rng([seed, i])
        i += 1
        kk = int(rng.choice(TASK_K[task])) if k is None else k
        g = gen_graph(dist, n_nodes, rng)
        f = encode(task, g, kk)
        y = int(solve(f).sat) if (label or sat_only) else None
        if sat_only and not y:
            continue
        out.append(GraphProblem(family, task, kk, g, f, y))
    return out


def write_graph_dataset(problems: Iterable[GraphProblem], out) -> "Path":
    from pathlib import Path

    from .cnf import write_dimacs
    from .datagen import MANIFEST_SCHEMA, write_manifest

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, p in enumerate(problems):
        name = f"{p.family}_{p.task}_{i:06d}.cnf"
        (out / name).write_bytes(write_dimacs(p.formula))
        rec = {
            "schema": MANIFEST_SCHEMA,
            "file": name,
            "n": p.formula.n_vars,
            "m": p.formula.n_clauses,
            "family": p.family,
            "task": p.task,
            "k": p.k,
            "n_nodes": p.graph.n_nodes,
            "edges": [list(e) for e in p.graph.edge_list()],
        }
        if p.label is not None:
            rec["label"] = p.label
        records.append(rec)
    return write_manifest(out, records)
