"""Reference implementations written independently of the package code."""

from __future__ import annotations

import itertools


def naive_sat(n_vars: int, clauses) -> bool:
    """Plain enumeration over itertools.product; only for tiny n."""
    for bits in itertools.product((False, True), repeat=n_vars):
        if all(any(bits[abs(l) - 1] == (l > 0) for l in c) for c in clauses):
            return True
    return False


def colorable(n: int, edges, k: int) -> bool:
    adj = [set() for _ in range(n)]
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    color = [-1] * n

    def place(v):
        if v == n:
            return True
        used = {color[u] for u in adj[v] if color[u] >= 0}
        for c in range(k):
            if c not in used:
                color[v] = c
                if place(v + 1):
                    return True
        color[v] = -1
        return False

    return place(0)


def has_clique(n: int, edges, k: int) -> bool:
    es = {tuple(sorted(e)) for e in edges}
    return any(all((a, b) in es for a, b in itertools.combinations(s, 2)) for s in itertools.combinations(range(n), k))


def has_dominating_set(n: int, edges, k: int) -> bool:
    closed = [{v} for v in range(n)]
    for u, v in edges:
        closed[u].add(v)
        closed[v].add(u)
    for size in range(0, min(k, n) + 1):
        for s in itertools.combinations(range(n), size):
            if all(closed[v] & set(s) for v in range(n)):
                return True
    return False


def has_vertex_cover(n: int, edges, k: int) -> bool:
    for size in range(0, min(k, n) + 1):
        for s in itertools.combinations(range(n), size):
            ss = set(s)
            if all(u in ss or v in ss for u, v in edges):
                return True
    return False


GRAPH_ORACLES = {
    "color": colorable,
    "clique": has_clique,
    "domset": has_dominating_set,
    "vcover": has_vertex_cover,
}
