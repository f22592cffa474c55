import numpy as np
import pytest

from neurosat.cnf import CnfFormula


def random_formula(rng: np.random.Generator, n_max: int = 8, m_max: int = 30, k_max: int = 4) -> CnfFormula:
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(0, m_max + 1))
    clauses = []
    for _ in range(m):
        k = int(rng.integers(1, min(k_max, n) + 1))
        vs = rng.choice(n, size=k, replace=False) + 1
        clauses.append([int(v) if rng.random() < 0.5 else -int(v) for v in vs])
    return CnfFormula(n, clauses)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
