import numpy as np
import pytest

from colagnn.data import AdjacencyMatrix, EpiDataset
from colagnn.model import ColaGNN, ColaGnnConfig

TINY = dict(hidden=4, attn_dim=2, n_filters=2, filter_len=8, graph_dims=(2, 3))


def random_adjacency(rng, n, p=0.4):
    upper = np.triu(rng.random((n, n)) < p, 1)
    a = (upper | upper.T).astype(float)
    np.fill_diagonal(a, 1.0)
    return a


@pytest.fixture
def tiny_model():
    rng = np.random.default_rng(3)
    adj = AdjacencyMatrix(tuple("abcde"), random_adjacency(rng, 5))
    return ColaGNN(ColaGnnConfig(**TINY), adj.normalized, 8, rng)


@pytest.fixture
def toy_series():
    rng = np.random.default_rng(0)
    t = np.arange(80)
    vals = 100 + 50 * np.sin(2 * np.pi * (t[None, :] - rng.integers(0, 10, (4, 1))) / 26)
    vals = np.round(vals + rng.normal(0, 3, vals.shape))
    return EpiDataset(("a", "b", "c", "d"), vals, tuple(f"w{i}" for i in t))


# one PASS/FAIL/SKIP line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {detail}")
