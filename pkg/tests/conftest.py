import numpy as np
import pytest

from synergraph import fixtures
from synergraph.predictor import KnowledgeBase

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_data():
    """Unfiltered in-memory corpus (8 genes, 4-dim targets) and its knowledge base."""
    ds, knowledge = fixtures.in_memory(0, n_genes=8, n_triplets=200, target_dim=4)
    return ds, KnowledgeBase(knowledge)
