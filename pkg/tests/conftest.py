import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from blockest.model import validate_model  # noqa: E402


@pytest.fixture
def rank1_model():
    p, q = 0.6, 0.3
    return validate_model([[p * p, p * q], [p * q, q * q]], [0.5, 0.5])


@pytest.fixture
def full_rank_model():
    return validate_model([[0.5, 0.2], [0.2, 0.4]], [0.6, 0.4])


@pytest.fixture
def rank2_model():
    from oracles import rank2_B
    return validate_model(rank2_B(0.5, 0.5, 0.7, 0.8, 0.5), [1 / 3, 1 / 3, 1 / 3])


def random_invertible_B(rng, K):
    """Symmetric B with entries in (0.05, 0.95) and smallest singular value
    bounded away from zero."""
    while True:
        U = rng.uniform(0.05, 0.95, size=(K, K))
        B = np.triu(U) + np.triu(U, 1).T
        if np.min(np.abs(np.linalg.eigvalsh(B))) > 0.05:
            return B


def random_simplex(rng, K):
    pi = rng.uniform(0.2, 1.0, size=K)
    return pi / pi.sum()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(results, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
