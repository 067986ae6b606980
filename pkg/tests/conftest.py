import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from causelab.graph import Dag


@pytest.fixture
def rng():
    return np.random.default_rng(20240513)


def random_dag(n: int, rng: np.random.Generator, p: float = 0.4) -> Dag:
    """Random DAG: upper-triangular edges on a shuffled order."""
    order = rng.permutation(n)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.append((int(order[i]), int(order[j])))
    return Dag([f"V{k}" for k in range(n)], edges)


def covariate_web_graph() -> Dag:
    """Treatment/outcome graph with three covariates used across suites:
    X1->T, X1->X2, X2->Y, X2->X3, T->Y, T->X3, X3->Y."""
    return Dag(
        ["X1", "X2", "T", "X3", "Y"],
        [
            ("X1", "T"),
            ("X1", "X2"),
            ("X2", "Y"),
            ("X2", "X3"),
            ("T", "Y"),
            ("T", "X3"),
            ("X3", "Y"),
        ],
    )
