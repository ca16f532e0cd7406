import numpy as np
import pytest

from spntt import LeafNode, ProductNode, SpnGraph, SumNode


@pytest.fixture
def fig1_spn() -> SpnGraph:
    """The three-variable worked example: root mixture over two products.

    Left branch: x1 (indicator), Bernoulli(0.3) on x2, Bernoulli(0.6) on x3,
    weight 0.8; right branch mirrors with p=0, 0.5, 0.9 and weight 0.2.
    """
    nodes = {
        0: SumNode((1, 2), (0.8, 0.2)),
        1: ProductNode((3, 4, 5)),
        2: ProductNode((6, 7, 8)),
        3: LeafNode(0, 1.0),
        4: LeafNode(1, 0.3),
        5: LeafNode(2, 0.6),
        6: LeafNode(0, 0.0),
        7: LeafNode(1, 0.5),
        8: LeafNode(2, 0.9),
    }
    return SpnGraph(3, 0, nodes)


# Network polynomial of the worked example, state (x1, x2, x3) -> probability.
FIG1_TABLE = {
    (1, 1, 1): 0.8 * 0.3 * 0.6,
    (1, 1, 0): 0.8 * 0.3 * 0.4,
    (1, 0, 1): 0.8 * 0.7 * 0.6,
    (1, 0, 0): 0.8 * 0.7 * 0.4,
    (0, 1, 1): 0.2 * 0.5 * 0.9,
    (0, 1, 0): 0.2 * 0.5 * 0.1,
    (0, 0, 1): 0.2 * 0.5 * 0.9,
    (0, 0, 0): 0.2 * 0.5 * 0.1,
}


@pytest.fixture
def fig1_table() -> dict:
    return dict(FIG1_TABLE)


@pytest.fixture
def single_leaf_spn() -> SpnGraph:
    return SpnGraph(1, 0, {0: LeafNode(0, 0.3)})


def brute_force_values(spn: SpnGraph) -> np.ndarray:
    """All 2^d unnormalized values, independent state-by-state enumeration."""
    from spntt import Assignment, enumerate_states

    bits = enumerate_states(spn.num_variables)
    return np.array([spn.evaluate(Assignment.from_state(row)) for row in bits])
