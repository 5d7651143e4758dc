import numpy as np
import pytest
from hypothesis import strategies as st

from bdpholdout.graphical_model import JointTable, MarkovChainSpec

CHAIN_P = np.array([[0.9, 0.1], [0.2, 0.8]])
CHAIN_PI = np.array([2 / 3, 1 / 3])


def random_joint(rng, shape, sparsity=0.0):
    """Dirichlet table; ``sparsity`` zeroes that fraction of cells (never all)."""
    p = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
    if sparsity:
        mask = rng.random(shape) < sparsity
        if mask.all():
            mask.flat[0] = False
        p = np.where(mask, 0.0, p)
        p = p / p.sum()
    return JointTable.from_array(p)


@st.composite
def joints(draw, max_nodes=3, max_states=3, allow_zeros=True):
    n = draw(st.integers(1, max_nodes))
    shape = tuple(draw(st.integers(2, max_states)) for _ in range(n))
    seed = draw(st.integers(0, 2**32 - 1))
    sparsity = draw(st.sampled_from([0.0, 0.3])) if allow_zeros else 0.0
    return random_joint(np.random.default_rng(seed), shape, sparsity)


@pytest.fixture
def chain2():
    return MarkovChainSpec(CHAIN_P, CHAIN_PI, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)
