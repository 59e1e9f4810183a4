import numpy as np
import pytest
from hypothesis import strategies as st

from qimtest.graph import AdjacencyMatrix


def random_graph(v, p=0.3, seed=0, weighted=False):
    rng = np.random.default_rng(seed)
    w = np.triu(rng.random((v, v)) < p, 1).astype(float)
    if weighted:
        w *= rng.uniform(0.5, 3.0, (v, v))
    return AdjacencyMatrix(w + w.T)


@st.composite
def graphs(draw, v=None, weighted=False, max_v=8):
    n = draw(st.integers(2, max_v)) if v is None else v
    m = n * (n - 1) // 2
    if weighted:
        vals = draw(st.lists(st.sampled_from([0.0, 0.5, 1.0, 2.0]), min_size=m, max_size=m))
    else:
        vals = draw(st.lists(st.sampled_from([0.0, 1.0]), min_size=m, max_size=m))
    w = np.zeros((n, n))
    w[np.triu_indices(n, 1)] = vals
    return AdjacencyMatrix(w + w.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
