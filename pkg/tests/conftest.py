import numpy as np
import pytest

from diffattack.data import SyntheticSpec, generate_synthetic
from diffattack.graph import normalized_adjacency
from diffattack.predictor import TrainingConfig, WindowedDataset, init_predictor, train


@pytest.fixture(scope="session")
def small_world():
    """A 20-node trained predictor shared by attack/selection/evaluation tests."""
    spec = SyntheticSpec(n_nodes=20, days=2, radius=0.35, seed=7)
    graph, dataset = generate_synthetic(spec)
    ds = WindowedDataset.from_speeds(dataset.speeds, window=8, horizon=1)
    model = init_predictor(normalized_adjacency(graph), window=8, hidden_dims=(12, 12), seed=7)
    model, history = train(model, ds, graph, TrainingConfig(epochs=25, seed=7))
    return graph, ds, model, history


class CountingModel:
    """Wrapper asserting black-box discipline: counts predict() calls."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def predict(self, x):
        self.calls += 1
        return self.inner.predict(x)


@pytest.fixture
def counting(small_world):
    _, _, model, _ = small_world
    return CountingModel(model)


class NegSumModel:
    """predict = -sum of each node's features; makes the signed influence
    objective exactly sum(U) over the attack set (separable, linear)."""

    def predict(self, x):
        return -np.asarray(x).sum(axis=1, keepdims=True)
