import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffattack.attack import AttackConfig, run_attack
from diffattack.graph import build_graph, pagerank
from diffattack.selection import (
    BudgetSpec,
    Strategy,
    estimate_utilities_spsa,
    kg_spsa,
    knapsack_greedy,
    select_nodes,
    write_selection_csv,
)


class ConstantModel:
    def predict(self, x):
        return np.full((len(x), 1), 50.0)


class IgnoreNodeModel:
    """Prediction for one node is pinned, so perturbations cannot move it."""

    def __init__(self, j):
        self.j = j

    def predict(self, x):
        y = np.asarray(x).sum(axis=1, keepdims=True).astype(float)
        y[self.j] = 42.0
        return y


def star_graph(leaves=4):
    return build_graph([(0, i) for i in range(1, leaves + 1)], leaves + 1)


# ------------------------------------------------------------------ utilities

def test_probe_utility_zero_for_insensitive_node():
    model = IgnoreNodeModel(2)
    x = np.random.default_rng(0).random((5, 4)) * 50
    est = estimate_utilities_spsa(model, x, AttackConfig(probe_iter=50, seed=0))
    assert est.values[2] == 0.0
    assert est.provenance == "spsa_probe"


def test_probe_utility_zero_for_constant_model():
    est = estimate_utilities_spsa(ConstantModel(), np.ones((4, 3)) * 40, AttackConfig(probe_iter=30))
    assert np.array_equal(est.values, np.zeros(4))


def spearman(a, b):
    ra = np.argsort(np.argsort(a))
    rb = np.argsort(np.argsort(b))
    return float(np.corrcoef(ra, rb)[0, 1])


def test_probe_utilities_rank_single_node_influence(small_world):
    graph, ds, model, _ = small_world
    x, _ = ds.sample(int(ds.test_starts[0]))
    cfg = AttackConfig(probe_iter=100, seed=11)
    est = estimate_utilities_spsa(model, x, cfg)
    per_node = np.zeros(graph.n_nodes)
    for h in range(graph.n_nodes):
        out = run_attack(model, x, {h}, AttackConfig(max_iter=400, seed=11))
        per_node[h] = out.influence.total
    assert spearman(est.values, per_node) > 0.3


# ------------------------------------------------------------ knapsack greedy

def test_greedy_empty_when_nothing_fits():
    spec = BudgetSpec(budget=0.5, costs=np.array([1.0, 2.0]))
    assert knapsack_greedy(np.array([5.0, 1.0]), spec) == []


def test_greedy_unit_costs_is_top_k():
    spec = BudgetSpec(budget=3.0, costs=np.ones(5))
    utilities = np.array([0.1, 5.0, 3.0, 4.0, 0.2])
    assert sorted(knapsack_greedy(utilities, spec)) == [1, 2, 3]


def test_greedy_ratio_example_matches_bruteforce():
    utilities = np.array([6.0, 5.0, 4.0])
    spec = BudgetSpec(budget=4.0, costs=np.array([3.0, 2.0, 2.0]))
    picked = knapsack_greedy(utilities, spec)
    assert sorted(picked) == [1, 2]
    best = max(
        (sum(utilities[i] for i in range(3) if m >> i & 1), m)
        for m in range(8)
        if sum(spec.costs[i] for i in range(3) if m >> i & 1) <= 4.0
    )
    assert sum(utilities[i] for i in picked) == pytest.approx(best[0])


def test_greedy_tie_breaks_to_lowest_index():
    spec = BudgetSpec(budget=1.0, costs=np.ones(3))
    assert knapsack_greedy(np.array([2.0, 2.0, 2.0]), spec) == [0]


def test_greedy_rejects_nonfinite():
    with pytest.raises(ValueError):
        knapsack_greedy(np.array([np.inf, 1.0]), BudgetSpec(budget=2.0, costs=np.ones(2)))


@given(
    st.lists(st.floats(0, 10), min_size=1, max_size=12),
    st.data(),
)
@settings(max_examples=100, deadline=None)
def test_greedy_always_feasible(utilities, data):
    n = len(utilities)
    costs = np.array(data.draw(st.lists(st.integers(1, 9), min_size=n, max_size=n)), dtype=float)
    budget = data.draw(st.floats(0, float(costs.sum()) * 1.2))
    spec = BudgetSpec(budget=budget, costs=costs)
    picked = knapsack_greedy(np.array(utilities), spec)
    assert costs[picked].sum() <= budget + 1e-9
    assert len(set(picked)) == len(picked)


# --------------------------------------------------------------- select_nodes

def test_select_degree_star_center():
    graph = star_graph()
    budget = BudgetSpec.from_graph(graph, budget=4.0)
    picked = select_nodes(Strategy.DEGREE, graph, None, None, budget, AttackConfig())
    assert picked[0] == 0
    assert budget.costs[picked].sum() <= 4.0


def test_select_random_deterministic_under_seed():
    graph = star_graph(6)
    budget = BudgetSpec.from_graph(graph, budget=3.0)
    cfg = AttackConfig(seed=123)
    a = select_nodes(Strategy.RANDOM, graph, None, None, budget, cfg)
    b = select_nodes(Strategy.RANDOM, graph, None, None, budget, cfg)
    assert a == b


def test_kg_pagerank_beats_pagerank_when_top_node_expensive():
    graph = star_graph(4)  # center degree 4, leaves degree 1
    budget = BudgetSpec.from_graph(graph, budget=4.0)
    plain = select_nodes(Strategy.PAGERANK, graph, None, None, budget, AttackConfig())
    kg = select_nodes(Strategy.KG_PAGERANK, graph, None, None, budget, AttackConfig())
    scores = pagerank(graph)
    assert plain == [0]
    assert sorted(kg) == [1, 2, 3, 4]
    assert scores[kg].sum() > scores[plain].sum()


def test_select_k_medoids_respects_budget():
    rng = np.random.default_rng(3)
    positions = rng.random((8, 2))
    graph = build_graph([(i, (i + 1) % 8) for i in range(8)], 8, node_positions=positions)
    budget = BudgetSpec.from_graph(graph, budget=6.0)
    picked = select_nodes(Strategy.K_MEDOIDS, graph, None, None, budget, AttackConfig(seed=1))
    assert 0 < len(picked) <= 3
    assert budget.costs[picked].sum() <= 6.0


def test_select_k_medoids_needs_positions():
    graph = star_graph()
    with pytest.raises(ValueError):
        select_nodes(Strategy.K_MEDOIDS, graph, None, None, BudgetSpec.from_graph(graph, 3.0), AttackConfig())


def test_all_strategies_budget_feasible(small_world):
    graph, ds, model, _ = small_world
    x, _ = ds.sample(int(ds.test_starts[0]))
    cfg = AttackConfig(probe_iter=20, seed=5)
    for budget_value in (0.0, 5.0, 20.0, 1e6):
        budget = BudgetSpec.from_graph(graph, budget_value)
        for strategy in Strategy:
            picked = select_nodes(strategy, graph, model, x, budget, cfg)
            assert budget.costs[picked].sum() <= budget_value + 1e-9


# -------------------------------------------------------------------- kg_spsa

def test_kg_spsa_zero_budget(small_world):
    graph, ds, model, _ = small_world
    x, _ = ds.sample(int(ds.test_starts[0]))
    res = kg_spsa(model, x, graph, BudgetSpec.from_graph(graph, 0.0), AttackConfig(max_iter=10, probe_iter=10))
    assert res.selected == []
    assert np.array_equal(res.perturbation.matrix, np.zeros_like(x))
    assert res.influence.total == 0.0


def test_kg_spsa_end_to_end(small_world):
    graph, ds, model, _ = small_world
    x, _ = ds.sample(int(ds.test_starts[0]))
    budget = BudgetSpec.from_graph(graph, float(budget_quarter(graph)))
    cfg = AttackConfig(max_iter=400, probe_iter=100, seed=2)
    res = kg_spsa(model, x, graph, budget, cfg)
    assert budget.costs[res.selected].sum() <= budget.budget
    assert res.influence.total > 0
    res.perturbation.validate(x, cfg)


def budget_quarter(graph):
    return 0.25 * np.maximum(graph.degrees, 1.0).sum()


# ------------------------------------------------------------------ csv output

def test_selection_csv_layout(tmp_path):
    graph = star_graph()
    budget = BudgetSpec.from_graph(graph, 4.0)
    scores = graph.degrees.astype(float)
    picked = select_nodes(Strategy.DEGREE, graph, None, None, budget, AttackConfig())
    path = tmp_path / "selection.csv"
    write_selection_csv(path, scores, budget, picked)
    lines = path.read_text().splitlines()
    assert lines[0] == "node_id,score,cost,selected,cumulative_cost"
    assert len(lines) == graph.n_nodes + 1
    first = lines[1].split(",")
    assert first[0] == "0" and first[3] == "1"
