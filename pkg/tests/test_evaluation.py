import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diffattack.attack import AttackConfig
from diffattack.evaluation import (
    aai,
    aair,
    aair_excluded_count,
    budget_sweep,
    comparison_table,
    evaluate_strategy,
    format_comparison_text,
    hop_influence,
    max_workers,
    sample_test_windows,
    write_report_bundle,
)
from diffattack.graph import build_graph, normalized_adjacency
from diffattack.predictor import init_predictor
from diffattack.selection import BudgetSpec, Strategy


class ConstantModel:
    def predict(self, x):
        return np.full((len(x), 1), 50.0)


# -------------------------------------------------------------------- metrics

def test_aai_zero():
    assert aai(np.zeros(5)) == 0.0


def test_aai_absolute_values():
    assert aai(np.array([3.0, -3.0])) == pytest.approx(3.0)


def test_aai_mean():
    assert aai(np.array([1.0, 2.0, 3.0])) == pytest.approx(2.0)


@given(arrays(np.float64, 6, elements=st.floats(-100, 100)), st.floats(-5, 5))
@settings(max_examples=100, deadline=None)
def test_aai_symmetry_and_homogeneity(phi, c):
    assert aai(phi) == pytest.approx(aai(-phi))
    assert aai(c * phi) == pytest.approx(abs(c) * aai(phi))


def test_aair_zero():
    assert aair(np.zeros(3), np.full((3, 1), 40.0)) == 0.0


def test_aair_proportional():
    y = np.array([[20.0], [40.0], [60.0]])
    phi = 0.5 * y[:, 0]
    assert aair(phi, y) == pytest.approx(0.5)


def test_aair_single_node():
    assert aair(np.array([5.0]), np.array([[50.0]])) == pytest.approx(0.10)


def test_aair_floor_exclusions():
    y = np.array([[50.0], [0.01]])
    phi = np.array([5.0, 100.0])
    assert aair(phi, y) == pytest.approx(0.10)
    assert aair_excluded_count(y) == 1


def test_aair_all_excluded_raises():
    with pytest.raises(ValueError):
        aair(np.ones(2), np.full((2, 1), 0.001))


# ------------------------------------------------------------------ hop curve

def test_hop_curve_beyond_layers_zero(small_world):
    graph, ds, model, _ = small_world
    x, _ = ds.sample(int(ds.test_starts[0]))
    curve = hop_influence(model, x, graph, h=0, cfg=AttackConfig(max_iter=200, seed=0))
    layers = model.n_layers
    for hop in range(layers + 1, len(curve)):
        assert curve.means[hop] <= 1e-9
    assert curve.means[0] > 0


def test_hop_curve_disconnected_nodes_untouched():
    g = build_graph([(0, 1)], 4)
    model = init_predictor(normalized_adjacency(g), window=4, hidden_dims=(6,), seed=3)
    model.x_min, model.x_max = 0.0, 80.0
    x = np.random.default_rng(1).uniform(30, 60, size=(4, 4))
    curve = hop_influence(model, x, g, h=0, cfg=AttackConfig(max_iter=150, seed=1))
    # nodes 2 and 3 are unreachable: absent from the curve, influence zero
    assert curve.counts.sum() == 2
    from diffattack.attack import run_attack

    out = run_attack(model, x, {0}, AttackConfig(max_iter=150, seed=1))
    assert abs(out.influence.phi[2]) <= 1e-12 and abs(out.influence.phi[3]) <= 1e-12


# ---------------------------------------------------------------- experiments

def test_evaluate_strategy_constant_model_zero(small_world):
    graph, ds, _, _ = small_world
    windows = sample_test_windows(ds, 2, seed=0)
    budget = BudgetSpec.from_graph(graph, 10.0)
    rep = evaluate_strategy(ConstantModel(), windows, graph, Strategy.RANDOM, budget, AttackConfig(max_iter=20, seed=0))
    assert rep.aai == 0.0
    assert rep.aair == 0.0


def test_budget_sweep_zero_budget_row(small_world):
    graph, ds, model, _ = small_world
    windows = sample_test_windows(ds, 1, seed=1)
    reports = budget_sweep(model, windows, graph, Strategy.KG_SPSA, [0.0, 8.0], AttackConfig(max_iter=60, probe_iter=20, seed=1))
    assert reports[0].budget == 0.0 and reports[0].aai == 0.0
    assert reports[1].aai >= 0.0


def test_budget_doubling_never_shrinks_selection(small_world):
    graph, ds, model, _ = small_world
    windows = sample_test_windows(ds, 1, seed=2)
    cfg = AttackConfig(max_iter=40, probe_iter=20, seed=2)
    reports = budget_sweep(model, windows, graph, Strategy.DEGREE, [6.0, 12.0, 24.0], cfg)
    sizes = [len(r.selected) for r in reports]
    assert sizes == sorted(sizes)


def test_comparison_table_grid(small_world):
    graph, ds, model, _ = small_world
    windows = sample_test_windows(ds, 1, seed=3)
    cfg = AttackConfig(max_iter=40, probe_iter=20, seed=3)
    reports = comparison_table(
        {"baseline": model, "const": ConstantModel()},
        windows,
        graph,
        [Strategy.RANDOM, Strategy.KG_SPSA],
        budget_value=10.0,
        cfg=cfg,
    )
    labels = [r.strategy for r in reports]
    assert labels == ["baseline:random", "baseline:kg_spsa", "const:random", "const:kg_spsa"]
    by_label = dict(zip(labels, reports))
    assert by_label["const:random"].aai == 0.0
    assert by_label["const:kg_spsa"].aai == 0.0
    text = format_comparison_text(reports)
    assert "baseline:kg_spsa" in text


def test_report_bundle_deterministic(tmp_path, small_world):
    graph, ds, model, _ = small_world
    windows = sample_test_windows(ds, 1, seed=4)
    cfg = AttackConfig(max_iter=30, probe_iter=15, seed=4)
    budget = BudgetSpec.from_graph(graph, 10.0)
    rep = evaluate_strategy(model, windows, graph, Strategy.KG_SPSA, budget, cfg)
    curve = hop_influence(model, windows[0], graph, h=1, cfg=cfg)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        write_report_bundle(out, reports=[rep], hop_curve=curve, sweep=[rep])
    for name in ("summary.csv", "per_node_phi.csv", "hop_curve.csv", "sweep.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        assert b"\r" not in (out1 / name).read_bytes()


def test_report_bundle_plots(tmp_path, small_world):
    graph, ds, model, _ = small_world
    windows = sample_test_windows(ds, 1, seed=5)
    cfg = AttackConfig(max_iter=30, probe_iter=15, seed=5)
    budget = BudgetSpec.from_graph(graph, 10.0)
    rep = evaluate_strategy(model, windows, graph, Strategy.KG_SPSA, budget, cfg)
    curve = hop_influence(model, windows[0], graph, h=1, cfg=cfg)
    write_report_bundle(tmp_path, reports=[rep], hop_curve=curve, sweep=[rep], graph=graph, plots=True)
    for name in ("hop_curve.svg", "budget_curve.svg", "node_map.svg"):
        assert (tmp_path / name).exists()


def test_max_workers_env(monkeypatch):
    monkeypatch.setenv("DIFFATTACK_THREADS", "2")
    assert max_workers() == 2
    monkeypatch.setenv("DIFFATTACK_THREADS", "")
    assert max_workers() >= 1
