"""Attack-node selection under a budget.

Nine strategies share one surface: plain score rankings (degree, random,
centrality, probe utilities), the geo-clustering picker, and the knapsack
greedy variants that rank by utility per unit cost instead of raw score.
Costs default to node degree with a floor of one so isolated nodes stay
selectable at finite cost.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .attack import AttackConfig, AttackOutcome, InfluenceResult, run_attack
from .graph import Graph, betweenness, k_medoids, pagerank


class Strategy(str, Enum):
    DEGREE = "degree"
    RANDOM = "random"
    K_MEDOIDS = "k_medoids"
    PAGERANK = "pagerank"
    BETWEENNESS = "betweenness"
    SPSA = "spsa"
    KG_PAGERANK = "kg_pagerank"
    KG_BETWEENNESS = "kg_betweenness"
    KG_SPSA = "kg_spsa"

    @property
    def is_kg(self) -> bool:
        return self.value.startswith("kg_")


@dataclass(frozen=True)
class BudgetSpec:
    """Total budget and per-node attack costs (all strictly positive)."""

    budget: float
    costs: np.ndarray

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if np.any(self.costs <= 0):
            raise ValueError("all costs must be positive")

    @classmethod
    def from_graph(cls, graph: Graph, budget: float) -> "BudgetSpec":
        return cls(budget=budget, costs=np.maximum(graph.degrees, 1.0))


@dataclass(frozen=True)
class UtilityEstimate:
    values: np.ndarray
    provenance: str


def estimate_utilities_spsa(model, x, cfg: AttackConfig) -> UtilityEstimate:
    """Short full-support attack; each node's influence under it is its utility."""
    probe_cfg = replace(cfg, max_iter=cfg.probe_iter)
    outcome = run_attack(model, x, range(len(x)), probe_cfg)
    return UtilityEstimate(values=outcome.influence.phi, provenance="spsa_probe")


def knapsack_greedy(utilities: np.ndarray, budget: BudgetSpec) -> list[int]:
    """Take nodes by utility-per-cost, skipping any that no longer fit.

    Ties break toward the lower node index. Returns selection order; the
    cumulative cost never exceeds the budget.
    """
    utilities = np.asarray(utilities, dtype=float)
    if not np.all(np.isfinite(utilities)):
        raise ValueError("utilities must be finite")
    ratios = utilities / budget.costs
    order = sorted(range(len(utilities)), key=lambda i: (-ratios[i], i))
    return _take_affordable(order, budget)


def _take_affordable(order, budget: BudgetSpec) -> list[int]:
    selected = []
    spent = 0.0
    for i in order:
        cost = float(budget.costs[i])
        if spent + cost <= budget.budget:
            selected.append(i)
            spent += cost
    return selected


def strategy_scores(strategy, graph, model, x, cfg, rng=None) -> np.ndarray | None:
    """Per-node score a strategy ranks by; None for the clustering strategy."""
    strategy = Strategy(strategy)
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    if strategy is Strategy.K_MEDOIDS:
        return None
    if strategy is Strategy.DEGREE:
        return graph.degrees.astype(float)
    if strategy is Strategy.RANDOM:
        return rng.random(graph.n_nodes)
    if strategy in (Strategy.PAGERANK, Strategy.KG_PAGERANK):
        return pagerank(graph)
    if strategy in (Strategy.BETWEENNESS, Strategy.KG_BETWEENNESS):
        return betweenness(graph)
    return estimate_utilities_spsa(model, x, cfg).values


def select_from_scores(scores, budget: BudgetSpec, kg: bool) -> list[int]:
    if kg:
        return knapsack_greedy(scores, budget)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return _take_affordable(order, budget)


def select_nodes(strategy, graph, model, x, budget: BudgetSpec, cfg: AttackConfig, rng=None) -> list[int]:
    """Attack set for any strategy; always budget-feasible.

    Score strategies rank by raw score, kg strategies by score per cost, the
    clustering strategy grows k until the medoid set stops fitting.
    """
    strategy = Strategy(strategy)
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    if strategy is Strategy.K_MEDOIDS:
        return _select_medoids(graph, budget, rng)
    scores = strategy_scores(strategy, graph, model, x, cfg, rng)
    return select_from_scores(scores, budget, strategy.is_kg)


def _select_medoids(graph, budget, rng) -> list[int]:
    if graph.node_positions is None:
        raise ValueError("k_medoids strategy needs node positions")
    best: list[int] = []
    for k in range(1, graph.n_nodes + 1):
        medoids = k_medoids(graph.node_positions, k, rng.integers(2**32))
        if budget.costs[medoids].sum() > budget.budget:
            break
        best = [int(m) for m in medoids]
    return best


@dataclass(frozen=True)
class KgSpsaResult:
    x_adv: np.ndarray
    perturbation: object
    selected: list
    influence: InfluenceResult
    utilities: UtilityEstimate
    evaluations: int


def kg_spsa(model, x, graph: Graph, budget: BudgetSpec, cfg: AttackConfig) -> KgSpsaResult:
    """Probe utilities with a short full-support run, pick nodes greedily by
    utility per cost, then run the full-length attack on the chosen set."""
    utilities = estimate_utilities_spsa(model, x, cfg)
    selected = knapsack_greedy(utilities.values, budget)
    outcome: AttackOutcome = run_attack(model, x, selected, cfg)
    return KgSpsaResult(
        x_adv=outcome.x_adv,
        perturbation=outcome.perturbation,
        selected=selected,
        influence=outcome.influence,
        utilities=utilities,
        evaluations=outcome.evaluations,
    )


def write_selection_csv(path, scores, budget: BudgetSpec, selected) -> None:
    """One row per node in consideration order: score, cost, selected flag,
    and the cumulative cost of the selection up to that row."""
    chosen = set(selected)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    lines = ["node_id,score,cost,selected,cumulative_cost"]
    spent = 0.0
    for i in order:
        if i in chosen:
            spent += float(budget.costs[i])
        lines.append(
            f"{i},{repr(float(scores[i]))},{repr(float(budget.costs[i]))},"
            f"{int(i in chosen)},{repr(spent)}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
