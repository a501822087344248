"""Attack metrics and the experiment harness.

AAI is the mean absolute per-node prediction shift in km/h; AAIR divides the
signed shift by the baseline forecast magnitude, excluding near-zero
baselines. The harness pieces (hop curves, budget sweeps, comparison grids)
all reduce to repeated run_attack calls with labeled RNG substreams, so every
table is reproducible byte-for-byte from (checkpoint, config, seed).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .attack import AttackConfig, run_attack
from .graph import Graph, hop_distances
from .selection import BudgetSpec, Strategy, select_nodes

AAIR_FLOOR = 0.1  # km/h; baselines below this are excluded from the ratio


def max_workers() -> int:
    value = os.environ.get("DIFFATTACK_THREADS", "")
    if value.strip():
        return max(1, int(value))
    return min(4, os.cpu_count() or 1)


def sample_test_windows(dataset, count: int, seed: int) -> list[np.ndarray]:
    """Up to ``count`` feature windows drawn without replacement from the test
    region, in time order."""
    starts = dataset.test_starts
    if count >= len(starts):
        chosen = starts
    else:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 4242]))
        chosen = np.sort(rng.choice(starts, size=count, replace=False))
    return [dataset.sample(int(s))[0] for s in chosen]


def aai(phi: np.ndarray) -> float:
    """Mean absolute influence over all nodes."""
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("influence values must be finite")
    return float(np.mean(np.abs(phi)))


def _baseline_magnitude(y_baseline: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(y_baseline, dtype=float)).sum(axis=1)


def aair(phi: np.ndarray, y_baseline: np.ndarray, floor: float = AAIR_FLOOR) -> float:
    """Mean signed influence relative to the baseline forecast magnitude.

    Nodes whose baseline is below ``floor`` km/h are excluded; raising when
    nothing is left beats silently dividing by nearly zero.
    """
    phi = np.asarray(phi, dtype=float)
    magnitude = _baseline_magnitude(y_baseline)
    included = magnitude >= floor
    if not included.any():
        raise ValueError("all nodes excluded by the baseline floor")
    return float(np.mean(phi[included] / magnitude[included]))


def aair_excluded_count(y_baseline: np.ndarray, floor: float = AAIR_FLOOR) -> int:
    return int((_baseline_magnitude(y_baseline) < floor).sum())


@dataclass(frozen=True)
class AttackReport:
    strategy: str
    budget: float
    seed: int
    n_windows: int
    aai: float
    aair: float
    n_excluded: int
    aai_per_window: np.ndarray
    aair_per_window: np.ndarray
    phi_mean: np.ndarray
    selected: list
    evaluations: int


@dataclass(frozen=True)
class HopCurve:
    """Mean absolute influence grouped by hop distance from the attacked node."""

    attacked_node: int
    means: np.ndarray
    counts: np.ndarray

    def __len__(self):
        return len(self.means)


def evaluate_strategy(
    model,
    windows,
    graph: Graph,
    strategy,
    budget: BudgetSpec,
    cfg: AttackConfig,
) -> AttackReport:
    """Attack each window with the strategy's node set; average the metrics.

    SPSA-based strategies re-probe per window (probe and attack share the
    window); purely structural strategies select the same set everywhere.
    """
    strategy = Strategy(strategy)
    aais, aairs, phis = [], [], []
    n_excluded = 0
    selected: list = []
    evaluations = 0
    for idx, x in enumerate(windows):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7000 + idx]))
        selected = select_nodes(strategy, graph, model, x, budget, cfg, rng=rng)
        outcome = run_attack(model, x, selected, cfg, rng=rng)
        evaluations += outcome.evaluations
        aais.append(aai(outcome.influence.phi))
        aairs.append(aair(outcome.influence.phi, outcome.influence.y_base))
        n_excluded += aair_excluded_count(outcome.influence.y_base)
        phis.append(outcome.influence.phi)
    return AttackReport(
        strategy=strategy.value,
        budget=budget.budget,
        seed=cfg.seed,
        n_windows=len(aais),
        aai=float(np.mean(aais)),
        aair=float(np.mean(aairs)),
        n_excluded=n_excluded,
        aai_per_window=np.asarray(aais),
        aair_per_window=np.asarray(aairs),
        phi_mean=np.mean(phis, axis=0),
        selected=list(selected),
        evaluations=evaluations,
    )


def hop_influence(model, x, graph: Graph, h: int, cfg: AttackConfig) -> HopCurve:
    """Attack only node ``h`` and fold |phi| by hop distance from it."""
    outcome = run_attack(model, x, {h}, cfg)
    dist = hop_distances(graph, h)
    reach = dist[dist >= 0]
    max_hop = int(reach.max()) if len(reach) else 0
    means = np.zeros(max_hop + 1)
    counts = np.zeros(max_hop + 1, dtype=int)
    abs_phi = np.abs(outcome.influence.phi)
    for hop in range(max_hop + 1):
        mask = dist == hop
        counts[hop] = int(mask.sum())
        if counts[hop]:
            means[hop] = float(abs_phi[mask].mean())
    return HopCurve(attacked_node=h, means=means, counts=counts)


def budget_sweep(
    model,
    windows,
    graph: Graph,
    strategy,
    budgets,
    cfg: AttackConfig,
) -> list[AttackReport]:
    """One report per budget, all rows sharing the same seed.

    Rows are independent jobs; a bounded thread pool runs them and the
    ascending-budget order of the result does not depend on scheduling.
    """
    budgets = sorted(budgets)

    def cell(b):
        return evaluate_strategy(model, windows, graph, strategy, BudgetSpec.from_graph(graph, b), cfg)

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        return list(pool.map(cell, budgets))


def comparison_table(
    models: dict,
    windows,
    graph: Graph,
    strategies,
    budget_value: float,
    cfg: AttackConfig,
) -> list[AttackReport]:
    """Model-variant x strategy grid of reports, row-major by (model, strategy)."""
    cells = [(name, Strategy(s)) for name in models for s in strategies]

    def run(cell):
        name, strategy = cell
        budget = BudgetSpec.from_graph(graph, budget_value)
        report = evaluate_strategy(models[name], windows, graph, strategy, budget, cfg)
        return replace(report, strategy=f"{name}:{strategy.value}")

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        return list(pool.map(run, cells))


def format_comparison_text(reports) -> str:
    """Fixed-width text table of AAI / AAIR per (variant, strategy) cell."""
    lines = [f"{'cell':<32} {'AAI':>10} {'AAIR':>10}"]
    for rep in reports:
        lines.append(f"{rep.strategy:<32} {rep.aai:>10.4f} {rep.aair:>10.4f}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- report bundle

def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _csv(rows) -> str:
    return "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"


def summary_rows(reports) -> list:
    rows = [("strategy", "budget", "seed", "windows", "aai", "aair", "n_excluded", "n_selected", "evaluations")]
    for rep in reports:
        rows.append(
            (
                rep.strategy,
                repr(float(rep.budget)),
                rep.seed,
                rep.n_windows,
                repr(rep.aai),
                repr(rep.aair),
                rep.n_excluded,
                len(rep.selected),
                rep.evaluations,
            )
        )
    return rows


def write_report_bundle(
    outdir,
    reports=None,
    hop_curve: HopCurve | None = None,
    sweep=None,
    perturbation=None,
    graph: Graph | None = None,
    plots: bool = False,
) -> None:
    """Write summary/per-node/hop/sweep CSVs (and optional SVG plots).

    Every file is written atomically; all numbers use full-precision reprs so
    identical inputs produce byte-identical bundles.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if reports:
        atomic_write_text(outdir / "summary.csv", _csv(summary_rows(reports)))
        rows = [("node_id", "phi", "selected")]
        rep = reports[0]
        chosen = set(rep.selected)
        for i, phi in enumerate(rep.phi_mean):
            rows.append((i, repr(float(phi)), int(i in chosen)))
        atomic_write_text(outdir / "per_node_phi.csv", _csv(rows))
    if hop_curve is not None:
        rows = [("hop", "mean_abs_phi", "n_nodes")]
        for hop, (mean, count) in enumerate(zip(hop_curve.means, hop_curve.counts)):
            rows.append((hop, repr(float(mean)), int(count)))
        atomic_write_text(outdir / "hop_curve.csv", _csv(rows))
    if sweep:
        rows = [("budget", "aai", "aair", "n_selected")]
        for rep in sweep:
            rows.append((repr(float(rep.budget)), repr(rep.aai), repr(rep.aair), len(rep.selected)))
        atomic_write_text(outdir / "sweep.csv", _csv(rows))
    if perturbation is not None:
        rows = [tuple(repr(float(v)) for v in row) for row in perturbation]
        atomic_write_text(outdir / "perturbation.csv", _csv(rows))
    if plots:
        _write_plots(outdir, reports, hop_curve, sweep, graph)


def _write_plots(outdir, reports, hop_curve, sweep, graph) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if hop_curve is not None:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(range(len(hop_curve.means)), hop_curve.means, marker="o")
        ax.set_xlabel("hops from attacked node")
        ax.set_ylabel("mean |phi| (km/h)")
        fig.tight_layout()
        fig.savefig(outdir / "hop_curve.svg")
        plt.close(fig)
    if sweep:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot([r.budget for r in sweep], [r.aai for r in sweep], marker="s")
        ax.set_xlabel("budget")
        ax.set_ylabel("AAI (km/h)")
        fig.tight_layout()
        fig.savefig(outdir / "budget_curve.svg")
        plt.close(fig)
    if reports and graph is not None and graph.node_positions is not None:
        rep = reports[0]
        mags = _safe_node_ratio(rep)
        fig, ax = plt.subplots(figsize=(5, 4))
        sc = ax.scatter(
            graph.node_positions[:, 0],
            graph.node_positions[:, 1],
            c=mags,
            cmap="RdYlGn_r",
            s=36,
        )
        chosen = list(rep.selected)
        if chosen:
            ax.scatter(
                graph.node_positions[chosen, 0],
                graph.node_positions[chosen, 1],
                marker="^",
                s=90,
                facecolors="none",
                edgecolors="black",
            )
        fig.colorbar(sc, ax=ax, label="per-node influence")
        fig.tight_layout()
        fig.savefig(outdir / "node_map.svg")
        plt.close(fig)


def _safe_node_ratio(rep) -> np.ndarray:
    phi = np.abs(rep.phi_mean)
    top = phi.max()
    return phi / top if top > 0 else phi
