"""Command-line surface: gen, train, select, attack, evaluate, sweep, report.

Every command accepts --config (flat key=value file) plus flag overrides;
outputs land in --out as comma-separated UTF-8 CSVs with LF endings. Failures
print a single ``error: ...`` line to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .attack import run_attack
from .config import RunConfig, load_run_config, substream
from .data import SpeedDataset, generate_synthetic, load_speed_csv, save_speed_csv
from .evaluation import (
    aai,
    aair,
    aair_excluded_count,
    atomic_write_text,
    budget_sweep,
    comparison_table,
    evaluate_strategy,
    format_comparison_text,
    hop_influence,
    sample_test_windows,
    summary_rows,
    write_report_bundle,
)
from .graph import (
    Graph,
    graph_hash,
    load_adjacency_csv,
    load_positions_csv,
    normalized_adjacency,
    save_adjacency_csv,
    save_positions_csv,
)
from .predictor import WindowedDataset, init_predictor, load_checkpoint, save_checkpoint, train
from .selection import (
    BudgetSpec,
    Strategy,
    select_from_scores,
    select_nodes,
    strategy_scores,
    write_selection_csv,
)

# Table-style row order for the strategy comparison report
REPORT_STRATEGIES = (
    Strategy.DEGREE,
    Strategy.K_MEDOIDS,
    Strategy.PAGERANK,
    Strategy.BETWEENNESS,
    Strategy.KG_BETWEENNESS,
    Strategy.KG_PAGERANK,
    Strategy.RANDOM,
    Strategy.SPSA,
    Strategy.KG_SPSA,
)


def _csv_text(rows) -> str:
    return "\n".join(",".join(str(c) for c in row) for row in rows) + "\n"


def _overrides(args, keys) -> dict:
    return {key: getattr(args, key) for key in keys if getattr(args, key, None) is not None}


def _load_graph(cfg: RunConfig) -> Graph:
    adjacency = load_adjacency_csv(cfg.adjacency)
    positions = load_positions_csv(cfg.positions) if cfg.positions else None
    undirected = bool(np.array_equal(adjacency, adjacency.T))
    return Graph(
        n_nodes=len(adjacency),
        adjacency=adjacency,
        undirected=undirected,
        node_positions=positions,
    )


def _load_windows(cfg: RunConfig) -> WindowedDataset:
    speeds = load_speed_csv(cfg.data)
    return WindowedDataset.from_speeds(
        speeds.speeds, window=cfg.window, horizon=cfg.horizon, train_fraction=cfg.train_fraction
    )


def _load_model(cfg: RunConfig, graph: Graph):
    model = load_checkpoint(cfg.checkpoint)
    digest = graph_hash(graph.adjacency)
    if model.graph_hash and model.graph_hash != digest:
        raise ValueError(
            f"checkpoint graph hash {model.graph_hash[:12]} does not match adjacency {digest[:12]}"
        )
    return model


def _test_window(ds: WindowedDataset, index: int) -> np.ndarray:
    starts = ds.test_starts
    if len(starts) == 0:
        raise ValueError("dataset has no test windows")
    if not 0 <= index < len(starts):
        raise ValueError(f"window index {index} out of range (0..{len(starts) - 1})")
    return ds.sample(int(starts[index]))[0]


def cmd_gen(args) -> int:
    cfg = load_run_config(args.config, _overrides(args, ("seed", "out", "n_nodes", "days", "graph_model")))
    if not cfg.out:
        raise ValueError("gen needs --out")
    graph, dataset = generate_synthetic(cfg.synthetic_spec())
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    save_speed_csv(dataset, outdir / "speeds.csv")
    save_adjacency_csv(graph.adjacency, outdir / "adjacency.csv")
    save_positions_csv(graph.node_positions, outdir / "positions.csv")
    print(f"gen: {cfg.n_nodes} nodes, {dataset.speeds.shape[0]} steps -> {outdir}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(
        args.config,
        _overrides(args, ("seed", "data", "adjacency", "positions", "checkpoint", "epochs", "drop_mode")),
        require=("data", "adjacency"),
    )
    if not cfg.checkpoint:
        raise ValueError("train needs --checkpoint to store the model")
    graph = _load_graph(cfg)
    ds = _load_windows(cfg)
    init_seed = int(substream(cfg.seed, "init").integers(2**32))
    model = init_predictor(
        normalized_adjacency(graph),
        window=cfg.window,
        horizon=cfg.horizon,
        hidden_dims=cfg.hidden_dims,
        seed=init_seed,
    )
    started = time.perf_counter()
    model, history = train(model, ds, graph, cfg.training_config())
    elapsed = time.perf_counter() - started
    save_checkpoint(model, cfg.checkpoint)
    print(f"train: epochs={cfg.epochs} drop={cfg.drop_mode} wall={elapsed:.1f}s")
    print(f"accuracy={history['accuracy']}")
    print(f"rmse={history['rmse']}")
    return 0


def cmd_select(args) -> int:
    cfg = load_run_config(
        args.config,
        _overrides(args, ("seed", "data", "adjacency", "positions", "checkpoint", "strategy", "budget", "out", "window_index")),
        require=("data", "adjacency", "checkpoint"),
    )
    if not cfg.out:
        raise ValueError("select needs --out")
    graph = _load_graph(cfg)
    ds = _load_windows(cfg)
    model = _load_model(cfg, graph)
    x = _test_window(ds, cfg.window_index)
    strategy = Strategy(cfg.strategy)
    budget = BudgetSpec.from_graph(graph, cfg.budget)
    attack_cfg = cfg.attack_config()
    rng = substream(cfg.seed, "selection")
    if strategy is Strategy.K_MEDOIDS:
        picked = select_nodes(strategy, graph, model, x, budget, attack_cfg, rng=rng)
        scores = np.zeros(graph.n_nodes)
        scores[picked] = 1.0
    else:
        scores = strategy_scores(strategy, graph, model, x, attack_cfg, rng=rng)
        picked = select_from_scores(scores, budget, strategy.is_kg)
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_selection_csv(outdir / "selection.csv", scores, budget, picked)
    print(f"select: strategy={strategy.value} budget={cfg.budget} -> {len(picked)} nodes")
    return 0


def _parse_nodes(raw: str) -> list[int]:
    return [int(p) for p in raw.split(",") if p.strip() != ""]


def cmd_attack(args) -> int:
    cfg = load_run_config(
        args.config,
        _overrides(args, ("seed", "data", "adjacency", "positions", "checkpoint", "strategy", "budget", "out", "window_index", "max_iter")),
        require=("data", "adjacency", "checkpoint"),
    )
    if not cfg.out:
        raise ValueError("attack needs --out")
    graph = _load_graph(cfg)
    ds = _load_windows(cfg)
    model = _load_model(cfg, graph)
    x = _test_window(ds, cfg.window_index)
    attack_cfg = cfg.attack_config()
    budget = BudgetSpec.from_graph(graph, cfg.budget)
    if args.nodes:
        picked = _parse_nodes(args.nodes)
    else:
        picked = select_nodes(cfg.strategy, graph, model, x, budget, attack_cfg, rng=substream(cfg.seed, "selection"))
    started = time.perf_counter()
    outcome = run_attack(model, x, picked, attack_cfg, rng=substream(cfg.seed, "spsa"))
    elapsed = time.perf_counter() - started

    infl = outcome.influence
    rows = [
        ("strategy", "budget", "seed", "window_index", "phi_total", "aai", "aair", "n_excluded", "n_selected", "evaluations"),
        (
            cfg.strategy if not args.nodes else "explicit",
            repr(float(cfg.budget)),
            cfg.seed,
            cfg.window_index,
            repr(infl.total),
            repr(aai(infl.phi)),
            repr(aair(infl.phi, infl.y_base)),
            aair_excluded_count(infl.y_base),
            len(picked),
            outcome.evaluations,
        ),
    ]
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(outdir / "summary.csv", _csv_text(rows))
    phi_rows = [("node_id", "phi")] + [(i, repr(float(v))) for i, v in enumerate(infl.phi)]
    atomic_write_text(outdir / "phi.csv", _csv_text(phi_rows))
    pert_rows = [tuple(repr(float(v)) for v in row) for row in outcome.perturbation.matrix]
    atomic_write_text(outdir / "perturbation.csv", _csv_text(pert_rows))
    (outdir / "run_info.txt").write_text(
        f"wall_time_seconds={elapsed:.3f}\nevaluations={outcome.evaluations}\n", encoding="utf-8"
    )
    print(f"attack: AAI={aai(infl.phi):.4f} km/h, phi_total={infl.total:.4f}, wall={elapsed:.1f}s")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_run_config(
        args.config,
        _overrides(args, ("seed", "data", "adjacency", "positions", "checkpoint", "strategy", "budget", "out", "windows")),
        require=("data", "adjacency", "checkpoint"),
    )
    if not cfg.out:
        raise ValueError("evaluate needs --out")
    graph = _load_graph(cfg)
    ds = _load_windows(cfg)
    model = _load_model(cfg, graph)
    windows = sample_test_windows(ds, cfg.windows, cfg.seed)
    attack_cfg = cfg.attack_config()
    budget = BudgetSpec.from_graph(graph, cfg.budget)
    report = evaluate_strategy(model, windows, graph, cfg.strategy, budget, attack_cfg)
    hop_node = args.hop_node if args.hop_node is not None else (report.selected[0] if report.selected else 0)
    curve = hop_influence(model, windows[0], graph, int(hop_node), attack_cfg)
    write_report_bundle(cfg.out, reports=[report], hop_curve=curve, graph=graph, plots=args.plots)
    print(f"evaluate: strategy={report.strategy} AAI={report.aai:.4f} AAIR={report.aair:.4f} windows={report.n_windows}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_run_config(
        args.config,
        _overrides(args, ("seed", "data", "adjacency", "positions", "checkpoint", "strategy", "budgets", "out", "windows")),
        require=("data", "adjacency", "checkpoint"),
    )
    if not cfg.out:
        raise ValueError("sweep needs --out")
    graph = _load_graph(cfg)
    ds = _load_windows(cfg)
    model = _load_model(cfg, graph)
    windows = sample_test_windows(ds, cfg.windows, cfg.seed)
    reports = budget_sweep(model, windows, graph, cfg.strategy, list(cfg.budgets), cfg.attack_config())
    write_report_bundle(cfg.out, reports=reports, sweep=reports, graph=graph, plots=args.plots)
    for rep in reports:
        print(f"sweep: B={rep.budget:g} AAI={rep.aai:.4f} AAIR={rep.aair:.4f}")
    return 0


def cmd_report(args) -> int:
    cfg = load_run_config(
        args.config,
        _overrides(args, ("seed", "data", "adjacency", "positions", "strategy", "budget", "out", "windows")),
        require=("data", "adjacency"),
    )
    if not cfg.out:
        raise ValueError("report needs --out")
    if not args.checkpoints:
        raise ValueError("report needs at least one --checkpoint (label=path or path)")
    graph = _load_graph(cfg)
    ds = _load_windows(cfg)
    models = {}
    for entry in args.checkpoints:
        label, _, path = entry.rpartition("=")
        if not label:
            label, path = Path(path).stem, path
        cfg_model = load_checkpoint(path)
        digest = graph_hash(graph.adjacency)
        if cfg_model.graph_hash and cfg_model.graph_hash != digest:
            raise ValueError(f"checkpoint {path} graph hash mismatch")
        models[label] = cfg_model
    strategies = (
        [Strategy(s) for s in args.strategies.split(",")] if args.strategies else list(REPORT_STRATEGIES)
    )
    windows = sample_test_windows(ds, cfg.windows, cfg.seed)
    reports = comparison_table(models, windows, graph, strategies, cfg.budget, cfg.attack_config())
    outdir = Path(cfg.out)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = [("model", "strategy", "aai", "aair")]
    for rep in reports:
        label, _, strat = rep.strategy.partition(":")
        rows.append((label, strat, repr(rep.aai), repr(rep.aair)))
    atomic_write_text(outdir / "comparison.csv", _csv_text(rows))
    atomic_write_text(outdir / "comparison.txt", format_comparison_text(reports))
    atomic_write_text(outdir / "summary.csv", _csv_text(summary_rows(reports)))
    if args.plots:
        write_report_bundle(outdir, reports=reports, graph=graph, plots=True)
    print(format_comparison_text(reports), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffattack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, checkpoint=True, window_flags=False):
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--data", default=None, help="speeds CSV")
        p.add_argument("--adjacency", default=None, help="adjacency CSV")
        p.add_argument("--positions", default=None, help="positions CSV (lon,lat)")
        if checkpoint:
            p.add_argument("--checkpoint", default=None, help="model checkpoint (.npz)")
        if window_flags:
            p.add_argument("--windows", type=int, default=None, help="test windows to average over")

    p = sub.add_parser("gen", help="generate a synthetic benchmark")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--nodes", dest="n_nodes", type=int, default=None)
    p.add_argument("--days", type=int, default=None)
    p.add_argument("--graph-model", dest="graph_model", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a predictor and save a checkpoint")
    common(p)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--drop-mode", dest="drop_mode", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="pick attack nodes under a budget")
    common(p)
    p.add_argument("--strategy", default=None)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--window-index", dest="window_index", type=int, default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("attack", help="run the perturbation search on one window")
    common(p)
    p.add_argument("--strategy", default=None)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--nodes", default=None, help="explicit attack set, e.g. 3,7,12")
    p.add_argument("--window-index", dest="window_index", type=int, default=None)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="average attack metrics over test windows")
    common(p, window_flags=True)
    p.add_argument("--strategy", default=None)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--hop-node", dest="hop_node", type=int, default=None)
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="attack metrics across a budget grid")
    common(p, window_flags=True)
    p.add_argument("--strategy", default=None)
    p.add_argument("--budgets", default=None, help="comma list, e.g. 20,50,100,150,200")
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="strategy-by-model comparison grid")
    common(p, checkpoint=False, window_flags=True)
    p.add_argument(
        "--checkpoint",
        dest="checkpoints",
        action="append",
        default=None,
        help="label=path, repeatable",
    )
    p.add_argument("--strategies", default=None, help="comma list of strategy names")
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # argparse errors exit(2) before this
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
