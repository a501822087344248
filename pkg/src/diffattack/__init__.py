"""Budgeted black-box diffusion attacks on GCN traffic speed predictors."""

from .attack import (
    AttackConfig,
    AttackOutcome,
    InfluenceResult,
    Perturbation,
    clip_perturbation,
    gain_sequences,
    influence,
    run_attack,
    sample_masked_rademacher,
    spsa_gradient,
)
from .config import RunConfig, load_run_config, substream
from .data import SpeedDataset, SyntheticSpec, generate_synthetic, load_speed_csv, save_speed_csv
from .evaluation import (
    AttackReport,
    HopCurve,
    aai,
    aair,
    budget_sweep,
    comparison_table,
    evaluate_strategy,
    hop_influence,
    sample_test_windows,
    write_report_bundle,
)
from .graph import (
    Graph,
    NormalizedAdjacency,
    betweenness,
    build_graph,
    graph_hash,
    k_hop_neighbors,
    k_medoids,
    normalized_adjacency,
    pagerank,
)
from .predictor import (
    BlackBoxModel,
    GcnPredictor,
    TrainingConfig,
    WindowedDataset,
    accuracy,
    apply_drop,
    forward,
    init_predictor,
    load_checkpoint,
    rmse,
    save_checkpoint,
    train,
)
from .selection import (
    BudgetSpec,
    KgSpsaResult,
    Strategy,
    UtilityEstimate,
    estimate_utilities_spsa,
    kg_spsa,
    knapsack_greedy,
    select_nodes,
)

__version__ = "0.1.0"
