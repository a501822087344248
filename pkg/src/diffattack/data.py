"""Speed-matrix ingestion and the synthetic desk-scale benchmark.

The synthetic generator stands in for city-scale loop-detector feeds: a
diurnal sinusoid per node plus graph-smoothed noise on a configurable graph
family, positive everywhere, fully reproducible from one seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph, normalized_adjacency


@dataclass(frozen=True)
class SpeedDataset:
    """Speeds in km/h, rows are time steps, columns are nodes."""

    speeds: np.ndarray
    interval_minutes: int = 5
    node_ids: tuple = ()

    def __post_init__(self):
        if self.speeds.ndim != 2:
            raise ValueError("speed matrix must be 2-D (steps x nodes)")
        if np.any(self.speeds < 0):
            raise ValueError("speeds must be non-negative")

    @property
    def steps_per_day(self) -> int:
        return 24 * 60 // self.interval_minutes


GRAPH_MODELS = ("random-geometric", "grid", "ring")


@dataclass(frozen=True)
class SyntheticSpec:
    n_nodes: int = 60
    graph_model: str = "random-geometric"
    mean_speed: float = 55.0
    diurnal_amplitude: float = 10.0
    noise_std: float = 3.0
    days: int = 7
    interval_minutes: int = 5
    radius: float = 0.22
    seed: int = 0

    def __post_init__(self):
        if self.graph_model not in GRAPH_MODELS:
            raise ValueError(f"graph_model must be one of {GRAPH_MODELS}")
        if self.n_nodes < 1 or self.days < 1:
            raise ValueError("n_nodes and days must be positive")


def _random_geometric(n, radius, rng) -> Graph:
    positions = rng.random((n, 2))
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    a = ((dist <= radius) & ~np.eye(n, dtype=bool)).astype(float)
    return Graph(n_nodes=n, adjacency=a, node_positions=positions)


def _grid(n) -> Graph:
    cols = max(int(math.isqrt(n)), 1)
    edges = []
    positions = np.zeros((n, 2))
    for i in range(n):
        r, c = divmod(i, cols)
        positions[i] = (c / max(cols - 1, 1), r / max(cols - 1, 1))
        if c + 1 < cols and i + 1 < n:
            edges.append((i, i + 1))
        if i + cols < n:
            edges.append((i, i + cols))
    return build_graph(edges, n, node_positions=positions)


def _ring(n) -> Graph:
    theta = 2 * np.pi * np.arange(n) / n
    positions = 0.5 + 0.5 * np.column_stack([np.cos(theta), np.sin(theta)])
    if n == 1:
        return Graph(n_nodes=1, adjacency=np.zeros((1, 1)), node_positions=positions)
    edges = [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(0, 1)]
    return build_graph(edges, n, node_positions=positions)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Graph, SpeedDataset]:
    """Graph plus a positive, diurnally varying speed matrix.

    Per-node base offsets and the white noise are each smoothed once through
    the normalized adjacency, so neighboring series correlate. Speeds are
    clamped at 1 km/h.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.n_nodes
    if spec.graph_model == "random-geometric":
        graph = _random_geometric(n, spec.radius, rng)
    elif spec.graph_model == "grid":
        graph = _grid(n)
    else:
        graph = _ring(n)
    a_hat = normalized_adjacency(graph).matrix

    steps = spec.days * (24 * 60 // spec.interval_minutes)
    per_day = 24 * 60 // spec.interval_minutes
    t = np.arange(steps)

    base = a_hat @ rng.normal(0.0, spec.diurnal_amplitude * 0.25, size=n)
    phase = rng.normal(0.0, 0.3, size=n)
    diurnal = spec.diurnal_amplitude * np.sin(2 * np.pi * t[:, None] / per_day + phase[None, :])
    noise = rng.normal(0.0, spec.noise_std, size=(steps, n)) @ a_hat.T

    speeds = np.maximum(spec.mean_speed + base[None, :] + diurnal + noise, 1.0)
    node_ids = tuple(f"n{i}" for i in range(n))
    return graph, SpeedDataset(speeds=speeds, interval_minutes=spec.interval_minutes, node_ids=node_ids)


def load_speed_csv(path) -> SpeedDataset:
    """Header row of node ids, then one row of speeds per time step.

    Empty cells and zeros count as sensor dropouts and are imputed by
    carrying the previous step forward (leading gaps backfill from the first
    valid reading). Negative speeds and ragged rows are rejected.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise ValueError(f"{path}: need a header and at least one data row")
    node_ids = tuple(c.strip() for c in lines[0].split(","))
    n = len(node_ids)
    matrix = np.full((len(lines) - 1, n), np.nan)
    for row_no, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != n:
            raise ValueError(f"{path}: row {row_no} has {len(cells)} cells, expected {n}")
        for col, cell in enumerate(cells):
            cell = cell.strip()
            if cell == "":
                continue
            value = float(cell)
            if value < 0:
                raise ValueError(f"{path}: negative speed at row {row_no}, column {col + 1}")
            if value > 0:
                matrix[row_no - 2, col] = value

    for col in range(n):
        series = matrix[:, col]
        valid = np.flatnonzero(~np.isnan(series))
        if len(valid) == 0:
            raise ValueError(f"{path}: column {col + 1} ({node_ids[col]}) has no valid readings")
        series[: valid[0]] = series[valid[0]]
        for idx in range(valid[0] + 1, len(series)):
            if np.isnan(series[idx]):
                series[idx] = series[idx - 1]
    return SpeedDataset(speeds=matrix, node_ids=node_ids)


def save_speed_csv(dataset: SpeedDataset, path) -> None:
    ids = dataset.node_ids or tuple(f"n{i}" for i in range(dataset.speeds.shape[1]))
    lines = [",".join(ids)]
    for row in dataset.speeds:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
