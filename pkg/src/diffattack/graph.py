"""Road-network graphs: binary adjacency, symmetric normalization, hop
neighborhoods, and the centrality / clustering scores used by node selectors.

All functions are pure; graphs are treated as immutable once built. The
normalized adjacency caches its matrix powers behind a lock so concurrent
readers are safe.
"""

from __future__ import annotations

import hashlib
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Graph:
    """Graph with binary adjacency, optional geo-coordinates per node.

    ``adjacency[i, j] = 1`` means an edge from i to j. Undirected graphs keep
    the matrix symmetric. Self-loops are never stored; they are added only
    during normalization. The graph need not be connected.
    """

    n_nodes: int
    adjacency: np.ndarray
    undirected: bool = True
    node_positions: np.ndarray | None = None

    def __post_init__(self):
        a = self.adjacency
        if self.n_nodes < 1:
            raise ValueError("graph needs at least one node")
        if a.shape != (self.n_nodes, self.n_nodes):
            raise ValueError(f"adjacency shape {a.shape} does not match n_nodes={self.n_nodes}")
        vals = np.unique(a)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ValueError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a) != 0):
            raise ValueError("self-loops must not be stored in the adjacency")
        if self.undirected and not np.array_equal(a, a.T):
            raise ValueError("undirected graph requires a symmetric adjacency")
        if self.node_positions is not None and self.node_positions.shape != (self.n_nodes, 2):
            raise ValueError("node_positions must be N x 2")

    @property
    def degrees(self) -> np.ndarray:
        """Out-degree per node (row sums); equals plain degree when undirected."""
        return self.adjacency.sum(axis=1)


def build_graph(
    edge_list,
    n_nodes: int,
    undirected: bool = True,
    node_positions: np.ndarray | None = None,
) -> Graph:
    """Build a Graph from (i, j) index pairs; duplicates collapse to one edge.

    Undirected graphs get the symmetric closure. Self-edges are rejected
    because self-loops belong to normalization, not to the stored adjacency.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    a = np.zeros((n_nodes, n_nodes))
    for i, j in edge_list:
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise ValueError(f"edge ({i}, {j}) out of range for n_nodes={n_nodes}")
        if i == j:
            raise ValueError(f"self-edge ({i}, {j}) not allowed")
        a[i, j] = 1.0
        if undirected:
            a[j, i] = 1.0
    return Graph(n_nodes=n_nodes, adjacency=a, undirected=undirected, node_positions=node_positions)


@dataclass(eq=False)
class NormalizedAdjacency:
    """Symmetrically normalized adjacency D^{-1/2} (A + I) D^{-1/2}.

    ``power(k)`` lazily caches matrix powers; the cache is lock-protected so
    prediction code may share one instance across threads.
    """

    matrix: np.ndarray
    graph: Graph
    _powers: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def power(self, k: int) -> np.ndarray:
        if k < 0:
            raise ValueError("power must be non-negative")
        with self._lock:
            if k not in self._powers:
                self._powers[k] = np.linalg.matrix_power(self.matrix, k)
            return self._powers[k]


def normalized_adjacency(g: Graph) -> NormalizedAdjacency:
    """Self-loops added first, then degree normalization on both sides.

    Isolated nodes end up with a single self-loop and a diagonal entry of 1,
    so no division by zero can occur.
    """
    a_tilde = g.adjacency + np.eye(g.n_nodes)
    d_tilde = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d_tilde)
    matrix = inv_sqrt[:, None] * a_tilde * inv_sqrt[None, :]
    return NormalizedAdjacency(matrix=matrix, graph=g)


def k_hop_neighbors(g: Graph, i: int, k: int) -> set:
    """Nodes reachable from i within k edges, i itself included.

    Follows out-edges, which matches the support pattern of the k-th power of
    the normalized adjacency (self-loops make the neighborhood cumulative).
    """
    if not 0 <= i < g.n_nodes:
        raise ValueError(f"node {i} out of range")
    if k < 0:
        raise ValueError("k must be non-negative")
    out = [np.flatnonzero(g.adjacency[v]) for v in range(g.n_nodes)]
    seen = {i}
    frontier = deque([(i, 0)])
    while frontier:
        v, d = frontier.popleft()
        if d == k:
            continue
        for w in out[v]:
            if w not in seen:
                seen.add(int(w))
                frontier.append((int(w), d + 1))
    return seen


def hop_distances(g: Graph, target: int) -> np.ndarray:
    """Hop count from every node to ``target`` (-1 when unreachable).

    Breadth-first search over reversed edges, so entry i is the number of
    edges on the shortest path i -> target; on undirected graphs this is the
    ordinary BFS distance from ``target``.
    """
    if not 0 <= target < g.n_nodes:
        raise ValueError(f"node {target} out of range")
    into = [np.flatnonzero(g.adjacency[:, v]) for v in range(g.n_nodes)]
    dist = np.full(g.n_nodes, -1, dtype=int)
    dist[target] = 0
    queue = deque([target])
    while queue:
        v = queue.popleft()
        for w in into[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(int(w))
    return dist


def pagerank(g: Graph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 10000) -> np.ndarray:
    """Power-iteration PageRank; dangling mass is redistributed uniformly.

    Raises ConvergenceError with the final L1 residual if ``max_iter`` sweeps
    do not bring the residual under ``tol``. Scores sum to one.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    n = g.n_nodes
    out_deg = g.adjacency.sum(axis=1)
    dangling = out_deg == 0
    safe_deg = np.where(dangling, 1.0, out_deg)
    transition = g.adjacency / safe_deg[:, None]
    scores = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        shared = scores[dangling].sum() / n
        new = (1.0 - damping) / n + damping * (transition.T @ scores + shared)
        residual = float(np.abs(new - scores).sum())
        scores = new
        if residual < tol:
            return scores
    raise ConvergenceError(f"pagerank did not converge within {max_iter} iterations", residual)


def betweenness(g: Graph) -> np.ndarray:
    """Shortest-path betweenness per node (Brandes accumulation).

    Counts unordered source/target pairs on undirected graphs, endpoints
    excluded; disconnected pairs contribute nothing. Directed graphs keep the
    ordered-pair count.
    """
    n = g.n_nodes
    out = [np.flatnonzero(g.adjacency[v]) for v in range(n)]
    scores = np.zeros(n)
    for s in range(n):
        dist = np.full(n, -1, dtype=int)
        sigma = np.zeros(n)
        preds: list[list[int]] = [[] for _ in range(n)]
        dist[s] = 0
        sigma[s] = 1.0
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in out[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(int(w))
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(n)
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                scores[w] += delta[w]
    if g.undirected:
        scores /= 2.0
    return scores


def k_medoids(positions: np.ndarray, k: int, seed) -> np.ndarray:
    """Partition-around-medoids on Euclidean distances; returns sorted indices.

    Seeded random initialization followed by best-improvement swaps, so the
    total within-cluster distance never increases and the result is
    deterministic for a fixed seed.
    """
    n = len(positions)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    if k == n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    diff = positions[:, None, :] - positions[None, :, :]
    d = np.sqrt((diff ** 2).sum(axis=2))
    medoids = np.sort(rng.choice(n, size=k, replace=False))
    cost = d[:, medoids].min(axis=1).sum()
    while True:
        best_cost, best_swap = cost, None
        for slot in range(k):
            others = np.delete(medoids, slot)
            rest_min = d[:, others].min(axis=1) if len(others) else np.full(n, np.inf)
            candidates = np.setdiff1d(np.arange(n), medoids)
            trial_costs = np.minimum(rest_min[:, None], d[:, candidates]).sum(axis=0)
            idx = int(np.argmin(trial_costs))
            if trial_costs[idx] < best_cost - 1e-12:
                best_cost, best_swap = float(trial_costs[idx]), (slot, int(candidates[idx]))
        if best_swap is None:
            return np.sort(medoids)
        medoids[best_swap[0]] = best_swap[1]
        medoids = np.sort(medoids)
        cost = best_cost


def graph_hash(adjacency: np.ndarray) -> str:
    """Stable content hash binding checkpoints to the graph they were trained on."""
    canon = np.ascontiguousarray(adjacency, dtype=np.uint8)
    h = hashlib.sha256()
    h.update(str(canon.shape).encode())
    h.update(canon.tobytes())
    return h.hexdigest()


def load_adjacency_csv(path) -> np.ndarray:
    """N x N comma-separated 0/1 matrix, no header."""
    rows = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cells = line.split(",")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric entry on line {line_no}") from exc
    if not rows:
        raise ValueError(f"{path}: empty adjacency file")
    a = np.asarray(rows)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{path}: adjacency must be square, got {a.shape}")
    if not np.all(np.isin(np.unique(a), (0.0, 1.0))):
        raise ValueError(f"{path}: adjacency entries must be 0 or 1")
    return a


def save_adjacency_csv(adjacency: np.ndarray, path) -> None:
    lines = [",".join(str(int(v)) for v in row) for row in adjacency]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_positions_csv(path) -> np.ndarray:
    """N rows of ``lon,lat``, no header."""
    rows = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise ValueError(f"{path}: expected 'lon,lat' on line {line_no}")
        rows.append([float(cells[0]), float(cells[1])])
    if not rows:
        raise ValueError(f"{path}: empty positions file")
    return np.asarray(rows)


def save_positions_csv(positions: np.ndarray, path) -> None:
    lines = [f"{repr(float(x))},{repr(float(y))}" for x, y in positions]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
