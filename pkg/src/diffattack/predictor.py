"""Trainable L-layer graph-convolutional speed regressor.

The model stands in for the heavyweight spatio-temporal predictors a real
deployment would run: each layer mixes node features through the normalized
adjacency, a per-node affine readout maps the last hidden state to the
forecast horizon. Training is plain Adam on MSE with optional drop
regularization. Attack code sees the model only through ``predict``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from .graph import Graph, NormalizedAdjacency, graph_hash, normalized_adjacency

DROP_MODES = ("none", "drop_out", "drop_node", "drop_edge")

CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss stops being finite."""


class BlackBoxModel(Protocol):
    """The only surface attack code may touch."""

    def predict(self, x: np.ndarray) -> np.ndarray: ...


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 300
    drop_mode: str = "none"
    drop_prob: float = 0.3
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.drop_mode not in DROP_MODES:
            raise ValueError(f"drop_mode must be one of {DROP_MODES}")
        if not 0 < self.drop_prob < 1:
            raise ValueError("drop_prob must lie in (0, 1)")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class WindowedDataset:
    """Sliding (X, Y) windows over a steps-by-nodes speed matrix.

    Train windows live entirely before ``split_index``, test windows entirely
    after it, so no sample straddles the boundary.
    """

    speeds: np.ndarray
    window: int = 12
    horizon: int = 1
    split_index: int = 0

    @classmethod
    def from_speeds(cls, speeds, window=12, horizon=1, train_fraction=0.8):
        return cls(
            speeds=np.asarray(speeds, dtype=float),
            window=window,
            horizon=horizon,
            split_index=int(round(len(speeds) * train_fraction)),
        )

    @property
    def n_nodes(self) -> int:
        return self.speeds.shape[1]

    def sample(self, start: int) -> tuple[np.ndarray, np.ndarray]:
        """(X: N x S, Y: N x T) for the window starting at time ``start``."""
        s, t = self.window, self.horizon
        return self.speeds[start : start + s].T.copy(), self.speeds[start + s : start + s + t].T.copy()

    @property
    def train_starts(self) -> np.ndarray:
        last = self.split_index - self.window - self.horizon
        return np.arange(0, max(last + 1, 0))

    @property
    def test_starts(self) -> np.ndarray:
        last = len(self.speeds) - self.window - self.horizon
        return np.arange(self.split_index, max(last + 1, self.split_index))

    def stack(self, starts) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = zip(*(self.sample(int(s)) for s in starts))
        return np.stack(xs), np.stack(ys)


@dataclass
class GcnPredictor:
    """GCN weights plus everything predict() needs: the normalized adjacency it
    was trained against, min-max scaler bounds, and the graph hash binding."""

    weights: list[np.ndarray]
    readout_w: np.ndarray
    readout_b: np.ndarray
    a_hat: np.ndarray
    x_min: float = 0.0
    x_max: float = 1.0
    graph_hash: str = ""

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def window(self) -> int:
        return self.weights[0].shape[0]

    @property
    def horizon(self) -> int:
        return self.readout_w.shape[1]

    def scale(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_min) / self._span

    def unscale(self, y: np.ndarray) -> np.ndarray:
        return y * self._span + self.x_min

    @property
    def _span(self) -> float:
        return max(self.x_max - self.x_min, 1e-9)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Deterministic black-box forecast, raw km/h in and out.

        Pure function of the stored weights; safe to call concurrently.
        """
        y_scaled = forward(self, self.a_hat, self.scale(np.asarray(x, dtype=float)))
        return self.unscale(y_scaled)

    def copy(self) -> "GcnPredictor":
        return replace(
            self,
            weights=[w.copy() for w in self.weights],
            readout_w=self.readout_w.copy(),
            readout_b=self.readout_b.copy(),
            a_hat=self.a_hat.copy(),
        )


def init_predictor(
    a_hat: NormalizedAdjacency | np.ndarray,
    window: int = 12,
    horizon: int = 1,
    hidden_dims: tuple[int, ...] = (16, 16),
    seed: int = 0,
    graph_digest: str = "",
) -> GcnPredictor:
    """Fresh predictor with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights."""
    matrix = a_hat.matrix if isinstance(a_hat, NormalizedAdjacency) else np.asarray(a_hat, dtype=float)
    rng = np.random.default_rng(seed)
    dims = (window, *hidden_dims)
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    bound = 1.0 / np.sqrt(dims[-1])
    readout_w = rng.uniform(-bound, bound, size=(dims[-1], horizon))
    readout_b = np.zeros(horizon)
    return GcnPredictor(
        weights=weights,
        readout_w=readout_w,
        readout_b=readout_b,
        a_hat=matrix,
        graph_hash=graph_digest,
    )


def forward(model: GcnPredictor, a_hat, x: np.ndarray) -> np.ndarray:
    """Layer recursion H_{l+1} = relu(A_hat H_l W_l), then the affine readout.

    Accepts a single N x S window or a batch B x N x S; no scaling, no drop.
    """
    matrix = a_hat.matrix if isinstance(a_hat, NormalizedAdjacency) else a_hat
    h = np.asarray(x, dtype=float)
    if h.shape[-2] != matrix.shape[0]:
        raise ValueError(f"feature rows {h.shape[-2]} != graph size {matrix.shape[0]}")
    if h.shape[-1] != model.window:
        raise ValueError(f"window width {h.shape[-1]} != model input width {model.window}")
    for w in model.weights:
        h = np.maximum(matrix @ h @ w, 0.0)
    return h @ model.readout_w + model.readout_b


def _forward_with_cache(model, matrix, x):
    h = x
    cache = []
    for w in model.weights:
        ax = matrix @ h
        z = ax @ w
        h = np.maximum(z, 0.0)
        cache.append((ax, z))
    pred = h @ model.readout_w + model.readout_b
    return pred, h, cache


def _backward(model, matrix, x, pred, h_last, cache, target):
    """Gradients of mean squared error wrt every weight; mirrors forward."""
    d_pred = 2.0 * (pred - target) / pred.size
    grad_rw = np.einsum("bnd,bnt->dt", h_last, d_pred)
    grad_rb = d_pred.sum(axis=(0, 1))
    d_h = d_pred @ model.readout_w.T
    grads = [None] * len(model.weights)
    for layer in range(len(model.weights) - 1, -1, -1):
        ax, z = cache[layer]
        d_z = d_h * (z > 0)
        grads[layer] = np.einsum("bns,bnd->sd", ax, d_z)
        if layer > 0:
            d_h = matrix.T @ (d_z @ model.weights[layer].T)
    return grads, grad_rw, grad_rb


def mse_gradients(model: GcnPredictor, a_hat, x_batch, y_batch):
    """(loss, weight grads, readout grads) on one batch, scaled space."""
    matrix = a_hat.matrix if isinstance(a_hat, NormalizedAdjacency) else a_hat
    pred, h_last, cache = _forward_with_cache(model, matrix, x_batch)
    loss = float(np.mean((pred - y_batch) ** 2))
    grads = _backward(model, matrix, x_batch, pred, h_last, cache, y_batch)
    return loss, grads


def apply_drop(mode: str, prob: float, x: np.ndarray, a_hat: NormalizedAdjacency, rng):
    """One drop realization applied to a feature window and its adjacency.

    drop_out zeroes node rows of X; drop_node removes nodes entirely (features
    and adjacency, degrees recomputed on the survivors); drop_edge removes
    edges before normalization. Modes that would drop everything resample.
    """
    if mode not in DROP_MODES:
        raise ValueError(f"unknown drop mode {mode!r}")
    if mode == "none" or prob == 0.0:
        return x, a_hat.matrix
    plan = _draw_drop_plan(mode, prob, a_hat, rng)
    return _apply_drop_plan(plan, x, a_hat)


def _draw_drop_plan(mode, prob, a_hat, rng):
    n = a_hat.graph.n_nodes
    if mode == "drop_out":
        keep = rng.random(n) >= prob
        return ("rows", keep)
    if mode == "drop_node":
        keep = rng.random(n) >= prob
        while not keep.any():
            keep = rng.random(n) >= prob
        a = a_hat.graph.adjacency * np.outer(keep, keep)
        a_tilde = a + np.diag(keep.astype(float))
        deg = a_tilde.sum(axis=1)
        inv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
        return ("node", keep, inv[:, None] * a_tilde * inv[None, :])
    # drop_edge: thin the undirected edge set, then renormalize
    a = a_hat.graph.adjacency.copy()
    upper = np.triu(a, 1)
    drop = (rng.random(a.shape) < prob) & (upper > 0)
    a = a - drop.astype(float) - drop.T.astype(float)
    a = np.clip(a, 0.0, 1.0)
    a_tilde = a + np.eye(len(a))
    inv = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return ("edge", inv[:, None] * a_tilde * inv[None, :])


def _apply_drop_plan(plan, x, a_hat):
    if plan[0] == "rows":
        return x * plan[1][..., :, None], a_hat.matrix
    if plan[0] == "node":
        return x * plan[1][..., :, None], plan[2]
    return x, plan[1]


def train(
    model: GcnPredictor,
    dataset: WindowedDataset,
    graph: Graph,
    config: TrainingConfig,
) -> tuple[GcnPredictor, dict]:
    """Adam on MSE over the training windows; returns (model, history).

    The model is bound to ``graph`` (adjacency hash + scaler bounds from the
    training region). One drop realization is drawn per epoch and shared by
    all its batches; evaluation always runs drop-free on the full adjacency.
    History carries per-epoch train loss and raw-speed test Accuracy / RMSE.
    """
    na = normalized_adjacency(graph)
    model.a_hat = na.matrix
    model.graph_hash = graph_hash(graph.adjacency)

    train_region = dataset.speeds[: dataset.split_index]
    model.x_min = float(train_region.min()) if len(train_region) else 0.0
    model.x_max = float(train_region.max()) if len(train_region) else 1.0

    history = {"train_loss": [], "accuracy": None, "rmse": None}
    starts = dataset.train_starts
    if config.epochs == 0 or len(starts) == 0:
        _fill_test_metrics(model, dataset, history)
        return model, history

    x_all, y_all = dataset.stack(starts)
    x_all = model.scale(x_all)
    y_all = model.scale(y_all)

    rng_shuffle = np.random.default_rng(np.random.SeedSequence([config.seed, 101]))
    rng_drop = np.random.default_rng(np.random.SeedSequence([config.seed, 202]))
    params = model.weights + [model.readout_w, model.readout_b]
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    step = 0
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    for epoch in range(config.epochs):
        plan = None
        if config.drop_mode != "none":
            plan = _draw_drop_plan(config.drop_mode, config.drop_prob, na, rng_drop)
        order = rng_shuffle.permutation(len(starts))
        epoch_loss = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            xb, yb = x_all[batch], y_all[batch]
            matrix = model.a_hat
            if plan is not None:
                xb, matrix = _apply_drop_plan(plan, xb, na)
            loss, (grads_w, grad_rw, grad_rb) = mse_gradients(model, matrix, xb, yb)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss} at epoch {epoch}")
            epoch_loss += loss * len(batch)
            step += 1
            for p, g, m, v in zip(params, grads_w + [grad_rw, grad_rb], adam_m, adam_v):
                m *= beta1
                m += (1 - beta1) * g
                v *= beta2
                v += (1 - beta2) * g * g
                m_hat = m / (1 - beta1**step)
                v_hat = v / (1 - beta2**step)
                p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        history["train_loss"].append(epoch_loss / len(starts))

    _fill_test_metrics(model, dataset, history)
    return model, history


def _fill_test_metrics(model, dataset, history):
    starts = dataset.test_starts
    if len(starts) == 0:
        return
    x_test, y_test = dataset.stack(starts)
    pred = model.unscale(forward(model, model.a_hat, model.scale(x_test)))
    history["accuracy"] = accuracy(y_test, pred)
    history["rmse"] = rmse(y_test, pred)


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """1 - ||Y - Y_hat||_F / ||Y||_F. Perfect prediction gives 1."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ValueError("shape mismatch")
    denom = np.linalg.norm(y_true)
    if denom == 0:
        raise ValueError("accuracy undefined for all-zero reference")
    return 1.0 - float(np.linalg.norm(y_true - y_pred)) / float(denom)


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ValueError("shape mismatch")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def save_checkpoint(model: GcnPredictor, path) -> None:
    """npz checkpoint: weights bit-exact, metadata as embedded JSON."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "n_layers": model.n_layers,
        "x_min": model.x_min,
        "x_max": model.x_max,
        "graph_hash": model.graph_hash,
    }
    arrays = {f"w{i}": w for i, w in enumerate(model.weights)}
    arrays["readout_w"] = model.readout_w
    arrays["readout_b"] = model.readout_b
    arrays["a_hat"] = model.a_hat
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> GcnPredictor:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        weights = [data[f"w{i}"] for i in range(meta["n_layers"])]
        return GcnPredictor(
            weights=weights,
            readout_w=data["readout_w"],
            readout_b=data["readout_b"],
            a_hat=data["a_hat"],
            x_min=meta["x_min"],
            x_max=meta["x_max"],
            graph_hash=meta["graph_hash"],
        )
