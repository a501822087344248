"""Flat key=value run configuration and labeled RNG substreams.

One file drives a whole run; every key has a default, unknown keys are
rejected, and the format stays line-diffable on purpose. Each stochastic
concern (data generation, weight init, drop, perturbation search, selection)
draws from its own substream of the master seed, so changing one stage's
iteration count never perturbs another stage.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .attack import AttackConfig
from .data import SyntheticSpec
from .predictor import TrainingConfig


def substream(seed: int, label: str) -> np.random.Generator:
    """Generator keyed by (master seed, label); stable across platforms."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *words]))


@dataclass
class RunConfig:
    # paths
    data: str = ""
    adjacency: str = ""
    positions: str = ""
    checkpoint: str = ""
    out: str = ""
    seed: int = 0
    # training
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 300
    drop_mode: str = "none"
    drop_prob: float = 0.3
    train_fraction: float = 0.8
    hidden_dims: tuple = (16, 16)
    window: int = 12
    horizon: int = 1
    # attack
    eps_minus: float = 1.0
    eps_plus: float = 0.5
    a: float = 0.328
    c: float = 0.1
    alpha: float = 0.202
    gamma: float = 0.101
    max_iter: int = 30000
    probe_iter: int = 100
    objective: str = "signed_speed_drop"
    # selection / evaluation
    strategy: str = "kg_spsa"
    budget: float = 50.0
    budgets: tuple = (20.0, 50.0, 100.0, 150.0, 200.0)
    windows: int = 50
    window_index: int = 0
    # synthetic generation
    n_nodes: int = 60
    graph_model: str = "random-geometric"
    mean_speed: float = 55.0
    diurnal_amplitude: float = 10.0
    noise_std: float = 3.0
    days: int = 7
    interval_minutes: int = 5
    radius: float = 0.22

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            drop_mode=self.drop_mode,
            drop_prob=self.drop_prob,
            train_fraction=self.train_fraction,
            seed=self.seed,
        )

    def attack_config(self) -> AttackConfig:
        return AttackConfig(
            eps_minus=self.eps_minus,
            eps_plus=self.eps_plus,
            a=self.a,
            c=self.c,
            alpha=self.alpha,
            gamma=self.gamma,
            max_iter=self.max_iter,
            probe_iter=self.probe_iter,
            objective_mode=self.objective,
            seed=self.seed,
        )

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n_nodes=self.n_nodes,
            graph_model=self.graph_model,
            mean_speed=self.mean_speed,
            diurnal_amplitude=self.diurnal_amplitude,
            noise_std=self.noise_std,
            days=self.days,
            interval_minutes=self.interval_minutes,
            radius=self.radius,
            seed=self.seed,
        )


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    kind = _FIELDS[name].type
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "tuple":
        if not raw:
            return ()
        parts = [p.strip() for p in raw.split(",")]
        if name == "hidden_dims":
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    return raw


def parse_config_text(text: str) -> dict:
    """key=value per line; blank lines and #-comments ignored."""
    values = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {line_no}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ValueError(f"line {line_no}: unknown config key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def load_run_config(path=None, overrides: dict | None = None, require: tuple = ()) -> RunConfig:
    """Config file then explicit overrides; ``require`` names path keys that
    must point at existing files."""
    values: dict = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, str(value)) if isinstance(value, str) else value
    cfg = RunConfig(**values)
    for key in require:
        candidate = getattr(cfg, key)
        if not candidate:
            raise ValueError(f"config key {key!r} is required for this command")
        if not Path(candidate).exists():
            raise ValueError(f"{key} file not found: {candidate}")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"
