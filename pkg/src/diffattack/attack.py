"""Black-box perturbation engine.

Given a fixed attack set, the engine climbs the influence surface with
simultaneous-perturbation gradient estimates: two forecasts along a random
masked +-1 direction per step, a decaying-gain ascent update, then a clip
back into the relative box around the clean features. The predictor is only
ever touched through ``predict``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np


def default_eta(n: int) -> float:
    """Stability offset used by the ascent gain; grows with the iteration."""
    return n / 10.0


@dataclass
class AttackConfig:
    """Perturbation bounds, gain-sequence constants, and loop sizes.

    ``eps_minus``/``eps_plus`` bound the perturbation relative to the clean
    feature: -eps_minus * x <= u <= eps_plus * x. ``max_iter`` drives full
    attacks, ``probe_iter`` the short utility-estimation runs.
    """

    eps_minus: float = 1.0
    eps_plus: float = 0.5
    a: float = 0.328
    c: float = 0.1
    alpha: float = 0.202
    gamma: float = 0.101
    eta_rule: Callable[[int], float] = default_eta
    max_iter: int = 30000
    probe_iter: int = 100
    node_weights: np.ndarray | None = None
    objective_mode: str = "signed_speed_drop"
    seed: int = 0
    debug_checks: bool = False

    def __post_init__(self):
        if self.eps_minus <= 0 or self.eps_plus <= 0:
            raise ValueError("perturbation bounds must be positive")
        if self.a <= 0 or self.c <= 0:
            raise ValueError("gain constants a, c must be positive")
        if not (0 < self.alpha < 1 and 0 < self.gamma < 1):
            raise ValueError("gain exponents must lie in (0, 1)")
        if self.max_iter < 1 or self.probe_iter < 1:
            raise ValueError("iteration counts must be at least 1")
        if self.objective_mode not in ("signed_speed_drop", "mse"):
            raise ValueError(f"unknown objective mode {self.objective_mode!r}")


@dataclass(frozen=True)
class Perturbation:
    """Feature perturbation supported on the attack set only."""

    matrix: np.ndarray
    support: frozenset

    def validate(self, x: np.ndarray, cfg: AttackConfig) -> None:
        mask = np.zeros(len(self.matrix), dtype=bool)
        mask[list(self.support)] = True
        off = self.matrix[~mask]
        if off.size and np.any(off != 0.0):
            raise AssertionError("perturbation leaks outside the attack set")
        on = self.matrix[mask]
        lo = -cfg.eps_minus * x[mask]
        hi = cfg.eps_plus * x[mask]
        if np.any(on < lo - 1e-12) or np.any(on > hi + 1e-12):
            raise AssertionError("perturbation violates the relative box")


@dataclass(frozen=True)
class InfluenceResult:
    """Per-node prediction shift and its weighted aggregate."""

    phi: np.ndarray
    total: float
    y_base: np.ndarray
    y_pert: np.ndarray


@dataclass(frozen=True)
class AttackOutcome:
    x_adv: np.ndarray
    perturbation: Perturbation
    influence: InfluenceResult
    phi_trace: np.ndarray
    evaluations: int


def _per_node_phi(y_base, y_pert, mode):
    if mode == "signed_speed_drop":
        return (y_base - y_pert).sum(axis=1)
    return ((y_pert - y_base) ** 2).sum(axis=1)


def influence(model, x, u, mode: str = "signed_speed_drop", node_weights=None) -> InfluenceResult:
    """Prediction shift caused by ``u``: per node, and weight-summed.

    In signed mode a positive value means the forecast speed dropped, so
    maximizing the aggregate manufactures congestion. In mse mode the shift
    is the squared prediction distance per node.
    """
    matrix = u.matrix if isinstance(u, Perturbation) else np.asarray(u, dtype=float)
    y_base = model.predict(x)
    y_pert = model.predict(x + matrix)
    phi = _per_node_phi(y_base, y_pert, mode)
    w = np.ones(len(phi)) if node_weights is None else np.asarray(node_weights, dtype=float)
    return InfluenceResult(phi=phi, total=float(w @ phi), y_base=y_base, y_pert=y_pert)


def gain_sequences(cfg: AttackConfig, n: int) -> tuple[float, float]:
    """Step gain a_n = a / (eta(n) + n)^alpha and probe gain c_n = c / n^gamma."""
    if n < 1:
        raise ValueError("iteration index starts at 1")
    a_n = cfg.a / (cfg.eta_rule(n) + n) ** cfg.alpha
    c_n = cfg.c / n**cfg.gamma
    return a_n, c_n


def sample_masked_rademacher(p, n_nodes: int, s: int, rng) -> np.ndarray:
    """+-1 rows on the attack set, exact zeros elsewhere."""
    nodes = sorted(p)
    if not nodes:
        raise ValueError("attack set must not be empty")
    delta = np.zeros((n_nodes, s))
    delta[nodes] = rng.integers(0, 2, size=(len(nodes), s)) * 2.0 - 1.0
    return delta


def spsa_gradient(phi_eval, u_n: np.ndarray, c_n: float, delta: np.ndarray) -> np.ndarray:
    """Two-point gradient estimate along ``delta``.

    Multiplying by delta elementwise coincides with dividing on the +-1
    entries and leaves masked rows at exactly zero, so the estimate never
    pushes the perturbation off its support.
    """
    if c_n <= 0:
        raise ValueError("c_n must be positive")
    phi_plus = phi_eval(u_n + c_n * delta)
    phi_minus = phi_eval(u_n - c_n * delta)
    if not (np.isfinite(phi_plus) and np.isfinite(phi_minus)):
        raise FloatingPointError(f"non-finite objective: {phi_plus}, {phi_minus}")
    return (phi_plus - phi_minus) / (2.0 * c_n) * delta


def clip_perturbation(u: np.ndarray, x: np.ndarray, cfg: AttackConfig, p) -> Perturbation:
    """Project into the relative box and zero everything off the attack set."""
    support = frozenset(int(i) for i in p)
    mask = np.zeros(len(u), dtype=bool)
    mask[list(support)] = True
    lo = np.where(mask[:, None], -cfg.eps_minus * x, 0.0)
    hi = np.where(mask[:, None], cfg.eps_plus * x, 0.0)
    return Perturbation(matrix=np.clip(u, lo, hi), support=support)


def run_attack(model, x, p, cfg: AttackConfig, rng=None) -> AttackOutcome:
    """Full perturbation search on a fixed attack set.

    Each iteration draws a masked direction, estimates the gradient from two
    forecasts, takes an ascent step, and clips. Exactly 2 * max_iter model
    calls in the loop plus one baseline and one final reporting call. An
    empty attack set short-circuits to the zero perturbation.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("feature window must be non-negative speeds")
    n_nodes, s = x.shape
    support = frozenset(int(i) for i in p)
    if any(not 0 <= i < n_nodes for i in support):
        raise ValueError("attack set contains out-of-range nodes")
    weights = cfg.node_weights
    evaluations = 0

    if not support:
        y_base = model.predict(x)
        evaluations += 1
        zero = np.zeros_like(x)
        infl = InfluenceResult(phi=np.zeros(n_nodes), total=0.0, y_base=y_base, y_pert=y_base)
        return AttackOutcome(
            x_adv=x.copy(),
            perturbation=Perturbation(matrix=zero, support=support),
            influence=infl,
            phi_trace=np.zeros(0),
            evaluations=evaluations,
        )

    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    y_base = model.predict(x)
    evaluations += 1
    mask = np.zeros(n_nodes, dtype=bool)
    mask[list(support)] = True
    lo = np.where(mask[:, None], -cfg.eps_minus * x, 0.0)
    hi = np.where(mask[:, None], cfg.eps_plus * x, 0.0)

    recent: list[float] = []

    def phi_eval(u_candidate):
        nonlocal evaluations
        evaluations += 1
        y_pert = model.predict(x + u_candidate)
        phi = _per_node_phi(y_base, y_pert, cfg.objective_mode)
        val = float(phi.sum()) if weights is None else float(np.asarray(weights) @ phi)
        recent.append(val)
        return val

    u = np.zeros_like(x)
    trace = np.empty(cfg.max_iter)
    for n in range(1, cfg.max_iter + 1):
        a_n, c_n = gain_sequences(cfg, n)
        delta = sample_masked_rademacher(support, n_nodes, s, rng)
        recent.clear()
        g_hat = spsa_gradient(phi_eval, u, c_n, delta)
        u = np.clip(u + a_n * g_hat, lo, hi)
        trace[n - 1] = 0.5 * (recent[0] + recent[1])
        if cfg.debug_checks:
            pert = Perturbation(matrix=u, support=support)
            pert.validate(x, cfg)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError(f"non-finite perturbation at iteration {n}")

    y_pert = model.predict(x + u)
    evaluations += 1
    phi = _per_node_phi(y_base, y_pert, cfg.objective_mode)
    w = np.ones(n_nodes) if weights is None else np.asarray(weights, dtype=float)
    infl = InfluenceResult(phi=phi, total=float(w @ phi), y_base=y_base, y_pert=y_pert)
    return AttackOutcome(
        x_adv=x + u,
        perturbation=Perturbation(matrix=u, support=support),
        influence=infl,
        phi_trace=trace,
        evaluations=evaluations,
    )
