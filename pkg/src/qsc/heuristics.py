"""When-to-query rules: entropy (information gain), utility threshold, and Q-learning."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable

import numpy as np


class Decision(enum.Enum):
    QUERY = "query"
    LEARNED = "learned"


@dataclass(frozen=True)
class EntropyConfig:
    beta_ent: float = 0.25
    tau: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")
        if self.beta_ent < 0:
            raise ValueError(f"beta_ent must be >= 0, got {self.beta_ent}")


@dataclass(frozen=True)
class UtilityConfig:
    beta_util: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.beta_util <= 1.0:
            raise ValueError(f"beta_util must be in [0, 1], got {self.beta_util}")


def _check_dist(dist) -> np.ndarray:
    p = np.asarray(dist, dtype=float)
    if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"not a probability vector: {p}")
    return p


def entropy(dist) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    p = _check_dist(dist)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def info_gain(dist, cfg: EntropyConfig = EntropyConfig()) -> float:
    """Entropy of the policy minus its expected entropy after an oracle answer.

    The answer ``o`` is predicted with the policy's own probabilities, and after
    hearing ``o`` the control's choice follows ``(1 - tau) * dist + tau * onehot(o)``.
    """
    p = _check_dist(dist)
    conditional = 0.0
    for o in np.flatnonzero(p > 0):
        post = (1.0 - cfg.tau) * p
        post[o] += cfg.tau
        conditional += p[o] * entropy(post / post.sum())
    return entropy(p) - conditional


def decide_entropy(dist, cfg: EntropyConfig = EntropyConfig()) -> Decision:
    return Decision.QUERY if info_gain(dist, cfg) > cfg.beta_ent else Decision.LEARNED


def decide_utility(dist, cfg: UtilityConfig = UtilityConfig()) -> Decision:
    p = _check_dist(dist)
    return Decision.LEARNED if p.max() > cfg.beta_util else Decision.QUERY


def shaped_reward(success: bool, streak_after: int) -> float:
    if not success:
        return -0.3
    return 100.0 if streak_after >= 5 else 50.0


_ACTIONS = (Decision.QUERY, Decision.LEARNED)


@dataclass
class QTable:
    alpha: float = 0.5
    gamma: float = 0.9
    epsilon: float = 0.05
    table: dict[Hashable, list[float]] = field(default_factory=dict)
    streak: int = 0

    def values(self, s: Hashable) -> list[float]:
        return self.table.setdefault(s, [0.0, 0.0])

    def q(self, s: Hashable, a: Decision) -> float:
        return self.values(s)[_ACTIONS.index(a)]

    def record_outcome(self, success: bool) -> int:
        """Advance the success streak and return it (0 after a failure)."""
        self.streak = self.streak + 1 if success else 0
        return self.streak

    def reset_streak(self) -> None:
        self.streak = 0

    def greedy(self, s: Hashable) -> Decision:
        q_query, q_learned = self.values(s)
        return Decision.QUERY if q_query > q_learned else Decision.LEARNED

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["state", "q_query", "q_learned"])
            for s in sorted(self.table, key=str):
                w.writerow([s, repr(self.table[s][0]), repr(self.table[s][1])])


def q_update(table: QTable, s: Hashable, a: Decision, r: float, s_next: Hashable) -> QTable:
    row = table.values(s)
    target = r + table.gamma * max(table.values(s_next))
    i = _ACTIONS.index(a)
    row[i] += table.alpha * (target - row[i])
    return table


def decide_rl(table: QTable, s: Hashable, phase: str, mode: str,
              rng: np.random.Generator | None = None) -> Decision:
    """epsilon-greedy while training; greedy on the frozen table at test.

    ``mode="train_only"`` never queries at test time.
    """
    if phase == "test":
        if mode == "train_only":
            return Decision.LEARNED
        return table.greedy(s)
    if phase != "train":
        raise ValueError(f"unknown phase {phase!r}")
    if rng is not None and rng.random() < table.epsilon:
        return _ACTIONS[int(rng.integers(2))]
    return table.greedy(s)

