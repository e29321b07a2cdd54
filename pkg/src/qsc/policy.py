"""Small recurrent softmax policy for the control, trained online.

Single tanh layer of recurrent units, masked softmax output. Each update is
one SGD step on the cross-entropy of the most recent step, back-propagated
through at most ``truncation`` previous steps.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

PARAM_NAMES = ("W_xh", "W_hh", "b_h", "W_hy", "b_y")


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    mask: np.ndarray
    action: int
    success: bool
    oracle_action: Optional[int] = None


def as_mask(mask: Sequence[int] | np.ndarray, width: int) -> np.ndarray:
    """Boolean mask from either a boolean vector or a collection of indices."""
    arr = np.asarray(mask)
    if arr.dtype == bool and arr.shape == (width,):
        out = arr.copy()
    else:
        out = np.zeros(width, dtype=bool)
        out[arr.astype(int)] = True
    if not out.any():
        raise PolicyError("empty action mask")
    return out


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, -np.inf)
    z = z - z[mask].max()
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum()


def target_distribution(mask: np.ndarray, action: int, success: bool,
                        oracle_action: Optional[int] = None) -> Optional[np.ndarray]:
    """Training target for one step, or ``None`` when the step carries no signal."""
    t = np.zeros(mask.shape[0])
    if oracle_action is not None and mask[oracle_action]:
        t[oracle_action] = 1.0
        return t
    if success:
        t[action] = 1.0
        return t
    others = mask.copy()
    others[action] = False
    if not others.any():
        # a failed single-option step has no alternative to move mass to
        return None
    t[others] = 1.0 / others.sum()
    return t


class PolicyNetwork:
    def __init__(self, input_width: int, output_width: int, hidden: int = 32,
                 lr: float = 0.05, truncation: int = 8, seed: int = 0,
                 input_scale: float = 1.0):
        self.input_width = input_width
        self.output_width = output_width
        self.hidden_size = hidden
        self.lr = lr
        self.truncation = truncation
        self.seed = seed
        self.steps = 0
        rng = np.random.default_rng(seed)
        self.params = {
            "W_xh": rng.normal(0.0, input_scale, (hidden, input_width)),
            "W_hh": rng.uniform(-1.0, 1.0, (hidden, hidden)) / np.sqrt(hidden),
            "b_h": np.zeros(hidden),
            # zero output layer: the untrained policy is uniform over the mask
            "W_hy": np.zeros((output_width, hidden)),
            "b_y": np.zeros(output_width),
        }
        self.reset_hidden()

    def reset_hidden(self) -> "PolicyNetwork":
        self.h = np.zeros(self.hidden_size)
        self._window: deque[tuple[np.ndarray, np.ndarray]] = deque(maxlen=self.truncation)
        return self

    def _check_obs(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        if obs.shape != (self.input_width,):
            raise PolicyError(f"observation width {obs.shape} != ({self.input_width},)")
        return obs

    def _hidden(self, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
        p = self.params
        return np.tanh(p["W_xh"] @ x + p["W_hh"] @ h_prev + p["b_h"])

    def probs(self, obs, mask, h_prev: Optional[np.ndarray] = None) -> np.ndarray:
        """Action distribution without touching the recurrent state."""
        x = self._check_obs(obs)
        m = as_mask(mask, self.output_width)
        h = self._hidden(x, self.h if h_prev is None else h_prev)
        return masked_softmax(self.params["W_hy"] @ h + self.params["b_y"], m)

    def forward(self, obs, mask) -> np.ndarray:
        x = self._check_obs(obs)
        m = as_mask(mask, self.output_width)
        h_prev = self.h
        self.h = self._hidden(x, h_prev)
        self._window.append((x, h_prev))
        return masked_softmax(self.params["W_hy"] @ self.h + self.params["b_y"], m)

    def loss_and_grads(self, xs: Sequence[np.ndarray], h0: np.ndarray, mask: np.ndarray,
                       target: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Cross-entropy at the last step of ``xs`` (run from ``h0``) and its gradients."""
        p = self.params
        hs = [h0]
        for x in xs:
            hs.append(np.tanh(p["W_xh"] @ x + p["W_hh"] @ hs[-1] + p["b_h"]))
        out = masked_softmax(p["W_hy"] @ hs[-1] + p["b_y"], mask)
        support = target > 0
        loss = -float(np.sum(target[support] * np.log(out[support])))

        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dlogits = np.where(mask, out - target, 0.0)
        grads["W_hy"] = np.outer(dlogits, hs[-1])
        grads["b_y"] = dlogits
        dh = p["W_hy"].T @ dlogits
        for t in range(len(xs), 0, -1):
            dpre = dh * (1.0 - hs[t] ** 2)
            grads["W_xh"] += np.outer(dpre, xs[t - 1])
            grads["W_hh"] += np.outer(dpre, hs[t - 1])
            grads["b_h"] += dpre
            dh = p["W_hh"].T @ dpre
        return loss, grads

    def update(self, tr: Transition) -> "PolicyNetwork":
        """One SGD step toward the target implied by ``tr`` (the last forwarded step)."""
        if not self._window:
            raise PolicyError("update() needs a preceding forward()")
        x_last = self._window[-1][0]
        if not np.array_equal(x_last, np.asarray(tr.obs, dtype=float)):
            raise PolicyError("transition observation does not match the last forward step")
        mask = as_mask(tr.mask, self.output_width)
        target = target_distribution(mask, tr.action, tr.success, tr.oracle_action)
        self.steps += 1
        if target is None:
            return self
        xs = [x for x, _ in self._window]
        _, grads = self.loss_and_grads(xs, self._window[0][1], mask, target)
        for k in PARAM_NAMES:
            self.params[k] -= self.lr * grads[k]
        return self

    def to_document(self) -> dict:
        return {
            "input_width": self.input_width,
            "output_width": self.output_width,
            "hidden": self.hidden_size,
            "lr": self.lr,
            "truncation": self.truncation,
            "seed": self.seed,
            "steps": self.steps,
            "layers": {
                k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in self.params.items()
            },
        }

    @classmethod
    def from_document(cls, doc: dict) -> "PolicyNetwork":
        net = cls(doc["input_width"], doc["output_width"], hidden=doc["hidden"], lr=doc["lr"],
                  truncation=doc["truncation"], seed=doc["seed"])
        for k in PARAM_NAMES:
            layer = doc["layers"][k]
            net.params[k] = np.asarray(layer["data"], dtype=float).reshape(layer["shape"])
        net.steps = doc["steps"]
        return net

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_document()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PolicyNetwork":
        return cls.from_document(json.loads(Path(path).read_text(encoding="utf-8")))


def select_action(dist: np.ndarray, mode: str, rng: Optional[np.random.Generator] = None) -> int:
    if mode == "greedy":
        return int(np.argmax(dist))
    if mode == "sample":
        if rng is None:
            raise PolicyError("sample mode needs a random generator")
        cdf = np.cumsum(dist)
        # first index whose cdf exceeds u; zero-mass entries can never be picked
        return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    raise PolicyError(f"unknown selection mode {mode!r}")


def encode_automaton_obs(n_states: int, n_actions: int, state_idx: int, prev_action: int) -> np.ndarray:
    """One-hot over (control state, previous action); episode start uses action slot 0."""
    x = np.zeros(n_states * n_actions)
    x[state_idx * n_actions + prev_action] = 1.0
    return x
