"""Teacher and expert oracles.

The teacher knows the whole shared system: it solves the joint MDP by value
iteration and recommends the control actions with the best long-run value.
The expert only knows the black box and recommends any action the black box
can take next, which can steer the control into a sink.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

from .automata import Automaton
from .lander import Engine, LanderState, fuel_cost, physics_step, potential
from .shared_system import JointState

OracleAnswer = frozenset  # non-empty set of recommended action ids


@dataclass
class JointValueTable:
    values: dict[JointState, float]
    q: dict[JointState, dict[str, float]]
    gamma: float
    residuals: list[float] = field(default_factory=list)

    def best_actions(self, s: JointState, atol: float = 1e-9) -> OracleAnswer:
        qs = self.q[JointState(*s)]
        top = max(qs.values())
        return OracleAnswer(a for a, v in qs.items() if abs(v - top) <= atol)

    def dump_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["control_state", "env_state", "value", "best_actions"])
            for s, v in self.values.items():
                w.writerow([s.control_state, s.env_state, repr(v), " ".join(sorted(self.best_actions(s)))])


def solve_joint_values(ctrl: Automaton, env: Automaton, gamma: float = 0.95,
                       eps: float = 1e-9, max_sweeps: int = 100_000) -> JointValueTable:
    """Value iteration over the agreement-protocol joint system.

    Reward is 1 for a successful joint step. On failure the black box moves
    uniformly over its enabled actions.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    joint = [JointState(c, e) for c, e in itertools.product(ctrl.states, env.states)]

    # expected successor distribution per (joint state, control action)
    model: dict[JointState, dict[str, tuple[float, list[tuple[float, JointState]]]]] = {}
    for s in joint:
        env_en = env.enabled(s.env_state)
        rows = {}
        for a in ctrl.enabled(s.control_state):
            if a in env_en:
                rows[a] = (1.0, [(1.0, JointState(ctrl.step(s.control_state, a), env.step(s.env_state, a)))])
            else:
                p = 1.0 / len(env_en)
                rows[a] = (0.0, [(p, JointState(s.control_state, env.step(s.env_state, ae))) for ae in env_en])
        model[s] = rows

    v = {s: 0.0 for s in joint}
    residuals = []
    for _ in range(max_sweeps):
        q = {
            s: {a: r + gamma * sum(p * v[n] for p, n in succ) for a, (r, succ) in rows.items()}
            for s, rows in model.items()
        }
        new_v = {s: max(qs.values()) for s, qs in q.items()}
        delta = max(abs(new_v[s] - v[s]) for s in joint)
        residuals.append(delta)
        v = new_v
        if delta < eps:
            break
    return JointValueTable(v, q, gamma, residuals)


def teacher(values: JointValueTable, s: JointState) -> OracleAnswer:
    return values.best_actions(s)


def expert(env: Automaton, s: JointState) -> OracleAnswer:
    # every enabled action is an immediately valid move for the black box
    return OracleAnswer(env.enabled(JointState(*s).env_state))


def teacher_lander(s: LanderState, engine: Engine) -> bool:
    """Inject iff firing scores strictly better over one step (potential minus fuel)."""
    engine = Engine(engine)
    if engine is Engine.NOTHING:
        return False
    fired = 100.0 * potential(physics_step(s, engine, True)) - fuel_cost(engine, True)
    unfired = 100.0 * potential(physics_step(s, engine, False))
    return fired > unfired
