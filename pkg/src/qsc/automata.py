"""Deterministic partial automata and the bundled shared-control use cases.

An automaton is ``(states, initial, actions, transitions)`` where ``transitions``
maps ``(state, action)`` to a successor; a missing entry means the action is
not enabled. Every state must enable at least one action.

State and action ids are strings in files and in the public API; ``index``
helpers give the dense integer order (file order) used by the learners.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping


class AutomatonError(ValueError):
    """Raised for malformed automaton documents or invalid state/action ids."""


@dataclass(frozen=True)
class Automaton:
    name: str
    states: tuple[str, ...]
    initial: str
    actions: tuple[str, ...]
    transitions: Mapping[tuple[str, str], str]
    _enabled: dict[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        states = set(self.states)
        actions = set(self.actions)
        if len(states) != len(self.states):
            raise AutomatonError(f"{self.name}: duplicate state ids")
        if len(actions) != len(self.actions):
            raise AutomatonError(f"{self.name}: duplicate action ids")
        if self.initial not in states:
            raise AutomatonError(f"{self.name}: initial state {self.initial!r} not declared")
        for (src, act), dst in self.transitions.items():
            if src not in states or dst not in states:
                raise AutomatonError(f"{self.name}: transition {src!r} -{act}-> {dst!r} uses an undeclared state")
            if act not in actions:
                raise AutomatonError(f"{self.name}: transition from {src!r} uses undeclared action {act!r}")
        enabled = {
            s: tuple(a for a in self.actions if (s, a) in self.transitions) for s in self.states
        }
        for s, en in enabled.items():
            if not en:
                raise AutomatonError(f"{self.name}: empty enabled set at state {s!r}")
        object.__setattr__(self, "transitions", dict(self.transitions))
        object.__setattr__(self, "_enabled", enabled)

    def enabled(self, state: str) -> tuple[str, ...]:
        """Actions with a defined transition at ``state``, in alphabet order."""
        try:
            return self._enabled[state]
        except KeyError:
            raise AutomatonError(f"{self.name}: unknown state {state!r}") from None

    def step(self, state: str, action: str) -> str:
        try:
            return self.transitions[(state, action)]
        except KeyError:
            raise AutomatonError(
                f"{self.name}: action {action!r} not enabled at state {state!r}"
            ) from None

    def state_index(self, state: str) -> int:
        return self.states.index(state)

    def action_index(self, action: str) -> int:
        return self.actions.index(action)

    def to_document(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "states": list(self.states),
            "initial": self.initial,
            "actions": list(self.actions),
            "transitions": [
                {"from": s, "action": a, "to": self.transitions[(s, a)]}
                for s in self.states
                for a in self.actions
                if (s, a) in self.transitions
            ],
        }


def enabled(auto: Automaton, state: str) -> tuple[str, ...]:
    return auto.enabled(state)


def _require(doc: Mapping[str, Any], key: str, kind: type) -> Any:
    if key not in doc:
        raise AutomatonError(f"schema error: missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise AutomatonError(f"schema error: field {key!r} must be {kind.__name__}")
    return value


def load_automaton(doc: Mapping[str, Any]) -> Automaton:
    """Build a validated :class:`Automaton` from its JSON document form."""
    if not isinstance(doc, Mapping):
        raise AutomatonError("schema error: automaton document must be an object")
    name = _require(doc, "name", str)
    states = _require(doc, "states", list)
    initial = _require(doc, "initial", str)
    actions = _require(doc, "actions", list)
    raw = _require(doc, "transitions", list)
    if not all(isinstance(s, str) for s in states + actions):
        raise AutomatonError("schema error: state and action ids must be strings")

    declared_states, declared_actions = set(states), set(actions)
    transitions: dict[tuple[str, str], str] = {}
    for entry in raw:
        if not isinstance(entry, Mapping) or set(entry) != {"from", "action", "to"}:
            raise AutomatonError(f"schema error: bad transition entry {entry!r}")
        src, act, dst = entry["from"], entry["action"], entry["to"]
        if act not in declared_actions:
            raise AutomatonError(f"schema error: undeclared action {act!r}")
        if src not in declared_states or dst not in declared_states:
            raise AutomatonError(f"schema error: undeclared state in {entry!r}")
        if (src, act) in transitions:
            raise AutomatonError(f"duplicate transition for ({src!r}, {act!r})")
        transitions[(src, act)] = dst
    return Automaton(name, tuple(states), initial, tuple(actions), transitions)


def load_pair(doc: Mapping[str, Any]) -> tuple[Automaton, Automaton]:
    if not isinstance(doc, Mapping) or "control" not in doc or "env" not in doc:
        raise AutomatonError("schema error: pair document needs 'control' and 'env'")
    return load_automaton(doc["control"]), load_automaton(doc["env"])


def pair_document(control: Automaton, env: Automaton) -> dict[str, Any]:
    return {"control": control.to_document(), "env": env.to_document()}


def read_pair(path: str | Path) -> tuple[Automaton, Automaton]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AutomatonError(f"not valid JSON: {exc}") from None
    return load_pair(doc)


def write_pair(path: str | Path, control: Automaton, env: Automaton) -> None:
    Path(path).write_text(json.dumps(pair_document(control, env), indent=2) + "\n", encoding="utf-8")


def _build(name: str, states: str, table: dict[str, dict[str, str]]) -> Automaton:
    state_ids = tuple(states.split())
    trans = {(s, a): t for s, row in table.items() for a, t in row.items()}
    return Automaton(name, state_ids, state_ids[0], ("a", "b", "c"), trans)


def make_cases() -> tuple[Automaton, Automaton]:
    """Hidden 50/50 branch: the black box picks b or c at e0 while the control fails."""
    control = _build("cases-control", "c0 c1", {
        "c0": {"a": "c1"},
        "c1": {"b": "c1", "c": "c1"},
    })
    env = _build("cases-env", "e0 e1 e2 e3 e4", {
        "e0": {"b": "e1", "c": "e2"},
        "e1": {"a": "e3"},
        "e2": {"a": "e4"},
        "e3": {"b": "e3"},
        "e4": {"c": "e4"},
    })
    return control, env


def make_strategy() -> tuple[Automaton, Automaton]:
    """Decision pair (c1, e2): b succeeds now but cycles through faults, c settles.

    The single decision state written ``g_2`` elsewhere corresponds to the
    joint pair ``(c1, e2)`` here.
    """
    control = _build("strategy-control", "c0 c1 c2", {
        "c0": {"a": "c1"},
        "c1": {"b": "c1", "c": "c2"},
        "c2": {"a": "c2"},
    })
    env = _build("strategy-env", "e0 e1 e2 e3", {
        "e0": {"a": "e1"},
        "e1": {"a": "e2"},
        "e2": {"b": "e0", "c": "e3"},
        "e3": {"a": "e3"},
    })
    return control, env


def make_combination_lock() -> tuple[Automaton, Automaton]:
    """Sequence a, b, a cycles forever; c at the start leads the env into sink s3."""
    control = _build("combination-lock-control", "c0 c1 c2", {
        "c0": {"a": "c1", "c": "c1"},
        "c1": {"b": "c2"},
        "c2": {"a": "c0"},
    })
    env = _build("combination-lock-env", "e0 e1 e2 s3", {
        "e0": {"a": "e1", "c": "s3"},
        "e1": {"b": "e2"},
        "e2": {"a": "e0"},
        "s3": {"b": "s3"},
    })
    return control, env


BUNDLED = {
    "cases": make_cases,
    "strategy": make_strategy,
    "combination_lock": make_combination_lock,
}


def bundled(case: str) -> tuple[Automaton, Automaton]:
    key = case.replace("-", "_")
    if key not in BUNDLED:
        raise AutomatonError(f"unknown case {case!r}; expected one of {sorted(BUNDLED)}")
    return BUNDLED[key]()
