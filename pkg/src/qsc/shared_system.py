"""Operation protocols combining the control's and the black box's actions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .automata import Automaton
from . import lander
from .lander import Engine, LanderState


class ProtocolError(ValueError):
    """An action was issued that the issuing component does not enable."""


class JointState(NamedTuple):
    control_state: str
    env_state: str


@dataclass(frozen=True)
class StepOutcome:
    next: JointState
    success: bool
    executed_env_action: str


@dataclass(frozen=True)
class LanderOutcome:
    next: LanderState
    success: bool
    fired: bool


def step_agreement(ctrl: Automaton, env: Automaton, s: JointState, a_c: str, a_e: str) -> StepOutcome:
    """Both move on ``a_c`` if the env enables it; otherwise only the env moves, on ``a_e``."""
    sc, se = s
    if a_c not in ctrl.enabled(sc):
        raise ProtocolError(f"control action {a_c!r} not enabled at {sc!r} (joint state {sc!r}, {se!r})")
    env_en = env.enabled(se)
    if a_e not in env_en:
        raise ProtocolError(f"env action {a_e!r} not enabled at {se!r} (joint state {sc!r}, {se!r})")
    if a_c in env_en:
        return StepOutcome(JointState(ctrl.step(sc, a_c), env.step(se, a_c)), True, a_c)
    return StepOutcome(JointState(sc, env.step(se, a_e)), False, a_e)


def step_restriction(s: LanderState, engine_action: Engine, inject: bool) -> LanderOutcome:
    """Fire the operator's engine only if the control injects fuel.

    ``success`` here only reports whether an engine actually fired; lander
    failure in experiments is judged against the teacher, not by this flag.
    """
    engine = Engine(engine_action)
    fired = bool(inject) and engine is not Engine.NOTHING
    return LanderOutcome(lander.physics_step(s, engine, fired), fired, fired)
