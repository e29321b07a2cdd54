"""Simplified 2-D lander used for the restriction-protocol experiments.

The operator (black box) asks for an engine; the control decides whether fuel
is injected. Dynamics are a semi-implicit Euler step with fixed constants.

Sign conventions: ``angle > 0`` is a counter-clockwise tilt and the body's up
axis is ``(-sin(angle), cos(angle))``. The left engine turns the craft
clockwise (``omega -= 0.4``) and pushes it right; the right engine does the
opposite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

DT = 0.1
GRAVITY = -0.5
MAIN_THRUST = 0.8
SIDE_SPIN = 0.4
SIDE_LATERAL = 0.1
MAIN_FUEL = 0.3
SIDE_FUEL = 0.03
LANDING_BONUS = 100.0
CRASH_PENALTY = -100.0
EPISODE_STEPS = 200
# operator brakes when vy < BRAKE_OFFSET + BRAKE_SLOPE * y
BRAKE_OFFSET = -0.4
BRAKE_SLOPE = -0.3
# braking holds touchdown speed near |BRAKE_OFFSET|, so the safe window must admit it
PAD_HALF_WIDTH = 0.3
SAFE_LANDING_SPEED = 0.5
N_BINS = 5

# (low, high) per feature in discretization order
RANGES = {
    "x": (-1.0, 1.0),
    "y": (0.0, 1.5),
    "angle": (-math.pi / 2, math.pi / 2),
    "vx": (-2.0, 2.0),
    "vy": (-2.0, 2.0),
    "omega": (-2.0, 2.0),
}
FEATURES = tuple(RANGES)
N_CELLS = N_BINS ** len(FEATURES)


class Engine(enum.IntEnum):
    NOTHING = 0
    LEFT = 1
    RIGHT = 2
    MAIN = 3


class Status(enum.Enum):
    FLYING = "flying"
    LANDED = "landed"
    CRASHED = "crashed"


@dataclass(frozen=True)
class LanderState:
    x: float
    y: float
    angle: float
    vx: float
    vy: float
    omega: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.x, self.y, self.angle, self.vx, self.vy, self.omega)

    def clamped(self) -> "LanderState":
        vals = {}
        for name in FEATURES:
            lo, hi = RANGES[name]
            vals[name] = min(max(float(getattr(self, name)), lo), hi)
        return LanderState(**vals)


class TerminalStateError(RuntimeError):
    pass


def initial_state(rng: np.random.Generator) -> LanderState:
    x = float(rng.uniform(-0.3, 0.3))
    angle = float(rng.uniform(-0.1, 0.1))
    return LanderState(x=x, y=1.2, angle=angle, vx=0.0, vy=0.0, omega=0.0)


def physics_step(s: LanderState, engine: Engine, fired: bool) -> LanderState:
    """Advance one ``DT``; an unfired engine request produces no thrust."""
    if detect_terminal(s) is not Status.FLYING:
        raise TerminalStateError(f"cannot step terminal state {s}")
    engine = Engine(engine)
    ax, ay = 0.0, GRAVITY
    omega = s.omega
    if fired and engine is Engine.MAIN:
        ax += -MAIN_THRUST * math.sin(s.angle)
        ay += MAIN_THRUST * math.cos(s.angle)
    elif fired and engine is Engine.LEFT:
        omega -= SIDE_SPIN
        ax += SIDE_LATERAL
    elif fired and engine is Engine.RIGHT:
        omega += SIDE_SPIN
        ax -= SIDE_LATERAL
    vx = s.vx + ax * DT
    vy = s.vy + ay * DT
    nxt = LanderState(
        x=s.x + vx * DT,
        y=s.y + vy * DT,
        angle=s.angle + omega * DT,
        vx=vx,
        vy=vy,
        omega=omega,
    )
    return nxt.clamped()


def _bin(value: float, lo: float, hi: float) -> int:
    b = int(math.floor((value - lo) * N_BINS / (hi - lo)))
    return min(max(b, 0), N_BINS - 1)


def feature_bins(s: LanderState) -> tuple[int, ...]:
    return tuple(_bin(v, *RANGES[name]) for name, v in zip(FEATURES, s.as_tuple()))


def discretize(s: LanderState) -> int:
    """Cell index in ``[0, 5**6)``; feature ``i`` is digit ``i`` in base 5."""
    return sum(b * N_BINS ** i for i, b in enumerate(feature_bins(s)))


def operator_policy(s: LanderState, rng: np.random.Generator, noise: float = 0.05) -> Engine:
    tilt = s.angle + 0.5 * s.omega
    if abs(tilt) > 0.15:
        action = Engine.LEFT if tilt > 0 else Engine.RIGHT
    elif s.vy < BRAKE_OFFSET + BRAKE_SLOPE * s.y:
        action = Engine.MAIN
    else:
        action = Engine.NOTHING
    if rng.random() < noise:
        action = Engine(int(rng.integers(len(Engine))))
    return action


def potential(s: LanderState) -> float:
    return -(math.hypot(s.x, s.y) + abs(s.vx) + abs(s.vy) + abs(s.angle))


def fuel_cost(engine: Engine, fired: bool) -> float:
    if not fired or engine is Engine.NOTHING:
        return 0.0
    return MAIN_FUEL if engine is Engine.MAIN else SIDE_FUEL


def detect_terminal(s: LanderState) -> Status:
    if s.y > 0:
        return Status.FLYING
    if abs(s.x) < PAD_HALF_WIDTH and abs(s.vy) < SAFE_LANDING_SPEED and abs(s.angle) < 0.2:
        return Status.LANDED
    return Status.CRASHED


def reward(s: LanderState, s_next: LanderState, fired: bool, engine: Engine) -> float:
    r = 100.0 * (potential(s_next) - potential(s)) - fuel_cost(Engine(engine), fired)
    status = detect_terminal(s_next)
    if status is Status.LANDED:
        r += LANDING_BONUS
    elif status is Status.CRASHED:
        r += CRASH_PENALTY
    return r

