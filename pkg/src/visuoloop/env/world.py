"""Deterministic 2-D tabletop simulator.

Coordinates live in [0,1]^2 with y growing upward. The gripper is a point
actuator with a closed/open command; a closed gripper within the grasp radius
of an object picks it up, held objects track the gripper exactly, and opening
releases them in place. A slider switch on the right edge is dragged the same
way. `step` is a pure function of (state, action).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..nn.tensor import NumericFault
from ..nn.rng import RngStream

GRID = 16
ACTION_BOUND = 0.05
GRASP_RADIUS = 0.04
PUSH_DISTANCE = 0.15
MOVE_TOLERANCE = 0.04

SWITCH_X = 0.92
SWITCH_Y_LO = 0.55
SWITCH_Y_HI = 0.90


class LayoutError(RuntimeError):
    """Could not place entities without overlap within the retry budget."""


@dataclass(frozen=True)
class Zone:
    name: str
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))


@dataclass(frozen=True)
class Layout:
    object_ids: tuple[str, ...]
    object_radius: dict[str, float]
    object_color: dict[str, tuple[float, float, float]]
    zones: dict[str, Zone]


DEFAULT_LAYOUT = Layout(
    object_ids=("red", "green", "blue"),
    object_radius={"red": 0.05, "green": 0.05, "blue": 0.05},
    object_color={
        "red": (1.0, 0.15, 0.15),
        "green": (0.15, 1.0, 0.15),
        "blue": (0.2, 0.35, 1.0),
    },
    zones={
        "box": Zone("box", 0.06, 0.06, 0.34, 0.30),
        "tray": Zone("tray", 0.62, 0.06, 0.90, 0.30),
    },
)


@dataclass(frozen=True)
class WorldState:
    gripper: tuple[float, float]
    gripper_closed: bool
    held: str | None
    objects: tuple[tuple[str, float, float], ...]  # (id, x, y), layout order
    switch_level: float
    layout: Layout = DEFAULT_LAYOUT

    def object_pos(self, oid: str) -> tuple[float, float]:
        for name, x, y in self.objects:
            if name == oid:
                return (x, y)
        raise KeyError(oid)


@dataclass(frozen=True)
class Action:
    dx: float
    dy: float
    gripper: float  # in [0,1]; closed iff > 0.5


@dataclass(frozen=True)
class Event:
    kind: str  # grasped | released | switch_toggled
    target: str


def switch_handle_pos(level: float) -> tuple[float, float]:
    return (SWITCH_X, SWITCH_Y_LO + level * (SWITCH_Y_HI - SWITCH_Y_LO))


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def step(state: WorldState, action: Action) -> tuple[WorldState, list[Event]]:
    """Advance one tick. Deltas are clamped to +/-ACTION_BOUND, positions to [0,1]."""
    if not all(math.isfinite(v) for v in (action.dx, action.dy, action.gripper)):
        raise NumericFault(f"non-finite action {action}")
    dx = min(ACTION_BOUND, max(-ACTION_BOUND, action.dx))
    dy = min(ACTION_BOUND, max(-ACTION_BOUND, action.dy))
    gx = min(1.0, max(0.0, state.gripper[0] + dx))
    gy = min(1.0, max(0.0, state.gripper[1] + dy))
    closed = action.gripper > 0.5

    events: list[Event] = []
    held = state.held
    positions = {name: (x, y) for name, x, y in state.objects}
    level = state.switch_level

    if held is not None and not closed:
        events.append(Event("released", held))
        held = None
    if held is not None:
        positions[held] = (gx, gy)
    elif closed:
        # Grasp the nearest object within reach; otherwise drag the switch
        # handle. The drag contact is checked at the pre-move gripper position
        # so a full-speed move does not outrun the handle it is holding.
        best, best_d = None, GRASP_RADIUS
        for name, pos in positions.items():
            d = _dist((gx, gy), pos)
            if d <= best_d:
                best, best_d = name, d
        handle_contact = (
            _dist(state.gripper, switch_handle_pos(level)) <= GRASP_RADIUS
            or _dist((gx, gy), switch_handle_pos(level)) <= GRASP_RADIUS
        )
        if best is not None:
            held = best
            positions[best] = (gx, gy)
            events.append(Event("grasped", best))
        elif handle_contact:
            new_level = min(1.0, max(0.0, (gy - SWITCH_Y_LO) / (SWITCH_Y_HI - SWITCH_Y_LO)))
            if (level - 0.5) * (new_level - 0.5) < 0:
                events.append(Event("switch_toggled", "switch"))
            level = new_level

    new_state = replace(
        state,
        gripper=(gx, gy),
        gripper_closed=closed,
        held=held,
        objects=tuple((name, *positions[name]) for name, _, _ in state.objects),
        switch_level=level,
    )
    return new_state, events


OBJECT_SPAWN = (0.18, 0.38, 0.80, 0.88)  # x0, y0, x1, y1; clear of zones and switch
GRIPPER_SPAWN = (0.10, 0.15, 0.85, 0.90)


def sample_world(rng: RngStream, first_toggle_dir: int | None = None,
                 layout: Layout = DEFAULT_LAYOUT, max_tries: int = 500) -> WorldState:
    """Random initial state. `first_toggle_dir` (+1 up / -1 down / None) pins the
    switch level to the feasible side for the chain's first toggle task."""
    placed: list[tuple[str, float, float]] = []
    for oid in layout.object_ids:
        r = layout.object_radius[oid]
        for attempt in range(max_tries + 1):
            if attempt == max_tries:
                raise LayoutError(f"could not place {oid} after {max_tries} tries")
            x = float(rng.uniform(OBJECT_SPAWN[0], OBJECT_SPAWN[2]))
            y = float(rng.uniform(OBJECT_SPAWN[1], OBJECT_SPAWN[3]))
            ok = all(
                math.hypot(x - px, y - py) >= r + layout.object_radius[pid] + 0.03
                for pid, px, py in placed
            )
            if ok:
                placed.append((oid, x, y))
                break
    for attempt in range(max_tries + 1):
        if attempt == max_tries:
            raise LayoutError(f"could not place gripper after {max_tries} tries")
        gx = float(rng.uniform(GRIPPER_SPAWN[0], GRIPPER_SPAWN[2]))
        gy = float(rng.uniform(GRIPPER_SPAWN[1], GRIPPER_SPAWN[3]))
        if all(math.hypot(gx - px, gy - py) >= 0.10 for _, px, py in placed):
            break
    if first_toggle_dir == 1:
        level = float(rng.uniform(0.10, 0.38))
    elif first_toggle_dir == -1:
        level = float(rng.uniform(0.62, 0.90))
    else:
        side = rng.uniform(0.0, 1.0) < 0.5
        level = float(rng.uniform(0.10, 0.38)) if side else float(rng.uniform(0.62, 0.90))
    return WorldState(
        gripper=(gx, gy),
        gripper_closed=False,
        held=None,
        objects=tuple(placed),
        switch_level=level,
        layout=layout,
    )
