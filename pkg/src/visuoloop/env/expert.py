"""Scripted proportional-controller expert used to collect demonstrations.

Stateless: the action depends only on (state, active task). Deltas are the
raw position error clipped to the action bound, so the expert moves at full
speed far from a waypoint and eases to near-zero on top of it.
"""

from __future__ import annotations

import math

from .tasks import ActiveTask, move_target_point
from .world import (
    GRASP_RADIUS,
    PUSH_DISTANCE,
    SWITCH_X,
    SWITCH_Y_HI,
    SWITCH_Y_LO,
    Action,
    WorldState,
    switch_handle_pos,
)

CLOSE_IN = GRASP_RADIUS * 0.5  # start closing the gripper inside this range


class ExpertError(RuntimeError):
    """The task cannot be acted on from this state (e.g. missing object)."""


GAIN = 0.5  # proportional gain; eases in near the waypoint
SPEED = 0.03  # cruise cap below the env action bound, putting tasks at 20-60 steps


def _clamp(v: float) -> float:
    return min(SPEED, max(-SPEED, v))


def _toward(state: WorldState, target: tuple[float, float], gripper: float) -> Action:
    return Action(
        dx=_clamp(GAIN * (target[0] - state.gripper[0])),
        dy=_clamp(GAIN * (target[1] - state.gripper[1])),
        gripper=gripper,
    )


def _grasp_action(state: WorldState, target: str) -> Action:
    if state.held == target:
        return Action(0.0, 0.0, 1.0)
    if state.held is not None:
        return Action(0.0, 0.0, 0.0)  # drop the wrong object first
    try:
        obj = state.object_pos(target)
    except KeyError as e:
        raise ExpertError(f"object {target!r} not in layout") from e
    d = math.hypot(state.gripper[0] - obj[0], state.gripper[1] - obj[1])
    if d > CLOSE_IN:
        return _toward(state, obj, 0.0)
    return _toward(state, obj, 1.0)


def scripted_expert(state: WorldState, active: ActiveTask) -> Action:
    spec = active.spec
    if spec.kind == "move_to":
        return _toward(state, move_target_point(state, spec.target), 0.0)

    if spec.kind == "grasp":
        return _grasp_action(state, spec.target)

    if spec.kind == "place_in":
        if state.held != spec.target:
            return _grasp_action(state, spec.target)
        center = state.layout.zones[spec.zone].center
        d = math.hypot(state.gripper[0] - center[0], state.gripper[1] - center[1])
        if d <= 0.045:
            return Action(0.0, 0.0, 0.0)
        return _toward(state, center, 1.0)

    if spec.kind == "push":
        ox, oy = state.object_pos(spec.target)
        displaced = (ox - active.anchor_xy[0]) * spec.direction
        if displaced >= PUSH_DISTANCE + 0.02:
            return Action(0.0, 0.0, 0.0)
        if state.held != spec.target:
            return _grasp_action(state, spec.target)
        goal_x = active.anchor_xy[0] + spec.direction * (PUSH_DISTANCE + 0.03)
        return _toward(state, (goal_x, oy), 1.0)

    if spec.kind == "toggle_switch":
        level = state.switch_level
        target_level = 0.85 if spec.direction > 0 else 0.15
        if (spec.direction > 0 and level >= 0.80) or (spec.direction < 0 and level <= 0.20):
            return Action(0.0, 0.0, 0.0)
        handle = switch_handle_pos(level)
        d = math.hypot(state.gripper[0] - handle[0], state.gripper[1] - handle[1])
        goal_y = SWITCH_Y_LO + target_level * (SWITCH_Y_HI - SWITCH_Y_LO)
        if state.gripper_closed and d <= GRASP_RADIUS:
            return _toward(state, (SWITCH_X, goal_y), 1.0)
        if d <= CLOSE_IN:
            return _toward(state, handle, 1.0)
        return _toward(state, handle, 0.0)

    raise ExpertError(f"unknown task kind {spec.kind}")
