"""Task vocabulary, success predicates, chains, and seeded resets.

Success rules:
    move_to      gripper within MOVE_TOLERANCE of the target point
    grasp        the target object is held
    place_in     target object center inside the zone and not held
    push         object displaced >= PUSH_DISTANCE along the commanded axis,
                 measured from its position when the task became active
    toggle       switch level crossed 0.5 in the commanded direction since
                 task activation

Push and toggle need a snapshot of where things stood when the task started,
so runtime code wraps a TaskSpec in an ActiveTask carrying that anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..nn.rng import RngStream
from .render import Observation, render
from .world import (
    DEFAULT_LAYOUT,
    MOVE_TOLERANCE,
    PUSH_DISTANCE,
    Layout,
    WorldState,
    sample_world,
    switch_handle_pos,
)

CHAIN_LENGTH = 5


@dataclass(frozen=True)
class TaskSpec:
    name: str
    kind: str  # move_to | grasp | place_in | push | toggle_switch
    target: str = ""  # object id, or point label for move_to
    zone: str = ""  # place_in only
    direction: int = 0  # push: +1/-1 along x; toggle: +1 up / -1 down


VOCAB: tuple[TaskSpec, ...] = (
    TaskSpec("move_to_box", "move_to", target="box"),
    TaskSpec("move_to_switch", "move_to", target="switch"),
    TaskSpec("grasp_red", "grasp", target="red"),
    TaskSpec("grasp_green", "grasp", target="green"),
    TaskSpec("grasp_blue", "grasp", target="blue"),
    TaskSpec("place_red_box", "place_in", target="red", zone="box"),
    TaskSpec("place_green_box", "place_in", target="green", zone="box"),
    TaskSpec("place_blue_tray", "place_in", target="blue", zone="tray"),
    TaskSpec("push_red_right", "push", target="red", direction=1),
    TaskSpec("push_green_left", "push", target="green", direction=-1),
    TaskSpec("toggle_up", "toggle_switch", direction=1),
    TaskSpec("toggle_down", "toggle_switch", direction=-1),
)

TASK_INDEX = {t.name: i for i, t in enumerate(VOCAB)}
NUM_TASKS = len(VOCAB)
NULL_TASK_ID = NUM_TASKS  # reserved embedding row for classifier-free guidance


def task_id(spec: TaskSpec) -> int:
    return TASK_INDEX[spec.name]


@dataclass(frozen=True)
class TaskChain:
    tasks: tuple[TaskSpec, ...]

    def __post_init__(self):
        if len(self.tasks) != CHAIN_LENGTH:
            raise ValueError(f"chains have {CHAIN_LENGTH} tasks, got {len(self.tasks)}")
        for t in self.tasks:
            if t.name not in TASK_INDEX:
                raise ValueError(f"unknown task {t.name}")


@dataclass(frozen=True)
class ActiveTask:
    spec: TaskSpec
    anchor_xy: tuple[float, float] | None = None
    anchor_level: float | None = None


def activate(spec: TaskSpec, state: WorldState) -> ActiveTask:
    if spec.kind == "push":
        return ActiveTask(spec, anchor_xy=state.object_pos(spec.target))
    if spec.kind == "toggle_switch":
        return ActiveTask(spec, anchor_level=state.switch_level)
    return ActiveTask(spec)


def move_target_point(state: WorldState, label: str) -> tuple[float, float]:
    if label == "switch":
        return switch_handle_pos(state.switch_level)
    if label in state.layout.zones:
        return state.layout.zones[label].center
    return state.object_pos(label)


def task_success(state: WorldState, active: ActiveTask) -> bool:
    spec = active.spec
    if spec.kind == "move_to":
        tx, ty = move_target_point(state, spec.target)
        return math.hypot(state.gripper[0] - tx, state.gripper[1] - ty) <= MOVE_TOLERANCE
    if spec.kind == "grasp":
        return state.held == spec.target
    if spec.kind == "place_in":
        x, y = state.object_pos(spec.target)
        return state.layout.zones[spec.zone].contains(x, y) and state.held != spec.target
    if spec.kind == "push":
        x, _ = state.object_pos(spec.target)
        return (x - active.anchor_xy[0]) * spec.direction >= PUSH_DISTANCE
    if spec.kind == "toggle_switch":
        if spec.direction > 0:
            return active.anchor_level < 0.5 < state.switch_level
        return active.anchor_level > 0.5 > state.switch_level
    raise ValueError(f"unknown task kind {spec.kind}")


def first_toggle_direction(tasks) -> int | None:
    for t in tasks:
        if t.kind == "toggle_switch":
            return t.direction
    return None


def sample_chain(rng: RngStream) -> TaskChain:
    """Five distinct tasks with at most one switch toggle (keeps every task in
    the chain feasible given a reset conditioned on the first toggle)."""
    while True:
        order = rng.permutation(NUM_TASKS)
        picked: list[TaskSpec] = []
        has_toggle = False
        for i in order:
            spec = VOCAB[int(i)]
            if spec.kind == "toggle_switch":
                if has_toggle:
                    continue
                has_toggle = True
            picked.append(spec)
            if len(picked) == CHAIN_LENGTH:
                return TaskChain(tuple(picked))


def reset(tasks, seed_or_stream, layout: Layout = DEFAULT_LAYOUT) -> tuple[WorldState, Observation]:
    """Seeded initial state for a task sequence (a TaskChain or any list of
    TaskSpecs). Deterministic given (tasks, seed)."""
    if isinstance(tasks, TaskChain):
        tasks = tasks.tasks
    rng = seed_or_stream if isinstance(seed_or_stream, RngStream) else RngStream(int(seed_or_stream))
    state = sample_world(rng.substream("reset"), first_toggle_direction(tasks), layout)
    return state, render(state)
