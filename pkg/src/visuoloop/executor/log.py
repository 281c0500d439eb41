"""Episode trace: one record per env step plus a summary, serialized as JSONL.

Every asserted benchmark number is recomputable from these logs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class StepRecord:
    t: int
    task_index: int
    i_sub: int
    d_active: float
    d_prev: float
    action: tuple[float, float, float]
    replan: bool
    events: list[str]

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "task": self.task_index,
            "i_sub": self.i_sub,
            "d_active": round(self.d_active, 8),
            "d_prev": None if math.isnan(self.d_prev) else round(self.d_prev, 8),
            "action": [round(a, 8) for a in self.action],
            "replan": self.replan,
            "events": self.events,
        }


@dataclass
class EpisodeLog:
    mode: str
    chain: list[str]
    steps: list[StepRecord] = field(default_factory=list)
    transitions: list[tuple[int, int, int]] = field(default_factory=list)  # (t, from, to)
    task_done_steps: list[int] = field(default_factory=list)
    plan_generations: list[dict] = field(default_factory=list)
    completion_scores: list[tuple[int, float]] = field(default_factory=list)
    replan_count: int = 0
    tasks_completed: int = 0
    steps_per_subgoal: list[int] = field(default_factory=list)

    def finalize(self) -> None:
        pass  # steps_per_subgoal is recorded at transition time by the executor

    @property
    def length(self) -> int:
        return len(self.steps)

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "chain": self.chain,
            "tasks_completed": self.tasks_completed,
            "steps": self.length,
            "replans": self.replan_count,
            "plans_generated": len(self.plan_generations),
            "task_done_steps": self.task_done_steps,
            "steps_per_subgoal": self.steps_per_subgoal,
        }

    def write_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        lines = [json.dumps({"summary": self.summary()}, sort_keys=True)]
        lines += [json.dumps(s.to_json(), sort_keys=True) for s in self.steps]
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text("\n".join(lines) + "\n")
        tmp.replace(path)
