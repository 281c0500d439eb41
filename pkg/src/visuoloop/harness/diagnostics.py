"""Embedding diagnostics: distance-curve statistics over episode logs, the
steps-per-subgoal histogram, and clean-vs-corrupt plan separation.

The corruption test replaces one plan frame with uniform noise and asks how
well the max consecutive-frame embedding distance separates corrupted plans
from clean ones (area under the ROC curve, plus error rates at a midpoint
threshold).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..executor.log import EpisodeLog
from ..executor.loop import max_consecutive_distance, plan_goal_embeddings
from ..nn import RngStream
from ..planner.sample import SubGoalPlan


@dataclass
class MeasurabilityStats:
    nonincreasing_fraction: float  # consecutive same-goal step pairs with d_active not rising
    prev_goal_increase_fraction: float  # transitions after which distance to the left goal grew
    n_pairs: int
    n_transitions: int


def measurability_stats(logs: list[EpisodeLog], eps: float = 1e-12) -> MeasurabilityStats:
    noninc = 0
    pairs = 0
    for log in logs:
        for a, b in zip(log.steps, log.steps[1:]):
            same_goal = (
                a.task_index == b.task_index
                and a.i_sub == b.i_sub
                and not a.replan
            )
            if not same_goal:
                continue
            pairs += 1
            if b.d_active <= a.d_active + eps:
                noninc += 1

    increases = 0
    transitions = 0
    for log in logs:
        records = log.steps
        by_t = {s.t: s for s in records}
        for t, frm, to in log.transitions:
            start = by_t.get(t)
            if start is None or np.isnan(start.d_prev):
                continue
            # follow the segment while the same sub-goal stays active
            end = start
            tt = t + 1
            while tt in by_t and by_t[tt].i_sub == to and by_t[tt].task_index == start.task_index:
                end = by_t[tt]
                if by_t[tt - 1].replan:
                    break
                tt += 1
            if end.t == start.t:
                continue
            transitions += 1
            if end.d_prev > start.d_prev:
                increases += 1

    return MeasurabilityStats(
        nonincreasing_fraction=noninc / pairs if pairs else float("nan"),
        prev_goal_increase_fraction=increases / transitions if transitions else float("nan"),
        n_pairs=pairs,
        n_transitions=transitions,
    )


def steps_per_subgoal_histogram(logs: list[EpisodeLog]) -> dict[int, int]:
    hist: dict[int, int] = {}
    for log in logs:
        for c in log.steps_per_subgoal:
            hist[c] = hist.get(c, 0) + 1
    return dict(sorted(hist.items()))


def auc_rank(clean: np.ndarray, corrupt: np.ndarray) -> float:
    """P(corrupt score > clean score) via the rank-sum statistic (ties split)."""
    scores = np.concatenate([clean, corrupt])
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty_like(order, dtype=np.float64)
    ranks[order] = np.arange(1, len(scores) + 1)
    # average ranks for ties
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = (i + 1 + j + 1) / 2.0
        i = j + 1
    n_c = len(corrupt)
    n_k = len(clean)
    rank_sum = ranks[len(clean) :].sum()
    return float((rank_sum - n_c * (n_c + 1) / 2.0) / (n_c * n_k))


def corrupt_plan(plan: SubGoalPlan, rng: RngStream) -> SubGoalPlan:
    """Replace one frame with uniform noise (an unreliable-generation stand-in)."""
    frames = plan.frames.copy()
    k = int(rng.substream("frame").integers(0, frames.shape[0]))
    frames[k] = rng.substream("noise").uniform(0.0, 1.0, frames.shape[1:])
    return SubGoalPlan(frames=frames, provenance=plan.provenance)


@dataclass
class ReplanSeparation:
    auc: float
    threshold: float  # midpoint of the clean/corrupt means
    false_replan_rate: float  # clean plans flagged
    missed_corruption_rate: float  # corrupted plans not flagged
    clean_scores: list[float]
    corrupt_scores: list[float]


def replan_separation(plans: list[SubGoalPlan], policy, rng: RngStream) -> ReplanSeparation:
    clean = np.array([max_consecutive_distance(plan_goal_embeddings(policy, p)) for p in plans])
    corrupt = np.array(
        [
            max_consecutive_distance(
                plan_goal_embeddings(policy, corrupt_plan(p, rng.substream(i)))
            )
            for i, p in enumerate(plans)
        ]
    )
    threshold = float((clean.mean() + corrupt.mean()) / 2.0)
    return ReplanSeparation(
        auc=auc_rank(clean, corrupt),
        threshold=threshold,
        false_replan_rate=float(np.mean(clean > threshold)),
        missed_corruption_rate=float(np.mean(corrupt <= threshold)),
        clean_scores=[float(x) for x in clean],
        corrupt_scores=[float(x) for x in corrupt],
    )
