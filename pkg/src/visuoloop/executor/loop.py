"""Closed-loop test-time execution, plus the fixed-interval open-loop baseline.

The closed loop generates a sub-goal plan, rejects plans whose consecutive
frames are too far apart in the state-embedding space (regenerating up to a
bounded number of times, then falling back to the best plan seen), advances
the active sub-goal whenever the current observation is close enough to it,
and replans when the plan is exhausted or when the environment reports
completion of the current chain task (which also switches the condition to
the next task). The open loop advances sub-goals on a fixed step interval,
performs no distance checks, and regenerates only on exhaustion or task
advancement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..env.expert import scripted_expert
from ..env.render import Observation, render
from ..env.tasks import TaskChain, activate, reset, task_id, task_success
from ..env.world import WorldState, step
from ..nn import ContractViolation, RngStream, no_grad
from ..planner.sample import SubGoalPlan, ddim_sample
from ..policy.model import PolicyModel, cosine_distance, measure_error
from .log import EpisodeLog, StepRecord

# plan_source(obs, task_id, rng, generation_index) -> SubGoalPlan
PlanSource = Callable[[Observation, int, RngStream, int], SubGoalPlan]

PLAN_EXHAUSTED = "plan_exhausted"


@dataclass
class ExecutorConfig:
    step_limit: int = 360
    replan_threshold: float = 1.0  # max consecutive-frame distance a plan may show
    transition_threshold: float = 0.02  # advance when closer than this to the goal
    max_consecutive_replans: int = 5
    mode: str = "closed"  # closed | open
    open_interval: int = 5  # env steps per sub-goal in open-loop mode
    sample_steps: int | None = None  # None: planner config default
    guidance_w: float | None = None
    advance_on: str = "env_signal"  # env_signal | completion_score
    completion_threshold: float = 0.5

    def __post_init__(self):
        if self.step_limit <= 0:
            raise ContractViolation("step limit must be positive")
        if self.replan_threshold <= 0:
            raise ContractViolation("replan threshold must be positive")
        # 0 is allowed as a degenerate never-advance setting (mode-equivalence
        # checks rely on it); negative makes no sense for a distance.
        if self.transition_threshold < 0:
            raise ContractViolation("transition threshold must be >= 0")
        if self.transition_threshold >= self.replan_threshold:
            raise ContractViolation("transition threshold must be below the replan threshold")
        if self.mode not in ("closed", "open"):
            raise ContractViolation(f"unknown mode {self.mode!r}")
        if self.open_interval <= 0:
            raise ContractViolation("open interval must be positive")


def plan_goal_embeddings(model: PolicyModel, plan: SubGoalPlan) -> np.ndarray:
    with no_grad():
        return model.encode_batch(plan.frames, "goal").data


def max_consecutive_distance(goal_embeddings: np.ndarray) -> float:
    if goal_embeddings.shape[0] < 2:
        raise ContractViolation("need at least 2 plan frames")
    return max(
        cosine_distance(goal_embeddings[k], goal_embeddings[k + 1])
        for k in range(goal_embeddings.shape[0] - 1)
    )


def check_replan(plan: SubGoalPlan, encoder: PolicyModel, threshold: float) -> bool:
    """True when the plan looks unreachable: adjacent generated frames are too
    far apart in embedding space."""
    return max_consecutive_distance(plan_goal_embeddings(encoder, plan)) > threshold


def maybe_advance_subgoal(q_cur: np.ndarray, goal_embeddings: np.ndarray, i_sub: int,
                          threshold: float):
    """One transition check: advance by one when the current state is strictly
    closer than `threshold` to the active sub-goal (1-based index); returns
    PLAN_EXHAUSTED when that advance would step past the final frame."""
    K = goal_embeddings.shape[0]
    if not 1 <= i_sub <= K:
        raise ContractViolation(f"i_sub {i_sub} outside 1..{K}")
    d = cosine_distance(q_cur, goal_embeddings[i_sub - 1])
    if d < threshold:
        i_sub += 1
    return PLAN_EXHAUSTED if i_sub > K else i_sub


def _accept_plan(plan_source: PlanSource, policy: PolicyModel, obs: Observation, tid: int,
                 cfg: ExecutorConfig, rng: RngStream, gen_counter: list, log: EpisodeLog):
    """Generate until the consecutive-frame check passes or the retry budget is
    spent; fall back to the lowest-max-distance plan seen."""
    best = None
    best_d = float("inf")
    for _attempt in range(cfg.max_consecutive_replans + 1):
        plan = plan_source(obs, tid, rng, gen_counter[0])
        gen_counter[0] += 1
        emb = plan_goal_embeddings(policy, plan)
        d = max_consecutive_distance(emb)
        log.plan_generations.append(
            {"generation": plan.provenance.generation_index, "max_consec_dist": float(d), "task": int(tid)}
        )
        if d <= cfg.replan_threshold:
            return plan, emb
        if d < best_d:
            best, best_d = (plan, emb), d
        log.replan_count += 1
    return best


def _encode_current(policy: PolicyModel, obs: Observation) -> np.ndarray:
    with no_grad():
        return policy.encode_batch(obs.stacked()[None], "current").data[0]


def execute_episode(state: WorldState, obs: Observation, chain: TaskChain,
                    plan_source: PlanSource, policy: PolicyModel, cfg: ExecutorConfig,
                    rng: RngStream, scorer=None) -> EpisodeLog:
    """Run one chain episode in either mode; returns the full step log."""
    log = EpisodeLog(mode=cfg.mode, chain=[t.name for t in chain.tasks])
    task_idx = 0
    active = activate(chain.tasks[task_idx], state)
    tid = task_id(active.spec)
    gen_counter = [0]

    plan, goal_emb = _accept_plan(plan_source, policy, obs, tid, cfg, rng, gen_counter, log)
    i_sub = 1
    steps_since_transition = 0
    q_init = _encode_current(policy, obs)  # for completion-score advancement

    for t in range(cfg.step_limit):
        q_cur = _encode_current(policy, obs)

        need_replan = False
        if cfg.mode == "closed":
            advanced = maybe_advance_subgoal(q_cur, goal_emb, i_sub, cfg.transition_threshold)
            if advanced == PLAN_EXHAUSTED:
                need_replan = True
                i_sub = goal_emb.shape[0]  # act toward the final frame this step
            elif advanced != i_sub:
                log.transitions.append((t, i_sub, advanced))
                log.steps_per_subgoal.append(steps_since_transition)
                i_sub = advanced
                steps_since_transition = 0
        else:
            if steps_since_transition >= cfg.open_interval:
                i_sub += 1
                steps_since_transition = 0
                if i_sub > goal_emb.shape[0]:
                    need_replan = True
                    i_sub = goal_emb.shape[0]
                else:
                    log.transitions.append((t, i_sub - 1, i_sub))
                    log.steps_per_subgoal.append(cfg.open_interval)

        goal_vec = goal_emb[i_sub - 1]
        d_active = cosine_distance(q_cur, goal_vec)
        d_prev = cosine_distance(q_cur, goal_emb[max(0, i_sub - 2)]) if i_sub > 1 else float("nan")

        err = q_cur if policy.cfg.error_mode == "current_only" else measure_error(q_cur, goal_vec)
        action = policy.decode_action(err)
        state, events = step(state, action)
        obs = render(state)

        log.steps.append(
            StepRecord(
                t=t,
                task_index=task_idx,
                i_sub=i_sub,
                d_active=float(d_active),
                d_prev=float(d_prev),
                action=(action.dx, action.dy, action.gripper),
                replan=bool(need_replan),
                events=[e.kind for e in events],
            )
        )
        steps_since_transition += 1

        advanced_task = False
        if cfg.advance_on == "env_signal":
            advanced_task = task_success(state, active)
        else:
            q_now = _encode_current(policy, obs)
            score = scorer.score(q_init, q_now, tid)
            log.completion_scores.append((t, float(score)))
            advanced_task = score >= cfg.completion_threshold
        if advanced_task:
            log.task_done_steps.append(t)
            task_idx += 1
            if task_idx >= len(chain.tasks):
                break
            active = activate(chain.tasks[task_idx], state)
            tid = task_id(active.spec)
            need_replan = True
            q_init = _encode_current(policy, obs)

        if need_replan:
            plan, goal_emb = _accept_plan(plan_source, policy, obs, tid, cfg, rng, gen_counter, log)
            i_sub = 1
            steps_since_transition = 0

    log.tasks_completed = task_idx
    log.finalize()
    return log


def ddim_plan_source(planner, planner_ema: dict, cfg: ExecutorConfig) -> PlanSource:
    def source(obs: Observation, tid: int, rng: RngStream, gen_index: int) -> SubGoalPlan:
        with planner.params.swapped(planner_ema):
            return ddim_sample(
                planner,
                obs.stacked(),
                tid,
                rng.substream(f"plan/{gen_index}"),
                steps=cfg.sample_steps,
                guidance_w=cfg.guidance_w,
                generation_index=gen_index,
            )

    return source


def run_chain_episode(chain: TaskChain, seed_stream: RngStream, planner, planner_ema: dict,
                      policy: PolicyModel, cfg: ExecutorConfig, scorer=None) -> EpisodeLog:
    """Reset + execute, all randomness drawn from substreams of `seed_stream`."""
    state, obs = reset(chain, seed_stream)
    source = ddim_plan_source(planner, planner_ema, cfg)
    return execute_episode(state, obs, chain, source, policy, cfg, seed_stream.substream("exec"), scorer)


def run_oracle_episode(chain: TaskChain, seed_stream: RngStream, step_limit: int = 360) -> EpisodeLog:
    """Upper-bound reference: the scripted expert drives the chain directly
    (planner and policy bypassed). Measures env/chain feasibility."""
    state, obs = reset(chain, seed_stream)
    log = EpisodeLog(mode="oracle", chain=[t.name for t in chain.tasks])
    task_idx = 0
    active = activate(chain.tasks[task_idx], state)
    for t in range(step_limit):
        action = scripted_expert(state, active)
        state, events = step(state, action)
        log.steps.append(
            StepRecord(t=t, task_index=task_idx, i_sub=1, d_active=float("nan"), d_prev=float("nan"),
                       action=(action.dx, action.dy, action.gripper), replan=False,
                       events=[e.kind for e in events])
        )
        if task_success(state, active):
            log.task_done_steps.append(t)
            task_idx += 1
            if task_idx >= len(chain.tasks):
                break
            active = activate(chain.tasks[task_idx], state)
    log.tasks_completed = task_idx
    log.finalize()
    return log
