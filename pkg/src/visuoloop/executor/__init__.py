from .log import EpisodeLog, StepRecord
from .loop import (
    PLAN_EXHAUSTED,
    ExecutorConfig,
    check_replan,
    ddim_plan_source,
    execute_episode,
    max_consecutive_distance,
    maybe_advance_subgoal,
    plan_goal_embeddings,
    run_chain_episode,
    run_oracle_episode,
)
