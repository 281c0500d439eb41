from .world import (
    ACTION_BOUND,
    DEFAULT_LAYOUT,
    GRASP_RADIUS,
    GRID,
    PUSH_DISTANCE,
    Action,
    Event,
    Layout,
    LayoutError,
    WorldState,
    Zone,
    step,
    switch_handle_pos,
)
from .render import Observation, depth_from_occupancy, obs_from_stacked, occupancy_mask, render
from .tasks import (
    CHAIN_LENGTH,
    NULL_TASK_ID,
    NUM_TASKS,
    VOCAB,
    ActiveTask,
    TaskChain,
    TaskSpec,
    activate,
    reset,
    sample_chain,
    task_id,
    task_success,
)
from .expert import ExpertError, scripted_expert
from .dataset import (
    Dataset,
    Episode,
    generate_dataset,
    load_dataset,
    rollout_expert,
    write_dataset,
)
