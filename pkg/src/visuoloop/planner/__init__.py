from .model import FRAME_CHANNELS, Denoiser, DiffusionConfig, to_model_space, to_obs_space
from .schedule import ddim_taus, min_snr_weight, noise_schedule, snr
from .flow import (
    MAX_DISPLACEMENT,
    FlowEstimator,
    FlowHead,
    flow_regularizer,
    train_flow_estimator,
    warp,
)
from .train import (
    PlannerData,
    TrainState,
    diffusion_train_step,
    draw_step_noise,
    init_train_state,
    planner_losses,
    train_planner,
)
from .sample import PlanProvenance, SubGoalPlan, ddim_sample
