from .model import (
    ACTION_SCALE,
    PolicyConfig,
    PolicyModel,
    StateEmbedding,
    cosine_distance,
    measure_error,
)
from .train import PairData, load_policy, policy_losses, sample_intervals, train_policy
from .value import CompletionScorer, encode_episode_frames, infonce_loss, train_completion_scorer
