"""Deterministic DDIM sampling with classifier-free guidance.

Sampling is a pure function of (weights, condition frame, task id, seed,
steps): eta = 0, the conditional and unconditional branches run as one
batched forward, and the guided noise is eps_null + w * (eps_cond - eps_null).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import ContractViolation, RngStream, no_grad
from .model import FRAME_CHANNELS, Denoiser, DiffusionConfig, to_model_space, to_obs_space
from .schedule import ddim_taus, noise_schedule


@dataclass(frozen=True)
class PlanProvenance:
    seed: int
    guidance_w: float
    sample_steps: int
    generation_index: int = 0


@dataclass
class SubGoalPlan:
    frames: np.ndarray  # (K, 4, H, W) float32 in [0,1]
    provenance: PlanProvenance

    def __post_init__(self):
        if self.frames.ndim != 4:
            raise ContractViolation(f"plan frames must be (K, C, H, W), got {self.frames.shape}")


def ddim_sample(model: Denoiser, cond_obs: np.ndarray, task: int, rng: RngStream,
                steps: int | None = None, guidance_w: float | None = None,
                generation_index: int = 0,
                alpha_bars: np.ndarray | None = None) -> SubGoalPlan:
    """Generate a K-frame sub-goal plan from the current observation.

    cond_obs: (4, H, W) observation in [0,1]. Pass EMA weights by wrapping the
    call in `model.params.swapped(ema_arrays)`.
    """
    cfg = model.cfg
    w = cfg.guidance_w if guidance_w is None else float(guidance_w)
    if w < 0:
        raise ContractViolation(f"guidance weight must be >= 0, got {w}")
    steps = cfg.sample_steps if steps is None else int(steps)
    if alpha_bars is None:
        _, alpha_bars = noise_schedule(cfg.t_diff, cfg.beta_start, cfg.beta_end)
    taus = ddim_taus(cfg.t_diff, steps)[::-1]  # descending

    K = cfg.k_frames
    shape = (1, K, FRAME_CHANNELS, cfg.grid, cfg.grid)
    x = rng.normal(shape)
    cond = np.broadcast_to(to_model_space(cond_obs)[None], (2, *cond_obs.shape))
    task_pair = np.array([task, model.null_task], dtype=np.int64)

    with no_grad():
        for i, t in enumerate(taus):
            ab_t = float(alpha_bars[t])
            ab_prev = float(alpha_bars[taus[i + 1]]) if i + 1 < len(taus) else 1.0
            x_pair = np.broadcast_to(x, (2, *shape[1:]))
            t_pair = np.full(2, t, dtype=np.int64)
            eps_both = model.forward(x_pair, cond, t_pair, task_pair).data
            eps_c, eps_n = eps_both[0], eps_both[1]
            eps_hat = eps_n + w * (eps_c - eps_n)
            x0 = (x[0] - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
            x0 = np.clip(x0, -1.0, 1.0)
            x = (np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps_hat)[None].astype(np.float32)

    frames = to_obs_space(x[0])
    return SubGoalPlan(
        frames=frames,
        provenance=PlanProvenance(seed=rng.seed, guidance_w=w, sample_steps=steps,
                                  generation_index=generation_index),
    )
