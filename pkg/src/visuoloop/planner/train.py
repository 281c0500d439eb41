"""Planner training: noise-prediction loss with min-SNR weighting plus the
flow-consistency regularizer, AdamW without weight decay, and an EMA shadow."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..env.dataset import Dataset
from ..env.tasks import NUM_TASKS
from ..nn import AdamW, EmaState, NumericFault, RngStream, Tensor, save_checkpoint
from .flow import FlowHead, flow_regularizer
from .model import FRAME_CHANNELS, Denoiser, DiffusionConfig, to_model_space
from .schedule import min_snr_weight, noise_schedule


class PlannerData:
    """Strided (planner-view) frame sequences with clamped window sampling."""

    def __init__(self, dataset: Dataset, stride: int | None = None):
        stride = stride or dataset.frame_stride
        self.stride = stride
        self.sequences = [ep.planner_frames(stride) for ep in dataset.episodes]
        self.task_ids = [ep.task for ep in dataset.episodes]

    def sample_batch(self, batch: int, k_frames: int, rng: RngStream):
        """Returns (cond O_0, targets O_{1:K}, task ids); windows past the end
        of an episode repeat the final (task-complete, static) frame."""
        n = len(self.sequences)
        eps_idx = rng.integers(0, n, batch)
        conds, targets, tasks = [], [], []
        for ei in eps_idx:
            seq = self.sequences[int(ei)]
            last = seq.shape[0] - 1
            s = int(rng.integers(0, max(1, last)))
            idx = np.minimum(s + 1 + np.arange(k_frames), last)
            conds.append(seq[s])
            targets.append(seq[idx])
            tasks.append(self.task_ids[int(ei)])
        return (
            np.stack(conds).astype(np.float32),
            np.stack(targets).astype(np.float32),
            np.asarray(tasks, dtype=np.int64),
        )


@dataclass
class TrainState:
    model: Denoiser
    flow_head: FlowHead
    opt: AdamW
    flow_opt: AdamW
    ema: EmaState
    betas: np.ndarray
    alpha_bars: np.ndarray
    snr_weights: np.ndarray
    step: int = 0


def init_train_state(cfg: DiffusionConfig, n_tasks: int) -> TrainState:
    rng = RngStream(cfg.seed)
    model = Denoiser(cfg, n_tasks, rng.substream("model"))
    flow_head = FlowHead(cfg.embed_dim, FRAME_CHANNELS, cfg.grid, cfg.patch, rng.substream("flow"))
    betas, alpha_bars = noise_schedule(cfg.t_diff, cfg.beta_start, cfg.beta_end)
    return TrainState(
        model=model,
        flow_head=flow_head,
        opt=AdamW(model.params, lr=cfg.lr, weight_decay=0.0),
        flow_opt=AdamW(flow_head.params, lr=cfg.lr),
        ema=EmaState(model.params, decay=cfg.ema_decay),
        betas=betas,
        alpha_bars=alpha_bars,
        snr_weights=min_snr_weight(alpha_bars, cfg.min_snr_gamma).astype(np.float32),
    )


def draw_step_noise(cfg: DiffusionConfig, batch_size: int, rng: RngStream):
    """Per-sample diffusion step, injected noise, and condition-drop mask."""
    t_idx = rng.substream("t").integers(0, cfg.t_diff, batch_size)
    shape = (batch_size, cfg.k_frames, FRAME_CHANNELS, cfg.grid, cfg.grid)
    eps = rng.substream("eps").normal(shape)
    drop_mask = rng.substream("drop").uniform(0, 1, batch_size) < cfg.cond_drop
    return t_idx, eps, drop_mask


def planner_losses(model, flow_head, batch, cfg: DiffusionConfig, alpha_bars: np.ndarray,
                   snr_weights: np.ndarray, t_idx: np.ndarray, eps: np.ndarray,
                   drop_mask: np.ndarray):
    """Weighted noise-prediction loss plus the flow regularizer.

    Returns (total Tensor, l_diff float, l_reg float). `model` only needs a
    Denoiser-compatible forward(x_t, cond, t, task, want_latent=True).
    """
    cond_obs, target_obs, task_ids = batch
    x0 = to_model_space(target_obs)
    cond = to_model_space(cond_obs)
    ab = alpha_bars[t_idx].astype(np.float32)[:, None, None, None, None]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

    dropped = np.asarray(task_ids).copy()
    dropped[drop_mask] = model.null_task

    eps_hat, mid = model.forward(x_t, cond, t_idx, dropped, want_latent=True)
    err = eps_hat - Tensor(eps)
    per_sample = (err * err).mean(axis=(1, 2, 3, 4))
    l_diff = (per_sample * snr_weights[t_idx]).mean()

    if cfg.lambda_reg > 0 and cfg.k_frames >= 2:
        flows = flow_head.estimate(mid[:, :-1], mid[:, 1:], target_obs[:, :-1])
        l_reg = flow_regularizer(Tensor(target_obs), flows, cfg.l_reg_norm)
        total = l_diff + l_reg * cfg.lambda_reg
        l_reg_val = float(l_reg.item())
    else:
        total = l_diff
        l_reg_val = 0.0
    return total, float(l_diff.item()), l_reg_val


def diffusion_train_step(state: TrainState, batch, cfg: DiffusionConfig, rng: RngStream) -> dict:
    """One optimization step; returns the loss terms as floats."""
    t_idx, eps, drop_mask = draw_step_noise(cfg, batch[0].shape[0], rng)
    total, l_diff, l_reg = planner_losses(
        state.model, state.flow_head, batch, cfg, state.alpha_bars, state.snr_weights,
        t_idx, eps, drop_mask,
    )
    if not np.isfinite(total.item()):
        raise NumericFault(
            f"non-finite planner loss at step {state.step}: "
            f"l_diff={l_diff} l_reg={l_reg} t={t_idx.tolist()}"
        )
    state.model.params.zero_grad()
    state.flow_head.params.zero_grad()
    total.backward()
    state.opt.step()
    if cfg.lambda_reg > 0 and cfg.k_frames >= 2:
        state.flow_opt.step()
    state.ema.update(state.model.params)
    state.step += 1
    return {"l_diff": l_diff, "l_reg": l_reg, "total": float(total.item())}


def train_planner(dataset: Dataset, cfg: DiffusionConfig, out_dir: str | Path,
                  log_every: int = 50, snapshot_steps: tuple[int, ...] = ()) -> Path:
    """Full training run. Writes model/EMA checkpoints plus a CSV loss log;
    returns the out_dir. Deterministic for a fixed (dataset, config)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = PlannerData(dataset)
    state = init_train_state(cfg, n_tasks=NUM_TASKS)
    rng = RngStream(cfg.seed).substream("train")
    rows = []
    for it in range(cfg.iters):
        batch = data.sample_batch(cfg.batch, cfg.k_frames, rng.substream(it))
        losses = diffusion_train_step(state, batch, cfg, rng.substream(f"step/{it}"))
        rows.append((it, losses["l_diff"], losses["l_reg"], losses["total"]))
        if (it + 1) in snapshot_steps:
            save_checkpoint(out_dir / f"model_step{it + 1}.clvr", state.model.params.arrays())
            save_checkpoint(out_dir / f"ema_step{it + 1}.clvr", state.ema.arrays())
    save_checkpoint(out_dir / "model.clvr", state.model.params.arrays())
    save_checkpoint(out_dir / "ema.clvr", state.ema.arrays())
    with open(out_dir / "train_log.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "l_diff", "l_reg", "total"])
        for r in rows:
            w.writerow([r[0], f"{r[1]:.6f}", f"{r[2]:.6f}", f"{r[3]:.6f}"])
    return out_dir
