"""Inverse-dynamics training on expert pairs.

Each sample is (O_t, O_{t+delta}, a_t) with delta uniform on {1..k_max}; the
label is the first action of the interval. Position deltas are supervised
with MSE, the gripper with BCE on the logit against hard 0/1 labels, summed
with unit weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..env.dataset import Dataset
from ..nn import AdamW, NumericFault, RngStream, Tensor, save_checkpoint, sigmoid, softplus, tanh
from .model import ACTION_SCALE, PolicyConfig, PolicyModel, measure_error


def sample_intervals(rng: RngStream, n: int, k_max: int) -> np.ndarray:
    """Delta ~ Uniform{1..k_max}."""
    return rng.integers(1, k_max + 1, n)


class PairData:
    """Flat index over every (episode, t) action step in the dataset."""

    def __init__(self, dataset: Dataset):
        self.frames = [ep.frames for ep in dataset.episodes]
        self.index = [
            (e, t) for e, ep in enumerate(dataset.episodes) for t in range(ep.actions.shape[0])
        ]
        self.actions = [ep.actions for ep in dataset.episodes]

    def __len__(self) -> int:
        return len(self.index)

    def gather(self, flat_ids: np.ndarray, deltas: np.ndarray):
        cur, goal, labels = [], [], []
        for fid, delta in zip(flat_ids, deltas):
            e, t = self.index[int(fid)]
            frames = self.frames[e]
            goal_t = min(t + int(delta), frames.shape[0] - 1)
            cur.append(frames[t])
            goal.append(frames[goal_t])
            labels.append(self.actions[e][t])
        return np.stack(cur), np.stack(goal), np.asarray(labels, dtype=np.float32)


def policy_losses(model: PolicyModel, obs_cur: np.ndarray, obs_goal: np.ndarray,
                  labels: np.ndarray):
    """Returns (total Tensor, mse float, bce float).

    The position MSE lives in the head's normalized units (tanh range, i.e.
    deltas divided by the action bound) so that unit 1:1 weighting against the
    BCE term is meaningful; raw deltas of at most 0.05 would vanish next to it.
    """
    q_cur = model.encode_batch(obs_cur, "current")
    if model.cfg.error_mode == "current_only":
        err = q_cur  # behavior-cloning ablation: no goal, no subtraction
    else:
        q_goal = model.encode_batch(obs_goal, "goal")
        err = q_goal - q_cur
    raw = model.decoder_head(err)
    deltas_norm = tanh(raw[:, :2])
    diff = deltas_norm - Tensor(labels[:, :2] / ACTION_SCALE)
    mse = (diff * diff).mean()
    logits = raw[:, 2]
    hard = (labels[:, 2] > 0.5).astype(np.float32)
    bce = (softplus(logits) - logits * Tensor(hard)).mean()
    total = mse + bce
    return total, float(mse.item()), float(bce.item())


@dataclass
class PolicyTrainResult:
    model: PolicyModel
    log_rows: list


def train_policy(dataset: Dataset, cfg: PolicyConfig, out_dir: str | Path | None = None) -> PolicyTrainResult:
    """Epoch-based training over all pairs; deterministic for fixed inputs.

    The learning rate follows a cosine decay to 10% of its initial value; a
    fixed rate at the size needed for fast early progress destabilizes the
    encoder late in training.
    """
    import math

    rng = RngStream(cfg.seed)
    model = PolicyModel(cfg, rng.substream("model"))
    opt = AdamW(model.params, lr=cfg.lr)
    data = PairData(dataset)
    n = len(data)
    steps_per_epoch = max(1, (n - cfg.batch + 1 + cfg.batch - 1) // cfg.batch)
    total_steps = max(1, cfg.epochs * steps_per_epoch)
    rows = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.substream(f"epoch/{epoch}").permutation(n)
        for lo in range(0, n - cfg.batch + 1, cfg.batch):
            ids = order[lo : lo + cfg.batch]
            deltas = sample_intervals(rng.substream(f"delta/{step}"), len(ids), cfg.k_max)
            obs_cur, obs_goal, labels = data.gather(ids, deltas)
            total, mse, bce = policy_losses(model, obs_cur, obs_goal, labels)
            if not np.isfinite(total.item()):
                raise NumericFault(f"non-finite policy loss at step {step}: mse={mse} bce={bce}")
            model.params.zero_grad()
            total.backward()
            opt.lr = cfg.lr * (0.1 + 0.45 * (1.0 + math.cos(math.pi * step / total_steps)))
            opt.step()
            rows.append((step, epoch, mse, bce, mse + bce))
            step += 1
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out_dir / "policy.clvr", model.params.arrays())
        with open(out_dir / "train_log.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "epoch", "mse_pos", "bce_grip", "total"])
            for r in rows:
                w.writerow([r[0], r[1], f"{r[2]:.6f}", f"{r[3]:.6f}", f"{r[4]:.6f}"])
    return PolicyTrainResult(model=model, log_rows=rows)


def load_policy(cfg: PolicyConfig, checkpoint: str | Path) -> PolicyModel:
    from ..nn import load_checkpoint

    model = PolicyModel(cfg, RngStream(cfg.seed).substream("model"))
    model.params.load(load_checkpoint(checkpoint))
    return model
