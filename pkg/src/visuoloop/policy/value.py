"""Task-completion value from state-embedding deltas.

A frozen random per-task code (the analog of a fixed text embedding) is
mapped by a small trained projector into the state-delta space. Training is
InfoNCE: the positive for an episode is (q_final - q_init), negatives are
(q_mid - q_init) for randomly sampled intermediate frames. The policy encoder
stays frozen; only the projector learns. A high cosine similarity between the
projected task code and (q_cur - q_init) reads as "task nearly complete".
"""

from __future__ import annotations

import numpy as np

from ..env.dataset import Dataset
from ..nn import AdamW, ContractViolation, Params, RngStream, Tensor, exp, log, no_grad, xavier_uniform
from .model import PolicyModel

TASK_CODE_DIM = 32
TEMPERATURE = 0.1


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(n, 1e-12)


class CompletionScorer:
    def __init__(self, n_tasks: int, embed_dim: int, seed: int = 0):
        self.n_tasks = n_tasks
        self.embed_dim = embed_dim
        rng = RngStream(seed).substream("scorer")
        # Frozen task codes; only the projector below is trained.
        self.task_codes = _normalize_rows(rng.substream("codes").normal((n_tasks, TASK_CODE_DIM)))
        p = Params()
        p.add("proj.w", xavier_uniform(rng.substream("proj"), TASK_CODE_DIM, embed_dim))
        p.add("proj.b", np.zeros(embed_dim, np.float32))
        self.params = p
        self.trained = False

    def project(self, task: int) -> np.ndarray:
        with no_grad():
            code = Tensor(self.task_codes[task][None])
            z = (code @ self.params["proj.w"]) + self.params["proj.b"]
        return z.data[0]

    def score(self, q_init: np.ndarray, q_cur: np.ndarray, task: int) -> float:
        """Cosine similarity between the projected task code and the state
        delta; the zero delta scores 0 by convention."""
        if not self.trained:
            raise ContractViolation("completion scorer is untrained; fit or load it first")
        delta = np.asarray(q_cur, np.float64) - np.asarray(q_init, np.float64)
        nd = float(np.linalg.norm(delta))
        if nd < 1e-10:
            return 0.0
        z = self.project(task).astype(np.float64)
        return float(np.dot(z, delta) / (np.linalg.norm(z) * nd))

    def arrays(self) -> dict:
        return self.params.arrays()

    def load(self, arrays: dict) -> None:
        self.params.load(arrays)
        self.trained = True


def encode_episode_frames(model: PolicyModel, frames: np.ndarray, batch: int = 256) -> np.ndarray:
    """Frozen-encoder current-query embeddings for every frame."""
    out = []
    with no_grad():
        for lo in range(0, frames.shape[0], batch):
            out.append(model.encode_batch(frames[lo : lo + batch], "current").data)
    return np.concatenate(out, axis=0)


def infonce_loss(scorer: CompletionScorer, task_ids, positives, negatives):
    """positives: (B, d) deltas; negatives: (B, N, d) deltas; frozen anchors."""
    from ..nn import pow_const

    B, N, d = negatives.shape
    z = Tensor(scorer.task_codes[np.asarray(task_ids)]) @ scorer.params["proj.w"] + scorer.params["proj.b"]
    zn = z * pow_const((z * z).sum(axis=1, keepdims=True) + 1e-12, -0.5)
    pos = Tensor(_normalize_rows(positives).astype(np.float32))
    neg = Tensor(_normalize_rows(negatives).astype(np.float32))
    sim_pos = (zn * pos).sum(axis=1) * (1.0 / TEMPERATURE)  # (B,)
    sim_neg = (neg @ zn.reshape((B, d, 1))).reshape((B, N)) * (1.0 / TEMPERATURE)
    # -log softmax over [pos | negs], numerically direct at this scale
    e_pos = exp(sim_pos)
    denom = e_pos + exp(sim_neg).sum(axis=1)
    return (log(denom) - sim_pos).mean()


def train_completion_scorer(scorer: CompletionScorer, model: PolicyModel, dataset: Dataset,
                            rng: RngStream, iters: int = 400, batch: int = 32,
                            n_negatives: int = 8, lr: float = 1e-2) -> list[float]:
    """Fit the projector on frozen embeddings of the demonstration episodes."""
    embeds = [encode_episode_frames(model, ep.frames) for ep in dataset.episodes]
    tasks = [ep.task for ep in dataset.episodes]
    usable = [i for i, e in enumerate(embeds) if e.shape[0] >= n_negatives + 2]
    opt = AdamW(scorer.params, lr=lr)
    losses = []
    for it in range(iters):
        r = rng.substream(it)
        pick = r.integers(0, len(usable), batch)
        task_ids, pos, neg = [], [], []
        for j, pi in enumerate(pick):
            e = embeds[usable[int(pi)]]
            task_ids.append(tasks[usable[int(pi)]])
            q_init, q_final = e[0], e[-1]
            pos.append(q_final - q_init)
            mids = r.substream(j).integers(1, e.shape[0] - 1, n_negatives)
            neg.append(e[mids] - q_init)
        loss = infonce_loss(scorer, np.asarray(task_ids), np.stack(pos), np.stack(neg))
        scorer.params.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.item()))
    scorer.trained = True
    return losses
