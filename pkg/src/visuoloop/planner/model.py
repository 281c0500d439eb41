"""Conditional denoiser over K-frame observation clips.

Per-frame patch tokens are embedded jointly with the (channel-concatenated)
condition frame, modulated by noise-level and task embeddings through gated
shifts, mixed spatially with attention inside each frame and temporally with
causal attention across the K frames, and decoded back to a per-frame noise
prediction. The mid-depth token map is exposed for the flow head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn import (
    ContractViolation,
    Params,
    RngStream,
    Tensor,
    attention,
    causal_mask,
    embedding,
    layer_norm,
    linear,
    patchify,
    reshape,
    silu,
    transpose,
    unpatchify,
    xavier_uniform,
)

FRAME_CHANNELS = 4  # 3 appearance + 1 depth


@dataclass
class DiffusionConfig:
    k_frames: int = 8
    t_diff: int = 500
    beta_start: float = 1e-4
    beta_end: float = 0.02
    guidance_w: float = 4.0
    sample_steps: int = 20
    cond_drop: float = 0.1
    lambda_reg: float = 0.1
    min_snr_gamma: float = 5.0
    l_reg_norm: str = "l1"
    grid: int = 16
    patch: int = 4
    embed_dim: int = 64
    blocks: int = 2
    heads: int = 4
    lr: float = 1e-4
    batch: int = 16
    iters: int = 4000
    ema_decay: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.k_frames < 1:
            raise ContractViolation("k_frames must be >= 1")
        if self.guidance_w < 0:
            raise ContractViolation("guidance weight must be >= 0")
        if self.lambda_reg < 0:
            raise ContractViolation("lambda_reg must be >= 0")


def sinusoidal_table(n_steps: int, dim: int) -> np.ndarray:
    pos = np.arange(n_steps)[:, None].astype(np.float64)
    freqs = np.exp(-np.log(10000.0) * np.arange(dim // 2) / max(1, dim // 2 - 1))
    ang = pos * freqs[None]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(np.float32)


class Denoiser:
    def __init__(self, cfg: DiffusionConfig, n_tasks: int, rng: RngStream):
        self.cfg = cfg
        self.n_tasks = n_tasks
        self.null_task = n_tasks  # last embedding row is the unconditional id
        d = cfg.embed_dim
        grid, patch = cfg.grid, cfg.patch
        self.tokens_per_frame = (grid // patch) ** 2
        tok_in = 2 * FRAME_CHANNELS * patch * patch  # noised frame + condition frame
        self.t_table = sinusoidal_table(cfg.t_diff, d)
        self.temporal_mask = causal_mask(cfg.k_frames)

        p = Params()
        r = rng.substream("init")
        p.add("in.w", xavier_uniform(r.substream("in"), tok_in, d))
        p.add("in.b", np.zeros(d, np.float32))
        p.add("pos", r.substream("pos").normal((self.tokens_per_frame, d)) * 0.02)
        p.add("frame_pos", r.substream("fpos").normal((cfg.k_frames, 1, d)) * 0.02)
        p.add("task.table", r.substream("task").normal((n_tasks + 1, d)) * 0.02)
        p.add("t.w1", xavier_uniform(r.substream("t1"), d, d))
        p.add("t.b1", np.zeros(d, np.float32))
        p.add("t.w2", xavier_uniform(r.substream("t2"), d, d))
        p.add("t.b2", np.zeros(d, np.float32))
        for b in range(cfg.blocks):
            rb = r.substream(f"block{b}")
            p.add(f"b{b}.film.w", np.zeros((d, 2 * d), np.float32))
            p.add(f"b{b}.film.b", np.zeros(2 * d, np.float32))
            for nm in ("q", "k", "v", "o"):
                p.add(f"b{b}.sp.{nm}", xavier_uniform(rb.substream(f"sp{nm}"), d, d))
            for nm in ("q", "k", "v", "o"):
                p.add(f"b{b}.tm.{nm}", xavier_uniform(rb.substream(f"tm{nm}"), d, d))
            p.add(f"b{b}.mlp.w1", xavier_uniform(rb.substream("m1"), d, 4 * d))
            p.add(f"b{b}.mlp.b1", np.zeros(4 * d, np.float32))
            p.add(f"b{b}.mlp.w2", xavier_uniform(rb.substream("m2"), 4 * d, d))
            p.add(f"b{b}.mlp.b2", np.zeros(d, np.float32))
        p.add("out.w", np.zeros((d, FRAME_CHANNELS * patch * patch), np.float32))
        p.add("out.b", np.zeros(FRAME_CHANNELS * patch * patch, np.float32))
        self.params = p

    def forward(self, x_t: np.ndarray, cond_frame: np.ndarray, t_idx: np.ndarray,
                task_ids: np.ndarray, want_latent: bool = False):
        """Predict the injected noise.

        x_t: (B, K, C, H, W) noised clip in model space; cond_frame: (B, C, H, W);
        t_idx, task_ids: (B,) ints. Returns eps_hat (and the mid token map when
        want_latent, for the flow head).
        """
        cfg = self.cfg
        p = self.params
        B, K = x_t.shape[0], x_t.shape[1]
        if K != cfg.k_frames:
            raise ContractViolation(f"expected {cfg.k_frames} frames, got {K}")
        cond = np.broadcast_to(cond_frame[:, None], x_t.shape)
        inp = Tensor(np.ascontiguousarray(np.concatenate([x_t, cond], axis=2), dtype=np.float32))

        h = linear(patchify(inp, cfg.patch), p["in.w"], p["in.b"])
        h = h + p["pos"] + p["frame_pos"]

        t_emb = Tensor(self.t_table[np.asarray(t_idx, dtype=np.int64)])
        t_emb = linear(silu(linear(t_emb, p["t.w1"], p["t.b1"])), p["t.w2"], p["t.b2"])
        task_emb = embedding(p["task.table"], np.asarray(task_ids, dtype=np.int64))
        cond_vec = t_emb + task_emb  # (B, d)

        mid_latent = None
        for b in range(cfg.blocks):
            film = linear(cond_vec, p[f"b{b}.film.w"], p[f"b{b}.film.b"])
            scale = reshape(film[:, : cfg.embed_dim], (B, 1, 1, cfg.embed_dim))
            shift = reshape(film[:, cfg.embed_dim :], (B, 1, 1, cfg.embed_dim))
            h = h * (scale + 1.0) + shift

            hn = layer_norm(h)
            q = linear(hn, p[f"b{b}.sp.q"])
            k = linear(hn, p[f"b{b}.sp.k"])
            v = linear(hn, p[f"b{b}.sp.v"])
            h = h + linear(attention(q, k, v, cfg.heads), p[f"b{b}.sp.o"])

            hn = layer_norm(h)
            ht = transpose(hn, (0, 2, 1, 3))  # (B, L, K, d): attend across frames
            q = linear(ht, p[f"b{b}.tm.q"])
            k = linear(ht, p[f"b{b}.tm.k"])
            v = linear(ht, p[f"b{b}.tm.v"])
            tm = transpose(attention(q, k, v, cfg.heads, mask=self.temporal_mask), (0, 2, 1, 3))
            h = h + linear(tm, p[f"b{b}.tm.o"])

            hn = layer_norm(h)
            h = h + linear(silu(linear(hn, p[f"b{b}.mlp.w1"], p[f"b{b}.mlp.b1"])), p[f"b{b}.mlp.w2"], p[f"b{b}.mlp.b2"])
            if b == 0:
                mid_latent = h

        out = linear(layer_norm(h), p["out.w"], p["out.b"])
        eps_hat = unpatchify(out, FRAME_CHANNELS, cfg.grid, cfg.grid, cfg.patch)
        if want_latent:
            return eps_hat, mid_latent
        return eps_hat


def to_model_space(obs: np.ndarray) -> np.ndarray:
    return (obs.astype(np.float32) * 2.0 - 1.0).astype(np.float32)


def to_obs_space(x: np.ndarray) -> np.ndarray:
    return np.clip((x + 1.0) * 0.5, 0.0, 1.0).astype(np.float32)
