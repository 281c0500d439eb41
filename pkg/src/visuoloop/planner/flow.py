"""Differentiable backward warping, the motion-consistency regularizer, and
displacement (flow) heads.

Flow convention: a field F = (u, v) in cell units moves image content by +u
columns and +v rows, i.e. warp(frame, F)[y, x] bilinearly samples
frame[y - v, x - u] with border clamping. warp is differentiable w.r.t. both
the frame and the flow (through the bilinear weights).
"""

from __future__ import annotations

import numpy as np

from ..nn import (
    ContractViolation,
    Params,
    RngStream,
    Tensor,
    absolute,
    attention,
    clip_passthrough,
    concat,
    floor_stopgrad,
    gather_last,
    linear,
    no_grad,
    patchify,
    reshape,
    silu,
    tanh,
    unpatchify,
    xavier_uniform,
)

MAX_DISPLACEMENT = 8.0  # tanh output scale, half the grid; sanity bound on |u|,|v|


def warp(frame: Tensor, flow: Tensor) -> Tensor:
    """Backward-warp (..., C, H, W) by (..., 2, H, W); out-of-range samples clamp."""
    if not isinstance(frame, Tensor):
        frame = Tensor(frame)
    if not isinstance(flow, Tensor):
        flow = Tensor(flow)
    *lead, C, H, W = frame.shape
    if tuple(flow.shape) != (*lead, 2, H, W):
        raise ContractViolation(f"flow shape {flow.shape} does not match frame {frame.shape}")
    gx = np.broadcast_to(np.arange(W, dtype=frame.data.dtype), (H, W))
    gy = np.broadcast_to(np.arange(H, dtype=frame.data.dtype)[:, None], (H, W))

    u = flow[..., 0, :, :]
    v = flow[..., 1, :, :]
    sx = clip_passthrough(u * -1.0 + gx, 0.0, W - 1.0)
    sy = clip_passthrough(v * -1.0 + gy, 0.0, H - 1.0)
    x0 = floor_stopgrad(sx)
    y0 = floor_stopgrad(sy)
    fx = sx - x0
    fy = sy - y0

    ix0 = x0.data.astype(np.int64)
    iy0 = y0.data.astype(np.int64)
    ix1 = np.minimum(ix0 + 1, W - 1)
    iy1 = np.minimum(iy0 + 1, H - 1)

    n_lead = int(np.prod(lead)) if lead else 1
    frame2d = reshape(frame, (n_lead * C, H * W))

    def corner(iy, ix):
        idx = (iy * W + ix).reshape(n_lead, 1, H * W)
        idx = np.broadcast_to(idx, (n_lead, C, H * W)).reshape(n_lead * C, H * W)
        g = gather_last(frame2d, np.ascontiguousarray(idx))
        return reshape(g, (*lead, C, H, W))

    # Bilinear weights broadcast over channels via a singleton axis.
    def wgt(t: Tensor) -> Tensor:
        return reshape(t, (*lead, 1, H, W))

    one = 1.0
    w00 = wgt((one - fx) * (one - fy))
    w01 = wgt(fx * (one - fy))
    w10 = wgt((one - fx) * fy)
    w11 = wgt(fx * fy)
    out = corner(iy0, ix0) * w00 + corner(iy0, ix1) * w01 + corner(iy1, ix0) * w10 + corner(iy1, ix1) * w11
    return out


def flow_regularizer(true_frames: Tensor, flows: Tensor, norm: str = "l1") -> Tensor:
    """Mean warp residual between consecutive frames under the predicted flow.

    true_frames: (B, K, C, H, W) with K >= 2; flows: (B, K-1, 2, H, W).
    """
    if not isinstance(true_frames, Tensor):
        true_frames = Tensor(true_frames)
    K = true_frames.shape[1]
    if K < 2:
        raise ContractViolation("flow regularizer needs K >= 2 frames")
    if flows.shape[1] != K - 1:
        raise ContractViolation(f"expected {K - 1} flow fields, got {flows.shape[1]}")
    warped = warp(true_frames[:, :-1], flows)
    res = true_frames[:, 1:] - warped
    if norm == "l1":
        return absolute(res).mean()
    if norm == "l2":
        return (res * res).mean()
    raise ContractViolation(f"unknown norm {norm!r}")


class FlowHead:
    """Single-shot displacement head over denoiser latents plus a context
    encoding of the earlier true frame. Used only while training the planner."""

    def __init__(self, latent_dim: int, frame_channels: int, grid: int, patch: int,
                 rng: RngStream, hidden: int = 128, heads: int = 4):
        self.d = latent_dim
        self.grid = grid
        self.patch = patch
        self.heads = heads
        self.frame_channels = frame_channels
        p = Params()
        ctx_in = frame_channels * patch * patch
        p.add("ctx.w", xavier_uniform(rng.substream("ctx"), ctx_in, latent_dim))
        p.add("ctx.b", np.zeros(latent_dim, np.float32))
        d = latent_dim
        p.add("proj.w", xavier_uniform(rng.substream("proj"), 3 * d, d))
        p.add("proj.b", np.zeros(d, np.float32))
        for nm in ("q", "k", "v", "o"):
            p.add(f"attn.{nm}", xavier_uniform(rng.substream(f"attn{nm}"), d, d))
        p.add("mlp.w1", xavier_uniform(rng.substream("w1"), d, hidden))
        p.add("mlp.b1", np.zeros(hidden, np.float32))
        out_dim = 2 * patch * patch
        p.add("mlp.w2", np.zeros((hidden, out_dim), np.float32))  # zero-init: zero field at start
        p.add("mlp.b2", np.zeros(out_dim, np.float32))
        self.params = p

    def estimate(self, lat_k: Tensor, lat_k1: Tensor, frames_k) -> Tensor:
        """(B, P, L, D) latent pairs + (B, P, C, H, W) context frames -> (B, P, 2, H, W)."""
        if lat_k.shape != lat_k1.shape:
            raise ContractViolation(f"latent shapes differ: {lat_k.shape} vs {lat_k1.shape}")
        p = self.params
        if not isinstance(frames_k, Tensor):
            frames_k = Tensor(np.asarray(frames_k, dtype=np.float32))
        ctx = linear(patchify(frames_k, self.patch), p["ctx.w"], p["ctx.b"])
        h = linear(concat([lat_k, lat_k1, ctx], axis=-1), p["proj.w"], p["proj.b"])
        q = linear(h, p["attn.q"])
        k = linear(h, p["attn.k"])
        v = linear(h, p["attn.v"])
        h = h + linear(attention(q, k, v, self.heads), p["attn.o"])
        h = silu(linear(h, p["mlp.w1"], p["mlp.b1"]))
        out = tanh(linear(h, p["mlp.w2"], p["mlp.b2"])) * MAX_DISPLACEMENT
        return unpatchify(out, 2, self.grid, self.grid, self.patch)


class FlowEstimator:
    """Standalone frame-pair flow network, trained on synthetic translations.

    Independent of the planner: used as the measurement instrument when
    comparing the warp residual of generated plans.
    """

    def __init__(self, frame_channels: int, grid: int, patch: int, rng: RngStream,
                 dim: int = 64, hidden: int = 128, heads: int = 4):
        self.grid = grid
        self.patch = patch
        self.heads = heads
        self.dim = dim
        p = Params()
        f_in = frame_channels * patch * patch
        p.add("emb.w", xavier_uniform(rng.substream("emb"), 2 * f_in, dim))
        p.add("emb.b", np.zeros(dim, np.float32))
        p.add("pos", (rng.substream("pos").normal(((grid // patch) ** 2, dim)) * 0.02))
        for nm in ("q", "k", "v", "o"):
            p.add(f"attn.{nm}", xavier_uniform(rng.substream(f"attn{nm}"), dim, dim))
        p.add("mlp.w1", xavier_uniform(rng.substream("w1"), dim, hidden))
        p.add("mlp.b1", np.zeros(hidden, np.float32))
        p.add("mlp.w2", np.zeros((hidden, 2 * patch * patch), np.float32))
        p.add("mlp.b2", np.zeros(2 * patch * patch, np.float32))
        self.params = p

    def estimate(self, frame_a, frame_b) -> Tensor:
        """(B, C, H, W) pairs -> (B, 2, H, W) displacement from a to b."""
        if not isinstance(frame_a, Tensor):
            frame_a = Tensor(np.asarray(frame_a, dtype=np.float32))
        if not isinstance(frame_b, Tensor):
            frame_b = Tensor(np.asarray(frame_b, dtype=np.float32))
        p = self.params
        tok = concat([patchify(frame_a, self.patch), patchify(frame_b, self.patch)], axis=-1)
        h = linear(tok, p["emb.w"], p["emb.b"]) + p["pos"]
        q = linear(h, p["attn.q"])
        k = linear(h, p["attn.k"])
        v = linear(h, p["attn.v"])
        h = h + linear(attention(q, k, v, self.heads), p["attn.o"])
        h = silu(linear(h, p["mlp.w1"], p["mlp.b1"]))
        out = tanh(linear(h, p["mlp.w2"], p["mlp.b2"])) * MAX_DISPLACEMENT
        return unpatchify(out, 2, self.grid, self.grid, self.patch)

    def mean_residual(self, frames: np.ndarray, norm: str = "l1") -> float:
        """Warp residual of a frame sequence (K, C, H, W) under its own flow."""
        with no_grad():
            a = Tensor(frames[:-1])
            b = Tensor(frames[1:])
            fl = self.estimate(a, b)
            res = b - warp(a, fl)
            if norm == "l1":
                return float(np.abs(res.data).mean())
            return float((res.data ** 2).mean())


def train_flow_estimator(est: FlowEstimator, frames: np.ndarray, rng: RngStream,
                         iters: int = 1200, batch: int = 32, lr: float = 2e-3,
                         max_shift: float = 3.0) -> list[float]:
    """Supervised endpoint-error training on synthetic global translations.

    Pairs are built by warping real frames with known constant flows, so the
    labels are exact by construction.
    """
    from ..nn import AdamW

    opt = AdamW(est.params, lr=lr)
    n = frames.shape[0]
    losses = []
    for it in range(iters):
        r = rng.substream(it)
        idx = r.integers(0, n, batch)
        base = frames[idx]
        uv = r.uniform(-max_shift, max_shift, (batch, 2)).astype(np.float32)
        const_flow = np.broadcast_to(uv[:, :, None, None], (batch, 2, est.grid, est.grid))
        with no_grad():
            shifted = warp(Tensor(base), Tensor(np.ascontiguousarray(const_flow))).data
        pred = est.estimate(base, shifted)
        err = pred - Tensor(np.ascontiguousarray(const_flow))
        loss = (err * err).mean()
        est.params.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    return losses
