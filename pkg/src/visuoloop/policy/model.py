"""Feedback-driven inverse-dynamics policy.

A shared multimodal encoder turns an observation into patch tokens per
modality, fuses them with a channel-gating (squeeze-excite) unit, and pools
them into a compact state embedding with multi-head attention against one of
two learned queries (current vs goal). The error between goal and current
embeddings is an element-wise subtraction, decoded to an action by a small
MLP. The policy never sees simulator state, only rendered observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env.render import Observation
from ..nn import (
    ContractViolation,
    Params,
    RngStream,
    Tensor,
    attention,
    concat,
    effective_heads,
    linear,
    no_grad,
    patchify,
    relu,
    reshape,
    sigmoid,
    silu,
    tanh,
    transpose,
    xavier_uniform,
)

APP_CHANNELS = 3
DEPTH_CHANNELS = 1
ACTION_SCALE = 0.05  # tanh output bound for position deltas


@dataclass
class PolicyConfig:
    embed_dim: int = 64
    heads: int = 4  # auto-adjusted to the largest divisor of embed_dim
    patch: int = 4
    grid: int = 16
    k_max: int = 5
    enc_blocks: int = 1  # transformer blocks per modality encoder
    fused_blocks: int = 1  # transformer blocks after fusion
    fine_stem: bool = True  # nonlinear half-patch features merged into each token
    se_ratio: int = 4
    decoder_hidden: int = 128
    lr: float = 1e-3
    batch: int = 128
    epochs: int = 8
    seed: int = 0
    fusion_mode: str = "rgbd"  # rgbd | appearance_only
    error_mode: str = "subtraction"  # subtraction | current_only (BC ablation)

    def __post_init__(self):
        if self.fusion_mode not in ("rgbd", "appearance_only"):
            raise ContractViolation(f"unknown fusion_mode {self.fusion_mode!r}")
        if self.error_mode not in ("subtraction", "current_only"):
            raise ContractViolation(f"unknown error_mode {self.error_mode!r}")


@dataclass(frozen=True)
class StateEmbedding:
    vector: np.ndarray
    which: str  # current | goal


class PolicyModel:
    def __init__(self, cfg: PolicyConfig, rng: RngStream):
        self.cfg = cfg
        d = cfg.embed_dim
        self.heads = effective_heads(d, cfg.heads)
        self.tokens = (cfg.grid // cfg.patch) ** 2
        p = Params()
        r = rng.substream("init")
        app_in = APP_CHANNELS * cfg.patch * cfg.patch
        dep_in = DEPTH_CHANNELS * cfg.patch * cfg.patch
        if cfg.fine_stem:
            # Half-patch tokenizer: nonlinear features at patch/2 resolution,
            # merged 2x2 back into the standard token count. Without this the
            # aggregator cannot resolve sub-cell gripper displacements.
            fp = cfg.patch // 2
            fd = d // 4
            p.add("fine.app.w", xavier_uniform(r.substream("fa"), APP_CHANNELS * fp * fp, fd))
            p.add("fine.app.b", np.zeros(fd, np.float32))
            p.add("fine.dep.w", xavier_uniform(r.substream("fd"), DEPTH_CHANNELS * fp * fp, fd))
            p.add("fine.dep.b", np.zeros(fd, np.float32))
            app_in = dep_in = 4 * fd
        p.add("tok.app.w", xavier_uniform(r.substream("app"), app_in, d))
        p.add("tok.app.b", np.zeros(d, np.float32))
        p.add("tok.dep.w", xavier_uniform(r.substream("dep"), dep_in, d))
        p.add("tok.dep.b", np.zeros(d, np.float32))
        p.add("pos.app", r.substream("posa").normal((self.tokens, d)) * 0.02)
        p.add("pos.dep", r.substream("posd").normal((self.tokens, d)) * 0.02)
        for mod in ("app", "dep"):
            for b in range(cfg.enc_blocks):
                self._add_block(p, r.substream(f"{mod}{b}"), f"enc.{mod}.{b}", d)
        p.add("fuse.w", xavier_uniform(r.substream("fuse"), 2 * d, d))
        p.add("fuse.b", np.zeros(d, np.float32))
        for b in range(cfg.fused_blocks):
            self._add_block(p, r.substream(f"fb{b}"), f"fused.{b}", d)
        se_h = max(1, d // cfg.se_ratio)
        p.add("se.w1", xavier_uniform(r.substream("se1"), d, se_h))
        p.add("se.b1", np.zeros(se_h, np.float32))
        p.add("se.w2", xavier_uniform(r.substream("se2"), se_h, d))
        p.add("se.b2", np.zeros(d, np.float32))
        p.add("pos", r.substream("pos").normal((self.tokens, d)) * 0.02)
        p.add("query.current", r.substream("qc").normal((d,)) * 0.2)
        p.add("query.goal", r.substream("qg").normal((d,)) * 0.2)
        for nm in ("q", "k", "v", "o"):
            p.add(f"pool.{nm}", xavier_uniform(r.substream(f"pool{nm}"), d, d))
        p.add("head.w1", xavier_uniform(r.substream("h1"), d, 4 * d))
        p.add("head.b1", np.zeros(4 * d, np.float32))
        p.add("head.w2", xavier_uniform(r.substream("h2"), 4 * d, d))
        p.add("head.b2", np.zeros(d, np.float32))
        h = cfg.decoder_hidden
        p.add("dec.w1", xavier_uniform(r.substream("d1"), d, h))
        p.add("dec.b1", np.zeros(h, np.float32))
        p.add("dec.w2", xavier_uniform(r.substream("d2"), h, h))
        p.add("dec.b2", np.zeros(h, np.float32))
        p.add("dec.w3", np.zeros((h, 3), np.float32))
        p.add("dec.b3", np.zeros(3, np.float32))
        self.params = p

    @staticmethod
    def _add_block(p: Params, r: RngStream, prefix: str, d: int) -> None:
        for nm in ("q", "k", "v", "o"):
            p.add(f"{prefix}.attn.{nm}", xavier_uniform(r.substream(nm), d, d))
        p.add(f"{prefix}.mlp.w1", xavier_uniform(r.substream("m1"), d, 4 * d))
        p.add(f"{prefix}.mlp.b1", np.zeros(4 * d, np.float32))
        p.add(f"{prefix}.mlp.w2", xavier_uniform(r.substream("m2"), 4 * d, d))
        p.add(f"{prefix}.mlp.b2", np.zeros(d, np.float32))

    def _block(self, tokens: Tensor, prefix: str) -> Tensor:
        from ..nn import layer_norm

        p = self.params
        h = layer_norm(tokens)
        q = linear(h, p[f"{prefix}.attn.q"])
        k = linear(h, p[f"{prefix}.attn.k"])
        v = linear(h, p[f"{prefix}.attn.v"])
        tokens = tokens + linear(attention(q, k, v, self.heads), p[f"{prefix}.attn.o"])
        h = layer_norm(tokens)
        return tokens + linear(relu(linear(h, p[f"{prefix}.mlp.w1"], p[f"{prefix}.mlp.b1"])),
                               p[f"{prefix}.mlp.w2"], p[f"{prefix}.mlp.b2"])

    def _modal_tokens(self, x: np.ndarray, mod: str) -> Tensor:
        cfg, p = self.cfg, self.params
        if not cfg.fine_stem:
            return linear(patchify(Tensor(x), cfg.patch), p[f"tok.{mod}.w"], p[f"tok.{mod}.b"])
        fp = cfg.patch // 2
        g = cfg.grid // cfg.patch
        fine = silu(linear(patchify(Tensor(x), fp), p[f"fine.{mod}.w"], p[f"fine.{mod}.b"]))
        B, fd = x.shape[0], fine.shape[-1]
        fine = reshape(fine, (B, g, 2, g, 2, fd))
        fine = transpose(fine, (0, 1, 3, 2, 4, 5))  # 2x2 fine cells under each token
        merged = reshape(fine, (B, g * g, 4 * fd))
        return linear(merged, p[f"tok.{mod}.w"], p[f"tok.{mod}.b"])

    # -- encoder ------------------------------------------------------------
    def fuse_tokens(self, obs_batch: np.ndarray) -> Tensor:
        """(B, 4, H, W) observations -> fused (B, L, d) tokens."""
        cfg, p = self.cfg, self.params
        app = np.ascontiguousarray(obs_batch[:, :APP_CHANNELS])
        dep = np.ascontiguousarray(obs_batch[:, APP_CHANNELS:])
        if cfg.fusion_mode == "appearance_only":
            dep = np.zeros_like(dep)
        tok_a = self._modal_tokens(app, "app") + p["pos.app"]
        tok_d = self._modal_tokens(dep, "dep") + p["pos.dep"]
        for b in range(cfg.enc_blocks):
            tok_a = self._block(tok_a, f"enc.app.{b}")
            tok_d = self._block(tok_d, f"enc.dep.{b}")
        fused = self.fuse_modalities(tok_a, tok_d)
        fused = fused + p["pos"]
        for b in range(cfg.fused_blocks):
            fused = self._block(fused, f"fused.{b}")
        return fused

    def fuse_modalities(self, tok_app: Tensor, tok_dep: Tensor, gate_override=None) -> Tensor:
        """Per-token concat -> linear -> squeeze-excite channel gate.

        gate_override substitutes the sigmoid gate with a fixed array (debug
        hook; the identity/zero gates pin down the fusion contract in tests).
        """
        if tok_app.shape[-2] != tok_dep.shape[-2]:
            raise ContractViolation(
                f"token counts differ: {tok_app.shape[-2]} vs {tok_dep.shape[-2]}"
            )
        p = self.params
        fused = linear(concat([tok_app, tok_dep], axis=-1), p["fuse.w"], p["fuse.b"])
        if gate_override is not None:
            gate = Tensor(np.asarray(gate_override, dtype=np.float32))
        else:
            squeeze = fused.mean(axis=-2)  # (B, d) over tokens
            gate = sigmoid(linear(relu(linear(squeeze, p["se.w1"], p["se.b1"])), p["se.w2"], p["se.b2"]))
        B, d = fused.shape[0], fused.shape[-1]
        return fused * reshape(gate, (B, 1, d))

    def pool(self, tokens: Tensor, which: str) -> Tensor:
        """Attention pooling with the chosen learned query, then the MLP head."""
        p = self.params
        if which not in ("current", "goal"):
            raise ContractViolation(f"query must be 'current' or 'goal', got {which!r}")
        B = tokens.shape[0]
        d = self.cfg.embed_dim
        query = reshape(p[f"query.{which}"], (1, 1, d)) * np.ones((B, 1, 1), np.float32)
        q = linear(query, p["pool.q"])
        k = linear(tokens, p["pool.k"])
        v = linear(tokens, p["pool.v"])
        pooled = linear(attention(q, k, v, self.heads), p["pool.o"])
        pooled = reshape(pooled, (B, d))
        return linear(relu(linear(pooled, p["head.w1"], p["head.b1"])), p["head.w2"], p["head.b2"])

    def encode_batch(self, obs_batch: np.ndarray, which: str) -> Tensor:
        return self.pool(self.fuse_tokens(obs_batch), which)

    def encode_state(self, obs: Observation | np.ndarray, which: str) -> StateEmbedding:
        grid = obs.stacked() if isinstance(obs, Observation) else np.asarray(obs, dtype=np.float32)
        if grid.shape != (APP_CHANNELS + DEPTH_CHANNELS, self.cfg.grid, self.cfg.grid):
            raise ContractViolation(f"observation shape {grid.shape} does not match config")
        with no_grad():
            vec = self.encode_batch(grid[None], which).data[0]
        return StateEmbedding(vector=vec, which=which)

    # -- decoder ------------------------------------------------------------
    def decoder_head(self, err: Tensor) -> Tensor:
        p = self.params
        h = relu(linear(err, p["dec.w1"], p["dec.b1"]))
        h = relu(linear(h, p["dec.w2"], p["dec.b2"]))
        return linear(h, p["dec.w3"], p["dec.b3"])  # (B, 3) raw: dx, dy, gripper logit

    def decode_action(self, error_vec: np.ndarray):
        """Error vector -> (dx, dy, gripper in [0,1]); bounded by construction."""
        from ..env.world import Action

        if error_vec.shape != (self.cfg.embed_dim,):
            raise ContractViolation(f"error vector shape {error_vec.shape} != ({self.cfg.embed_dim},)")
        with no_grad():
            raw = self.decoder_head(Tensor(error_vec[None].astype(np.float32)))
            deltas = tanh(raw[:, :2]) * ACTION_SCALE
            grip = sigmoid(raw[:, 2:3])
        return Action(float(deltas.data[0, 0]), float(deltas.data[0, 1]), float(grip.data[0, 0]))

    def act(self, obs_cur: np.ndarray, obs_goal: np.ndarray):
        """Full inverse-dynamics step from raw observation grids."""
        with no_grad():
            q_cur = self.encode_batch(obs_cur[None], "current").data[0]
            if self.cfg.error_mode == "current_only":
                err = q_cur
            else:
                q_goal = self.encode_batch(obs_goal[None], "goal").data[0]
                err = measure_error(q_cur, q_goal)
        return self.decode_action(err)


def measure_error(q_cur: np.ndarray, q_goal: np.ndarray) -> np.ndarray:
    """Explicit error signal: goal minus current, element-wise."""
    q_cur = np.asarray(q_cur)
    q_goal = np.asarray(q_goal)
    if q_cur.shape != q_goal.shape:
        raise ContractViolation(f"embedding shapes differ: {q_cur.shape} vs {q_goal.shape}")
    return q_goal - q_cur


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b), in [0, 2]. Zero vectors are outside the contract."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"shapes differ: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ContractViolation("cosine distance undefined for zero vectors")
    return float(1.0 - np.dot(a, b) / (na * nb))
