"""Demonstration dataset generation and the binary episode file format.

Episodes are single-task expert rollouts; failed attempts are discarded and
resampled so every stored episode has success=True. Frames are stored at
every env step (policy view); the planner view subsamples at `frame_stride`.

File layout (little-endian), magic "CLVD":
    magic 4s, version u32, episode_count u32,
    height u32, width u32, appearance_channels u32, depth_channels u32,
    frame_stride u32, seed u64
per episode:
    task_id u16, frame_count u32,
    frames float32 (frame_count * (app+depth channels) * H * W),
    actions float32 ((frame_count - 1) * 3),
    success u8
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..nn.rng import RngStream
from ..nn.tensor import ContractViolation
from .expert import scripted_expert
from .render import GRID, render
from .tasks import VOCAB, ActiveTask, TaskSpec, activate, reset, task_id, task_success
from .world import Action, step

MAGIC = b"CLVD"
VERSION = 1
APP_CHANNELS = 3
DEPTH_CHANNELS = 1
FRAME_CHANNELS = APP_CHANNELS + DEPTH_CHANNELS
DEFAULT_STRIDE = 5
EXPERT_STEP_LIMIT = 200
SETTLE_STEPS = 3


@dataclass
class Episode:
    task: int
    frames: np.ndarray  # (T+1, 4, H, W) float32
    actions: np.ndarray  # (T, 3) float32
    success: bool

    def planner_frames(self, stride: int) -> np.ndarray:
        return self.frames[::stride]


@dataclass
class Dataset:
    episodes: list[Episode]
    seed: int
    frame_stride: int
    discarded: int = 0

    def __len__(self) -> int:
        return len(self.episodes)


def rollout_expert(spec: TaskSpec, rng: RngStream, max_steps: int = EXPERT_STEP_LIMIT,
                   settle: int = SETTLE_STEPS) -> Episode | None:
    state, obs = reset([spec], rng)
    active = activate(spec, state)
    frames = [obs.stacked()]
    actions: list[tuple[float, float, float]] = []
    done_at = None
    t = 0
    while t < max_steps + settle:
        if done_at is not None and t >= done_at + settle:
            break
        if done_at is None and t >= max_steps:
            return None
        a = scripted_expert(state, active)
        state, _ = step(state, a)
        obs = render(state)
        frames.append(obs.stacked())
        actions.append((a.dx, a.dy, a.gripper))
        t += 1
        if done_at is None and task_success(state, active):
            done_at = t
    if done_at is None:
        return None
    return Episode(
        task=task_id(spec),
        frames=np.stack(frames).astype(np.float32),
        actions=np.asarray(actions, dtype=np.float32),
        success=True,
    )


def generate_dataset(n_episodes: int, seed: int, frame_stride: int = DEFAULT_STRIDE,
                     max_steps: int = EXPERT_STEP_LIMIT) -> Dataset:
    """Expert demonstrations cycling through the task vocabulary."""
    if n_episodes <= 0:
        raise ContractViolation("n_episodes must be positive")
    root = RngStream(seed)
    episodes: list[Episode] = []
    discarded = 0
    for i in range(n_episodes):
        spec = VOCAB[i % len(VOCAB)]
        attempt = 0
        while True:
            ep = rollout_expert(spec, root.substream(f"episode/{i}/{attempt}"), max_steps)
            if ep is not None:
                episodes.append(ep)
                break
            discarded += 1
            attempt += 1
            if attempt > 50:
                raise RuntimeError(f"expert keeps failing task {spec.name}")
    return Dataset(episodes=episodes, seed=seed, frame_stride=frame_stride, discarded=discarded)


def write_dataset(path: str | Path, ds: Dataset) -> None:
    path = Path(path)
    parts = [
        MAGIC,
        struct.pack(
            "<IIIIIIIQ",
            VERSION,
            len(ds.episodes),
            GRID,
            GRID,
            APP_CHANNELS,
            DEPTH_CHANNELS,
            ds.frame_stride,
            ds.seed,
        ),
    ]
    for ep in ds.episodes:
        frames = np.ascontiguousarray(ep.frames, dtype=np.float32)
        actions = np.ascontiguousarray(ep.actions, dtype=np.float32)
        parts.append(struct.pack("<HI", ep.task, frames.shape[0]))
        parts.append(frames.tobytes())
        parts.append(actions.tobytes())
        parts.append(struct.pack("<B", 1 if ep.success else 0))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def load_dataset(path: str | Path) -> Dataset:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ContractViolation(f"{path}: bad magic {blob[:4]!r}")
    version, count, h, w, c_app, c_dep, stride, seed = struct.unpack_from("<IIIIIIIQ", blob, 4)
    if version != VERSION:
        raise ContractViolation(f"{path}: unsupported version {version}")
    channels = c_app + c_dep
    off = 4 + struct.calcsize("<IIIIIIIQ")
    episodes = []
    for _ in range(count):
        tid, n_frames = struct.unpack_from("<HI", blob, off)
        off += 6
        n = n_frames * channels * h * w
        frames = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(n_frames, channels, h, w)
        off += 4 * n
        n_act = (n_frames - 1) * 3
        actions = np.frombuffer(blob, dtype="<f4", count=n_act, offset=off).reshape(n_frames - 1, 3)
        off += 4 * n_act
        (success,) = struct.unpack_from("<B", blob, off)
        off += 1
        episodes.append(Episode(task=tid, frames=frames.copy(), actions=actions.copy(), success=bool(success)))
    return Dataset(episodes=episodes, seed=seed, frame_stride=stride)
