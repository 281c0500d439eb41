"""Config files and the standard experiment bundle.

Configs are JSON with one section per stage; keys map 1:1 onto the stage
dataclasses. Every CLI subcommand prints the resolved configuration it runs
with. Documented keys:

  data:     n_episodes, seed, frame_stride, heldout_episodes, heldout_seed
  planner:  k_frames, t_diff, beta_start, beta_end, lambda_reg, guidance_w,
            sample_steps, cond_drop, ema_decay, lr, batch, iters, seed,
            min_snr_gamma, l_reg_norm, embed_dim, blocks, heads, grid, patch
  policy:   embed_dim, heads, patch, k_max, lr, batch, epochs, seed,
            enc_blocks, fused_blocks, se_ratio, decoder_hidden,
            fusion_mode, error_mode
  executor: step_limit, replan_threshold, transition_threshold,
            max_consecutive_replans, mode, open_interval, sample_steps,
            guidance_w, advance_on, completion_threshold
  bench:    n_chains, suite_seed, episode_seed, workers
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..executor.loop import ExecutorConfig
from ..nn import ContractViolation
from ..planner.model import DiffusionConfig
from ..policy.model import PolicyConfig
from .bench import BenchmarkConfig


@dataclass
class DataConfig:
    n_episodes: int = 500
    seed: int = 31
    frame_stride: int = 5
    heldout_episodes: int = 60
    heldout_seed: int = 777


@dataclass
class BundleConfig:
    data: DataConfig = field(default_factory=DataConfig)
    planner: DiffusionConfig = field(default_factory=lambda: DiffusionConfig(
        embed_dim=64, blocks=2, heads=4, iters=4000, batch=16, lr=1e-4, seed=0))
    policy: PolicyConfig = field(default_factory=lambda: PolicyConfig(
        embed_dim=96, heads=8, fused_blocks=2, epochs=12, batch=128, lr=3e-3, seed=5))
    executor: ExecutorConfig = field(default_factory=ExecutorConfig)
    bench: BenchmarkConfig = field(default_factory=BenchmarkConfig)


_SECTIONS = {
    "data": DataConfig,
    "planner": DiffusionConfig,
    "policy": PolicyConfig,
    "executor": ExecutorConfig,
    "bench": BenchmarkConfig,
}


def _fill(cls, values: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ContractViolation(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**values)


def load_bundle(path: str | Path | None = None, seed: int | None = None) -> BundleConfig:
    """Bundle from a JSON file (defaults when absent); `seed` offsets every
    stage seed so one flag re-seeds the whole pipeline."""
    raw = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        unknown = set(raw) - set(_SECTIONS)
        if unknown:
            raise ContractViolation(f"unknown config sections: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _fill(cls, raw.get(name, {}))
    bundle = BundleConfig(**kwargs)
    if seed is not None:
        bundle.data.seed += seed
        bundle.data.heldout_seed += seed
        bundle.planner.seed += seed
        bundle.policy.seed += seed
        bundle.bench.suite_seed += seed
        bundle.bench.episode_seed += seed
    return bundle


def bundle_to_dict(bundle: BundleConfig) -> dict:
    return {name: dataclasses.asdict(getattr(bundle, name)) for name in _SECTIONS}


def print_resolved(command: str, bundle: BundleConfig, extra: dict | None = None) -> None:
    payload = {"command": command, **bundle_to_dict(bundle)}
    if extra:
        payload.update(extra)
    print(json.dumps(payload, indent=2, sort_keys=True))
