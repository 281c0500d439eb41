"""Benchmark orchestration: a seeded suite of task chains, parallel episode
execution over read-only checkpoints, and deterministic report emission.

Chains are replayed with per-episode RNG substreams, so a rerun with the same
fingerprint produces byte-identical CSV and JSON reports regardless of worker
count.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from ..env.tasks import CHAIN_LENGTH, NUM_TASKS, TaskChain, sample_chain
from ..nn import RngStream, load_checkpoint
from ..executor.log import EpisodeLog
from ..executor.loop import ExecutorConfig, run_chain_episode, run_oracle_episode
from ..planner.model import Denoiser, DiffusionConfig
from ..policy.model import PolicyConfig, PolicyModel
from .plots import atomic_write_text, write_csv


@dataclass
class BenchmarkConfig:
    n_chains: int = 200
    suite_seed: int = 20240
    episode_seed: int = 77000
    workers: int = 0  # 0: use os.cpu_count()


def build_chain_suite(n_chains: int, suite_seed: int) -> list[TaskChain]:
    rng = RngStream(suite_seed)
    return [sample_chain(rng.substream(f"chain/{i}")) for i in range(n_chains)]


@dataclass
class BenchmarkReport:
    rates: list[float]  # completed >= k tasks, k = 1..5
    avg_length: float
    n_chains: int
    fingerprint: str
    episodes: list[dict] = field(default_factory=list)

    def validate(self) -> None:
        assert all(self.rates[i] >= self.rates[i + 1] - 1e-12 for i in range(len(self.rates) - 1))
        assert 0.0 <= self.avg_length <= CHAIN_LENGTH


def summarize(episodes: list[EpisodeLog], fingerprint: str) -> BenchmarkReport:
    lengths = [ep.tasks_completed for ep in episodes]
    n = len(episodes)
    rates = [sum(1 for L in lengths if L >= k) / n for k in range(1, CHAIN_LENGTH + 1)]
    report = BenchmarkReport(
        rates=[round(r, 6) for r in rates],
        avg_length=float(np.mean(lengths)),
        n_chains=n,
        fingerprint=fingerprint,
        episodes=[ep.summary() for ep in episodes],
    )
    report.validate()
    return report


def write_report(report: BenchmarkReport, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "fingerprint": report.fingerprint,
        "n_chains": report.n_chains,
        "avg_length": round(report.avg_length, 6),
        "rates": report.rates,
    }
    atomic_write_text(out_dir / "report.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    write_csv(
        out_dir / "report.csv",
        ["position", "success_rate"],
        [[k + 1, f"{report.rates[k]:.6f}"] for k in range(CHAIN_LENGTH)]
        + [["avg_length", f"{report.avg_length:.6f}"]],
    )
    write_csv(
        out_dir / "episodes.csv",
        ["episode", "tasks_completed", "steps", "replans", "plans_generated", "chain"],
        [
            [i, e["tasks_completed"], e["steps"], e["replans"], e["plans_generated"], "|".join(e["chain"])]
            for i, e in enumerate(report.episodes)
        ],
    )


def config_fingerprint(parts: dict) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()


@dataclass
class ModelBundle:
    """Checkpoint paths plus the configs needed to rebuild the models."""

    planner_cfg: DiffusionConfig
    planner_ckpt: str
    planner_ema_ckpt: str
    policy_cfg: PolicyConfig
    policy_ckpt: str

    def fingerprint_parts(self) -> dict:
        return {
            "planner_cfg": asdict(self.planner_cfg),
            "policy_cfg": asdict(self.policy_cfg),
            "planner_ckpt": _file_hash(self.planner_ckpt),
            "planner_ema_ckpt": _file_hash(self.planner_ema_ckpt),
            "policy_ckpt": _file_hash(self.policy_ckpt),
        }

    def load(self):
        planner = Denoiser(self.planner_cfg, NUM_TASKS, RngStream(self.planner_cfg.seed).substream("model"))
        planner.params.load(load_checkpoint(self.planner_ckpt))
        ema = load_checkpoint(self.planner_ema_ckpt)
        policy = PolicyModel(self.policy_cfg, RngStream(self.policy_cfg.seed).substream("model"))
        policy.params.load(load_checkpoint(self.policy_ckpt))
        return planner, ema, policy


def _file_hash(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing checkpoint: {p}")
    return hashlib.sha256(p.read_bytes()).hexdigest()


_WORKER: dict = {}


def _init_worker(bundle: ModelBundle, exec_cfg: ExecutorConfig, suite_seed: int,
                 n_chains: int, episode_seed: int):
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
    os.environ.setdefault("OMP_NUM_THREADS", "1")
    planner, ema, policy = bundle.load()
    _WORKER["planner"] = planner
    _WORKER["ema"] = ema
    _WORKER["policy"] = policy
    _WORKER["exec_cfg"] = exec_cfg
    _WORKER["suite"] = build_chain_suite(n_chains, suite_seed)
    _WORKER["episode_seed"] = episode_seed


def _run_episode(index: int) -> EpisodeLog:
    chain = _WORKER["suite"][index]
    stream = RngStream(_WORKER["episode_seed"]).substream(f"episode/{index}")
    return run_chain_episode(
        chain, stream, _WORKER["planner"], _WORKER["ema"], _WORKER["policy"], _WORKER["exec_cfg"]
    )


def run_benchmark(bundle: ModelBundle, exec_cfg: ExecutorConfig, bench_cfg: BenchmarkConfig,
                  out_dir: str | Path | None = None,
                  keep_logs: bool = False) -> tuple[BenchmarkReport, list[EpisodeLog]]:
    """Execute the full chain suite; episodes run in parallel processes."""
    fingerprint = config_fingerprint(
        {
            "bench": asdict(bench_cfg),
            "executor": asdict(exec_cfg),
            **bundle.fingerprint_parts(),
        }
    )
    n = bench_cfg.n_chains
    workers = bench_cfg.workers or os.cpu_count() or 1
    workers = min(workers, n)
    if workers <= 1:
        _init_worker(bundle, exec_cfg, bench_cfg.suite_seed, n, bench_cfg.episode_seed)
        logs = [_run_episode(i) for i in range(n)]
    else:
        with Pool(
            workers,
            initializer=_init_worker,
            initargs=(bundle, exec_cfg, bench_cfg.suite_seed, n, bench_cfg.episode_seed),
        ) as pool:
            logs = pool.map(_run_episode, range(n), chunksize=max(1, n // (workers * 8)))
    report = summarize(logs, fingerprint)
    if out_dir is not None:
        write_report(report, out_dir)
        if keep_logs:
            log_dir = Path(out_dir) / "logs"
            log_dir.mkdir(parents=True, exist_ok=True)
            for i, lg in enumerate(logs):
                lg.write_jsonl(log_dir / f"episode_{i:04d}.jsonl")
    return report, logs


def run_oracle_benchmark(n_chains: int, suite_seed: int, episode_seed: int,
                         step_limit: int = 360) -> BenchmarkReport:
    """Feasibility upper bound with the scripted expert driving each chain."""
    suite = build_chain_suite(n_chains, suite_seed)
    logs = []
    for i, chain in enumerate(suite):
        stream = RngStream(episode_seed).substream(f"episode/{i}")
        logs.append(run_oracle_episode(chain, stream, step_limit))
    fingerprint = config_fingerprint(
        {"oracle": True, "n_chains": n_chains, "suite_seed": suite_seed, "episode_seed": episode_seed}
    )
    return summarize(logs, fingerprint)
