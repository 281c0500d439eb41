"""Stage-cached experiment pipeline.

Every stage writes its artifacts plus a stage.json carrying the hash of the
configuration that produced them; a rerun with the same hash is skipped. The
CLI subcommands and the acceptance suite both drive this module, so long
training runs are paid for once per configuration.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..env.dataset import Dataset, generate_dataset, load_dataset, write_dataset
from ..env.tasks import NUM_TASKS
from ..nn import RngStream, load_checkpoint, save_checkpoint
from ..planner.flow import FlowEstimator, train_flow_estimator
from ..planner.model import Denoiser
from ..planner.train import train_planner
from ..policy.model import PolicyModel
from ..policy.train import train_policy
from ..policy.value import CompletionScorer, train_completion_scorer
from .bench import ModelBundle, config_fingerprint
from .config import BundleConfig

PLANNER_SNAPSHOT = 2000  # comparison point for the regularizer study


class Pipeline:
    def __init__(self, root: str | Path, bundle: BundleConfig):
        self.root = Path(root)
        self.bundle = bundle
        self.root.mkdir(parents=True, exist_ok=True)

    # -- caching helpers ------------------------------------------------------
    def _fresh(self, stage_dir: Path, key: dict) -> bool:
        marker = stage_dir / "stage.json"
        if not marker.exists():
            return False
        try:
            return json.loads(marker.read_text())["hash"] == config_fingerprint(key)
        except Exception:
            return False

    def _mark(self, stage_dir: Path, key: dict) -> None:
        (stage_dir / "stage.json").write_text(
            json.dumps({"hash": config_fingerprint(key), "key": key}, indent=2, default=str)
        )

    # -- stages ---------------------------------------------------------------
    def dataset_path(self, heldout: bool = False) -> Path:
        return self.root / "data" / ("heldout.clvd" if heldout else "train.clvd")

    def ensure_data(self) -> None:
        cfg = self.bundle.data
        stage = self.root / "data"
        key = {"stage": "data", **dataclasses.asdict(cfg)}
        if self._fresh(stage, key):
            return
        stage.mkdir(parents=True, exist_ok=True)
        ds = generate_dataset(cfg.n_episodes, cfg.seed, cfg.frame_stride)
        write_dataset(self.dataset_path(), ds)
        hd = generate_dataset(cfg.heldout_episodes, cfg.heldout_seed, cfg.frame_stride)
        write_dataset(self.dataset_path(heldout=True), hd)
        self._mark(stage, key)

    def load_data(self, heldout: bool = False) -> Dataset:
        self.ensure_data()
        return load_dataset(self.dataset_path(heldout))

    def planner_dir(self, lambda_reg: float | None = None) -> Path:
        cfg = self.bundle.planner
        lam = cfg.lambda_reg if lambda_reg is None else lambda_reg
        return self.root / ("planner" if lam == cfg.lambda_reg else f"planner_lam{lam:g}")

    def ensure_planner(self, lambda_reg: float | None = None, iters: int | None = None) -> Path:
        self.ensure_data()
        cfg = self.bundle.planner
        if lambda_reg is not None:
            cfg = replace(cfg, lambda_reg=lambda_reg)
        if iters is not None:
            cfg = replace(cfg, iters=iters)
        stage = self.planner_dir(cfg.lambda_reg)
        key = {
            "stage": "planner",
            **dataclasses.asdict(cfg),
            "data": dataclasses.asdict(self.bundle.data),
            "snapshot": PLANNER_SNAPSHOT,
        }
        if self._fresh(stage, key):
            return stage
        ds = self.load_data()
        snaps = (PLANNER_SNAPSHOT,) if cfg.iters > PLANNER_SNAPSHOT else ()
        train_planner(ds, cfg, stage, snapshot_steps=snaps)
        self._mark(stage, key)
        return stage

    def load_planner(self, lambda_reg: float | None = None, step: int | None = None):
        """Returns (model, ema_arrays); `step` selects a snapshot checkpoint."""
        cfg = self.bundle.planner
        if lambda_reg is not None:
            cfg = replace(cfg, lambda_reg=lambda_reg)
        stage = self.ensure_planner(lambda_reg)
        suffix = f"_step{step}" if step else ""
        model = Denoiser(cfg, NUM_TASKS, RngStream(cfg.seed).substream("model"))
        model.params.load(load_checkpoint(stage / f"model{suffix}.clvr"))
        ema = load_checkpoint(stage / f"ema{suffix}.clvr")
        return model, ema

    def policy_dir(self, variant: str = "main") -> Path:
        return self.root / ("policy" if variant == "main" else f"policy_{variant}")

    def _policy_cfg(self, variant: str):
        cfg = self.bundle.policy
        if variant == "main":
            return cfg
        if variant == "bc":
            return replace(cfg, error_mode="current_only")
        if variant == "app_only":
            return replace(cfg, fusion_mode="appearance_only")
        raise ValueError(f"unknown policy variant {variant!r}")

    def ensure_policy(self, variant: str = "main") -> Path:
        self.ensure_data()
        cfg = self._policy_cfg(variant)
        stage = self.policy_dir(variant)
        key = {"stage": f"policy/{variant}", **dataclasses.asdict(cfg),
               "data": dataclasses.asdict(self.bundle.data)}
        if self._fresh(stage, key):
            return stage
        ds = self.load_data()
        train_policy(ds, cfg, out_dir=stage)
        self._mark(stage, key)
        return stage

    def load_policy(self, variant: str = "main") -> PolicyModel:
        cfg = self._policy_cfg(variant)
        stage = self.ensure_policy(variant)
        model = PolicyModel(cfg, RngStream(cfg.seed).substream("model"))
        model.params.load(load_checkpoint(stage / "policy.clvr"))
        return model

    def ensure_flow_reference(self) -> Path:
        """Standalone flow estimator used to measure plan warp residuals."""
        self.ensure_data()
        stage = self.root / "flow_ref"
        key = {"stage": "flow_ref", "data": dataclasses.asdict(self.bundle.data),
               "iters": 1500, "seed": 91}
        if self._fresh(stage, key):
            return stage
        stage.mkdir(parents=True, exist_ok=True)
        ds = self.load_data()
        frames = np.concatenate([ep.frames[::3] for ep in ds.episodes[:150]])
        est = FlowEstimator(4, self.bundle.planner.grid, self.bundle.planner.patch, RngStream(91))
        train_flow_estimator(est, frames, RngStream(92), iters=1500, batch=16, lr=2e-3)
        save_checkpoint(stage / "flow.clvr", est.params.arrays())
        self._mark(stage, key)
        return stage

    def load_flow_reference(self) -> FlowEstimator:
        stage = self.ensure_flow_reference()
        est = FlowEstimator(4, self.bundle.planner.grid, self.bundle.planner.patch, RngStream(91))
        est.params.load(load_checkpoint(stage / "flow.clvr"))
        return est

    def ensure_scorer(self) -> Path:
        stage = self.root / "value"
        key = {"stage": "scorer", "data": dataclasses.asdict(self.bundle.data),
               "policy": dataclasses.asdict(self.bundle.policy), "iters": 400, "seed": 9}
        if self._fresh(stage, key):
            return stage
        stage.mkdir(parents=True, exist_ok=True)
        policy = self.load_policy()
        ds = self.load_data()
        scorer = CompletionScorer(NUM_TASKS, self.bundle.policy.embed_dim, seed=9)
        train_completion_scorer(scorer, policy, ds, RngStream(10), iters=400)
        save_checkpoint(stage / "scorer.clvr", scorer.arrays())
        self._mark(stage, key)
        return stage

    def load_scorer(self) -> CompletionScorer:
        stage = self.ensure_scorer()
        scorer = CompletionScorer(NUM_TASKS, self.bundle.policy.embed_dim, seed=9)
        scorer.load(load_checkpoint(stage / "scorer.clvr"))
        return scorer

    def model_bundle(self, policy_variant: str = "main", planner_lambda: float | None = None) -> ModelBundle:
        planner_stage = self.ensure_planner(planner_lambda)
        policy_stage = self.ensure_policy(policy_variant)
        cfg = self.bundle.planner
        if planner_lambda is not None:
            cfg = replace(cfg, lambda_reg=planner_lambda)
        return ModelBundle(
            planner_cfg=cfg,
            planner_ckpt=str(planner_stage / "model.clvr"),
            planner_ema_ckpt=str(planner_stage / "ema.clvr"),
            policy_cfg=self._policy_cfg(policy_variant),
            policy_ckpt=str(policy_stage / "policy.clvr"),
        )
