import numpy as np
import pytest

from visuoloop import nn
from visuoloop.env import Action, render, reset, sample_chain
from visuoloop.executor import (
    PLAN_EXHAUSTED,
    ExecutorConfig,
    execute_episode,
    max_consecutive_distance,
    maybe_advance_subgoal,
    run_oracle_episode,
)
from visuoloop.nn import RngStream, Tensor
from visuoloop.planner.sample import PlanProvenance, SubGoalPlan
from visuoloop.policy import PolicyConfig, PolicyModel


def tiny_policy(seed=0, **kw):
    return PolicyModel(PolicyConfig(embed_dim=16, heads=4, enc_blocks=0, fused_blocks=0,
                                    decoder_hidden=16, seed=seed, **kw), RngStream(seed))


def stub_plan_source(k_frames=4):
    def source(obs, tid, rng, gen_index):
        frames = rng.substream(f"{tid}/{gen_index}").uniform(0, 1, (k_frames, 4, 16, 16))
        return SubGoalPlan(frames=frames.astype(np.float32),
                           provenance=PlanProvenance(seed=rng.seed, guidance_w=1.0,
                                                     sample_steps=1, generation_index=gen_index))
    return source


class ConstantEmbedPolicy(PolicyModel):
    """Every observation maps to the same embedding; decoder is inert."""

    def __init__(self):
        super().__init__(PolicyConfig(embed_dim=8, heads=2, enc_blocks=0, fused_blocks=0,
                                      decoder_hidden=8), RngStream(1))

    def encode_batch(self, obs_batch, which):
        return Tensor(np.tile(np.array([1.0, 0.5, 0.25, 0.1, 0, 0, 0, 1.0], np.float32),
                              (obs_batch.shape[0], 1)))

    def decode_action(self, err):
        return Action(0.0, 0.0, 0.0)


class TestAdvance:
    def embeds(self):
        return np.array([[1, 0], [0, 1], [1, 1]], dtype=np.float64)

    def test_no_advance_at_exact_threshold(self):
        # strict inequality: d == D_S must not advance
        g = np.array([[1.0, 0.0], [0.0, 1.0]])
        q = np.array([1.0, 1.0])  # distance to goal 1: 1 - 1/sqrt(2) ~ 0.2929
        d = 1 - 1 / np.sqrt(2)
        assert maybe_advance_subgoal(q, g, 1, d) == 1
        assert maybe_advance_subgoal(q, g, 1, d + 1e-9) == 2

    def test_zero_distance_advances(self):
        g = self.embeds()
        assert maybe_advance_subgoal(g[0], g, 1, 0.02) == 2

    def test_exhaustion_at_last_goal(self):
        g = self.embeds()
        assert maybe_advance_subgoal(g[2], g, 3, 0.02) == PLAN_EXHAUSTED

    def test_identical_frames_never_trigger_replan(self):
        e = np.tile(np.array([0.3, 0.7]), (5, 1))
        assert max_consecutive_distance(e) == pytest.approx(0.0, abs=1e-12)


class TestConfig:
    def test_validation(self):
        with pytest.raises(nn.ContractViolation):
            ExecutorConfig(step_limit=0)
        with pytest.raises(nn.ContractViolation):
            ExecutorConfig(transition_threshold=2.0, replan_threshold=1.0)
        with pytest.raises(nn.ContractViolation):
            ExecutorConfig(mode="sideways")
        ExecutorConfig(transition_threshold=0.0)  # degenerate never-advance is allowed


class TestEpisodes:
    def setup_episode(self, seed=3):
        chain = sample_chain(RngStream(seed))
        state, obs = reset(chain, seed)
        return chain, state, obs

    def test_zero_action_policy_runs_to_limit(self):
        chain, state, obs = self.setup_episode()
        cfg = ExecutorConfig(step_limit=40)
        log = execute_episode(state, obs, chain, stub_plan_source(), ConstantEmbedPolicy(),
                              cfg, RngStream(0))
        assert log.tasks_completed == 0
        assert log.length == 40

    def test_log_length_bounded_and_one_env_step_per_record(self):
        chain, state, obs = self.setup_episode(5)
        cfg = ExecutorConfig(step_limit=25)
        log = execute_episode(state, obs, chain, stub_plan_source(), tiny_policy(), cfg, RngStream(2))
        assert log.length <= 25
        assert [s.t for s in log.steps] == list(range(log.length))

    def test_deterministic_rerun(self):
        chain, state, obs = self.setup_episode(7)
        cfg = ExecutorConfig(step_limit=30)

        def run():
            return execute_episode(state, obs, chain, stub_plan_source(), tiny_policy(11),
                                   cfg, RngStream(4))

        a, b = run(), run()
        assert [s.to_json() for s in a.steps] == [s.to_json() for s in b.steps]
        assert a.summary() == b.summary()

    def test_i_sub_nondecreasing_between_replans(self):
        chain, state, obs = self.setup_episode(9)
        cfg = ExecutorConfig(step_limit=60, transition_threshold=0.4)
        log = execute_episode(state, obs, chain, stub_plan_source(), tiny_policy(13), cfg, RngStream(6))
        prev = None
        for s in log.steps:
            if prev is not None and not prev.replan and prev.task_index == s.task_index:
                assert s.i_sub >= prev.i_sub
            prev = s

    def test_replan_retry_bound(self):
        class FarApartPolicy(ConstantEmbedPolicy):
            def encode_batch(self, obs_batch, which):
                n = obs_batch.shape[0]
                out = np.tile(np.array([1.0, 0, 0, 0, 0, 0, 0, 0], np.float32), (n, 1))
                out[1::2] = np.array([-1.0, 0, 0, 0, 0, 0, 0, 0], np.float32)  # alternating opposite
                return Tensor(out)

        chain, state, obs = self.setup_episode(11)
        cfg = ExecutorConfig(step_limit=3, max_consecutive_replans=4)
        log = execute_episode(state, obs, chain, stub_plan_source(), FarApartPolicy(), cfg, RngStream(8))
        # every acceptance cycle generated exactly max_consecutive_replans + 1 plans
        assert log.plan_generations and len(log.plan_generations) % 5 == 0
        assert log.replan_count >= 4

    def test_open_loop_has_no_quality_replans(self):
        chain, state, obs = self.setup_episode(13)
        cfg = ExecutorConfig(step_limit=30, mode="open", open_interval=4,
                             replan_threshold=1e-9 + 1e-10, transition_threshold=1e-10)
        # even with an absurdly tight replan threshold the open loop never checks it
        log = execute_episode(state, obs, chain, stub_plan_source(), ConstantEmbedPolicy(),
                              cfg, RngStream(9))
        accepted_first_try = len(log.plan_generations)
        assert log.length == 30
        # one plan per exhaustion cycle only: ceil over interval*K consumption
        assert accepted_first_try <= 30 // (4 * 4) + 2

    def test_open_interval_equal_to_limit_pursues_first_goal_only(self):
        chain, state, obs = self.setup_episode(15)
        cfg = ExecutorConfig(step_limit=20, mode="open", open_interval=20)
        log = execute_episode(state, obs, chain, stub_plan_source(), tiny_policy(17), cfg, RngStream(10))
        assert all(s.i_sub == 1 for s in log.steps)
        assert log.transitions == []

    def test_mode_equivalence_at_degenerate_settings(self):
        # D_S = 0 (never advance), interval = T, D_R huge: closed == open.
        chain, state, obs = self.setup_episode(17)
        policy = tiny_policy(19)
        base = dict(step_limit=30, replan_threshold=float("inf"), transition_threshold=0.0)
        closed = execute_episode(state, obs, chain, stub_plan_source(), policy,
                                 ExecutorConfig(mode="closed", **base), RngStream(12))
        open_ = execute_episode(state, obs, chain, stub_plan_source(), policy,
                                ExecutorConfig(mode="open", open_interval=30, **base), RngStream(12))
        assert [s.action for s in closed.steps] == [s.action for s in open_.steps]
        assert closed.tasks_completed == open_.tasks_completed

    def test_oracle_completes_chains(self):
        done = 0
        for seed in range(20):
            chain = sample_chain(RngStream(1000 + seed))
            log = run_oracle_episode(chain, RngStream(2000 + seed))
            done += log.tasks_completed == 5
        assert done >= 19

    def test_jsonl_roundtrip(self, tmp_path):
        chain, state, obs = self.setup_episode(21)
        cfg = ExecutorConfig(step_limit=10)
        log = execute_episode(state, obs, chain, stub_plan_source(), tiny_policy(23), cfg, RngStream(14))
        path = tmp_path / "ep.jsonl"
        log.write_jsonl(path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == log.length + 1  # summary + steps
        import json

        assert json.loads(lines[0])["summary"]["mode"] == "closed"
