import numpy as np
import pytest

from visuoloop import nn
from visuoloop.env import generate_dataset
from visuoloop.nn import RngStream, Tensor
from visuoloop.policy import (
    CompletionScorer,
    PairData,
    PolicyConfig,
    PolicyModel,
    cosine_distance,
    infonce_loss,
    measure_error,
    policy_losses,
    sample_intervals,
    train_completion_scorer,
    train_policy,
)


@pytest.fixture(scope="module")
def model():
    return PolicyModel(PolicyConfig(), RngStream(0))


@pytest.fixture(scope="module")
def small_dataset():
    return generate_dataset(12, seed=31)


class TestEncoder:
    def test_deterministic(self, model, small_dataset):
        obs = small_dataset.episodes[0].frames[0]
        e1 = model.encode_state(obs, "current")
        e2 = model.encode_state(obs, "current")
        assert np.array_equal(e1.vector, e2.vector)

    def test_output_dim(self, model, small_dataset):
        obs = small_dataset.episodes[0].frames[3]
        assert model.encode_state(obs, "goal").vector.shape == (64,)

    def test_queries_produce_distinct_embeddings(self, model, small_dataset):
        # The quantitative check (cosine distance > 1e-3) needs a trained
        # checkpoint and lives in the acceptance suite.
        obs = small_dataset.episodes[0].frames[0]
        a = model.encode_state(obs, "current").vector
        b = model.encode_state(obs, "goal").vector
        assert not np.array_equal(a, b)

    def test_bad_shape_rejected(self, model):
        with pytest.raises(nn.ContractViolation):
            model.encode_state(np.zeros((4, 8, 8), np.float32), "current")

    def test_head_count_adjusts_to_divisor(self):
        m = PolicyModel(PolicyConfig(embed_dim=64, heads=12), RngStream(1))
        assert m.heads == 8  # largest divisor of 64 that is <= 12
        m = PolicyModel(PolicyConfig(embed_dim=60, heads=12), RngStream(1))
        assert m.heads == 12


class TestFusion:
    def test_identity_gate_is_pure_projection(self, model, small_dataset):
        obs = small_dataset.episodes[0].frames[0][None]
        app = Tensor(np.ascontiguousarray(obs[:, :3]))
        dep = Tensor(np.ascontiguousarray(obs[:, 3:]))
        tok_a = nn.linear(nn.patchify(app, 4), model.params["tok.app.w"], model.params["tok.app.b"])
        tok_d = nn.linear(nn.patchify(dep, 4), model.params["tok.dep.w"], model.params["tok.dep.b"])
        ref = nn.linear(nn.concat([tok_a, tok_d], axis=-1), model.params["fuse.w"], model.params["fuse.b"])
        out = model.fuse_modalities(tok_a, tok_d, gate_override=np.ones((1, 64)))
        assert np.allclose(out.data, ref.data, atol=1e-6)

    def test_zero_gate_zeros_output(self, model, small_dataset):
        obs = small_dataset.episodes[0].frames[0][None]
        tok_a = nn.linear(nn.patchify(Tensor(np.ascontiguousarray(obs[:, :3])), 4),
                          model.params["tok.app.w"], model.params["tok.app.b"])
        tok_d = nn.linear(nn.patchify(Tensor(np.ascontiguousarray(obs[:, 3:])), 4),
                          model.params["tok.dep.w"], model.params["tok.dep.b"])
        out = model.fuse_modalities(tok_a, tok_d, gate_override=np.zeros((1, 64)))
        assert np.all(out.data == 0.0)

    def test_token_count_mismatch(self, model):
        a = Tensor(np.zeros((1, 16, 64), np.float32))
        b = Tensor(np.zeros((1, 9, 64), np.float32))
        with pytest.raises(nn.ContractViolation):
            model.fuse_modalities(a, b)

    def test_depth_pathway_live(self, model, small_dataset):
        obs = small_dataset.episodes[0].frames[0].copy()
        base = model.encode_state(obs, "current").vector
        obs2 = obs.copy()
        obs2[3] = np.clip(obs2[3] + 0.3, 0, 1)
        pert = model.encode_state(obs2, "current").vector
        assert not np.allclose(base, pert)


class TestErrorAndDistance:
    def test_zero_error(self):
        q = np.arange(5.0)
        assert np.array_equal(measure_error(q, q), np.zeros(5))

    def test_antisymmetry(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=8), rng.normal(size=8)
        assert np.allclose(measure_error(a, b), -measure_error(b, a))

    def test_norm_is_euclidean_distance(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=8), rng.normal(size=8)
        assert np.linalg.norm(measure_error(a, b)) == pytest.approx(np.linalg.norm(a - b))

    def test_dim_mismatch(self):
        with pytest.raises(nn.ContractViolation):
            measure_error(np.zeros(3), np.zeros(4))

    def test_cosine_distance_identities(self):
        a = np.array([1.0, 2.0, 3.0])
        assert cosine_distance(a, a) == pytest.approx(0.0, abs=1e-12)
        assert cosine_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(1.0)
        assert cosine_distance(a, -a) == pytest.approx(2.0)

    def test_cosine_zero_vector_rejected(self):
        with pytest.raises(nn.ContractViolation):
            cosine_distance(np.zeros(3), np.ones(3))


class TestDecoder:
    def test_zero_weights_neutral_output(self):
        m = PolicyModel(PolicyConfig(), RngStream(2))
        for name in ("dec.w1", "dec.b1", "dec.w2", "dec.b2", "dec.w3", "dec.b3"):
            m.params[name].data = np.zeros_like(m.params[name].data)
        a = m.decode_action(np.ones(64, np.float32))
        assert a.dx == 0.0 and a.dy == 0.0 and a.gripper == pytest.approx(0.5)

    def test_bounded_for_any_input(self, model):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = model.decode_action((rng.normal(size=64) * 100).astype(np.float32))
            assert abs(a.dx) <= 0.05 and abs(a.dy) <= 0.05 and 0.0 <= a.gripper <= 1.0


class TestTraining:
    def test_interval_sampler_uniform(self):
        draws = sample_intervals(RngStream(7), 10_000, 5)
        freq = np.bincount(draws, minlength=6)[1:] / 10_000
        assert np.all(np.abs(freq - 0.2) < 0.015)

    def test_perfect_prediction_zero_loss(self, small_dataset):
        # Decoder outputs exactly the labels -> mse 0, bce 0 for hard labels.
        m = PolicyModel(PolicyConfig(), RngStream(4))
        data = PairData(small_dataset)
        _, _, labels = data.gather(np.arange(4), np.full(4, 2))

        class Echo(PolicyModel):
            def __init__(self, base, lab):
                self.__dict__.update(base.__dict__)
                self._lab = lab

            def decoder_head(self, err):
                pre = np.arctanh(np.clip(self._lab[:, :2] / 0.05, -0.999999, 0.999999))
                logits = np.where(self._lab[:, 2] > 0.5, 500.0, -500.0)
                return Tensor(np.concatenate([pre, logits[:, None]], axis=1).astype(np.float32))

        echo = Echo(m, labels)
        obs_cur, obs_goal, labels = data.gather(np.arange(4), np.full(4, 2))
        total, mse, bce = policy_losses(echo, obs_cur, obs_goal, labels)
        assert mse == pytest.approx(0.0, abs=1e-10)
        assert bce == pytest.approx(0.0, abs=1e-6)

    def test_loss_decreases(self, small_dataset):
        cfg = PolicyConfig(embed_dim=32, heads=4, enc_blocks=1, fused_blocks=1,
                          epochs=20, batch=64, seed=5, lr=3e-3)
        res = train_policy(small_dataset, cfg)
        first = np.mean([r[4] for r in res.log_rows[:8]])
        last = np.mean([r[4] for r in res.log_rows[-8:]])
        assert last < 0.75 * first

    def test_bc_mode_trains(self, small_dataset):
        cfg = PolicyConfig(epochs=1, batch=64, seed=5, error_mode="current_only")
        res = train_policy(small_dataset, cfg)
        assert np.isfinite(res.log_rows[-1][4])

    def test_checkpoint_roundtrip(self, small_dataset, tmp_path):
        from visuoloop.policy import load_policy

        cfg = PolicyConfig(epochs=1, batch=64, seed=6)
        res = train_policy(small_dataset, cfg, out_dir=tmp_path)
        reloaded = load_policy(cfg, tmp_path / "policy.clvr")
        obs = small_dataset.episodes[0].frames[0]
        assert np.allclose(
            res.model.encode_state(obs, "goal").vector,
            reloaded.encode_state(obs, "goal").vector,
            atol=1e-6,
        )


class TestCompletionScore:
    def test_untrained_scorer_rejected(self):
        s = CompletionScorer(12, 64)
        with pytest.raises(nn.ContractViolation):
            s.score(np.zeros(64), np.ones(64), 0)

    def test_saturated_infonce_near_zero(self):
        # Positive aligned with the anchor, negatives opposed: loss ~ 0.
        s = CompletionScorer(2, 8)
        z = s.project(0)
        pos = z[None].astype(np.float32)
        neg = -np.tile(z, (1, 4, 1)).astype(np.float32)
        loss = infonce_loss(s, np.array([0]), pos, neg)
        assert loss.item() < 1e-6

    def test_final_scores_above_initial(self, small_dataset):
        cfg = PolicyConfig(epochs=2, batch=64, seed=8)
        res = train_policy(small_dataset, cfg)
        scorer = CompletionScorer(12, 64, seed=9)
        train_completion_scorer(scorer, res.model, small_dataset, RngStream(10), iters=150)
        from visuoloop.policy import encode_episode_frames

        wins = 0
        for ep in small_dataset.episodes:
            e = encode_episode_frames(res.model, ep.frames)
            s0 = scorer.score(e[0], e[0], ep.task)
            s1 = scorer.score(e[0], e[-1], ep.task)
            wins += s1 > s0
        assert wins >= int(0.75 * len(small_dataset.episodes))
