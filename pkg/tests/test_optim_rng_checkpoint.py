import numpy as np
import pytest

from visuoloop import nn
from visuoloop.nn import AdamW, EmaState, Params, RngStream, Tensor


def make_params(values):
    p = Params()
    for i, v in enumerate(values):
        p.add(f"p{i}", np.asarray(v, dtype=np.float32))
    return p


class TestAdamW:
    def test_zero_grad_zero_decay_is_noop(self):
        p = make_params([np.ones((3, 2))])
        opt = AdamW(p, lr=1e-3)
        before = p["p0"].data.copy()
        p["p0"].grad = np.zeros((3, 2), dtype=np.float32)
        opt.step()
        assert np.array_equal(p["p0"].data, before)
        assert opt.step_count == 1

    def test_decoupled_decay_scales_param(self):
        p = make_params([np.full((4,), 2.0)])
        opt = AdamW(p, lr=1e-3, weight_decay=0.01)
        p["p0"].grad = np.zeros(4, dtype=np.float32)
        opt.step()
        assert np.allclose(p["p0"].data, 2.0 * (1 - 1e-3 * 0.01), rtol=1e-6)

    def test_constant_gradient_update_approaches_lr(self):
        # Closed-form Adam fixed point: with constant g, |delta| -> lr.
        p = make_params([np.zeros(1)])
        lr = 1e-3
        opt = AdamW(p, lr=lr)
        g = np.array([0.37], dtype=np.float32)
        prev = p["p0"].data.copy()
        for _ in range(4000):
            p["p0"].grad = g.copy()
            opt.step()
        delta = abs(float(prev - p["p0"].data)) / 4000  # mean per-step magnitude
        assert delta == pytest.approx(lr, rel=0.05)

    def test_shape_mismatch_rejected(self):
        p = make_params([np.zeros((2, 2))])
        opt = AdamW(p)
        p["p0"].grad = np.zeros(3, dtype=np.float32)
        with pytest.raises(nn.ContractViolation):
            opt.step()


class TestEma:
    def test_fixed_point(self):
        p = make_params([np.full((3,), 0.5)])
        ema = EmaState(p, decay=0.999)
        ema.update(p)
        assert np.allclose(ema.shadow["p0"], 0.5)

    def test_single_step(self):
        p = make_params([np.ones(2)])
        ema = EmaState(p, decay=0.999)
        ema.shadow["p0"][:] = 0.0
        ema.update(p)
        assert np.allclose(ema.shadow["p0"], 0.001, atol=1e-9)

    def test_geometric_series_1000_steps(self):
        p = make_params([np.ones(1)])
        ema = EmaState(p, decay=0.999)
        ema.shadow["p0"][:] = 0.0
        for _ in range(1000):
            ema.update(p)
        expected = 1 - 0.999 ** 1000  # ~0.6323
        assert float(ema.shadow["p0"]) == pytest.approx(expected, abs=1e-4)

    def test_decay_bounds(self):
        p = make_params([np.ones(1)])
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(nn.ContractViolation):
                EmaState(p, decay=bad)

    def test_convex_combination_bound(self):
        # Shadow stays inside [min, max] of a monotone parameter history.
        p = make_params([np.zeros(4)])
        ema = EmaState(p, decay=0.9)
        history = np.linspace(0, 1, 50)
        for v in history:
            p["p0"].data = np.full(4, v, dtype=np.float32)
            ema.update(p)
        assert np.all(ema.shadow["p0"] >= 0.0) and np.all(ema.shadow["p0"] <= 1.0)


class TestRng:
    def test_same_seed_same_normals(self):
        a = RngStream(1234).normal(100)
        b = RngStream(1234).normal(100)
        assert np.array_equal(a, b)

    def test_substreams_differ(self):
        root = RngStream(7)
        a = root.substream("planner").normal(50)
        b = root.substream("policy").normal(50)
        assert not np.array_equal(a, b)

    def test_substream_deterministic(self):
        a = RngStream(7).substream("x").substream(3).normal(10)
        b = RngStream(7).substream("x").substream(3).normal(10)
        assert np.array_equal(a, b)

    def test_normal_moments(self):
        x = RngStream(42).normal(100_000, dtype=np.float64)
        assert abs(x.mean()) < 0.02
        assert abs(x.var() - 1.0) < 0.05


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        arrays = {
            "enc.w": np.arange(12, dtype=np.float32).reshape(3, 4),
            "enc.b": np.array([1.5], dtype=np.float32),
            "head.w": np.zeros((2, 2, 2), dtype=np.float32),
        }
        path = tmp_path / "model.clvr"
        nn.save_checkpoint(path, arrays)
        loaded = nn.load_checkpoint(path)
        assert list(loaded) == list(arrays)
        for k in arrays:
            assert np.array_equal(loaded[k], arrays[k])

    def test_header_layout(self, tmp_path):
        path = tmp_path / "m.clvr"
        nn.save_checkpoint(path, {"a": np.zeros(2, dtype=np.float32)})
        blob = path.read_bytes()
        assert blob[:4] == b"CLVR"
        assert int.from_bytes(blob[4:8], "little") == 1  # version
        assert int.from_bytes(blob[8:12], "little") == 1  # param count

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.clvr"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(nn.ContractViolation):
            nn.load_checkpoint(path)


def test_params_swapped_context():
    p = make_params([np.ones(3)])
    with p.swapped({"p0": np.zeros(3, dtype=np.float32)}):
        assert np.array_equal(p["p0"].data, np.zeros(3))
    assert np.array_equal(p["p0"].data, np.ones(3))
