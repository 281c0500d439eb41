import numpy as np
import pytest

from visuoloop import nn
from visuoloop.nn import Tensor

from gradcheck import fd_gradcheck


def rng():
    return np.random.default_rng(0)


def test_sum_gradient_is_ones():
    x = Tensor(np.zeros(3, dtype=np.float32), requires_grad=True)
    nn.reduce_sum(x).backward()
    assert np.array_equal(x.grad, np.ones(3, dtype=np.float32))


def test_square_sum_gradient():
    x = Tensor(np.array([1.0, 2.0, 3.0], dtype=np.float32), requires_grad=True)
    nn.reduce_sum(x * x).backward()
    assert np.allclose(x.grad, [2.0, 4.0, 6.0])


def test_backward_rejects_nonscalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(nn.ContractViolation):
        (x * x).backward()


def test_nan_fault_reports_node():
    nn.set_nan_checks(True)
    try:
        x = Tensor(np.array([1.0, -1.0], dtype=np.float32), requires_grad=True)
        y = nn.reduce_sum(nn.log(x))  # log(-1) -> nan
        with pytest.raises(nn.NumericFault, match="node"):
            y.backward()
    finally:
        nn.set_nan_checks(False)


def test_grad_accumulates_over_repeated_use():
    x = Tensor(np.array([2.0], dtype=np.float64), requires_grad=True)
    y = nn.reduce_sum(x * x + x * 3.0)
    y.backward()
    assert np.allclose(x.grad, [7.0])


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_mlp_loss_matches_finite_differences(dtype):
    # Random 2-layer MLP scalar loss; the spec's gradcheck oracle case.
    r = rng()
    x = r.normal(size=(4, 6))
    w1 = r.normal(size=(6, 8)) * 0.5
    b1 = r.normal(size=(8,)) * 0.1
    w2 = r.normal(size=(8, 3)) * 0.5
    b2 = r.normal(size=(3,)) * 0.1

    def loss(xt, w1t, b1t, w2t, b2t):
        h = nn.tanh(nn.matmul(xt, w1t) + b1t)
        o = nn.matmul(h, w2t) + b2t
        return nn.reduce_mean(o * o)

    fd_gradcheck(loss, [x, w1, b1, w2, b2], r, dtype=dtype)


@pytest.mark.parametrize(
    "name,fn,shape",
    [
        ("matmul", lambda a, b: nn.reduce_mean(nn.matmul(a, b) ** 2.0), None),
        ("add_broadcast", lambda a, b: nn.reduce_sum((a + b) ** 2.0), None),
        ("mul_broadcast", lambda a, b: nn.reduce_sum(nn.mul(a, b) ** 3.0), None),
    ],
)
def test_binary_primitive_gradients(name, fn, shape):
    r = rng()
    if name == "matmul":
        arrs = [r.normal(size=(3, 4)), r.normal(size=(4, 5))]
    else:
        arrs = [r.normal(size=(3, 4)), r.normal(size=(4,))]
    fd_gradcheck(fn, arrs, r)


@pytest.mark.parametrize(
    "op",
    [nn.relu, nn.tanh, nn.sigmoid, nn.exp, nn.softplus, nn.absolute, nn.silu],
)
def test_elementwise_gradients(op):
    r = rng()
    x = r.normal(size=(5, 3)) + 0.05  # nudge away from relu/abs kinks
    fd_gradcheck(lambda t: nn.reduce_mean(op(t) ** 2.0), [x], r)


def test_log_sqrt_gradients():
    r = rng()
    x = r.uniform(0.5, 2.0, size=(4, 4))
    fd_gradcheck(lambda t: nn.reduce_sum(nn.log(t) + nn.sqrt(t)), [x], r)


def test_softmax_gradient():
    r = rng()
    x = r.normal(size=(3, 7))
    fd_gradcheck(lambda t: nn.reduce_sum(nn.softmax(t, axis=-1) ** 2.0), [x], r)


def test_layer_norm_gradient_and_moments():
    r = rng()
    x = r.normal(size=(4, 9)) * 3 + 1
    y = nn.layer_norm(Tensor(x.astype(np.float64)))
    assert np.allclose(y.data.mean(axis=-1), 0, atol=1e-12)
    assert np.allclose(y.data.std(axis=-1), 1, atol=1e-5)
    fd_gradcheck(lambda t: nn.reduce_sum(nn.layer_norm(t) ** 3.0), [x], r)


def test_mean_sum_axis_gradients():
    r = rng()
    x = r.normal(size=(3, 4, 5))
    fd_gradcheck(lambda t: nn.reduce_sum(nn.reduce_mean(t, axis=(0, 2)) ** 2.0), [x], r)
    fd_gradcheck(lambda t: nn.reduce_mean(nn.reduce_sum(t, axis=1, keepdims=True) ** 2.0), [x], r)


def test_concat_slice_gradients():
    r = rng()
    a = r.normal(size=(3, 2))
    b = r.normal(size=(3, 4))

    def fn(at, bt):
        c = nn.concat([at, bt], axis=1)
        return nn.reduce_sum(c[:, 1:5] ** 2.0)

    fd_gradcheck(fn, [a, b], r)


def test_reshape_transpose_gradients():
    r = rng()
    x = r.normal(size=(2, 3, 4))

    def fn(t):
        y = nn.transpose(nn.reshape(t, (2, 12)), (1, 0))
        return nn.reduce_sum(y ** 2.0)

    fd_gradcheck(fn, [x], r)


def test_embedding_gradient():
    r = rng()
    table = r.normal(size=(7, 5))
    idx = np.array([1, 3, 3, 0])

    def fn(t):
        return nn.reduce_sum(nn.embedding(t, idx) ** 2.0)

    fd_gradcheck(fn, [table], r)


def test_gather_last_gradient():
    r = rng()
    src = r.normal(size=(4, 9))
    idx = r.integers(0, 9, size=(4, 6))

    def fn(t):
        return nn.reduce_sum(nn.gather_last(t, idx) ** 2.0)

    fd_gradcheck(fn, [src], r)


def test_attention_gradient():
    from visuoloop.nn import attention

    r = rng()
    q = r.normal(size=(2, 3, 8))
    k = r.normal(size=(2, 5, 8))
    v = r.normal(size=(2, 5, 8))

    def fn(qt, kt, vt):
        return nn.reduce_mean(attention(qt, kt, vt, heads=2) ** 2.0)

    fd_gradcheck(fn, [q, k, v], r)


def test_causal_attention_is_causal():
    from visuoloop.nn import attention, causal_mask

    r = rng()
    x = r.normal(size=(1, 6, 8)).astype(np.float32)
    mask = causal_mask(6)
    base = attention(Tensor(x), Tensor(x), Tensor(x), heads=2, mask=mask).data
    x2 = x.copy()
    x2[0, 4] += 10.0  # perturb a late position
    out = attention(Tensor(x2), Tensor(x2), Tensor(x2), heads=2, mask=mask).data
    assert np.allclose(base[0, :4], out[0, :4], atol=1e-6)
    assert not np.allclose(base[0, 4:], out[0, 4:])


def test_no_grad_blocks_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with nn.no_grad():
        y = nn.reduce_sum(x * x)
    assert not y.requires_grad


def test_patchify_roundtrip():
    from visuoloop.nn import patchify, unpatchify

    r = rng()
    x = r.normal(size=(2, 4, 16, 16)).astype(np.float32)
    tok = patchify(Tensor(x), 4)
    assert tok.shape == (2, 16, 64)
    back = unpatchify(tok, 4, 16, 16, 4)
    assert np.allclose(back.data, x)
