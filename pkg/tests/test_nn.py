import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradcases import layer_cases
from letterdec import nn
from letterdec.nn import Tensor, functional as F


@pytest.mark.parametrize("name", sorted(layer_cases()))
def test_layer_gradients(name):
    fn, tensors = layer_cases()[name]
    assert nn.gradient_check(fn, tensors) < 1e-4


def naive_conv(x, w, groups):
    b, cin, H, W = x.shape
    cout, cg, kh, kw = w.shape
    out = np.zeros((b, cout, H - kh + 1, W - kw + 1))
    per = cout // groups
    for o in range(cout):
        g = o // per
        for i in range(out.shape[2]):
            for j in range(out.shape[3]):
                out[:, o, i, j] = (x[:, g * cg:(g + 1) * cg, i:i + kh, j:j + kw] * w[o]).sum(axis=(1, 2, 3))
    return out


@pytest.mark.parametrize("shape,wshape,groups", [
    ((2, 3, 4, 9), (6, 3, 2, 3), 1),
    ((2, 4, 5, 7), (8, 1, 5, 1), 4),
    ((1, 4, 1, 10), (4, 1, 1, 3), 4),
    ((2, 1, 6, 8), (3, 1, 1, 4), 1),
    ((2, 6, 3, 5), (3, 2, 3, 1), 3),
])
def test_conv_matches_naive(rng, shape, wshape, groups):
    x, w = rng.standard_normal(shape), rng.standard_normal(wshape)
    out = F.conv2d(Tensor(x), Tensor(w), groups=groups).data
    np.testing.assert_allclose(out, naive_conv(x, w, groups), atol=1e-12)


def test_conv_same_padding_shape(rng):
    for k in (1, 2, 5, 6):
        x = Tensor(rng.standard_normal((1, 2, 3, 11)))
        w = Tensor(rng.standard_normal((4, 2, 1, k)))
        out = F.conv2d(x, w, padding="same")
        assert out.shape == (1, 4, 3, 11)
        # even kernels put the extra zero on the right
        xp = np.pad(x.data, ((0, 0), (0, 0), (0, 0), ((k - 1) // 2, k // 2)))
        np.testing.assert_allclose(out.data, naive_conv(xp, w.data, 1), atol=1e-12)


def test_conv_errors(rng):
    with pytest.raises(ValueError, match="groups"):
        F.conv2d(Tensor(np.zeros((1, 3, 2, 2))), Tensor(np.zeros((2, 1, 1, 1))), groups=2)
    with pytest.raises(ValueError, match="does not fit"):
        F.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 1))))


def test_batch_norm_train_stats(rng):
    x = rng.standard_normal((6, 3, 2, 5)) * 4 + 2
    rm, rv = np.zeros(3), np.ones(3)
    out = F.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), rm, rv, True)
    np.testing.assert_allclose(out.data.mean(axis=(0, 2, 3)), 0, atol=1e-12)
    np.testing.assert_allclose(out.data.var(axis=(0, 2, 3)), 1, atol=1e-5)
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3), ddof=1))


def test_batch_norm_single_sample_rejected():
    with pytest.raises(ValueError, match="at least 2"):
        F.batch_norm(Tensor(np.zeros((1, 2, 1, 3))), Tensor(np.ones(2)), Tensor(np.zeros(2)),
                     np.zeros(2), np.ones(2), True)


def test_softmax_ce_value():
    logits = np.array([[0.0, 0.0], [np.log(3.0), 0.0]])
    loss = F.softmax_cross_entropy(Tensor(logits), [0, 1])
    assert loss.item() == pytest.approx((np.log(2) + np.log(4)) / 2)
    with pytest.raises(ValueError):
        F.softmax_cross_entropy(Tensor(logits), [0, 2])


def test_softmax_ce_stable_for_large_logits():
    loss = F.softmax_cross_entropy(Tensor(np.array([[1000.0, 0.0]])), [0])
    assert np.isfinite(loss.item()) and loss.item() == pytest.approx(0.0)


def test_dropout_eval_identity_and_scale(rng):
    x = Tensor(np.ones((200, 50)))
    assert F.dropout(x, 0.5, False, None) is x
    y = F.dropout(x, 0.5, True, np.random.default_rng(0)).data
    assert set(np.unique(y)) <= {0.0, 2.0}
    assert abs(y.mean() - 1) < 0.05


def test_pool_floor_mode():
    x = Tensor(np.arange(10.0).reshape(1, 1, 1, 10))
    np.testing.assert_allclose(F.pool_avg(x, 4).data.ravel(), [1.5, 5.5])


def test_gradient_accumulates_over_shared_use():
    a = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    (a * a + a).sum().backward()
    np.testing.assert_allclose(a.grad, [5.0, 7.0])


def test_no_grad_skips_graph():
    a = Tensor(np.ones(3), requires_grad=True)
    with nn.no_grad():
        b = a * 2.0
    assert not b.requires_grad


def test_check_finite():
    with pytest.raises(nn.DivergenceError):
        F.check_finite(Tensor(np.array([1.0, np.nan])), "x")


def test_adam_matches_reference():
    rng = np.random.default_rng(0)
    p = Tensor(rng.standard_normal(4), requires_grad=True)
    ref = p.data.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    opt = nn.Adam([p], lr=0.01)
    for t in range(1, 6):
        g = rng.standard_normal(4)
        p.grad = g.copy()
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-12)


def test_adam_rejects_nonfinite_without_update():
    p = Tensor(np.ones(2), requires_grad=True)
    opt = nn.Adam([p])
    p.grad = np.array([1.0, np.inf])
    with pytest.raises(nn.DivergenceError):
        opt.step()
    np.testing.assert_array_equal(p.data, [1.0, 1.0])
    assert opt.state.step == 0


def test_adam_minimises_quadratic():
    p = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = nn.Adam([p], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        (p * p).sum().backward()
        opt.step()
    assert np.abs(p.data).max() < 1e-2


def _small_net(seed):
    rng = np.random.default_rng(seed)
    return nn.Sequential(nn.Conv2d(1, 2, (1, 3), rng, padding="same"), nn.BatchNorm2d(2), nn.ELU(),
                         nn.Flatten(), nn.Dense(2 * 2 * 5, 3, rng))


def test_checkpoint_round_trip(tmp_path):
    a, b = _small_net(0), _small_net(1)
    a.train()
    a(Tensor(np.random.default_rng(0).standard_normal((4, 1, 2, 5)).astype(np.float32)))
    nn.save_checkpoint(a, tmp_path / "c.bin")
    nn.load_checkpoint(b, tmp_path / "c.bin")
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and pa.data.tobytes() == pb.data.tobytes()
    for (na, ba), (nb, bb) in zip(a.named_buffers(), b.named_buffers()):
        assert ba.tobytes() == bb.tobytes()
    nn.save_checkpoint(b, tmp_path / "d.bin")
    assert (tmp_path / "c.bin").read_bytes() == (tmp_path / "d.bin").read_bytes()


def test_checkpoint_corruption(tmp_path):
    a = _small_net(0)
    nn.save_checkpoint(a, tmp_path / "c.bin")
    raw = bytearray((tmp_path / "c.bin").read_bytes())
    raw[20] ^= 0xFF
    (tmp_path / "c.bin").write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        nn.load_checkpoint(a, tmp_path / "c.bin")


@given(st.integers(1, 4), st.integers(2, 12), st.integers(1, 5))
def test_pool_mean_property(b, t, k):
    if k > t:
        return
    x = np.random.default_rng(t).standard_normal((b, 2, 1, t))
    out = F.pool_avg(Tensor(x), k).data
    n = t // k
    np.testing.assert_allclose(out, x[..., :n * k].reshape(b, 2, 1, n, k).mean(-1))


@given(st.floats(-30, 30))
def test_elu_values(v):
    out = F.elu(Tensor(np.array([v]))).data[0]
    assert out == pytest.approx(v if v > 0 else np.expm1(v), rel=1e-12, abs=1e-15)


def test_gradient_check_dense_example():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
    w = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
    def f():
        y = F.dense(x, w)
        return (y * y).sum()
    assert nn.gradient_check(f, [x, w]) < 1e-6


def test_gradient_check_detects_corrupted_backward():
    from letterdec.nn.tensor import make_result
    x = Tensor(np.random.default_rng(1).standard_normal(5), requires_grad=True)

    def bad_square(t):
        return make_result(t.data * t.data, (t,), lambda g: (2 * 2 * g * t.data,))
    assert nn.gradient_check(lambda: bad_square(x).sum(), [x]) > 0.4
