"""Shared float64 gradient-check cases (per layer and per reduced model)."""

import numpy as np

from letterdec import nn
from letterdec.models import ChannelAttention, DepthAttention, Inception, ModelConfig, build_model
from letterdec.nn import Tensor, functional as F

REDUCED = {
    "DeepConvNet": dict(temporal_filters=4, block_filters=(5, 6)),
    "EEGNet": dict(temporal_filters=3, depth_multiplier=2, block_filters=(4,)),
    "EEGInception": dict(temporal_filters=2, block_filters=(3, 3)),
    "LMDA": dict(ca_depth=4, block_filters=(3,)),
}


def _t(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _weighted(out, rng):
    # random linear functional so every output element contributes
    w = rng.standard_normal(out.shape)
    return lambda o: (o * Tensor(w)).sum()


def layer_cases():
    """name -> (fn, tensors)."""
    rng = np.random.default_rng(0)
    cases = {}

    def add(name, build, tensors):
        probe = build()
        reduce = _weighted(probe, rng)
        cases[name] = (lambda: reduce(build()), tensors)

    x, w = _t(rng, 2, 3, 5, 9), _t(rng, 4, 3, 1, 4)
    add("conv_temporal_same", lambda: F.conv2d(x, w, padding="same"), [x, w])
    x2, w2 = _t(rng, 2, 4, 5, 7), _t(rng, 8, 1, 5, 1)
    add("conv_spatial_grouped", lambda: F.conv2d(x2, w2, groups=4), [x2, w2])
    x3, w3, b3 = _t(rng, 2, 4, 1, 11), _t(rng, 4, 1, 1, 3), _t(rng, 4)
    add("conv_depthwise_bias", lambda: F.conv2d(x3, w3, b3, groups=4, padding="same"), [x3, w3, b3])
    x4, w4 = _t(rng, 2, 2, 3, 6), _t(rng, 6, 2, 2, 3)
    add("conv_dense_valid", lambda: F.conv2d(x4, w4), [x4, w4])
    xb, g, b = _t(rng, 4, 3, 2, 5), _t(rng, 3), _t(rng, 3)
    rm, rv = np.zeros(3), np.ones(3)
    add("batch_norm_train", lambda: F.batch_norm(xb, g, b, rm.copy(), rv.copy(), True), [xb, g, b])
    add("batch_norm_eval", lambda: F.batch_norm(xb, g, b, rm + 0.3, rv * 2, False), [xb, g, b])
    xe = _t(rng, 3, 2, 1, 7)
    add("elu", lambda: F.elu(xe), [xe])
    xp = _t(rng, 2, 2, 1, 13)
    add("pool_avg", lambda: F.pool_avg(xp, 4), [xp])
    add("pool_avg_strided", lambda: F.pool_avg(xp, 4, 3), [xp])
    xd, wd, bd = _t(rng, 3, 5), _t(rng, 5, 4), _t(rng, 4)
    add("dense", lambda: F.dense(xd, wd, bd), [xd, wd, bd])
    xs = _t(rng, 3, 6)
    add("softmax", lambda: F.softmax(xs, axis=1), [xs])
    xl = _t(rng, 5, 7)
    labels = rng.integers(0, 7, 5)
    cases["softmax_cross_entropy"] = (lambda: F.softmax_cross_entropy(xl, labels), [xl])
    xc1, xc2 = _t(rng, 2, 2, 1, 3), _t(rng, 2, 3, 1, 3)
    add("concat", lambda: nn.concat([xc1, xc2], axis=1), [xc1, xc2])
    xm, ym = _t(rng, 3, 4), _t(rng, 1, 4)
    add("broadcast_arith", lambda: (xm * ym - xm / 2.0 + ym).mean(axis=0, keepdims=True), [xm, ym])
    mask_rng = np.random.default_rng(3)
    xdrop = _t(rng, 4, 6)
    state = mask_rng.bit_generator.state

    def drop():
        mask_rng.bit_generator.state = state
        return F.dropout(xdrop, 0.5, True, mask_rng)
    add("dropout", drop, [xdrop])

    def module_case(name, mod, shape):
        mod.astype(np.float64)
        xin = _t(rng, *shape)
        add(name, lambda: mod(xin), [xin] + mod.parameters())
    module_case("inception", Inception(2, 3, (5, 2, 1), rng), (2, 2, 3, 8))
    module_case("channel_attention", ChannelAttention(3, 4, rng), (2, 1, 4, 6))
    module_case("depth_attention", DepthAttention(5, 3, rng), (2, 5, 3, 6))
    return cases


def model_case(arch, seed=0, batch=4, C=24, T=400):
    cfg = ModelConfig.for_arch(arch, n_channels=C, n_timepoints=T, **REDUCED[arch])
    m = build_model(cfg, seed=seed).astype(np.float64)
    m.train()
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal((batch, 1, C, T))
    y = rng.integers(0, cfg.n_classes, batch)

    def fn():
        m.reseed_dropout(7)
        return F.softmax_cross_entropy(m(Tensor(x)), y)
    return fn, m.parameters()
