"""Differentiable layer primitives over :class:`~letterdec.nn.tensor.Tensor`.

Activations are 4-D ``(batch, depth, channels, time)``. Convolutions use
cross-correlation semantics and stride 1; downsampling is done by
:func:`pool_avg`.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .tensor import Tensor, as_tensor, make_result


class DivergenceError(FloatingPointError):
    """Raised when a forward or update step produced non-finite values."""


def _same_pad(k: int) -> tuple[int, int]:
    total = k - 1
    return total // 2, total - total // 2


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, groups: int = 1,
           padding: str = "valid") -> Tensor:
    """Grouped 2-D convolution, stride 1.

    ``x`` is ``(b, d_in, c, t)`` and ``w`` is ``(d_out, d_in // groups, kc, kt)``.
    ``padding`` is ``"valid"`` or ``"same"`` (zero padding, extra element on the
    right/bottom for even kernels).
    """
    b, cin, H, W = x.shape
    cout, cin_g, kh, kw = w.shape
    G = groups
    if cin != cin_g * G or cout % G:
        raise ValueError(f"conv2d: input depth {cin}, weight {w.shape} incompatible with groups={G}")
    if padding == "same":
        ph, pw = _same_pad(kh), _same_pad(kw)
    elif padding == "valid":
        ph, pw = (0, 0), (0, 0)
    else:
        raise ValueError(f"unknown padding mode {padding!r}")
    Hp, Wp = H + sum(ph), W + sum(pw)
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    if Ho < 1 or Wo < 1:
        raise ValueError(f"conv2d: kernel {(kh, kw)} does not fit input {(H, W)} with padding {padding!r}")
    cout_g = cout // G
    xd = x.data
    if ph != (0, 0) or pw != (0, 0):
        xd = np.pad(xd, ((0, 0), (0, 0), ph, pw))
    wd = w.data
    need_dx = x.requires_grad

    def crop(dxp):
        return dxp[:, :, ph[0]:ph[0] + H, pw[0]:pw[0] + W]

    if kw == 1 and Ho == 1:
        # kernel spans the whole (padded) height: one contraction over (d_in, c)
        K = cin_g * kh
        xr = xd.reshape(b, G, K, W)
        wr = wd.reshape(G, cout_g, K)
        out = np.matmul(wr, xr).reshape(b, cout, 1, W)

        def backward(g):
            gr = g.reshape(b, G, cout_g, W)
            gw = np.matmul(gr, xr.transpose(0, 1, 3, 2)).sum(axis=0).reshape(wd.shape)
            gx = None
            if need_dx:
                gx = crop(np.matmul(wr.transpose(0, 2, 1), gr).reshape(b, cin, Hp, W))
            return gx, gw

    elif kh == 1 and kw == 1:
        xr = xd.reshape(b, G, cin_g, H * W)
        wr = wd.reshape(G, cout_g, cin_g)
        out = np.matmul(wr, xr).reshape(b, cout, H, W)

        def backward(g):
            gr = g.reshape(b, G, cout_g, H * W)
            gw = np.matmul(gr, xr.transpose(0, 1, 3, 2)).sum(axis=0).reshape(wd.shape)
            gx = np.matmul(wr.transpose(0, 2, 1), gr).reshape(x.shape) if need_dx else None
            return gx, gw

    elif cin_g == 1 and G > 1:
        # depthwise: accumulate one kernel tap at a time
        m = cout_g
        xd = np.ascontiguousarray(xd)
        wr = np.ascontiguousarray(wd.reshape(G, m, kh, kw))
        out = _kernels.depthwise_conv(xd, wr, Ho, Wo).reshape(b, cout, Ho, Wo)

        def backward(g):
            gr = np.ascontiguousarray(g.reshape(b, G, m, Ho, Wo))
            gw = np.empty_like(wr)
            _kernels.depthwise_backward_weight(gr, xd, gw)
            gx = None
            if need_dx:
                gxp = np.zeros_like(xd)
                _kernels.depthwise_backward_input(gr, wr, gxp)
                gx = crop(gxp)
            return gx, gw.reshape(wd.shape)

    else:
        cols = sliding_window_view(xd, (kh, kw), axis=(2, 3))  # (b, cin, Ho, Wo, kh, kw)
        parts = []
        for gi in range(G):
            cg = cols[:, gi * cin_g:(gi + 1) * cin_g]
            wg = wd[gi * cout_g:(gi + 1) * cout_g]
            parts.append(np.tensordot(cg, wg, axes=([1, 4, 5], [1, 2, 3])))  # (b, Ho, Wo, cout_g)
        out = np.concatenate(parts, axis=3) if G > 1 else parts[0]
        out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

        def backward(g):
            gw = np.empty_like(wd)
            gxp = np.zeros_like(xd) if need_dx else None
            for gi in range(G):
                cg = cols[:, gi * cin_g:(gi + 1) * cin_g]
                gg = g[:, gi * cout_g:(gi + 1) * cout_g]
                gw[gi * cout_g:(gi + 1) * cout_g] = np.tensordot(gg, cg, axes=([0, 2, 3], [0, 2, 3]))
                if need_dx:
                    wg = wd[gi * cout_g:(gi + 1) * cout_g]
                    dcols = np.tensordot(gg, wg, axes=([1], [0]))  # (b, Ho, Wo, cin_g, kh, kw)
                    sub = gxp[:, gi * cin_g:(gi + 1) * cin_g]
                    for i in range(kh):
                        for j in range(kw):
                            sub[:, :, i:i + Ho, j:j + Wo] += dcols[..., i, j].transpose(0, 3, 1, 2)
            return (crop(gxp) if need_dx else None), gw

    if bias is None:
        return make_result(out, (x, w), backward)

    bd = bias.data.reshape(1, cout, 1, 1)
    out = out + bd

    def backward_b(g):
        gx, gw = backward(g)
        return gx, gw, g.sum(axis=(0, 2, 3))

    return make_result(out, (x, w, bias), backward_b)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Batch normalisation over every axis except depth (axis 1).

    In training mode the running statistics are updated in place; the
    running variance uses the unbiased estimator.
    """
    b, D = x.shape[:2]
    xd = np.ascontiguousarray(x.data)
    x3 = xd.reshape(b, D, -1)
    n = x3.shape[0] * x3.shape[2]
    gd = gamma.data.astype(np.float64)
    if training:
        if b < 2:
            raise ValueError("batch_norm in train mode needs a batch of at least 2")
        mu = np.empty(D)
        var = np.empty(D)
        _kernels.bn_stats(x3, mu, var)
        running_mean *= 1 - momentum
        running_mean += (momentum * mu).astype(running_mean.dtype)
        running_var *= 1 - momentum
        running_var += (momentum * var * (n / (n - 1))).astype(running_var.dtype)
    else:
        mu = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    inv_std = 1.0 / np.sqrt(var + eps)
    out = np.empty_like(xd)
    _kernels.bn_apply(x3, mu, inv_std, gd, beta.data.astype(np.float64), out.reshape(x3.shape))

    if training:
        def backward(g):
            g3 = np.ascontiguousarray(g).reshape(x3.shape)
            ggamma = np.empty(D)
            gbeta = np.empty(D)
            gx = np.empty_like(xd) if x.requires_grad else np.empty((1, 1, 1), xd.dtype)
            _kernels.bn_backward(g3, x3, mu, inv_std, gd, ggamma, gbeta,
                                 gx.reshape(x3.shape) if x.requires_grad else gx, x.requires_grad)
            return (gx if x.requires_grad else None), ggamma.astype(xd.dtype), gbeta.astype(xd.dtype)
    else:
        shape = (1, D) + (1,) * (x.ndim - 2)
        axes = (0,) + tuple(range(2, x.ndim))

        def backward(g):
            scale = (gd * inv_std).astype(xd.dtype).reshape(shape)
            gx = g * scale if x.requires_grad else None
            xhat = (xd - mu.astype(xd.dtype).reshape(shape)) * inv_std.astype(xd.dtype).reshape(shape)
            return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return make_result(out, (x, gamma, beta), backward)


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    xd = np.ascontiguousarray(x.data)
    out = np.empty_like(xd)
    _kernels.elu_forward(xd.reshape(-1), alpha, out.reshape(-1))

    def backward(g):
        gx = np.empty_like(xd)
        _kernels.elu_backward(xd.reshape(-1), out.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                              alpha, gx.reshape(-1))
        return (gx,)

    return make_result(out, (x,), backward)


def pool_avg(x: Tensor, kernel_t: int, stride_t: int | None = None) -> Tensor:
    """Average pooling along the last (time) axis, floor mode."""
    stride_t = kernel_t if stride_t is None else stride_t
    T = x.shape[-1]
    if kernel_t > T:
        raise ValueError(f"pool kernel {kernel_t} exceeds time length {T}")
    if kernel_t < 1 or stride_t < 1:
        raise ValueError("pool kernel and stride must be positive")
    t_out = (T - kernel_t) // stride_t + 1
    xd = x.data
    scale = xd.dtype.type(1.0 / kernel_t)
    if kernel_t == stride_t:
        used = t_out * kernel_t
        out = xd[..., :used].reshape(xd.shape[:-1] + (t_out, kernel_t)).mean(axis=-1)

        def backward(g):
            gx = np.zeros_like(xd)
            gx[..., :used] = np.repeat(g * scale, kernel_t, axis=-1)
            return (gx,)

    else:
        win = sliding_window_view(xd, kernel_t, axis=-1)[..., ::stride_t, :]
        out = win.mean(axis=-1)

        def backward(g):
            gx = np.zeros_like(xd)
            gs = g * scale
            for j in range(kernel_t):
                gx[..., j:j + stride_t * (t_out - 1) + 1:stride_t] += gs
            return (gx,)

    return make_result(np.ascontiguousarray(out), (x,), backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


def dense(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w + bias`` for ``x`` of shape ``(b, f)`` and ``w`` of ``(f, n)``."""
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ValueError(f"dense: input {x.shape} incompatible with weight {w.shape}")
    xd, wd = x.data, w.data
    out = xd @ wd
    parents = (x, w)
    if bias is not None:
        if bias.shape != (wd.shape[1],):
            raise ValueError(f"dense: bias shape {bias.shape} != ({wd.shape[1]},)")
        out = out + bias.data
        parents = (x, w, bias)

    def backward(g):
        gx = g @ wd.T if x.requires_grad else None
        grads = [gx, xd.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return make_result(out, parents, backward)


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    e = np.exp(xd - xd.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, (x,), backward)


def softmax_cross_entropy(logits: Tensor, labels, n_classes: int | None = None) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``.

    The gradient with respect to the logits is ``(softmax - onehot) / batch``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    b, k = logits.shape
    if n_classes is not None and k != n_classes:
        raise ValueError(f"expected {n_classes} logits per row, got {k}")
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {b}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in 0..{k - 1}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(b)
    loss = -logp[rows, labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1
        return (p * (g / b),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def check_finite(x: Tensor, where: str) -> Tensor:
    if not np.isfinite(x.data).all():
        raise DivergenceError(f"non-finite activation in {where}")
    return x


__all__ = [
    "DivergenceError", "conv2d", "batch_norm", "elu", "pool_avg", "dropout", "dense",
    "flatten", "softmax", "softmax_cross_entropy", "check_finite", "as_tensor",
]
