"""Compiled loops for depthwise convolution (one input depth per group)."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def depthwise_forward(xp, w, out):
    # xp (b, G, Hp, Wp), w (G, m, kh, kw), out (b, G, m, Ho, Wo) zero-filled
    b, G, m, Ho, Wo = out.shape
    kh, kw = w.shape[2], w.shape[3]
    for bi in range(b):
        for g in range(G):
            for mi in range(m):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[g, mi, i, j]
                        for h in range(Ho):
                            src = xp[bi, g, h + i]
                            dst = out[bi, g, mi, h]
                            for t in range(Wo):
                                dst[t] += wv * src[t + j]


@njit(cache=True, fastmath=True)
def depthwise_backward_input(gout, w, gxp):
    b, G, m, Ho, Wo = gout.shape
    kh, kw = w.shape[2], w.shape[3]
    for bi in range(b):
        for g in range(G):
            for mi in range(m):
                for i in range(kh):
                    for j in range(kw):
                        wv = w[g, mi, i, j]
                        for h in range(Ho):
                            src = gout[bi, g, mi, h]
                            dst = gxp[bi, g, h + i]
                            for t in range(Wo):
                                dst[t + j] += wv * src[t]


@njit(cache=True, fastmath=True)
def depthwise_backward_weight(gout, xp, gw):
    b, G, m, Ho, Wo = gout.shape
    kh, kw = gw.shape[2], gw.shape[3]
    for g in range(G):
        for mi in range(m):
            for i in range(kh):
                for j in range(kw):
                    acc = 0.0
                    for bi in range(b):
                        for h in range(Ho):
                            go = gout[bi, g, mi, h]
                            xs = xp[bi, g, h + i]
                            for t in range(Wo):
                                acc += go[t] * xs[t + j]
                    gw[g, mi, i, j] = acc


def depthwise_conv(xp: np.ndarray, w: np.ndarray, Ho: int, Wo: int) -> np.ndarray:
    b, G = xp.shape[:2]
    out = np.zeros((b, G, w.shape[1], Ho, Wo), dtype=xp.dtype)
    depthwise_forward(np.ascontiguousarray(xp), np.ascontiguousarray(w), out)
    return out


@njit(cache=True, fastmath=True)
def elu_forward(x, alpha, out):
    for i in range(x.size):
        v = x[i]
        out[i] = v if v > 0 else alpha * (np.exp(v) - 1.0)


@njit(cache=True, fastmath=True)
def elu_backward(x, out, g, alpha, gx):
    for i in range(x.size):
        gx[i] = g[i] if x[i] > 0 else g[i] * (out[i] + alpha)


@njit(cache=True)
def bn_stats(x, mean, var):
    # x (b, D, L); float64 accumulation, two passes
    b, D, L = x.shape
    n = b * L
    for d in range(D):
        s = 0.0
        for bi in range(b):
            row = x[bi, d]
            for t in range(L):
                s += row[t]
        mu = s / n
        ss = 0.0
        for bi in range(b):
            row = x[bi, d]
            for t in range(L):
                c = row[t] - mu
                ss += c * c
        mean[d] = mu
        var[d] = ss / n


@njit(cache=True, fastmath=True)
def bn_apply(x, mean, inv_std, gamma, beta, out):
    b, D, L = x.shape
    for bi in range(b):
        for d in range(D):
            scale = gamma[d] * inv_std[d]
            shift = beta[d] - mean[d] * scale
            row = x[bi, d]
            dst = out[bi, d]
            for t in range(L):
                dst[t] = row[t] * scale + shift


@njit(cache=True, fastmath=True)
def bn_backward(g, x, mean, inv_std, gamma, ggamma, gbeta, gx, need_dx):
    # train-mode batch-norm backward; ggamma/gbeta are float64 accumulators
    b, D, L = x.shape
    n = b * L
    for d in range(D):
        sg = 0.0
        sgx = 0.0
        mu = mean[d]
        for bi in range(b):
            gr = g[bi, d]
            xr = x[bi, d]
            for t in range(L):
                sg += gr[t]
                sgx += gr[t] * (xr[t] - mu)
        sgx *= inv_std[d]
        gbeta[d] = sg
        ggamma[d] = sgx
        if need_dx:
            k = gamma[d] * inv_std[d]
            m1 = sg / n
            m2 = sgx / n
            for bi in range(b):
                gr = g[bi, d]
                xr = x[bi, d]
                dst = gx[bi, d]
                for t in range(L):
                    xh = (xr[t] - mu) * inv_std[d]
                    dst[t] = k * (gr[t] - m1 - xh * m2)
