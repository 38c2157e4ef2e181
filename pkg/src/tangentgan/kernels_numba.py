"""Numba-compiled twins of the kernels in kernels.py.

Explicit loops, ascending index order, no fastmath: results are
deterministic and batch rows are computed independently, so the bitwise
batch-independence contract holds by construction. Compiled artifacts are
cached on disk after the first call.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def affine_fwd(w, b, x):
    bsz, n = x.shape
    m = w.shape[0]
    out = np.empty((bsz, m))
    for t in range(bsz):
        for i in range(m):
            acc = b[i]
            for j in range(n):
                acc += w[i, j] * x[t, j]
            out[t, i] = acc
    return out


@njit(cache=True)
def affine_bwd(w, x, dy):
    bsz, n = x.shape
    m = w.shape[0]
    dw = np.zeros((m, n))
    db = np.zeros(m)
    dx = np.zeros((bsz, n))
    for t in range(bsz):
        for i in range(m):
            g = dy[t, i]
            db[i] += g
            for j in range(n):
                dw[i, j] += g * x[t, j]
                dx[t, j] += g * w[i, j]
    return dw, db, dx


@njit(cache=True)
def wn_norms(v):
    m, n = v.shape
    r = np.empty(m)
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += v[i, j] * v[i, j]
        r[i] = np.sqrt(acc)
    return r


@njit(cache=True)
def wn_affine_fwd(v, s, b, x):
    r = wn_norms(v)
    m, n = v.shape
    w = np.empty((m, n))
    for i in range(m):
        c = s[i] / r[i]
        for j in range(n):
            w[i, j] = c * v[i, j]
    return affine_fwd(w, b, x), r


@njit(cache=True)
def wn_affine_bwd(v, s, r, x, dy):
    bsz, n = x.shape
    m = v.shape[0]
    q = np.zeros((m, n))
    db = np.zeros(m)
    dx = np.zeros((bsz, n))
    for t in range(bsz):
        for i in range(m):
            g = dy[t, i]
            db[i] += g
            c = s[i] / r[i]
            for j in range(n):
                q[i, j] += g * x[t, j]
                dx[t, j] += g * c * v[i, j]
    ds = np.empty(m)
    dv = np.empty((m, n))
    for i in range(m):
        vq = 0.0
        for j in range(n):
            vq += v[i, j] * q[i, j]
        ds[i] = vq / r[i]
        c1 = s[i] / r[i]
        c2 = s[i] * vq / r[i] ** 3
        for j in range(n):
            dv[i, j] = c1 * q[i, j] - c2 * v[i, j]
    return dv, ds, db, dx


@njit(cache=True)
def elu_fwd(x):
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_o = out.ravel()
    for i in range(flat_x.size):
        xi = flat_x[i]
        flat_o[i] = xi if xi > 0.0 else np.expm1(xi)
    return out


@njit(cache=True)
def elu_bwd(x, dy):
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_d = dy.ravel()
    flat_o = out.ravel()
    for i in range(flat_x.size):
        xi = flat_x[i]
        flat_o[i] = flat_d[i] if xi > 0.0 else flat_d[i] * np.exp(xi)
    return out


@njit(cache=True)
def tanh_fwd(x):
    return np.tanh(x)


@njit(cache=True)
def tanh_bwd(y, dy):
    return dy * (1.0 - y * y)


@njit(cache=True)
def sigmoid_fwd(x):
    out = np.empty_like(x)
    flat_x = x.ravel()
    flat_o = out.ravel()
    for i in range(flat_x.size):
        xi = flat_x[i]
        if xi >= 0.0:
            flat_o[i] = 1.0 / (1.0 + np.exp(-xi))
        else:
            e = np.exp(xi)
            flat_o[i] = e / (1.0 + e)
    return out


@njit(cache=True)
def sigmoid_bwd(y, dy):
    return dy * y * (1.0 - y)


@njit(cache=True)
def softmax_fwd(l):
    bsz, k = l.shape
    out = np.empty((bsz, k))
    for t in range(bsz):
        m = l[t, 0]
        for j in range(1, k):
            if l[t, j] > m:
                m = l[t, j]
        z = 0.0
        for j in range(k):
            e = np.exp(l[t, j] - m)
            out[t, j] = e
            z += e
        for j in range(k):
            out[t, j] /= z
    return out


@njit(cache=True)
def softmax_bwd(p, dp):
    bsz, k = p.shape
    out = np.empty((bsz, k))
    for t in range(bsz):
        s = 0.0
        for j in range(k):
            s += p[t, j] * dp[t, j]
        for j in range(k):
            out[t, j] = p[t, j] * (dp[t, j] - s)
    return out


@njit(cache=True)
def softmax_fake_fwd(l):
    bsz, k = l.shape
    out = np.empty((bsz, k + 1))
    for t in range(bsz):
        m = 0.0
        for j in range(k):
            if l[t, j] > m:
                m = l[t, j]
        z = np.exp(-m)
        out[t, k] = z
        for j in range(k):
            e = np.exp(l[t, j] - m)
            out[t, j] = e
            z += e
        for j in range(k + 1):
            out[t, j] /= z
    return out


@njit(cache=True)
def softmax_fake_bwd(p, dp):
    bsz = p.shape[0]
    k = p.shape[1] - 1
    out = np.empty((bsz, k))
    for t in range(bsz):
        s = 0.0
        for j in range(k + 1):
            s += p[t, j] * dp[t, j]
        for j in range(k):
            out[t, j] = p[t, j] * (dp[t, j] - s)
    return out
