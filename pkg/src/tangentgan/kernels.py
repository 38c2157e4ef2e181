"""Dense float64 layer kernels, pure-numpy reference path.

All kernels take batched 2-d arrays (B, n); a single example travels as a
(1, n) batch. Matrix-vector products run row by row so a batched forward is
bitwise identical to stacking the per-example forwards (required because
downstream Jacobians must not depend on batch context). Elementwise and
row-local ops are vectorized; they have no cross-row interaction.

The numba twins in kernels_numba.py implement the same arithmetic with
compiled loops; selection happens in backend.py.
"""

import numpy as np


def affine_fwd(w, b, x):
    out = np.empty((x.shape[0], w.shape[0]))
    for i in range(x.shape[0]):
        out[i] = w @ x[i] + b
    return out


def affine_bwd(w, x, dy):
    dw = dy.T @ x
    db = dy.sum(axis=0)
    dx = dy @ w
    return dw, db, dx


def wn_norms(v):
    return np.sqrt((v * v).sum(axis=1))


def wn_affine_fwd(v, s, b, x):
    """Weight-normalized affine: row i of the effective weight is s_i*v_i/|v_i|."""
    r = wn_norms(v)
    w = (s / r)[:, None] * v
    return affine_fwd(w, b, x), r


def wn_affine_bwd(v, s, r, x, dy):
    q = dy.T @ x
    db = dy.sum(axis=0)
    coef = s / r
    dx = dy @ (coef[:, None] * v)
    vq = (v * q).sum(axis=1)
    ds = vq / r
    dv = coef[:, None] * q - (s * vq / r**3)[:, None] * v
    return dv, ds, db, dx


def elu_fwd(x):
    return np.where(x > 0.0, x, np.expm1(x))


def elu_bwd(x, dy):
    return dy * np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0)))


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, dy):
    return dy * (1.0 - y * y)


def sigmoid_fwd(x):
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(y, dy):
    return dy * y * (1.0 - y)


def softmax_fwd(l):
    m = l.max(axis=1, keepdims=True)
    e = np.exp(l - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(p, dp):
    s = (p * dp).sum(axis=1, keepdims=True)
    return p * (dp - s)


def softmax_fake_fwd(l):
    """Softmax over (l_1..l_k, 0): the extra class logit is pinned to zero.

    Max subtraction includes the pinned logit, so the result is exactly the
    softmax of the extended logit vector.
    """
    bsz, k = l.shape
    m = np.maximum(l.max(axis=1), 0.0)
    e = np.exp(l - m[:, None])
    ek = np.exp(-m)
    z = e.sum(axis=1) + ek
    out = np.empty((bsz, k + 1))
    out[:, :k] = e / z[:, None]
    out[:, k] = ek / z
    return out


def softmax_fake_bwd(p, dp):
    # d/dl_j softmax(l, 0): same softmax Jacobian, but only the k free logits
    # are variables.
    k = p.shape[1] - 1
    s = (p * dp).sum(axis=1, keepdims=True)
    return p[:, :k] * (dp[:, :k] - s)
