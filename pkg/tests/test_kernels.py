"""The two kernel backends implement the same arithmetic."""

import numpy as np
import pytest

from tangentgan import kernels as knp

numba_kernels = pytest.importorskip("tangentgan.kernels_numba")


RNG = np.random.default_rng(17)
W = RNG.standard_normal((5, 7))
B = RNG.standard_normal(5)
V = RNG.standard_normal((5, 7))
S = RNG.uniform(0.5, 2.0, 5)
X = RNG.standard_normal((9, 7))
DY = RNG.standard_normal((9, 5))
L = RNG.standard_normal((9, 4)) * 3


def close(a, b):
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_affine():
    close(knp.affine_fwd(W, B, X), numba_kernels.affine_fwd(W, B, X))
    for a, b in zip(knp.affine_bwd(W, X, DY), numba_kernels.affine_bwd(W, X, DY)):
        close(a, b)


def test_wn_affine():
    y1, r1 = knp.wn_affine_fwd(V, S, B, X)
    y2, r2 = numba_kernels.wn_affine_fwd(V, S, B, X)
    close(y1, y2)
    close(r1, r2)
    for a, b in zip(
        knp.wn_affine_bwd(V, S, r1, X, DY), numba_kernels.wn_affine_bwd(V, S, r2, X, DY)
    ):
        close(a, b)


@pytest.mark.parametrize("name", ["elu", "tanh", "sigmoid"])
def test_elementwise(name):
    x = RNG.standard_normal((6, 8)) * 4
    dy = RNG.standard_normal((6, 8))
    close(getattr(knp, name + "_fwd")(x), getattr(numba_kernels, name + "_fwd")(x))
    y = getattr(knp, name + "_fwd")(x)
    arg = x if name == "elu" else y
    close(
        getattr(knp, name + "_bwd")(arg, dy),
        getattr(numba_kernels, name + "_bwd")(arg, dy),
    )


def test_softmax_pair():
    p1 = knp.softmax_fwd(L)
    p2 = numba_kernels.softmax_fwd(L)
    close(p1, p2)
    dp = RNG.standard_normal(p1.shape)
    close(knp.softmax_bwd(p1, dp), numba_kernels.softmax_bwd(p2, dp))


def test_softmax_fake_pair():
    p1 = knp.softmax_fake_fwd(L)
    p2 = numba_kernels.softmax_fake_fwd(L)
    close(p1, p2)
    assert np.abs(p1.sum(axis=1) - 1.0).max() < 1e-12
    dp = RNG.standard_normal(p1.shape)
    close(knp.softmax_fake_bwd(p1, dp), numba_kernels.softmax_fake_bwd(p2, dp))


@pytest.mark.parametrize("mod", [knp, numba_kernels], ids=["numpy", "numba"])
def test_batch_rows_bitwise_equal_single_rows(mod):
    # the contract behind Jacobian batch-independence, per backend
    y = mod.affine_fwd(W, B, X)
    yw, _ = mod.wn_affine_fwd(V, S, B, X)
    p = mod.softmax_fake_fwd(L)
    for i in range(X.shape[0]):
        np.testing.assert_array_equal(y[i], mod.affine_fwd(W, B, X[i : i + 1])[0])
        np.testing.assert_array_equal(
            yw[i], mod.wn_affine_fwd(V, S, B, X[i : i + 1])[0][0]
        )
        np.testing.assert_array_equal(p[i], mod.softmax_fake_fwd(L[i : i + 1])[0])
