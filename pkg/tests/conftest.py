import numpy as np
import pytest

from tangentgan import core


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Trigger kernel compilation (numba backend) before any timed test runs.
    t = core.Tape()
    w = t.const(np.eye(2))
    v = t.const(np.eye(2))
    s = t.const(np.ones(2))
    b = t.const(np.zeros(2))
    x = t.input(np.array([0.5, -0.5]))
    h = t.wn_affine(v, s, b, t.elu(t.affine(w, b, x)))
    h = t.sigmoid(t.tanh(h))
    p = t.softmax_with_fake(t.softmax(h))
    core.backward(t, t.sumall(p))
