"""Reverse-mode differentiation on an explicit tape, float64 throughout.

A Tape records operation nodes in topological order (inputs always precede
users); values are computed eagerly through the selected kernel backend.
A backward pass walks the node list once in reverse, accumulating adjoints.
Jacobians of maps with low output dimension are extracted with one reverse
pass per output row; central finite differences provide the independent
oracle every derivative claim is checked against.

Tensors are plain C-order float64 numpy arrays: scalars (), vectors (n,),
and batches (B, n). Batched kernels process rows independently, so a batch
forward is bitwise identical to the stacked per-example forwards.
"""

import numpy as np

from .backend import K

LOG_CLAMP = 1e-12
_SQRT_EPS = 1e-24


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values."""


def as_f64(x):
    return np.asarray(x, dtype=np.float64, order="C")


# ---------------------------------------------------------------------------
# plain-array versions of the primitive nonlinearities (usable without a tape)


def elu(x):
    """Exponential linear unit, alpha=1: x for x>0, exp(x)-1 otherwise. C1 at 0."""
    return K.elu_fwd(as_f64(x))


def softmax_with_fake(logits):
    """Softmax over the k given logits plus an implicit (k+1)'th logit pinned to 0.

    The last output entry is the probability of the extra ("fake") class.
    Max subtraction spans all k+1 logits, so the output is exactly the
    softmax of the extended vector.
    """
    l = as_f64(logits)
    if l.ndim == 1:
        return K.softmax_fake_fwd(l.reshape(1, -1))[0]
    return K.softmax_fake_fwd(l)


def softmax(logits):
    l = as_f64(logits)
    if l.ndim == 1:
        return K.softmax_fwd(l.reshape(1, -1))[0]
    return K.softmax_fwd(l)


def sigmoid(x):
    x = as_f64(x)
    if x.ndim == 0:
        return K.sigmoid_fwd(x.reshape(1, 1))[0, 0]
    return K.sigmoid_fwd(x)


# ---------------------------------------------------------------------------


class ParamStore:
    """Named float64 parameter arrays with a flat-vector view.

    Insertion order is the canonical order; flatten/unflatten round-trips
    exactly.
    """

    def __init__(self):
        self._arrays = {}

    def add(self, name, value):
        if name in self._arrays:
            raise ValueError(f"duplicate parameter name {name!r}")
        self._arrays[name] = as_f64(value)

    def __getitem__(self, name):
        return self._arrays[name]

    def __setitem__(self, name, value):
        old = self._arrays[name]
        new = as_f64(value)
        if new.shape != old.shape:
            raise ShapeError(f"parameter {name!r}: shape {new.shape} != {old.shape}")
        self._arrays[name] = new

    def __contains__(self, name):
        return name in self._arrays

    def names(self):
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    @property
    def size(self):
        return sum(a.size for a in self._arrays.values())

    def flatten(self):
        if not self._arrays:
            return np.empty(0)
        return np.concatenate([a.ravel() for a in self._arrays.values()])

    def unflatten(self, vec):
        vec = as_f64(vec)
        if vec.shape != (self.size,):
            raise ShapeError(f"flat vector has size {vec.size}, store holds {self.size}")
        pos = 0
        for name, a in self._arrays.items():
            self._arrays[name] = vec[pos : pos + a.size].reshape(a.shape).copy()
            pos += a.size

    def copy(self):
        out = ParamStore()
        for name, a in self._arrays.items():
            out.add(name, a.copy())
        return out


class Node:
    __slots__ = ("op", "inputs", "value", "aux", "rg")

    def __init__(self, op, inputs, value, aux, rg):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.aux = aux
        self.rg = rg


class TNode:
    """Handle to one tape node."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape.nodes[self.idx].value

    @property
    def shape(self):
        return self.tape.nodes[self.idx].value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __sub__(self, other):
        return self.tape.sub(self, other)


_LEAF_OPS = ("const", "input", "param")


class Tape:
    """Ordered record of differentiable operations with eager forward values."""

    def __init__(self):
        self.nodes = []
        self.adjoints = None
        self.saturations = 0
        self._param_memo = {}
        self._stores = []

    # -- leaves ------------------------------------------------------------

    def _push(self, op, inputs, value, aux=None, rg=None):
        if rg is None:
            rg = any(self.nodes[i].rg for i in inputs)
        self.nodes.append(Node(op, inputs, value, aux, rg))
        return TNode(self, len(self.nodes) - 1)

    def const(self, value):
        return self._push("const", (), as_f64(value), rg=False)

    def input(self, value):
        """Leaf that participates in differentiation but is not a parameter."""
        return self._push("input", (), as_f64(value), rg=True)

    def param(self, store, name):
        """Leaf bound to a ParamStore entry; repeated calls return the same node."""
        key = (id(store), name)
        hit = self._param_memo.get(key)
        if hit is not None:
            return TNode(self, hit)
        node = self._push("param", (), store[name], aux=(store, name), rg=True)
        self._param_memo[key] = node.idx
        self._stores.append(store)
        return node

    # -- affine layers -----------------------------------------------------

    @staticmethod
    def _check_affine(m, n, b, x):
        if b.shape != (m,):
            raise ShapeError(f"bias shape {b.shape} != ({m},)")
        if x.shape[-1] != n:
            raise ShapeError(f"input dim {x.shape[-1]} != weight fan-in {n}")
        if x.ndim not in (1, 2):
            raise ShapeError(f"affine input must be 1-d or 2-d, got {x.ndim}-d")

    def affine(self, w, b, x):
        wv, bv, xv = w.value, b.value, x.value
        self._check_affine(wv.shape[0], wv.shape[1], bv, xv)
        x2 = xv.reshape(1, -1) if xv.ndim == 1 else xv
        y = K.affine_fwd(wv, bv, x2)
        out = y[0] if xv.ndim == 1 else y
        return self._push("affine", (w.idx, b.idx, x.idx), out)

    def wn_affine(self, v, s, b, x):
        vv, sv, bv, xv = v.value, s.value, b.value, x.value
        self._check_affine(vv.shape[0], vv.shape[1], bv, xv)
        x2 = xv.reshape(1, -1) if xv.ndim == 1 else xv
        y, r = K.wn_affine_fwd(vv, sv, bv, x2)
        out = y[0] if xv.ndim == 1 else y
        return self._push("wn_affine", (v.idx, s.idx, b.idx, x.idx), out, aux=r)

    # -- elementwise -------------------------------------------------------

    def elu(self, x):
        return self._push("elu", (x.idx,), K.elu_fwd(x.value))

    def tanh(self, x):
        return self._push("tanh", (x.idx,), K.tanh_fwd(x.value))

    def sigmoid(self, x):
        return self._push("sigmoid", (x.idx,), K.sigmoid_fwd(x.value))

    def square(self, x):
        return self._push("square", (x.idx,), x.value * x.value)

    def absval(self, x):
        return self._push("absval", (x.idx,), np.abs(x.value))

    def sqrt(self, x):
        # sqrt(x + tiny): keeps the derivative finite at exactly zero
        return self._push("sqrt", (x.idx,), np.sqrt(x.value + _SQRT_EPS))

    def neg(self, x):
        return self._push("neg", (x.idx,), -x.value)

    def one_minus(self, x):
        return self._push("one_minus", (x.idx,), 1.0 - x.value)

    def scale(self, x, c):
        return self._push("scale", (x.idx,), float(c) * x.value, aux=float(c))

    def clamped_log(self, x):
        """log of the input clamped below at LOG_CLAMP; clamped entries get zero
        gradient and are counted as saturation events."""
        xv = x.value
        clamped = xv < LOG_CLAMP
        n_sat = int(np.count_nonzero(clamped))
        self.saturations += n_sat
        return self._push(
            "clamped_log", (x.idx,), np.log(np.maximum(xv, LOG_CLAMP)), aux=clamped
        )

    def add(self, a, b):
        if a.value.shape != b.value.shape:
            raise ShapeError(f"add: {a.value.shape} vs {b.value.shape}")
        return self._push("add", (a.idx, b.idx), a.value + b.value)

    def sub(self, a, b):
        if a.value.shape != b.value.shape:
            raise ShapeError(f"sub: {a.value.shape} vs {b.value.shape}")
        return self._push("sub", (a.idx, b.idx), a.value - b.value)

    def mul(self, a, b):
        if a.value.shape != b.value.shape:
            raise ShapeError(f"mul: {a.value.shape} vs {b.value.shape}")
        return self._push("mul", (a.idx, b.idx), a.value * b.value)

    def concat(self, a, b):
        av, bv = a.value, b.value
        if av.ndim != bv.ndim:
            raise ShapeError(f"concat: rank {av.ndim} vs {bv.ndim}")
        if av.ndim == 2 and av.shape[0] != bv.shape[0]:
            raise ShapeError(f"concat: batch {av.shape[0]} vs {bv.shape[0]}")
        return self._push(
            "concat", (a.idx, b.idx), np.concatenate([av, bv], axis=-1),
            aux=av.shape[-1],
        )

    # -- softmax -----------------------------------------------------------

    def softmax(self, logits):
        lv = logits.value
        l2 = lv.reshape(1, -1) if lv.ndim == 1 else lv
        p = K.softmax_fwd(l2)
        return self._push("softmax", (logits.idx,), p[0] if lv.ndim == 1 else p)

    def softmax_with_fake(self, logits):
        lv = logits.value
        l2 = lv.reshape(1, -1) if lv.ndim == 1 else lv
        p = K.softmax_fake_fwd(l2)
        return self._push(
            "softmax_with_fake", (logits.idx,), p[0] if lv.ndim == 1 else p
        )

    # -- indexing and reductions -------------------------------------------

    def pick(self, x, i):
        if x.value.ndim != 1:
            raise ShapeError("pick expects a vector")
        return self._push("pick", (x.idx,), x.value[i].copy(), aux=int(i))

    def gather(self, x, idx):
        """Per-row entry selection: (B, m), int (B,) -> (B,)."""
        if x.value.ndim != 2:
            raise ShapeError("gather expects a batch matrix")
        idx = np.asarray(idx, dtype=np.int64)
        vals = x.value[np.arange(x.value.shape[0]), idx].copy()
        return self._push("gather", (x.idx,), vals, aux=idx)

    def rowsum(self, x):
        """Sum over the last axis: (B, n) -> (B,), (n,) -> ()."""
        return self._push("rowsum", (x.idx,), x.value.sum(axis=-1))

    def mean0(self, x):
        """Mean over the leading axis: (B, n) -> (n,), (B,) -> ()."""
        if x.value.ndim == 0:
            raise ShapeError("mean0 needs at least one axis")
        return self._push("mean0", (x.idx,), x.value.mean(axis=0), aux=x.value.shape[0])

    def sumall(self, x):
        return self._push("sumall", (x.idx,), x.value.sum())

    # -- composite conveniences ---------------------------------------------

    def sqnorm(self, x):
        """Squared Euclidean norm over the last axis."""
        return self.rowsum(self.square(x))

    def l1norm(self, x):
        return self.rowsum(self.absval(x))

    def l2norm(self, x):
        return self.sqrt(self.sqnorm(x))

    # -- reverse pass --------------------------------------------------------

    def run_backward(self, out, seed):
        """One reverse sweep from `out` seeded with `seed`; returns adjoints
        indexed by node id (None where no gradient flowed)."""
        seed = as_f64(seed)
        node = self.nodes[out.idx]
        if seed.shape != node.value.shape:
            raise ShapeError(f"seed shape {seed.shape} != output shape {node.value.shape}")
        adj = [None] * len(self.nodes)
        adj[out.idx] = seed
        for nid in range(out.idx, -1, -1):
            a = adj[nid]
            if a is None:
                continue
            n = self.nodes[nid]
            if not n.rg or n.op in _LEAF_OPS:
                continue
            self._backprop(n, a, adj)
        return adj

    def _acc(self, adj, nid, grad):
        if not self.nodes[nid].rg:
            return
        if adj[nid] is None:
            adj[nid] = grad
        else:
            adj[nid] = adj[nid] + grad

    def _backprop(self, n, a, adj):
        op = n.op
        ins = n.inputs
        nodes = self.nodes
        if op == "affine":
            w, b, x = (nodes[i] for i in ins)
            xv = x.value
            x2 = xv.reshape(1, -1) if xv.ndim == 1 else xv
            a2 = a.reshape(1, -1) if xv.ndim == 1 else a
            dw, db, dx = K.affine_bwd(w.value, x2, a2)
            self._acc(adj, ins[0], dw)
            self._acc(adj, ins[1], db)
            self._acc(adj, ins[2], dx[0] if xv.ndim == 1 else dx)
        elif op == "wn_affine":
            v, s, b, x = (nodes[i] for i in ins)
            xv = x.value
            x2 = xv.reshape(1, -1) if xv.ndim == 1 else xv
            a2 = a.reshape(1, -1) if xv.ndim == 1 else a
            dv, ds, db, dx = K.wn_affine_bwd(v.value, s.value, n.aux, x2, a2)
            self._acc(adj, ins[0], dv)
            self._acc(adj, ins[1], ds)
            self._acc(adj, ins[2], db)
            self._acc(adj, ins[3], dx[0] if xv.ndim == 1 else dx)
        elif op == "elu":
            self._acc(adj, ins[0], K.elu_bwd(nodes[ins[0]].value, a))
        elif op == "tanh":
            self._acc(adj, ins[0], K.tanh_bwd(n.value, a))
        elif op == "sigmoid":
            self._acc(adj, ins[0], K.sigmoid_bwd(n.value, a))
        elif op == "square":
            self._acc(adj, ins[0], 2.0 * nodes[ins[0]].value * a)
        elif op == "absval":
            self._acc(adj, ins[0], np.sign(nodes[ins[0]].value) * a)
        elif op == "sqrt":
            self._acc(adj, ins[0], a / (2.0 * n.value))
        elif op == "neg":
            self._acc(adj, ins[0], -a)
        elif op == "one_minus":
            self._acc(adj, ins[0], -a)
        elif op == "scale":
            self._acc(adj, ins[0], n.aux * a)
        elif op == "clamped_log":
            xv = nodes[ins[0]].value
            g = a / np.maximum(xv, LOG_CLAMP)
            if n.aux.any():
                g = np.where(n.aux, 0.0, g)
            self._acc(adj, ins[0], g)
        elif op == "add":
            self._acc(adj, ins[0], a)
            self._acc(adj, ins[1], a)
        elif op == "sub":
            self._acc(adj, ins[0], a)
            self._acc(adj, ins[1], -a)
        elif op == "mul":
            self._acc(adj, ins[0], a * nodes[ins[1]].value)
            self._acc(adj, ins[1], a * nodes[ins[0]].value)
        elif op == "concat":
            na = n.aux
            self._acc(adj, ins[0], a[..., :na].copy())
            self._acc(adj, ins[1], a[..., na:].copy())
        elif op == "softmax":
            pv = n.value
            p2 = pv.reshape(1, -1) if pv.ndim == 1 else pv
            a2 = a.reshape(1, -1) if pv.ndim == 1 else a
            dl = K.softmax_bwd(p2, a2)
            self._acc(adj, ins[0], dl[0] if pv.ndim == 1 else dl)
        elif op == "softmax_with_fake":
            pv = n.value
            p2 = pv.reshape(1, -1) if pv.ndim == 1 else pv
            a2 = a.reshape(1, -1) if pv.ndim == 1 else a
            dl = K.softmax_fake_bwd(p2, a2)
            self._acc(adj, ins[0], dl[0] if pv.ndim == 1 else dl)
        elif op == "pick":
            g = np.zeros_like(nodes[ins[0]].value)
            g[n.aux] = a
            self._acc(adj, ins[0], g)
        elif op == "gather":
            xv = nodes[ins[0]].value
            g = np.zeros_like(xv)
            g[np.arange(xv.shape[0]), n.aux] = a
            self._acc(adj, ins[0], g)
        elif op == "rowsum":
            self._acc(adj, ins[0], a[..., None] * np.ones_like(nodes[ins[0]].value))
        elif op == "mean0":
            xv = nodes[ins[0]].value
            self._acc(adj, ins[0], np.broadcast_to(a / n.aux, xv.shape).copy())
        elif op == "sumall":
            self._acc(adj, ins[0], np.full_like(nodes[ins[0]].value, a))
        else:
            raise AssertionError(f"no backward rule for op {op!r}")

    def param_grads(self, store):
        """Adjoints of a store's parameters after backward(); zeros where the
        parameter did not participate."""
        if self.adjoints is None:
            raise RuntimeError("backward() has not been run on this tape")
        out = {}
        for name in store.names():
            nid = self._param_memo.get((id(store), name))
            if nid is None or self.adjoints[nid] is None:
                out[name] = np.zeros_like(store[name])
            else:
                out[name] = self.adjoints[nid]
        return out


def backward(tape, out):
    """Reverse pass from a scalar output; adjoints land on the tape."""
    if out.value.shape != ():
        raise ValueError(f"backward needs a scalar output, got shape {out.value.shape}")
    tape.adjoints = tape.run_backward(out, np.asarray(1.0))
    return tape.adjoints


def jacobian(fn, x):
    """Jacobian of fn at x by reverse accumulation, one pass per output row.

    fn(tape, node) -> node must build a vector-valued forward pass.
    """
    x = as_f64(x)
    tape = Tape()
    xn = tape.input(x)
    yn = fn(tape, xn)
    yv = yn.value
    if yv.ndim != 1:
        raise ShapeError(f"jacobian expects a vector-valued map, got shape {yv.shape}")
    m = yv.shape[0]
    jac = np.zeros((m, x.size))
    seed = np.zeros(m)
    for i in range(m):
        seed[i] = 1.0
        adj = tape.run_backward(yn, seed)
        if adj[xn.idx] is not None:
            jac[i] = adj[xn.idx]
        seed[i] = 0.0
    return jac


def finite_diff_jacobian(f, x, eps=1e-4):
    """Central-difference Jacobian of a plain array function; the
    derivative oracle, independent of the tape."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = as_f64(x)
    y0 = as_f64(f(x))
    jac = np.empty((y0.size, x.size))
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[j] += eps
        xm.flat[j] -= eps
        jac[:, j] = (as_f64(f(xp)).ravel() - as_f64(f(xm)).ravel()) / (2.0 * eps)
    return jac


def finite_diff_grad(f, x, eps=1e-4):
    """Central-difference gradient of a scalar-valued plain function."""
    return finite_diff_jacobian(lambda v: np.asarray(f(v)).reshape(1), x, eps)[0].reshape(
        np.asarray(x).shape
    )
