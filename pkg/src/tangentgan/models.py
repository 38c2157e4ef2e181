"""Smooth parametric maps: MLPs with weight-normalized affine layers, the
two-pipeline joint discriminator, and the tangent-bottleneck projector pair.

Every forward is a deterministic function of (parameters, input) alone;
there is no batch-coupled normalization, so Jacobians at one example never
depend on the rest of the minibatch. Nonlinearities are ELU or tanh only,
keeping all maps C1.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .backend import K
from .core import ParamStore, ShapeError, as_f64
from .rng import child_rng

CHECKPOINT_FORMAT = "tangentgan-model/1"

_NONLIN_FWD = {"elu": lambda x: K.elu_fwd(x), "tanh": lambda x: K.tanh_fwd(x)}


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    nonlinearity: str = "elu"
    weight_norm: bool = True
    final_activation: bool = False
    seed: int = 0

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if any(int(s) < 1 for s in self.layer_sizes):
            raise ValueError(f"zero-width layer in {self.layer_sizes}")
        if self.nonlinearity not in _NONLIN_FWD:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))


class MlpModel:
    """Feedforward stack of (weight-normalized) affine layers.

    Weights are drawn uniform with fan-in scaling; weight-norm scales start
    at the draw's row norms so the initial effective weights equal the draw.
    The model registers its parameters into `store` under `prefix` (its own
    fresh store by default).
    """

    def __init__(self, spec, store=None, prefix=""):
        self.spec = spec
        self.store = ParamStore() if store is None else store
        self.prefix = prefix
        rng = child_rng(spec.seed, "init", prefix)
        sizes = spec.layer_sizes
        for i in range(len(sizes) - 1):
            n_in, n_out = sizes[i], sizes[i + 1]
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, (n_out, n_in))
            if spec.weight_norm:
                self.store.add(f"{prefix}v{i}", w)
                self.store.add(f"{prefix}s{i}", K.wn_norms(w))
            else:
                self.store.add(f"{prefix}w{i}", w)
            self.store.add(f"{prefix}b{i}", np.zeros(n_out))

    @property
    def n_layers(self):
        return len(self.spec.layer_sizes) - 1

    @property
    def in_dim(self):
        return self.spec.layer_sizes[0]

    @property
    def out_dim(self):
        return self.spec.layer_sizes[-1]

    def _activate(self, i):
        return i < self.n_layers - 1 or self.spec.final_activation

    def __call__(self, x, return_hidden=False):
        """Plain forward; accepts a single (n,) example or a (B, n) batch."""
        x = as_f64(x)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"input dim {x.shape[-1]} != {self.in_dim}")
        single = x.ndim == 1
        h = x.reshape(1, -1) if single else x
        hidden = []
        nl = _NONLIN_FWD[self.spec.nonlinearity]
        for i in range(self.n_layers):
            b = self.store[f"{self.prefix}b{i}"]
            if self.spec.weight_norm:
                h, _ = K.wn_affine_fwd(
                    self.store[f"{self.prefix}v{i}"], self.store[f"{self.prefix}s{i}"], b, h
                )
            else:
                h = K.affine_fwd(self.store[f"{self.prefix}w{i}"], b, h)
            if self._activate(i):
                h = nl(h)
            hidden.append(h)
        out = h[0] if single else h
        if return_hidden:
            return out, [a[0] if single else a for a in hidden]
        return out

    def on_tape(self, tape, x, frozen=False, return_hidden=False):
        """Forward pass recorded on a tape. With frozen=True the parameters
        enter as constants, so no gradient can reach them."""
        leaf = (lambda n: tape.const(self.store[n])) if frozen else (
            lambda n: tape.param(self.store, n)
        )
        h = x
        hidden = []
        act = tape.elu if self.spec.nonlinearity == "elu" else tape.tanh
        for i in range(self.n_layers):
            b = leaf(f"{self.prefix}b{i}")
            if self.spec.weight_norm:
                h = tape.wn_affine(
                    leaf(f"{self.prefix}v{i}"), leaf(f"{self.prefix}s{i}"), b, h
                )
            else:
                h = tape.affine(leaf(f"{self.prefix}w{i}"), b, h)
            if self._activate(i):
                h = act(h)
            hidden.append(h)
        if return_hidden:
            return h, hidden
        return h


def init_model(spec):
    """Fresh model with parameters drawn per the spec's seed."""
    return MlpModel(spec)


class LinearMap:
    """y = A x (+ b), as both a plain callable and a tape map. Handy as an
    exactly-differentiable stand-in for a classifier."""

    def __init__(self, a, b=None):
        self.a = as_f64(a)
        self.b = np.zeros(self.a.shape[0]) if b is None else as_f64(b)

    def __call__(self, x):
        x = as_f64(x)
        single = x.ndim == 1
        y = K.affine_fwd(self.a, self.b, x.reshape(1, -1) if single else x)
        return y[0] if single else y

    def on_tape(self, tape, x, frozen=True):
        return tape.affine(tape.const(self.a), tape.const(self.b), x)


# ---------------------------------------------------------------------------
# two-pipeline joint discriminator


@dataclass(frozen=True)
class DiscSpec:
    z_dim: int
    x_dim: int
    n_classes: int
    z_hidden: tuple = (32, 32)
    x_hidden: tuple = (64, 64)
    trunk_hidden: tuple = (64,)
    weight_norm: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("need at least one real class")
        if not self.trunk_hidden:
            raise ValueError("trunk needs at least one hidden layer")


FEATURE_TAGS = ("x-pipeline-last", "z-pipeline-last", "trunk-penultimate")


class DualDiscriminator:
    """Joint (z, x) discriminator.

    Separate feature pipelines for z and x feed a shared trunk that emits a
    realness logit for the pair. Class logits for the k real classes hang off
    the x pipeline alone (the implicit fake logit is pinned to 0), so the
    classifier is a function of x only. The x pipeline's last layer is the
    named feature map used for feature matching and the projector objective.
    """

    def __init__(self, spec):
        self.spec = spec
        self.store = ParamStore()
        mk = lambda sizes, final_act, tag: MlpModel(
            MlpSpec(
                tuple(sizes),
                nonlinearity="elu",
                weight_norm=spec.weight_norm,
                final_activation=final_act,
                seed=spec.seed,
            ),
            store=self.store,
            prefix=tag + ".",
        )
        self.z_pipe = mk((spec.z_dim, *spec.z_hidden), True, "z_pipe")
        self.x_pipe = mk((spec.x_dim, *spec.x_hidden), True, "x_pipe")
        trunk_in = spec.z_hidden[-1] + spec.x_hidden[-1]
        self.trunk = mk((trunk_in, *spec.trunk_hidden, 1), False, "trunk")
        self.class_head = mk((spec.x_hidden[-1], spec.n_classes), False, "class_head")

    @property
    def k(self):
        return self.spec.n_classes

    # -- plain forward -------------------------------------------------------

    def x_features(self, x):
        return self.x_pipe(x)

    def z_features(self, z):
        return self.z_pipe(z)

    def realness_logit(self, z, x):
        zf = self.z_pipe(z)
        xf = self.x_pipe(x)
        return self.trunk(np.concatenate([zf, xf], axis=-1))

    def realness(self, z, x):
        """Probability the (z, x) pair is real, in (0, 1)."""
        t = self.realness_logit(z, x)
        return np.squeeze(K.sigmoid_fwd(t.reshape(1, -1) if t.ndim == 1 else t), axis=-1)

    def class_logits(self, x):
        return self.class_head(self.x_pipe(x))

    def full_probs(self, x):
        """(k+1)-class probabilities with the fake logit pinned to 0."""
        l = self.class_logits(x)
        p = K.softmax_fake_fwd(l.reshape(1, -1) if l.ndim == 1 else l)
        return p[0] if l.ndim == 1 else p

    def cond_class_probs(self, x):
        """Class probabilities conditioned on not-fake: softmax over the k
        real logits."""
        l = self.class_logits(x)
        p = K.softmax_fwd(l.reshape(1, -1) if l.ndim == 1 else l)
        return p[0] if l.ndim == 1 else p

    def features(self, tag, z=None, x=None):
        """Named intermediate feature maps; joint tags need both z and x."""
        if tag == "x-pipeline-last":
            return self.x_pipe(x)
        if tag == "z-pipeline-last":
            return self.z_pipe(z)
        if tag == "trunk-penultimate":
            zf = self.z_pipe(z)
            xf = self.x_pipe(x)
            _, hidden = self.trunk(np.concatenate([zf, xf], axis=-1), return_hidden=True)
            return hidden[-2]
        raise KeyError(f"unknown feature tag {tag!r}; known: {FEATURE_TAGS}")

    # -- tape forward ----------------------------------------------------------

    def realness_on_tape(self, tape, z, x, frozen=False):
        zf = self.z_pipe.on_tape(tape, z, frozen)
        xf = self.x_pipe.on_tape(tape, x, frozen)
        logit = self.trunk.on_tape(tape, tape.concat(zf, xf), frozen)
        return tape.sigmoid(logit)

    def class_logits_on_tape(self, tape, x, frozen=False):
        return self.class_head.on_tape(tape, self.x_pipe.on_tape(tape, x, frozen), frozen)

    def features_on_tape(self, tape, tag, z=None, x=None, frozen=False):
        if tag == "x-pipeline-last":
            return self.x_pipe.on_tape(tape, x, frozen)
        if tag == "z-pipeline-last":
            return self.z_pipe.on_tape(tape, z, frozen)
        if tag == "trunk-penultimate":
            zf = self.z_pipe.on_tape(tape, z, frozen)
            xf = self.x_pipe.on_tape(tape, x, frozen)
            _, hidden = self.trunk.on_tape(
                tape, tape.concat(zf, xf), frozen, return_hidden=True
            )
            return hidden[-2]
        raise KeyError(f"unknown feature tag {tag!r}; known: {FEATURE_TAGS}")


def discriminator_forward(f, z, x):
    """(realness, class_logits, x-pipeline features) for a (z, x) pair."""
    return f.realness(z, x), f.class_logits(x), f.x_features(x)


# ---------------------------------------------------------------------------
# projector pair


class ProjectorPair:
    """Bottleneck pair p: R^d -> R^{d_p}, pbar: R^{d_p} -> R^d realized as one
    two-layer network with a tanh hidden layer of width d_p; p reads the
    hidden layer."""

    def __init__(self, d, d_p, seed=0):
        if not 0 < d_p < d:
            raise ValueError(f"need 0 < d_p < d, got d_p={d_p}, d={d}")
        self.d = int(d)
        self.d_p = int(d_p)
        self.seed = int(seed)
        self.net = MlpModel(
            MlpSpec((d, d_p, d), nonlinearity="tanh", weight_norm=False,
                    final_activation=False, seed=seed)
        )
        self.store = self.net.store

    def p(self, z):
        z = as_f64(z)
        single = z.ndim == 1
        h = K.affine_fwd(self.store["w0"], self.store["b0"],
                         z.reshape(1, -1) if single else z)
        h = K.tanh_fwd(h)
        return h[0] if single else h

    def pbar(self, u):
        u = as_f64(u)
        single = u.ndim == 1
        y = K.affine_fwd(self.store["w1"], self.store["b1"],
                         u.reshape(1, -1) if single else u)
        return y[0] if single else y

    def reconstruct(self, z):
        return self.pbar(self.p(z))

    def p_on_tape(self, tape, z, frozen=False):
        leaf = (lambda n: tape.const(self.store[n])) if frozen else (
            lambda n: tape.param(self.store, n)
        )
        return tape.tanh(tape.affine(leaf("w0"), leaf("b0"), z))

    def pbar_on_tape(self, tape, u, frozen=False):
        leaf = (lambda n: tape.const(self.store[n])) if frozen else (
            lambda n: tape.param(self.store, n)
        )
        return tape.affine(leaf("w1"), leaf("b1"), u)

    def reconstruct_on_tape(self, tape, z, frozen=False):
        return self.pbar_on_tape(tape, self.p_on_tape(tape, z, frozen), frozen)


# ---------------------------------------------------------------------------
# checkpoint serialization


def _spec_dict(model):
    if isinstance(model, MlpModel):
        return {"kind": "mlp", "spec": asdict(model.spec)}
    if isinstance(model, DualDiscriminator):
        return {"kind": "dual_discriminator", "spec": asdict(model.spec)}
    if isinstance(model, ProjectorPair):
        return {
            "kind": "projector_pair",
            "spec": {"d": model.d, "d_p": model.d_p, "seed": model.seed},
        }
    raise TypeError(f"cannot serialize {type(model).__name__}")


def save_model(path, model):
    """Self-describing JSON checkpoint: format version, spec, flat params."""
    doc = _spec_dict(model)
    doc["format_version"] = CHECKPOINT_FORMAT
    doc["params_flat"] = [float(v) for v in model.store.flatten()]
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format in {path}")
    kind, spec = doc["kind"], doc["spec"]
    if kind == "mlp":
        spec["layer_sizes"] = tuple(spec["layer_sizes"])
        model = MlpModel(MlpSpec(**spec))
    elif kind == "dual_discriminator":
        for key in ("z_hidden", "x_hidden", "trunk_hidden"):
            spec[key] = tuple(spec[key])
        model = DualDiscriminator(DiscSpec(**spec))
    elif kind == "projector_pair":
        model = ProjectorPair(**spec)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    model.store.unflatten(np.array(doc["params_flat"]))
    return model
