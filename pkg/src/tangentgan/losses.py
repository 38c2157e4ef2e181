"""Training objectives.

Adversarial pair losses for the encoder-GAN variants, feature matching, the
(k+1)-class semi-supervised discriminator loss, the stochastic invariance
penalties, and their exact Jacobian oracles. Each objective exists twice: a
tape builder (used by the training loops, gradients flow to whichever models
are not frozen) and a plain evaluator returning floats for probing and tests.

Logs are clamped at 1e-12 so saturated discriminators stay finite; clamp
events are counted and surfaced in LossReport.saturations.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import LOG_CLAMP, Tape, as_f64, jacobian


@dataclass
class Batch:
    """One optimization batch: labeled pairs, unlabeled inputs, latent draws.

    Labels are 1..k."""

    x_labeled: np.ndarray | None = None
    y_labeled: np.ndarray | None = None
    x_unlabeled: np.ndarray | None = None
    z_latent: np.ndarray | None = None

    def reals(self):
        """All real examples, labeled block first."""
        parts = [p for p in (self.x_labeled, self.x_unlabeled) if p is not None and len(p)]
        if not parts:
            raise ValueError("batch has no real examples")
        return np.concatenate(parts, axis=0)


@dataclass
class LossReport:
    total: float
    components: dict = field(default_factory=dict)
    saturations: int = 0


def _check_nonempty(name, arr):
    if arr is None or len(arr) == 0:
        raise ValueError(f"{name} must be nonempty")


def _mean_log(tape, node):
    return tape.mean0(tape.clamped_log(node))


def _realness_vec(tape, f, z_node, x_node, frozen):
    # trunk emits (B, 1); rowsum squeezes the singleton column
    return tape.rowsum(f.realness_on_tape(tape, z_node, x_node, frozen=frozen))


# ---------------------------------------------------------------------------
# adversarial pair objectives (discriminator side)


def bigan_disc_node(tape, f, g, h, xs, zs, frozen_f=False):
    """-E_x log f(h(x), x) - E_z log(1 - f(z, g(z))); g and h are treated as
    fixed samplers (their outputs enter as constants)."""
    hx = tape.const(h(xs))
    gz = tape.const(g(zs))
    real = _mean_log(tape, _realness_vec(tape, f, hx, tape.const(xs), frozen_f))
    fake = _mean_log(
        tape, tape.one_minus(_realness_vec(tape, f, tape.const(zs), gz, frozen_f))
    )
    return tape.neg(real + fake)


def aug_bigan_disc_node(tape, f, g, h, xs, zs, w_latent=0.5, w_recon=0.5,
                        frozen_f=False):
    """Pair loss with the extra reconstruction pair (h(x), g(h(x))) judged
    fake; the two fake terms carry weights (1/2, 1/2) by default. Setting
    w_latent=1, w_recon=0 skips the third pair and recovers the plain
    objective bitwise."""
    hx_arr = h(xs)
    hx = tape.const(hx_arr)
    gz = tape.const(g(zs))
    real = _mean_log(tape, _realness_vec(tape, f, hx, tape.const(xs), frozen_f))
    fake_latent = _mean_log(
        tape, tape.one_minus(_realness_vec(tape, f, tape.const(zs), gz, frozen_f))
    )
    total = real + tape.scale(fake_latent, w_latent)
    comps = {"real": real, "fake_latent": fake_latent}
    if w_recon != 0.0:
        ghx = tape.const(g(hx_arr))
        fake_recon = _mean_log(
            tape, tape.one_minus(_realness_vec(tape, f, hx, ghx, frozen_f))
        )
        total = total + tape.scale(fake_recon, w_recon)
        comps["fake_recon"] = fake_recon
    return tape.neg(total), comps


def bigan_disc_loss(f, g, h, batch):
    _check_nonempty("unlabeled set", batch.x_unlabeled)
    _check_nonempty("latent set", batch.z_latent)
    tape = Tape()
    node = bigan_disc_node(tape, f, g, h, batch.x_unlabeled, batch.z_latent,
                           frozen_f=True)
    return float(node.value)


def augmented_bigan_disc_loss(f, g, h, batch, w_latent=0.5, w_recon=0.5):
    _check_nonempty("unlabeled set", batch.x_unlabeled)
    _check_nonempty("latent set", batch.z_latent)
    tape = Tape()
    node, comps = aug_bigan_disc_node(
        tape, f, g, h, batch.x_unlabeled, batch.z_latent, w_latent, w_recon,
        frozen_f=True,
    )
    return LossReport(
        total=float(node.value),
        components={k: float(v.value) for k, v in comps.items()},
        saturations=tape.saturations,
    )


# ---------------------------------------------------------------------------
# feature matching


def fm_node_from_features(tape, feats_a, feats_b):
    return tape.sqnorm(tape.sub(tape.mean0(feats_a), tape.mean0(feats_b)))


def pair_fm_node(tape, f, g, h, xs, zs, tag="trunk-penultimate"):
    """Feature-matching objective for the generator and encoder: match mean
    discriminator features between (h(x), x) and (z, g(z)) pairs. f is frozen;
    gradients flow into g and h."""
    hx = h.on_tape(tape, tape.const(xs))
    gz = g.on_tape(tape, tape.const(zs))
    fa = f.features_on_tape(tape, tag, z=hx, x=tape.const(xs), frozen=True)
    fb = f.features_on_tape(tape, tag, z=tape.const(zs), x=gz, frozen=True)
    return fm_node_from_features(tape, fa, fb)


def x_fm_node(tape, f, g, xs, zs, tag="x-pipeline-last"):
    """Feature matching on x-side features only (the semi-supervised
    generator objective)."""
    gz = g.on_tape(tape, tape.const(zs))
    fa = f.features_on_tape(tape, tag, x=tape.const(xs), frozen=True)
    fb = f.features_on_tape(tape, tag, x=gz, frozen=True)
    return fm_node_from_features(tape, fa, fb)


def feature_matching_loss(f, set_a, set_b, layer_tag="trunk-penultimate"):
    """Squared distance between mean features of two (z, x) pair sets.
    z entries may be None for x-only tags."""
    _check_nonempty("set_a", set_a)
    _check_nonempty("set_b", set_b)

    def mean_feats(pairs):
        feats = [f.features(layer_tag, z=z, x=x) for z, x in pairs]
        return np.mean(feats, axis=0)

    diff = mean_feats(set_a) - mean_feats(set_b)
    return float(diff @ diff)


# ---------------------------------------------------------------------------
# semi-supervised discriminator loss


def ssl_sup_node(tape, f, xs, ys, frozen_f=False):
    """-E log p(y | x, y<=k) over labeled pairs (labels 1..k)."""
    ys = np.asarray(ys, dtype=np.int64)
    if ys.min() < 1 or ys.max() > f.k:
        raise ValueError(f"labels must lie in 1..{f.k}")
    logits = f.class_logits_on_tape(tape, tape.const(xs), frozen=frozen_f)
    cond = tape.softmax(logits)
    picked = tape.gather(cond, ys - 1)
    return tape.neg(_mean_log(tape, picked))


def ssl_unsup_node(tape, f, x_real, x_fake, frozen_f=False):
    """-E_fake log p(k+1|x) - E_real log(1 - p(k+1|x))."""
    k = f.k

    def p_fake(xs):
        logits = f.class_logits_on_tape(tape, tape.const(xs), frozen=frozen_f)
        probs = tape.softmax_with_fake(logits)
        return tape.gather(probs, np.full(len(xs), k, dtype=np.int64))

    fake_term = _mean_log(tape, p_fake(x_fake))
    real_term = _mean_log(tape, tape.one_minus(p_fake(x_real)))
    return tape.neg(fake_term + real_term)


def ssl_disc_loss(f, batch, generator):
    """Supervised plus unsupervised discriminator loss; fakes are drawn by
    pushing the batch's latent set through the generator."""
    _check_nonempty("labeled set", batch.x_labeled)
    _check_nonempty("latent set", batch.z_latent)
    tape = Tape()
    sup = ssl_sup_node(tape, f, batch.x_labeled, batch.y_labeled, frozen_f=True)
    fakes = generator(batch.z_latent)
    unsup = ssl_unsup_node(tape, f, batch.reals(), fakes, frozen_f=True)
    total = sup + unsup
    return LossReport(
        total=float(total.value),
        components={"sup": float(sup.value), "unsup": float(unsup.value)},
        saturations=tape.saturations,
    )


def regular_gen_node(tape, f, g, zs):
    """E log p(k+1 | g(z)): the regular adversarial generator objective
    (generator minimizes). f is frozen; gradients flow into g."""
    xg = g.on_tape(tape, tape.const(zs))
    logits = f.class_logits_on_tape(tape, xg, frozen=True)
    probs = tape.softmax_with_fake(logits)
    pf = tape.gather(probs, np.full(len(zs), f.k, dtype=np.int64))
    return _mean_log(tape, pf)


def regular_gen_loss(f, fakes):
    """E log p(k+1 | x_g) over already-generated fakes."""
    _check_nonempty("fake set", fakes)
    probs = f.full_probs(as_f64(fakes))
    return float(np.mean(np.log(np.maximum(probs[:, f.k], LOG_CLAMP))))


def unsup_loss_from_logits(logits_fake, logits_real):
    """The unsupervised loss written directly in terms of the k free logits
    (the pinned-fake-logit rewriting); numerically via logsumexp."""

    def lse_with_zero(l):
        m = np.maximum(l.max(axis=1), 0.0)
        return m + np.log(np.exp(-m) + np.exp(l - m[:, None]).sum(axis=1))

    def lse(l):
        m = l.max(axis=1)
        return m + np.log(np.exp(l - m[:, None]).sum(axis=1))

    logits_fake = np.atleast_2d(as_f64(logits_fake))
    logits_real = np.atleast_2d(as_f64(logits_real))
    fake_term = np.mean(lse_with_zero(logits_fake))
    real_term = np.mean(lse(logits_real) - lse_with_zero(logits_real))
    return float(fake_term - real_term)


# ---------------------------------------------------------------------------
# invariance penalties


class CondProbClassifier:
    """Classifier view of a discriminator: probabilities over the k real
    classes (conditioned on not-fake)."""

    def __init__(self, f):
        self.f = f

    def __call__(self, x):
        return self.f.cond_class_probs(x)

    def on_tape(self, tape, x, frozen=True):
        return tape.softmax(self.f.class_logits_on_tape(tape, x, frozen=frozen))


class LogitClassifier:
    """Raw-logit view of a discriminator's class head."""

    def __init__(self, f):
        self.f = f

    def __call__(self, x):
        return self.f.class_logits(x)

    def on_tape(self, tape, x, frozen=True):
        return self.f.class_logits_on_tape(tape, x, frozen=frozen)


def perturbation_penalty(c, x, v):
    """|c(x+v) - c(x)|^2 for a fixed perturbation v."""
    d = as_f64(c(as_f64(x) + as_f64(v))) - as_f64(c(x))
    return float((d * d).sum())


def draw_tangent(directions, rng, step=0.1):
    """One uniformly drawn tangent row, rescaled to norm `step`."""
    directions = np.atleast_2d(as_f64(directions))
    if directions.shape[0] == 0:
        raise ValueError("empty tangent set")
    row = directions[rng.integers(directions.shape[0])]
    norm = np.linalg.norm(row)
    if norm == 0.0:
        raise ValueError("zero tangent vector")
    return (step / norm) * row


def tangentprop_penalty(c, x, tangents, rng, step=0.1):
    """Stochastic tangent-invariance penalty: one tangent draw per visit."""
    directions = getattr(tangents, "directions", tangents)
    return perturbation_penalty(c, x, draw_tangent(directions, rng, step))


def jacnorm_penalty(c, x, sigma, rng):
    """Stochastic Jacobian-norm penalty: one Gaussian perturbation per visit.
    E[penalty] / sigma^2 approaches |J_x c|_F^2 as sigma -> 0."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = as_f64(x)
    return perturbation_penalty(c, x, sigma * rng.standard_normal(x.shape))


def jacnorm_exact(c, x):
    """Squared Frobenius norm of J_x c via reverse-mode accumulation: the
    oracle for the stochastic estimator."""
    j = jacobian(lambda t, xn: c.on_tape(t, xn, frozen=True), x)
    return float((j * j).sum())


def mc_jacnorm_estimate(c, x, sigma, n_draws, rng):
    """Monte-Carlo mean of jacnorm_penalty / sigma^2, batched over draws."""
    x = as_f64(x)
    deltas = sigma * rng.standard_normal((n_draws, x.size))
    diff = as_f64(c(x[None, :] + deltas)) - as_f64(c(x))[None, :]
    return float(np.mean((diff * diff).sum(axis=1)) / sigma**2)


# ---------------------------------------------------------------------------
# combined objective


def penalty_terms_node(tape, f, xs, vs, deltas, penalty_on="probs"):
    """Mean perturbation penalties over a real batch: one tangent draw and one
    Gaussian draw per example (vs and deltas are precomputed, one row each)."""

    def cls(xarr):
        logits = f.class_logits_on_tape(tape, tape.const(xarr), frozen=False)
        return logits if penalty_on == "logits" else tape.softmax(logits)

    base = cls(xs)
    tangent = tape.mean0(tape.sqnorm(tape.sub(cls(xs + vs), base)))
    jac = tape.mean0(tape.sqnorm(tape.sub(cls(xs + deltas), base)))
    return tangent, jac


def draw_penalty_perturbations(tangents_per_x, rng, step, sigma, dim):
    """Per-example draws for the stochastic penalties."""
    vs = np.stack([draw_tangent(t, rng, step) for t in tangents_per_x])
    deltas = sigma * rng.standard_normal((len(tangents_per_x), dim))
    return vs, deltas


def final_ssl_node(tape, f, generator, batch, vs, deltas, lam1=1.0, lam2=1.0,
                   penalty_on="probs", frozen_f=False):
    """Combined discriminator objective: supervised + unsupervised + weighted
    stochastic invariance penalties. Returns (total, components)."""
    sup = ssl_sup_node(tape, f, batch.x_labeled, batch.y_labeled, frozen_f=frozen_f)
    reals = batch.reals()
    fakes = generator(batch.z_latent)
    unsup = ssl_unsup_node(tape, f, reals, fakes, frozen_f=frozen_f)
    total = sup + unsup
    comps = {"sup": sup, "unsup": unsup}
    if lam1 != 0.0 or lam2 != 0.0:
        tangent, jac = penalty_terms_node(tape, f, reals, vs, deltas, penalty_on)
        comps["tangent"] = tangent
        comps["jacnorm"] = jac
        if lam1 != 0.0:
            total = total + tape.scale(tangent, lam1)
        if lam2 != 0.0:
            total = total + tape.scale(jac, lam2)
    return total, comps


def final_ssl_loss(f, batch, tangents_per_x, lam1, lam2, sigma, rng,
                   generator, step=0.1, penalty_on="probs"):
    """Evaluate the combined objective (one stochastic draw per example).

    tangents_per_x: one tangent matrix per real example in batch.reals()
    order (labeled block first). Required when lam1 > 0."""
    if lam1 < 0 or lam2 < 0:
        raise ValueError("penalty weights must be nonnegative")
    _check_nonempty("labeled set", batch.x_labeled)
    reals = batch.reals()
    if lam1 > 0 and (tangents_per_x is None or len(tangents_per_x) != len(reals)):
        raise ValueError("need one tangent basis per real example when lam1 > 0")
    tape = Tape()
    if lam1 == 0.0 and lam2 == 0.0:
        total, comps = final_ssl_node(tape, f, generator, batch, None, None,
                                      0.0, 0.0, penalty_on, frozen_f=True)
    else:
        if tangents_per_x is None:
            # jacnorm-only runs still need per-example draws; tangent draws
            # are placeholders that receive weight 0
            tangents_per_x = [np.eye(1, reals.shape[1])] * len(reals)
        vs, deltas = draw_penalty_perturbations(
            [getattr(t, "directions", t) for t in tangents_per_x], rng, step, sigma,
            reals.shape[1],
        )
        total, comps = final_ssl_node(tape, f, generator, batch, vs, deltas,
                                      lam1, lam2, penalty_on, frozen_f=True)
    return LossReport(
        total=float(total.value),
        components={k: float(v.value) for k, v in comps.items()},
        saturations=tape.saturations,
    )
