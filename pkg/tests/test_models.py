"""Parametric maps: init, forward contracts, weight norm, discriminator
wiring, projector pair, and checkpoint round-trips."""

import numpy as np
import pytest

from tangentgan.core import Tape, finite_diff_jacobian, jacobian
from tangentgan.models import (
    DiscSpec,
    DualDiscriminator,
    LinearMap,
    MlpModel,
    MlpSpec,
    ProjectorPair,
    discriminator_forward,
    init_model,
    load_model,
    save_model,
)


def small_spec(**kw):
    base = dict(layer_sizes=(4, 6, 3), seed=5)
    base.update(kw)
    return MlpSpec(**base)


class TestInit:
    def test_same_seed_same_params(self):
        m1 = init_model(small_spec())
        m2 = init_model(small_spec())
        for name in m1.store.names():
            np.testing.assert_array_equal(m1.store[name], m2.store[name])

    def test_param_counts(self):
        m = MlpModel(MlpSpec((4, 3), weight_norm=True))
        assert m.store["v0"].size == 12
        assert m.store["b0"].size == 3
        assert m.store["s0"].size == 3
        m = MlpModel(MlpSpec((4, 3), weight_norm=False))
        assert m.store.size == 15

    def test_initial_outputs_order_one(self):
        x = np.ones(8)
        for seed in range(100):
            m = MlpModel(MlpSpec((8, 16, 16, 4), seed=seed))
            y = m(x)
            assert np.isfinite(y).all()
            assert np.abs(y).max() < 10.0

    def test_weight_norm_scale_starts_at_draw_norm(self):
        m = MlpModel(small_spec())
        v = m.store["v0"]
        np.testing.assert_allclose(
            m.store["s0"], np.sqrt((v * v).sum(axis=1)), atol=1e-14
        )

    def test_rejects_bad_specs(self):
        with pytest.raises(ValueError):
            MlpSpec((4,))
        with pytest.raises(ValueError):
            MlpSpec((4, 0, 2))
        with pytest.raises(ValueError):
            MlpSpec((4, 2), nonlinearity="relu")


class TestForward:
    def test_identity_single_layer(self):
        m = MlpModel(MlpSpec((3, 3), weight_norm=False))
        m.store["w0"] = np.eye(3)
        x = np.array([0.3, -1.0, 2.0])
        np.testing.assert_array_equal(m(x), x)

    def test_batch_equals_stacked_singles_bitwise(self):
        m = MlpModel(small_spec())
        rng = np.random.default_rng(0)
        xs = rng.standard_normal((7, 4))
        batched = m(xs)
        for i in range(7):
            np.testing.assert_array_equal(batched[i], m(xs[i]))

    def test_weight_norm_effective_weight(self):
        # v=(3,4), s=10: effective row is 10*(3,4)/5, so x=(1,0) -> 6
        m = MlpModel(MlpSpec((2, 1), weight_norm=True))
        m.store["v0"] = np.array([[3.0, 4.0]])
        m.store["s0"] = np.array([10.0])
        m.store["b0"] = np.array([0.0])
        assert m(np.array([1.0, 0.0]))[0] == pytest.approx(6.0, abs=1e-14)

    def test_direction_rescaling_is_invisible(self):
        # scaling v by c > 0 leaves outputs and input-Jacobians unchanged
        m1 = init_model(small_spec())
        m2 = init_model(small_spec())
        m2.store["v0"] = 7.3 * m2.store["v0"]
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.standard_normal(4)
            np.testing.assert_allclose(m1(x), m2(x), atol=1e-12)
        x0 = rng.standard_normal(4)
        j1 = jacobian(lambda t, xn: m1.on_tape(t, xn, frozen=True), x0)
        j2 = jacobian(lambda t, xn: m2.on_tape(t, xn, frozen=True), x0)
        np.testing.assert_allclose(j1, j2, atol=1e-12)

    def test_tape_forward_matches_plain_bitwise(self):
        for wn in (True, False):
            for nl in ("elu", "tanh"):
                m = init_model(small_spec(weight_norm=wn, nonlinearity=nl))
                x = np.random.default_rng(2).standard_normal(4)
                t = Tape()
                np.testing.assert_array_equal(m.on_tape(t, t.const(x)).value, m(x))

    def test_dim_mismatch(self):
        m = init_model(small_spec())
        with pytest.raises(Exception):
            m(np.ones(5))

    def test_reverse_mode_jacobian_matches_finite_differences(self):
        # encoder-shaped map, weight norm + ELU
        h = MlpModel(MlpSpec((10, 16, 4), seed=3))
        rng = np.random.default_rng(4)
        for _ in range(5):
            x0 = rng.standard_normal(10)
            j = jacobian(lambda t, xn: h.on_tape(t, xn, frozen=True), x0)
            jfd = finite_diff_jacobian(h, x0, eps=1e-4)
            assert np.abs(j - jfd).max() / (1.0 + np.abs(j).max()) < 1e-5


class TestFrozen:
    def test_frozen_forward_blocks_gradients(self):
        from tangentgan.core import backward

        m = init_model(small_spec())
        t = Tape()
        out = t.sqnorm(m.on_tape(t, t.const(np.ones(4)), frozen=True))
        backward(t, out)
        grads = t.param_grads(m.store)
        assert all(np.all(g == 0) for g in grads.values())


class TestDualDiscriminator:
    def spec(self):
        return DiscSpec(z_dim=3, x_dim=6, n_classes=2, z_hidden=(8,),
                        x_hidden=(8, 8), trunk_hidden=(8,), seed=9)

    @staticmethod
    def zero_effective_weights(f):
        # zero scales and biases: effective weights vanish while direction
        # vectors keep the nonzero norm weight norm requires
        for name in f.store.names():
            if ".s" in name or ".b" in name:
                f.store[name] = np.zeros_like(f.store[name])

    def test_zero_params_give_half_realness(self):
        f = DualDiscriminator(self.spec())
        self.zero_effective_weights(f)
        r = f.realness(np.zeros(3), np.zeros(6))
        assert r == pytest.approx(0.5, abs=1e-15)

    def test_trunk_penultimate_zero_on_zero_params(self):
        f = DualDiscriminator(self.spec())
        self.zero_effective_weights(f)
        feat = f.features("trunk-penultimate", z=np.ones(3), x=np.ones(6))
        np.testing.assert_array_equal(feat, np.zeros(8))

    def test_x_features_independent_of_z_branch(self):
        f = DualDiscriminator(self.spec())
        x = np.random.default_rng(5).standard_normal(6)
        realness, logits, feats = discriminator_forward(
            f, np.random.default_rng(6).standard_normal(3), x
        )
        np.testing.assert_array_equal(feats, f.features("x-pipeline-last", x=x))
        np.testing.assert_array_equal(feats, f.x_features(x))
        assert 0.0 < realness < 1.0
        assert logits.shape == (2,)

    def test_class_logits_function_of_x_only(self):
        f = DualDiscriminator(self.spec())
        x = np.ones(6)
        l = f.class_logits(x)
        p = f.full_probs(x)
        assert p.shape == (3,)
        assert abs(p.sum() - 1.0) < 1e-12

    def test_feature_dims_and_unknown_tag(self):
        f = DualDiscriminator(self.spec())
        z, x = np.ones(3), np.ones(6)
        assert f.features("x-pipeline-last", x=x).shape == (8,)
        assert f.features("z-pipeline-last", z=z).shape == (8,)
        assert f.features("trunk-penultimate", z=z, x=x).shape == (8,)
        with pytest.raises(KeyError):
            f.features("nope", z=z, x=x)

    def test_tape_paths_match_plain(self):
        f = DualDiscriminator(self.spec())
        rng = np.random.default_rng(7)
        z, x = rng.standard_normal(3), rng.standard_normal(6)
        t = Tape()
        np.testing.assert_allclose(
            f.realness_on_tape(t, t.const(z), t.const(x)).value, f.realness(z, x),
            atol=1e-15,
        )
        t = Tape()
        np.testing.assert_array_equal(
            f.class_logits_on_tape(t, t.const(x)).value, f.class_logits(x)
        )
        t = Tape()
        np.testing.assert_array_equal(
            f.features_on_tape(t, "trunk-penultimate", z=t.const(z), x=t.const(x)).value,
            f.features("trunk-penultimate", z=z, x=x),
        )


class TestProjectorPair:
    def test_shapes_and_bottleneck(self):
        pp = ProjectorPair(d=6, d_p=3, seed=1)
        z = np.random.default_rng(8).standard_normal(6)
        u = pp.p(z)
        assert u.shape == (3,)
        assert pp.pbar(u).shape == (6,)
        assert pp.reconstruct(z).shape == (6,)

    def test_requires_proper_bottleneck(self):
        with pytest.raises(ValueError):
            ProjectorPair(d=4, d_p=4)
        with pytest.raises(ValueError):
            ProjectorPair(d=4, d_p=0)

    def test_tape_matches_plain(self):
        pp = ProjectorPair(d=5, d_p=2, seed=2)
        z = np.random.default_rng(9).standard_normal(5)
        t = Tape()
        np.testing.assert_array_equal(
            pp.reconstruct_on_tape(t, t.const(z)).value, pp.reconstruct(z)
        )


class TestCheckpoints:
    def test_mlp_roundtrip(self, tmp_path):
        m = init_model(small_spec(nonlinearity="tanh", weight_norm=True))
        m.store["b0"] = np.random.default_rng(10).standard_normal(6)
        path = tmp_path / "m.json"
        save_model(path, m)
        m2 = load_model(path)
        assert m2.spec == m.spec
        np.testing.assert_array_equal(m2.store.flatten(), m.store.flatten())

    def test_discriminator_roundtrip(self, tmp_path):
        f = DualDiscriminator(DiscSpec(z_dim=2, x_dim=4, n_classes=3, seed=11))
        path = tmp_path / "f.json"
        save_model(path, f)
        f2 = load_model(path)
        assert f2.spec == f.spec
        x = np.random.default_rng(11).standard_normal(4)
        np.testing.assert_array_equal(f2.class_logits(x), f.class_logits(x))

    def test_projector_roundtrip(self, tmp_path):
        pp = ProjectorPair(d=5, d_p=2, seed=3)
        save_model(tmp_path / "p.json", pp)
        pp2 = load_model(tmp_path / "p.json")
        np.testing.assert_array_equal(pp2.store.flatten(), pp.store.flatten())


def test_linear_map_tape_and_plain_agree():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    lm = LinearMap(a)
    x = np.array([0.5, -1.0])
    t = Tape()
    np.testing.assert_array_equal(lm.on_tape(t, t.const(x)).value, lm(x))
    np.testing.assert_array_equal(lm(x), a @ x)
