import numpy as np
import pytest

from nnclr.errors import BatchTooSmall
from nnclr.gradcheck import check_encode_loss
from nnclr.model import EncoderSpec, Model, MomentumEncoder, ema_update


def small_spec(**overrides):
    base = dict(input_dim=6, backbone_dims=[8], feature_dim=8,
                projection_dims=[8, 8, 4], prediction_dims=[8, 4],
                use_prediction_head=True)
    base.update(overrides)
    return EncoderSpec(**base)


class TestEncode:
    def test_zero_depth_backbone_matches_manual_composition(self):
        spec = small_spec(backbone_dims=[])
        model = Model(spec, np.random.default_rng(0))
        x = np.random.default_rng(1).standard_normal((4, 6))
        h, z = model.encode(x, mode="train")
        # oracle: run the same layer stacks by hand
        h_ref, _ = model.backbone.forward(x, training=True, update_running=False)
        z_ref, _ = model.projection.forward(h_ref, training=True, update_running=False)
        np.testing.assert_array_equal(h, h_ref)
        np.testing.assert_array_equal(z, z_ref)
        # with an empty backbone, h is an affine map of x
        lin = model.backbone.layers[0]
        np.testing.assert_allclose(h, x @ lin.W.values + lin.b.values)

    def test_single_sample_modes(self):
        model = Model(small_spec(), np.random.default_rng(0))
        x = np.ones((1, 6))
        h, z = model.encode(x, mode="eval")
        assert h.shape == (1, 8) and z.shape == (1, 4)
        with pytest.raises(BatchTooSmall):
            model.encode(x, mode="train")

    def test_determinism(self):
        model = Model(small_spec(), np.random.default_rng(0))
        x = np.random.default_rng(2).standard_normal((4, 6))
        h1, z1 = model.encode(x, mode="eval")
        h2, z2 = model.encode(x, mode="eval")
        np.testing.assert_array_equal(h1, h2)
        np.testing.assert_array_equal(z1, z2)

    def test_composed_gradcheck(self):
        assert check_encode_loss(range(3)) < 1e-4


class TestPredict:
    def test_identity_without_head(self):
        model = Model(small_spec(use_prediction_head=False), np.random.default_rng(0))
        z = np.random.default_rng(3).standard_normal((4, 4))
        assert model.predict(z) is z

    def test_head_produces_finite_output(self):
        model = Model(small_spec(), np.random.default_rng(0))
        z = np.random.default_rng(4).standard_normal((4, 4))
        p = model.predict(z, mode="train")
        assert p.shape == z.shape and np.all(np.isfinite(p))

    def test_head_toggle_leaves_encoder_branch_bitwise_unchanged(self):
        x = np.random.default_rng(5).standard_normal((4, 6))
        with_head = Model(small_spec(), np.random.default_rng(0))
        without = Model(small_spec(use_prediction_head=False), np.random.default_rng(0))
        np.testing.assert_array_equal(with_head.encode(x, "eval")[1],
                                      without.encode(x, "eval")[1])


class TestMomentumEncoder:
    def test_m_zero_copies_online(self):
        model = Model(small_spec(), np.random.default_rng(0))
        target = MomentumEncoder(model, m=0.5)
        for p in model.encoder_params():
            p.values += 1.0
        ema_update(target.shadow, model, m=0.0)
        online = {p.name: p.values for p in model.encoder_params()}
        for p in target.shadow.encoder_params():
            np.testing.assert_array_equal(p.values, online[p.name])

    def test_geometric_decay(self):
        model = Model(small_spec(), np.random.default_rng(0))
        target = MomentumEncoder(model, m=0.9)
        for p in model.encoder_params():
            p.values += 1.0
        online = {p.name: p.values for p in model.encoder_params()}

        def gap():
            return max(np.max(np.abs(p.values - online[p.name]))
                       for p in target.shadow.encoder_params())

        g0 = gap()
        target.update(model)
        g1 = gap()
        target.update(model)
        g2 = gap()
        assert g1 == pytest.approx(0.9 * g0, rel=1e-12)
        assert g2 == pytest.approx(0.9 * g1, rel=1e-12)

    def test_shadow_shapes_match(self):
        model = Model(small_spec(), np.random.default_rng(0))
        target = MomentumEncoder(model, m=0.99)
        online = {p.name: p.values.shape for p in model.encoder_params()}
        shadow = {p.name: p.values.shape for p in target.shadow.encoder_params()}
        assert online == shadow


def test_spec_validation():
    with pytest.raises(AssertionError):
        EncoderSpec(input_dim=4, projection_dims=[8, 4]).validate()
    with pytest.raises(AssertionError):
        EncoderSpec(input_dim=4, projection_dims=[8, 8, 4],
                    prediction_dims=[8, 5]).validate()
