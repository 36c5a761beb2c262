import numpy as np
import pytest

from outfitkit.encoders import ItemEncoderConfig
from outfitkit.errors import ConfigError, InputError
from outfitkit.model import (
    ModelConfig,
    OutfitModel,
    TargetSpec,
    build_padding_mask,
    pack_features,
    full_scale_config,
)
from outfitkit.nn import Tensor, grad_check


def tiny_config() -> ModelConfig:
    return ModelConfig(
        model_dim=8, layers=1, heads=2, ff_hidden=16, max_outfit_len=8,
        encoder=ItemEncoderConfig(d_img=4, d_text=4, payload_dim=4))


def tiny_model(seed=0) -> OutfitModel:
    return OutfitModel(tiny_config(), np.random.default_rng(seed))


def rand_features(rng, L, d=8) -> Tensor:
    return Tensor(rng.normal(size=(L, d)))


class TestConfig:
    def test_dim_must_match_encoder_halves(self):
        cfg = ModelConfig(model_dim=100)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_heads_must_divide(self):
        cfg = ModelConfig(heads=7)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_min_outfit_len(self):
        cfg = ModelConfig(max_outfit_len=1)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_roundtrip_dict(self):
        cfg = tiny_config()
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_full_scale_preset(self):
        cfg = full_scale_config()
        cfg.validate()
        assert cfg.layers == 6 and cfg.heads == 16 and cfg.model_dim == 128


class TestCompatibilityForward:
    def test_score_in_unit_interval(self):
        m = tiny_model()
        rng = np.random.default_rng(1)
        for L in (2, 4, 8):
            s = m.cp_forward(rand_features(rng, L)).item()
            assert 0.0 < s < 1.0

    def test_rejects_short_outfit(self):
        m = tiny_model()
        with pytest.raises(InputError):
            m.cp_forward(rand_features(np.random.default_rng(2), 1))

    def test_rejects_overlong_outfit(self):
        m = tiny_model()
        with pytest.raises(InputError):
            m.cp_forward(rand_features(np.random.default_rng(3), 9))

    def test_set_invariance(self):
        m = tiny_model()
        rng = np.random.default_rng(4)
        feats = rng.normal(size=(5, 8))
        base = m.cp_forward(Tensor(feats)).item()
        for _ in range(20):
            perm = rng.permutation(5)
            s = m.cp_forward(Tensor(feats[perm])).item()
            assert abs(s - base) < 1e-6

    def test_padding_is_noop(self):
        m = tiny_model()
        rng = np.random.default_rng(5)
        for L in range(2, 9):
            feats = rng.normal(size=(L, 8))
            bare = m.cp_forward(Tensor(feats)).item()
            padded = np.zeros((1, 8, 8))
            padded[0, :L] = feats
            got = m.cp_forward_batch(Tensor(padded), np.array([L])).item()
            assert abs(got - bare) < 1e-6

    def test_batch_matches_single(self):
        m = tiny_model()
        rng = np.random.default_rng(6)
        lens = [2, 5, 3]
        feats = [rng.normal(size=(L, 8)) for L in lens]
        singles = [m.cp_forward(Tensor(f)).item() for f in feats]
        padded = np.zeros((3, 5, 8))
        for i, f in enumerate(feats):
            padded[i, :len(f)] = f
        batch = m.cp_forward_batch(Tensor(padded), np.array(lens)).data
        np.testing.assert_allclose(batch, singles, atol=1e-9)


class TestRetrievalForward:
    def test_embedding_dim_matches_feature_space(self):
        m = tiny_model()
        t = m.cir_forward(rand_features(np.random.default_rng(7), 3),
                          TargetSpec("category", "boots"))
        assert t.shape == (8,)

    def test_single_item_partial_outfit_ok(self):
        m = tiny_model()
        t = m.cir_forward(rand_features(np.random.default_rng(8), 1),
                          TargetSpec("category", "hat"))
        assert np.all(np.isfinite(t.data))

    def test_empty_partial_outfit_rejected(self):
        m = tiny_model()
        with pytest.raises(InputError):
            m.cir_forward_batch(Tensor(np.zeros((1, 1, 8))), np.array([0]),
                                [TargetSpec("category", "hat")])

    def test_spec_must_be_valid(self):
        m = tiny_model()
        feats = rand_features(np.random.default_rng(9), 2)
        with pytest.raises(InputError):
            m.cir_forward(feats, TargetSpec("category", "  "))
        with pytest.raises(InputError):
            m.cir_forward(feats, TargetSpec("picture", "boots"))

    def test_set_invariance(self):
        m = tiny_model()
        rng = np.random.default_rng(10)
        feats = rng.normal(size=(4, 8))
        spec = TargetSpec("category", "scarf")
        base = m.cir_forward(Tensor(feats), spec).data
        for _ in range(20):
            perm = rng.permutation(4)
            t = m.cir_forward(Tensor(feats[perm]), spec).data
            assert np.abs(t - base).max() < 1e-6

    def test_different_targets_different_embeddings(self):
        m = tiny_model()
        feats = rand_features(np.random.default_rng(11), 3)
        a = m.cir_forward(feats, TargetSpec("category", "boots")).data
        b = m.cir_forward(feats, TargetSpec("category", "scarf")).data
        assert np.linalg.norm(a - b) > 0

    def test_padding_is_noop(self):
        m = tiny_model()
        rng = np.random.default_rng(12)
        feats = rng.normal(size=(3, 8))
        spec = TargetSpec("free_text", "warm winter hat")
        bare = m.cir_forward(Tensor(feats), spec).data
        padded = np.zeros((1, 7, 8))
        padded[0, :3] = feats
        got = m.cir_forward_batch(Tensor(padded), np.array([3]), [spec]).data[0]
        assert np.abs(got - bare).max() < 1e-6


class TestPacking:
    def test_pack_shapes_and_zero_padding(self):
        rng = np.random.default_rng(13)
        table = Tensor(rng.normal(size=(6, 4)), requires_grad=True)
        padded, lengths = pack_features(table, [[0, 1, 2], [3, 4]])
        assert padded.shape == (2, 3, 4)
        np.testing.assert_array_equal(lengths, [3, 2])
        np.testing.assert_array_equal(padded.data[1, 2], np.zeros(4))

    def test_pack_gradient_only_hits_used_rows(self):
        rng = np.random.default_rng(14)
        table = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        padded, _ = pack_features(table, [[1, 3]])
        padded.sum().backward()
        used = np.zeros((5, 3))
        used[[1, 3]] = 1.0
        np.testing.assert_array_equal(table.grad, used)

    def test_mask_layout(self):
        mask = build_padding_mask(np.array([2, 4]), max_len=4)
        assert mask.shape == (2, 1, 1, 5)
        np.testing.assert_array_equal(mask[0, 0, 0], [0, 0, 0, -1e9, -1e9])
        np.testing.assert_array_equal(mask[1, 0, 0], [0, 0, 0, 0, 0])


class TestIdentity:
    def test_fingerprint_tracks_weights(self):
        m = tiny_model()
        fp = m.fingerprint()
        assert fp == m.fingerprint()
        m.cp_head.lin1.weight.data[0, 0] += 1.0
        assert m.fingerprint() != fp

    def test_trunk_fingerprint_ignores_heads(self):
        m = tiny_model()
        fp = m.trunk_fingerprint()
        m.cp_head.lin1.weight.data[0, 0] += 1.0
        m.cir_head.lin2.weight.data[0, 0] += 1.0
        assert m.trunk_fingerprint() == fp
        m.outfit_token.data[0, 0] += 1.0
        assert m.trunk_fingerprint() != fp

    def test_state_roundtrip_bit_exact(self):
        m = tiny_model(seed=3)
        other = tiny_model(seed=4)
        other.load_state_arrays(m.state_arrays())
        assert other.fingerprint() == m.fingerprint()
        rng = np.random.default_rng(15)
        feats = rng.normal(size=(3, 8))
        a = m.cp_forward(Tensor(feats)).item()
        b = other.cp_forward(Tensor(feats)).item()
        assert a == b

    def test_load_rejects_missing_params(self):
        m = tiny_model()
        state = m.state_arrays()[:-1]
        with pytest.raises(ConfigError):
            tiny_model(1).load_state_arrays(state)


class TestEndToEndGradients:
    def test_cp_path_full_gradcheck(self):
        m = tiny_model(seed=20)
        rng = np.random.default_rng(21)
        feats = Tensor(rng.normal(size=(3, 8)), requires_grad=True)
        leaves = [feats] + [p for _, p in m.parameters()]

        def f():
            s = m.cp_forward(feats)
            return (s - 0.3).power(2.0)

        assert grad_check(f, leaves, samples=3, rng=rng) < 1e-4

    def test_cir_path_full_gradcheck(self):
        m = tiny_model(seed=22)
        rng = np.random.default_rng(23)
        feats = Tensor(rng.normal(size=(2, 8)), requires_grad=True)
        spec = TargetSpec("category", "boots style1")
        target = rng.normal(size=(8,))
        leaves = [feats] + [p for _, p in m.parameters()]

        def f():
            t = m.cir_forward(feats, spec)
            return (t - Tensor(target)).power(2.0).sum()

        assert grad_check(f, leaves, samples=3, rng=rng) < 1e-4
