import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import receptive_field_by_probe
from poseanim.codec import temporal_layout
from poseanim.conditioning import GivenPrefix, PoseEncoder, RefPoseEncoder, assemble_input, receptive_field
from poseanim.config import ModelConfig, PoseEncoderConfig, RefPoseEncoderConfig
from poseanim.errors import ConfigError, DimensionError, ValidationError
from poseanim.numerics import Rng, Tensor, no_grad


@pytest.fixture(scope="module")
def encoder():
    return PoseEncoder(PoseEncoderConfig(), 1, Rng(0))


class TestPoseEncoder:
    def test_default_shape(self, encoder):
        with no_grad():
            out = encoder(Tensor(np.zeros((1, 17, 32, 32))))
        assert out.shape == (64, 5, 4, 4)

    def test_single_frame(self, encoder):
        with no_grad():
            assert encoder(Tensor(np.zeros((1, 1, 32, 32)))).shape == (64, 1, 4, 4)

    def test_zero_maps_zero_bias_give_zero(self, encoder):
        with no_grad():
            out = encoder(Tensor(np.zeros((1, 5, 16, 16))))
        assert not out.data.any()

    def test_invalid_frame_count(self, encoder):
        with pytest.raises(ValidationError, match="nearest valid"):
            encoder(Tensor(np.zeros((1, 6, 8, 8))))

    def test_bad_spatial_size(self, encoder):
        with pytest.raises(DimensionError):
            encoder(Tensor(np.zeros((1, 5, 12, 8))))

    def test_layout_mismatch_is_config_error(self):
        cfg = PoseEncoderConfig(2, (4, 4), 3, (2, 1), (2, 4))
        with pytest.raises(ConfigError, match="stride products"):
            PoseEncoder(cfg, 1, Rng(0))

    def test_grid_matches_layout_for_all_valid_lengths(self):
        small = PoseEncoderConfig(7, (2, 2, 2, 2, 2, 2, 2))
        enc = PoseEncoder(small, 1, Rng(1))
        with no_grad():
            for t in range(1, 202, 4):
                assert enc(Tensor(np.zeros((1, t, 8, 8)))).shape[1:] == (temporal_layout(t), 1, 1)

    def test_front_padding_replicates_frame_zero(self, encoder):
        from poseanim.numerics import conv3d, gelu

        maps = np.random.default_rng(3).random((1, 5, 16, 16))
        padded = np.concatenate([maps[:, :1]] * 3 + [maps], axis=1)
        x = Tensor(padded)
        cfg = PoseEncoderConfig()
        with no_grad():
            for i, layer in enumerate(encoder.layers):
                x = conv3d(x, layer.weight, layer.bias, (cfg.temporal_strides[i],) + (cfg.spatial_strides[i],) * 2, 1)
                x = gelu(x) if i < 6 else x
            assert encoder(Tensor(maps)).data.tobytes() == x.data.tobytes()


class TestReceptiveField:
    def test_default_and_truncated(self):
        cfg = PoseEncoderConfig()
        assert receptive_field(cfg)[0] == 31
        assert receptive_field(cfg.truncated(4))[0] == 11
        assert receptive_field(cfg.truncated(1)) == (3, 3, 3)

    def test_matches_impulse_probe(self):
        cfg = PoseEncoderConfig()
        for n in (1, 2, 4, 7):
            sub = cfg.truncated(n)
            probe_t = receptive_field_by_probe(sub.temporal_strides)
            probe_s = receptive_field_by_probe(sub.spatial_strides)
            assert receptive_field(sub) == (probe_t, probe_s, probe_s)

    def test_monotone_in_depth(self):
        cfg = PoseEncoderConfig()
        rf = [receptive_field(cfg.truncated(n)) for n in range(1, 8)]
        assert all(a[i] <= b[i] for a, b in zip(rf, rf[1:]) for i in range(3))


class TestRefPoseEncoder:
    def test_shape(self):
        enc = RefPoseEncoder(RefPoseEncoderConfig(), 1, 3, Rng(0))
        with no_grad():
            assert enc(Tensor(np.zeros((1, 32, 32)))).shape == (3, 4, 4)

    def test_zero_in_zero_out(self):
        enc = RefPoseEncoder(RefPoseEncoderConfig(), 1, 3, Rng(0))
        with no_grad():
            assert not enc(Tensor(np.zeros((1, 16, 16)))).data.any()

    def test_translation_by_8px_moves_one_cell(self):
        enc = RefPoseEncoder(RefPoseEncoderConfig(), 1, 3, Rng(2))
        x = np.zeros((1, 64, 64))
        x[0, 28:36, 20:28] = np.random.default_rng(0).random((8, 8))
        y = np.roll(x, 8, axis=2)
        with no_grad():
            fx, fy = enc(Tensor(x)).data, enc(Tensor(y)).data
        np.testing.assert_allclose(fy[:, 1:7, 2:7], fx[:, 1:7, 1:6], rtol=0, atol=1e-12)

    def test_stride_product_enforced(self):
        with pytest.raises(ConfigError):
            RefPoseEncoderConfig(strides=(2, 2, 1, 1))


class TestAssemble:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.noisy = rng.standard_normal((3, 5, 4, 4))
        self.ref = rng.random((3, 4, 4))
        self.feat = rng.standard_normal((3, 4, 4))

    def test_channel_count_and_no_prefix(self):
        x = assemble_input(self.noisy, self.ref, self.feat).data
        assert x.shape == (7, 5, 4, 4)
        assert not x[6].any()
        np.testing.assert_array_equal(x[:3], self.noisy)
        for t in range(5):
            np.testing.assert_array_equal(x[3:6, t], self.ref + self.feat)

    def test_prefix_two(self):
        clean = np.random.default_rng(1).random((3, 2, 4, 4))
        x = assemble_input(self.noisy, self.ref, self.feat, GivenPrefix(clean)).data
        assert np.all(x[6, :2] == 1) and np.all(x[6, 2:] == 0)
        np.testing.assert_array_equal(x[:3, :2], clean)
        np.testing.assert_array_equal(x[:3, 2:], self.noisy[:, 2:])

    def test_full_prefix(self):
        clean = np.zeros((3, 5, 4, 4))
        x = assemble_input(self.noisy, self.ref, self.feat, GivenPrefix(clean)).data
        assert np.all(x[6] == 1) and not x[:3].any()

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            assemble_input(self.noisy, self.ref[:, :2], self.feat)
        with pytest.raises(DimensionError):
            assemble_input(self.noisy, self.ref, self.feat, GivenPrefix(np.zeros((3, 2, 2, 2))))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 4))
    def test_channels_property(self, c, t, g):
        g = min(g, t)
        x = assemble_input(np.zeros((c, t, 2, 2)), np.zeros((c, 2, 2)), np.zeros((c, 2, 2)),
                           GivenPrefix(np.ones((c, g, 2, 2))) if g else None)
        assert x.shape[0] == 2 * c + 1 == ModelConfig(latent_channels=c).input_channels
        assert set(np.unique(x.data[-1])) <= {0.0, 1.0}
