import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poseanim.config import LORA_TARGETS, LoraConfig, ModelConfig
from poseanim.dit import (
    DiT,
    block_parameter_count,
    inject_pose_tokens,
    patchify,
    position_encoding,
    position_grid,
    unpatchify,
)
from poseanim.errors import ConfigError, DimensionError, NumericalError
from poseanim.lora import LoraLinear, is_wrapped, lora_apply, lora_merge
from poseanim.numerics import Linear, Rng, Tensor, no_grad


def rand(shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


@pytest.fixture
def cfg():
    return ModelConfig()


@pytest.fixture
def dit(cfg):
    return DiT(cfg, Rng(0))


def run(dit, x, pose, t=0.4):
    with no_grad():
        return dit(Tensor(x), t, Tensor(pose)).data


class TestPatchify:
    def test_counts(self):
        assert patchify(Tensor(np.zeros((7, 5, 4, 4))), (1, 2, 2)).shape == (20, 28)
        assert patchify(Tensor(np.zeros((7, 1, 2, 2))), (1, 2, 2)).shape == (1, 28)

    def test_token_order_time_major(self):
        x = np.zeros((1, 2, 4, 4))
        x[0, 1, 2, 0] = 1.0  # t=1, patch row 1, patch col 0
        tok = patchify(Tensor(x), (1, 2, 2)).data
        assert np.argwhere(tok)[0].tolist() == [1 * 4 + 1 * 2 + 0, 0]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
           st.sampled_from([(1, 2, 2), (1, 1, 1), (2, 1, 2)]))
    def test_round_trip(self, c, tn, hn, wn, patch):
        x = rand((c, tn * patch[0], hn * patch[1], wn * patch[2]), seed=c + tn)
        tok = patchify(Tensor(x), patch)
        back = unpatchify(tok, c, (tn, hn, wn), patch).data
        assert back.tobytes() == x.tobytes()

    def test_indivisible_grid(self):
        with pytest.raises(ConfigError):
            patchify(Tensor(np.zeros((7, 5, 3, 4))), (1, 2, 2))


class TestPositionEncoding:
    def test_origin_pattern(self):
        v = position_encoding(0, 0, 0, 64)
        assert v.shape == (64,)
        block = np.tile([0.0, 1.0], 10)
        for a in range(3):
            np.testing.assert_array_equal(v[a * 20:(a + 1) * 20], block)
        assert not v[60:].any()

    def test_distinct_on_64_cube(self):
        grid = position_grid((64, 64, 64), 64)
        # distinct iff every axis block distinct; check per axis (64 values each) then rely on factorization
        for a in range(3):
            axis_vals = np.array([position_encoding(*(i if k == a else 0 for k in range(3)), 64)[a * 20:(a + 1) * 20]
                                  for i in range(64)])
            d = np.linalg.norm(axis_vals[:, None] - axis_vals[None], axis=-1)
            assert d[~np.eye(64, dtype=bool)].min() > 0
        assert grid.shape == (64 ** 3, 64)
        assert len(np.unique(grid.round(12), axis=0)) == 64 ** 3

    def test_absolute_across_grid_sizes(self):
        small = position_grid((2, 2, 2), 64)
        large = position_grid((2, 3, 3), 64)
        # token (t=1, h=1, w=1): index 7 in the 2x2x2 grid, 1*9 + 1*3 + 1 = 13 in the 2x3x3 grid
        assert small[7].tobytes() == large[13].tobytes() == position_encoding(1, 1, 1, 64).tobytes()

    def test_large_indices_finite(self):
        assert np.isfinite(position_encoding(10_000, 5_000, 123_456, 64)).all()


class TestPoseInjection:
    def test_zero_features_zero_bias_identity(self, dit):
        tokens = Tensor(rand((20, 64)))
        out = inject_pose_tokens(tokens, Tensor(np.zeros((64, 5, 4, 4))), dit.pose_proj, (1, 2, 2), (5, 4, 4))
        assert out.data.tobytes() == tokens.data.tobytes()

    def test_locality(self, dit):
        tokens = Tensor(np.zeros((20, 64)))
        pose = np.zeros((64, 5, 4, 4))
        pose[:, 0, 0:2, 0:2] = 1.0   # token 0
        pose[:, 3, 2:4, 2:4] = -2.0  # token 3*4 + 1*2 + 1 = 15
        out = inject_pose_tokens(tokens, Tensor(pose), dit.pose_proj, (1, 2, 2), (5, 4, 4)).data
        changed = np.flatnonzero(np.abs(out).sum(axis=1))
        assert changed.tolist() == [0, 15]

    def test_grid_mismatch(self, dit):
        with pytest.raises(DimensionError):
            inject_pose_tokens(Tensor(np.zeros((20, 64))), Tensor(np.zeros((64, 4, 4, 4))), dit.pose_proj,
                               (1, 2, 2), (5, 4, 4))


class TestForward:
    def test_shape(self, dit):
        assert run(dit, rand((7, 5, 4, 4)), rand((64, 5, 4, 4), 1)).shape == (3, 5, 4, 4)

    @settings(max_examples=8, deadline=None)
    @given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4))
    def test_any_divisible_grid(self, t, h, w):
        d = DiT(ModelConfig(), Rng(0))
        out = run(d, rand((7, t, 2 * h, 2 * w)), rand((64, t, 2 * h, 2 * w), 1))
        assert out.shape == (3, t, 2 * h, 2 * w) and np.isfinite(out).all()

    def test_resolution_extrapolation(self, dit):
        assert run(dit, rand((7, 5, 8, 8)), rand((64, 5, 8, 8), 1)).shape == (3, 5, 8, 8)

    def test_nan_names_block(self, dit):
        dit.blocks[2].mlp.fc1.weight.data[0, 0] = np.inf
        with pytest.raises(NumericalError, match="block 2"):
            run(dit, rand((7, 1, 2, 2)), rand((64, 1, 2, 2)))

    def test_wrong_input_channels(self, dit):
        with pytest.raises(DimensionError):
            run(dit, rand((6, 1, 2, 2)), rand((64, 1, 2, 2)))


class TestLora:
    def test_identity_at_init_bitwise(self, cfg):
        base = DiT(cfg, Rng(5))
        wrapped = DiT(cfg, Rng(5))
        lora_apply(wrapped, LoraConfig())
        x, pose = rand((7, 5, 4, 4)), rand((64, 5, 4, 4), 1)
        assert run(base, x, pose).tobytes() == run(wrapped, x, pose).tobytes()

    def test_census(self, dit, cfg):
        report = lora_apply(dit, LoraConfig(rank=4))
        q = next(t for t in report.targets if t.name == "blocks.0.attn.q")
        assert q.params == 512 == 4 * (64 + 64)
        for t in report.targets:
            assert t.params == t.rank * (t.d_in + t.d_out)
        adapters = sum(p.size for n, p in dit.named_parameters() if "lora_" in n)
        assert report.adapter_params == adapters == cfg.depth * (4 * 512 + 2 * 4 * (64 + 256))
        assert report.block_params == block_parameter_count(dit)
        assert report.block_trainable_fraction < 0.15

    def test_frozen_set(self, dit):
        lora_apply(dit, LoraConfig())
        trainable = sorted(dit.trainable())
        assert all("lora_" in n or n.startswith(("patch_embed.", "pose_proj.")) for n in trainable)
        assert "blocks.0.attn.q.weight" not in trainable and "blocks.0.attn.q.lora_A" in trainable

    def test_unknown_target(self, dit):
        with pytest.raises(ConfigError, match="unknown LoRA target"):
            lora_apply(dit, LoraConfig(targets=("attn.qkv",)))

    def test_extra_targets_allowed(self, dit):
        report = lora_apply(dit, LoraConfig(targets=LORA_TARGETS + ("modulation",)))
        assert any(t.name.endswith("modulation") for t in report.targets)

    def test_a_init_std(self):
        lin = LoraLinear(Linear(400, 300, Rng(0)), 16, 2.0, Rng(1))
        assert lin.lora_A.data.std() == pytest.approx(1 / math.sqrt(16), rel=0.02)
        assert not lin.lora_B.data.any()

    def test_merge(self, cfg):
        dit = DiT(cfg, Rng(2))
        base_w = dit.blocks[0].attn.q.weight.data.copy()
        lora_apply(dit, LoraConfig())
        for n, p in dit.named_parameters():
            if "lora_B" in n:
                p.data = rand(p.shape, seed=len(n)) * 0.1
        x, pose = rand((7, 5, 4, 4)), rand((64, 5, 4, 4), 1)
        before = run(dit, x, pose)
        assert lora_merge(dit) == cfg.depth * 6
        assert not is_wrapped(dit)
        after = run(dit, x, pose)
        assert np.abs(before - after).max() < 1e-12
        assert lora_merge(dit) == 0
        assert run(dit, x, pose).tobytes() == after.tobytes()
        assert not np.array_equal(dit.blocks[0].attn.q.weight.data, base_w)

    def test_merge_at_init_is_base(self, cfg):
        dit = DiT(cfg, Rng(2))
        base = {n: p.data.copy() for n, p in dit.named_parameters()}
        lora_apply(dit, LoraConfig())
        lora_merge(dit)
        merged = dict(dit.named_parameters())
        assert set(merged) == set(base)
        assert all(merged[n].data.tobytes() == base[n].tobytes() for n in base)
