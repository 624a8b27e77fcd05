import numpy as np
import pytest

from poseanim.conditioning import GivenPrefix
from poseanim.config import ModelConfig, PoseEncoderConfig, RefPoseEncoderConfig, SampleConfig, TrainConfig, LoraConfig
from poseanim.errors import ConfigError, NumericalError, ValidationError
from poseanim.flow import TrainingExample, fm_loss, interpolate, learning_rate, sample, train
from poseanim.model import AnimationModel, Condition, make_condition
from poseanim.numerics import Rng, Tensor
from poseanim.pose import generate_synthetic, random_spec
from poseanim.codec import encode

SHAPE = (3, 2, 1, 1)


def blank_condition(shape=SHAPE, given=None):
    c, t, h, w = shape
    return Condition(np.zeros((c, h, w)), np.zeros((1, 8 * h, 8 * w)), np.zeros((1, 1 + 4 * (t - 1), 8 * h, 8 * w)),
                     given)


class Exact:
    """Velocity oracle ``noise - x0`` for a known pair (ignores x and t)."""

    def __init__(self, x0, noise):
        self.x0, self.noise = x0, noise

    def velocity(self, x_t, t, cond):
        return Tensor(self.noise - self.x0)

    def bind(self, cond):
        return lambda x, t: self.noise - self.x0


def small_model_config():
    return ModelConfig(token_dim=24, depth=1, heads=2,
                       pose_encoder=PoseEncoderConfig(3, (4, 4, 8), 3, (2, 2, 1), (2, 2, 2)),
                       ref_pose_encoder=RefPoseEncoderConfig(2, (4,), 3, (4, 2)))


def small_examples(n=2, frames=9):
    out = []
    for s in range(n):
        clip = generate_synthetic(random_spec(s, (16, 16), frames))
        out.append(TrainingExample(encode(clip.video), make_condition(clip.reference, clip.poses)))
    return out


class TestInterpolation:
    def test_endpoints_exact(self):
        rng = np.random.default_rng(0)
        x0, noise = rng.random(SHAPE), rng.standard_normal(SHAPE)
        assert interpolate(x0, noise, 0.0).tobytes() == x0.tobytes()
        assert interpolate(x0, noise, 1.0).tobytes() == noise.tobytes()

    def test_perfect_model_zero_loss(self):
        rng = np.random.default_rng(1)
        x0, noise = rng.random(SHAPE), rng.standard_normal(SHAPE)
        assert fm_loss(Exact(x0, noise), x0, blank_condition(), 0.3, noise).item() == 0.0

    def test_loss_masks_given_frames(self):
        x0 = np.zeros(SHAPE)
        noise = np.ones(SHAPE)

        class Wrong:
            def velocity(self, x_t, t, cond):
                v = np.ones(SHAPE)
                v[:, 0] = 100.0  # only the given frame is wrong
                return Tensor(v)

        cond = blank_condition(given=GivenPrefix(x0[:, :1]))
        assert fm_loss(Wrong(), x0, cond, 0.5, noise).item() == 0.0
        assert fm_loss(Wrong(), x0, blank_condition(), 0.5, noise).item() > 0

    def test_bad_t(self):
        with pytest.raises(ValidationError):
            fm_loss(Exact(np.zeros(SHAPE), np.zeros(SHAPE)), np.zeros(SHAPE), blank_condition(), 1.5, np.zeros(SHAPE))


class TestSampler:
    @pytest.mark.parametrize("steps", [1, 3, 20])
    def test_oracle_velocity_recovers_x0(self, steps):
        cfg = SampleConfig(steps=steps, seed=11)
        noise = Rng(11).normal(SHAPE)
        x0 = np.random.default_rng(4).random(SHAPE)
        out = sample(Exact(x0, noise), blank_condition(), cfg)
        np.testing.assert_allclose(out, x0, rtol=0, atol=1e-14)

    def test_given_prefix_bitwise(self):
        shape = (3, 4, 1, 1)
        clean = np.random.default_rng(2).random((3, 2, 1, 1))
        out = sample(lambda x, t: x * 0.3 + t, blank_condition(shape, GivenPrefix(clean)), SampleConfig(7, 1))
        assert out[:, :2].tobytes() == clean.tobytes()

    def test_deterministic(self):
        f = lambda x, t: np.sin(x) * t  # noqa: E731
        a = sample(f, blank_condition(), SampleConfig(5, 3))
        b = sample(f, blank_condition(), SampleConfig(5, 3))
        assert a.tobytes() == b.tobytes()

    def test_nan_names_step(self):
        def bad(x, t):
            return np.full(x.shape, np.nan) if t < 0.5 else x
        with pytest.raises(NumericalError, match="step 3"):
            sample(bad, blank_condition(), SampleConfig(4, 0))

    def test_needs_a_step(self):
        with pytest.raises(ConfigError):
            SampleConfig(steps=0)


class TestTraining:
    def test_same_seed_same_curve_and_frozen_untouched(self):
        curves = []
        for _ in range(2):
            m = AnimationModel(small_model_config(), LoraConfig(rank=2))
            frozen = {n: p.data.copy() for n, p in m.parameters().items() if not p.requires_grad}
            res = train(m, small_examples(), TrainConfig(steps=4, batch_size=2, lr=1e-2))
            curves.append(res.losses)
            assert all(m.parameters()[n].data.tobytes() == v.tobytes() for n, v in frozen.items())
        assert [float(v).hex() for v in curves[0]] == [float(v).hex() for v in curves[1]]

    def test_zero_lr_leaves_parameters(self):
        m = AnimationModel(small_model_config(), LoraConfig(rank=2))
        before = {n: p.data.copy() for n, p in m.parameters().items()}
        res = train(m, small_examples(), TrainConfig(steps=3, batch_size=2, lr=0.0))
        assert all(p.data.tobytes() == before[n].tobytes() for n, p in m.parameters().items())
        assert res.probe_initial == res.probe_final

    def test_only_adapters_and_new_modules_get_gradients(self):
        m = AnimationModel(small_model_config(), LoraConfig(rank=2))
        ex = small_examples(1)[0]
        fm_loss(m, ex.x0, ex.cond, 0.5, Rng(0).normal(ex.x0.shape)).backward()
        with_grad = {n for n, p in m.parameters().items() if p.grad is not None}
        frozen = {n for n, p in m.parameters().items() if not p.requires_grad}
        assert with_grad and not (with_grad & frozen)
        assert any("lora_A" in n for n in with_grad) and any(n.startswith("pose_encoder.") for n in with_grad)

    def test_divergence_aborts(self):
        m = AnimationModel(small_model_config(), LoraConfig(rank=2))
        easy = small_examples(1)[0]
        hard = TrainingExample(easy.x0 * 100.0, easy.cond)  # loss jumps by orders of magnitude
        cfg = TrainConfig(steps=50, batch_size=1, lr=0.0, divergence_factor=1.5, divergence_patience=2)
        with pytest.raises(NumericalError, match=r"diverged.*step 2"):
            train(m, [easy, hard, hard, hard], cfg)

    def test_empty_dataset(self):
        with pytest.raises(ValidationError):
            train(AnimationModel(small_model_config()), [], TrainConfig(steps=1))

    def test_loss_csv(self, tmp_path):
        m = AnimationModel(small_model_config(), LoraConfig(rank=2))
        res = train(m, small_examples(1), TrainConfig(steps=2, batch_size=1), loss_csv=tmp_path / "loss.csv")
        lines = (tmp_path / "loss.csv").read_text().splitlines()
        assert lines[0] == "step,loss" and len(lines) == 3
        assert float(lines[2].split(",")[1]) == res.losses[1]


class TestSchedule:
    def test_cosine_endpoints_and_monotone(self):
        cfg = TrainConfig(steps=100, lr=1e-3)
        rates = [learning_rate(cfg, s) for s in range(100)]
        assert rates[0] == 1e-3 and rates[50] == pytest.approx(5e-4) and rates[-1] < 1e-6
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_constant(self):
        cfg = TrainConfig(steps=10, lr=1e-3, lr_schedule="constant")
        assert {learning_rate(cfg, s) for s in range(10)} == {1e-3}

    def test_unknown_schedule(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr_schedule="step")
