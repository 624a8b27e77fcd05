import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poseanim.codec import (
    decode,
    encode,
    encode_image,
    latent_to_pixel_range,
    nearest_valid_frame_counts,
    pixel_frame_count,
    temporal_layout,
)
from poseanim.errors import ValidationError


@pytest.mark.parametrize("t, expected", [(1, 1), (17, 5), (81, 21)])
def test_temporal_layout_examples(t, expected):
    assert temporal_layout(t) == expected


def test_invalid_frame_count_lists_neighbours():
    with pytest.raises(ValidationError, match="nearest valid: 17 or 21"):
        temporal_layout(19)
    assert nearest_valid_frame_counts(0) == (1, 1)


def test_layout_partition_exhaustive():
    for t in range(1, 202, 4):
        n = temporal_layout(t)
        covered = [f for j in range(n) for f in latent_to_pixel_range(j)]
        assert covered == list(range(t))
        assert pixel_frame_count(n) == t


def test_constant_video_gives_constant_latent():
    z = encode(np.full((3, 9, 16, 16), 0.5))
    assert np.all(z == 0.5)


def test_hand_computed_group_average():
    v = np.zeros((3, 5, 8, 8))
    v[:, 3:5] = 1.0  # frames 1..4 are 0,0,1,1 on the only block
    assert encode(v)[0, 1, 0, 0] == 0.5


def test_shapes_round_trip():
    assert encode(np.zeros((3, 17, 32, 32))).shape == (3, 5, 4, 4)
    assert decode(np.zeros((3, 5, 4, 4))).shape == (3, 17, 32, 32)
    assert np.all(decode(np.zeros((3, 2, 1, 1))) == 0)


def test_decode_clamps():
    v = decode(np.array([-1.0, 2.0, 0.25]).reshape(3, 1, 1, 1))
    assert v[:, 0, 0, 0].tolist() == [0.0, 1.0, 0.25]


def test_first_latent_is_first_frame_only():
    v = np.zeros((3, 5, 8, 8))
    v[:, 0] = 0.8
    z = encode(v)
    assert np.all(z[:, 0] == 0.8) and np.all(z[:, 1] == 0.0)


def test_encode_image_matches_first_frame():
    img = np.random.default_rng(0).random((3, 16, 24))
    np.testing.assert_array_equal(encode_image(img), encode(img[:, None])[:, 0])


@pytest.mark.parametrize("bad", [np.zeros((3, 4, 8, 8)), np.zeros((3, 5, 12, 8)), np.full((3, 1, 8, 8), 1.5),
                                 np.zeros((1, 1, 8, 8))])
def test_invalid_videos_rejected(bad):
    with pytest.raises(ValidationError):
        encode(bad)


def test_right_inverse_on_1000_random_latents():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        shape = (3, int(rng.integers(1, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        z = rng.random(shape)
        assert encode(decode(z)).tobytes() == z.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_right_inverse_property(t, h, w, seed):
    z = np.random.default_rng(seed).random((3, t, h, w))
    assert encode(decode(z)).tobytes() == z.tobytes()
