import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from poseanim.container import (
    ContainerError,
    dumps,
    load_checkpoint,
    load_video,
    loads,
    save_checkpoint,
    save_video,
)
from poseanim.model import AnimationModel
from tiny import tiny_lora, tiny_model_config


class TestFormat:
    def test_header_layout(self):
        blob = dumps({"a": 1}, {"x": np.arange(3.0)})
        assert blob[:4] == b"UADT"
        assert struct.unpack("<I", blob[4:8])[0] == 1
        n = struct.unpack("<I", blob[8:12])[0]
        assert blob[12:12 + n] == b'{"a":1}'
        assert blob.endswith(np.arange(3.0).astype("<f8").tobytes())

    @settings(max_examples=40, deadline=None)
    @given(st.dictionaries(st.text(min_size=1, max_size=8),
                           hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=4, max_side=3)),
                           max_size=4))
    def test_round_trip_bitwise(self, tensors):
        cfg, back = loads(dumps({"k": [1, 2]}, tensors))
        assert cfg == {"k": [1, 2]} and set(back) == set(tensors)
        for name, arr in tensors.items():
            assert back[name].shape == arr.shape and back[name].tobytes() == arr.tobytes()

    def test_order_independent(self):
        a = dumps({}, {"b": np.ones(2), "a": np.zeros(1)})
        b = dumps({}, {"a": np.zeros(1), "b": np.ones(2)})
        assert a == b

    def test_unknown_version_refused(self):
        blob = bytearray(dumps({}, {"x": np.ones(1)}))
        blob[4:8] = struct.pack("<I", 2)
        with pytest.raises(ContainerError, match="unsupported container version 2"):
            loads(bytes(blob))

    @pytest.mark.parametrize("cut", [3, 10, 30])
    def test_truncated(self, cut):
        blob = dumps({"a": 1}, {"x": np.ones(4)})
        with pytest.raises(ContainerError):
            loads(blob[:cut])

    def test_bad_magic_and_trailing_bytes(self):
        blob = dumps({}, {})
        with pytest.raises(ContainerError, match="magic"):
            loads(b"XXXX" + blob[4:])
        with pytest.raises(ContainerError, match="trailing"):
            loads(blob + b"\0")


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        m = AnimationModel(tiny_model_config(init_seed=3), tiny_lora())
        for p in m.parameters().values():
            p.data = p.data + 0.01
        save_checkpoint(tmp_path / "c.uadt", m, {"note": "x"})
        back = load_checkpoint(tmp_path / "c.uadt")
        assert back.config == m.config and back.lora_config == m.lora_config
        mine, theirs = m.parameters(), back.parameters()
        assert set(mine) == set(theirs)
        assert all(mine[k].data.tobytes() == theirs[k].data.tobytes() for k in mine)
        assert {k for k, p in theirs.items() if p.requires_grad} == {k for k, p in mine.items() if p.requires_grad}

    def test_saves_are_byte_identical(self, tmp_path):
        m = AnimationModel(tiny_model_config())
        save_checkpoint(tmp_path / "a.uadt", m)
        save_checkpoint(tmp_path / "b.uadt", m)
        assert (tmp_path / "a.uadt").read_bytes() == (tmp_path / "b.uadt").read_bytes()

    def test_video_is_not_a_checkpoint(self, tmp_path):
        save_video(tmp_path / "v.uadt", np.zeros((3, 1, 8, 8)))
        with pytest.raises(ContainerError, match="checkpoint"):
            load_checkpoint(tmp_path / "v.uadt")
        assert load_video(tmp_path / "v.uadt").shape == (3, 1, 8, 8)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ContainerError, match="no such file"):
            load_checkpoint(tmp_path / "nope.uadt")
