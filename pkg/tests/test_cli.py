import json
from pathlib import Path

import pytest

from poseanim.cli import apply_thread_cap, main
from poseanim.config import TrainConfig, to_dict
from poseanim.metrics import rounded
from tiny import tiny_lora, tiny_model_config

GOLDEN = Path(__file__).parent / "golden" / "report.json"


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def run_config(path: Path, dataset: str, output: str, steps: int = 3) -> Path:
    doc = {"dataset": dataset, "output": output, "model": to_dict(tiny_model_config()), "lora": to_dict(tiny_lora()),
           "train": to_dict(TrainConfig(steps=steps, batch_size=2))}
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "data"), "--clips", "2", "--seed", "5", "--size", "16x16",
                 "--frames", "9"]) == 0
    assert main(["train", "--config", str(run_config(root / "run.json", "data", "run"))]) == 0
    return root


def err_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


class TestGenData:
    def test_layout(self, workspace):
        clip = workspace / "data" / "clip_000"
        assert sorted(p.name for p in clip.iterdir()) == ["poses.json", "reference.ppm", "spec.json", "video.uadt"]
        manifest = json.loads((workspace / "data" / "manifest.json").read_text())
        assert manifest["clips"] == ["clip_000", "clip_001"]
        assert (manifest["version"], manifest["seed"], manifest["size"], manifest["frames"]) == (1, 5, [16, 16], 9)

    def test_deterministic(self, workspace, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path / "d"), "--clips", "2", "--seed", "5", "--size", "16x16",
                     "--frames", "9"]) == 0
        assert tree_bytes(tmp_path / "d") == tree_bytes(workspace / "data")

    def test_invalid_frames_lists_options(self, tmp_path, capsys):
        assert main(["gen-data", "--out", str(tmp_path / "d"), "--clips", "1", "--frames", "6"]) == 2
        assert "nearest valid" in err_json(capsys)["message"]


class TestTrain:
    def test_outputs(self, workspace):
        out = workspace / "run"
        assert {"loss.csv", "checkpoint.uadt", "train.json"} <= {p.name for p in out.iterdir()}
        assert len((out / "loss.csv").read_text().splitlines()) == 4

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = run_config(tmp_path / "r.json", "data", "out")
        doc = json.loads(cfg.read_text())
        doc["train"]["momentum"] = 0.9
        cfg.write_text(json.dumps(doc))
        assert main(["train", "--config", str(cfg)]) == 2
        assert "momentum" in err_json(capsys)["message"]


class TestAnimate:
    def args(self, ws, out, *extra):
        clip = ws / "data" / "clip_000"
        return ["--checkpoint", str(ws / "run" / "checkpoint.uadt"), "--ref", str(clip / "reference.ppm"),
                "--poses", str(clip / "poses.json"), "--out", str(out), "--steps", "2", *extra]

    def test_frames_and_determinism(self, workspace, tmp_path):
        assert main(["animate", *self.args(workspace, tmp_path / "a")]) == 0
        assert main(["animate", *self.args(workspace, tmp_path / "b")]) == 0
        assert len(list((tmp_path / "a").glob("frame_*.ppm"))) == 9
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_short_pose_file(self, workspace, tmp_path, capsys):
        assert main(["animate", *self.args(workspace, tmp_path / "a", "--frames", "13")]) == 2
        assert "13 are required" in err_json(capsys)["message"]

    def test_long(self, workspace, tmp_path, capsys):
        assert main(["animate-long", *self.args(workspace, tmp_path / "l", "--window", "2", "--discard", "1")]) == 0
        assert "[2,3)" in capsys.readouterr().out
        assert len(list((tmp_path / "l").glob("frame_*.ppm"))) == 9

    def test_missing_checkpoint(self, workspace, tmp_path, capsys):
        args = self.args(workspace, tmp_path / "x")
        args[1] = str(tmp_path / "none.uadt")
        assert main(["animate", *args]) == 2
        assert err_json(capsys)["error"] == "validation"


class TestPlanWindows:
    def test_table(self, capsys):
        assert main(["plan-windows", "--latent-frames", "9", "--window", "5", "--discard", "2"]) == 0
        rows = capsys.readouterr().out.splitlines()[1:]
        assert [r.split()[1:] for r in rows] == [["0", "0", "[0,5)"], ["3", "2", "[5,8)"], ["4", "4", "[8,9)"]]

    def test_bad_window(self, capsys):
        assert main(["plan-windows", "--latent-frames", "9", "--window", "2", "--discard", "2"]) == 2
        assert err_json(capsys)["type"] == "ConfigError"


def test_check_grads_passes(capsys):
    assert main(["check-grads", "--seeds", "1"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_report_matches_golden(workspace, tmp_path):
    out = tmp_path / "report.json"
    assert main(["report", "--checkpoint", str(workspace / "run" / "checkpoint.uadt"), "--dataset",
                 str(workspace / "data"), "--steps", "2", "--out", str(out)]) == 0
    report = rounded(json.loads(out.read_text()))
    assert report == json.loads(GOLDEN.read_text())


def test_thread_cap():
    env = {"UADT_THREADS": "1"}
    apply_thread_cap(env)
    assert env["OMP_NUM_THREADS"] == env["NUMBA_NUM_THREADS"] == "1"
    with pytest.raises(SystemExit):
        apply_thread_cap({"UADT_THREADS": "zero"})
