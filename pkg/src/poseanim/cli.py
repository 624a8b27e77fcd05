"""``poseanim`` command line.

Exit codes: 0 success, 2 validation/config error, 3 numerical failure.
``UADT_THREADS`` caps BLAS/numba threads; it is applied before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


def apply_thread_cap(environ=os.environ) -> None:
    value = environ.get("UADT_THREADS")
    if value is None:
        return
    if not value.isdigit() or int(value) < 1:
        raise SystemExit(f"error: UADT_THREADS must be a positive integer, got {value!r}")
    for var in THREAD_VARS:
        environ[var] = value


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 32x32, got {text!r}") from None
    return h, w


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poseanim", description="Pose-driven animation with a toy diffusion transformer.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--clips", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=_size, default=(32, 32), help="HxW, multiples of 8")
    g.add_argument("--frames", type=int, default=17)

    t = sub.add_parser("train", help="train from a JSON run config")
    t.add_argument("--config", required=True)

    for name, helptext in (("animate", "animate one clip"), ("animate-long", "animate with sliding windows")):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("--checkpoint", required=True)
        a.add_argument("--ref", required=True, help="reference image (.ppm, or .png with Pillow)")
        a.add_argument("--poses", required=True, help="driving pose JSON")
        a.add_argument("--ref-pose", help="pose JSON for the reference image (default: first driving frame)")
        a.add_argument("--frames", type=int, help="number of pose frames to use (default: all)")
        a.add_argument("--steps", type=int, default=20)
        a.add_argument("--seed", type=int, default=0)
        a.add_argument("--out", required=True)
        a.add_argument("--format", choices=("ppm", "png"), default="ppm")
        a.add_argument("--gif", action="store_true", help="also write animation.gif (needs Pillow)")
        if name == "animate-long":
            a.add_argument("--window", type=int, required=True, help="window length in latent frames")
            a.add_argument("--discard", type=int, default=2)

    c = sub.add_parser("check-grads", help="finite-difference check of every differentiable op")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--seeds", type=int, default=20)

    w = sub.add_parser("plan-windows", help="print a sliding-window plan")
    w.add_argument("--latent-frames", type=int, required=True)
    w.add_argument("--window", type=int, required=True)
    w.add_argument("--discard", type=int, default=2)

    r = sub.add_parser("report", help="score a checkpoint on a dataset")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--dataset", required=True)
    r.add_argument("--steps", type=int, default=20)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--window", type=int, default=5)
    r.add_argument("--max-clips", type=int)
    r.add_argument("--out", help="JSON report path (default: print only)")
    return p


def cmd_gen_data(args) -> int:
    from .dataset import generate_dataset

    info = generate_dataset(args.out, args.clips, args.seed, args.size, args.frames)
    print(f"wrote {info['clips']} clip(s) to {args.out}; max oracle error {info['max_oracle_error_px']:.3f} px")
    return EXIT_OK


def cmd_train(args) -> int:
    from .config import load_run_config, to_dict
    from .container import save_checkpoint
    from .dataset import load_dataset, training_examples
    from .flow import train
    from .model import AnimationModel

    run = load_run_config(args.config)
    base = Path(args.config).parent
    dataset = base / run.dataset if not Path(run.dataset).is_absolute() else Path(run.dataset)
    out = base / run.output if not Path(run.output).is_absolute() else Path(run.output)
    out.mkdir(parents=True, exist_ok=True)
    model = AnimationModel(run.model, run.lora)
    if model.lora_report is not None:
        print(model.lora_report.table())
    examples = training_examples(load_dataset(dataset), run.model.pose_sigma)
    result = train(model, examples, run.train, out / "loss.csv", log=print)
    summary = {"steps": result.steps, "probe_initial": result.probe_initial, "probe_final": result.probe_final,
               "train": to_dict(run.train)}
    save_checkpoint(out / "checkpoint.uadt", model, summary)
    (out / "train.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(f"probe loss {result.probe_initial:.5f} -> {result.probe_final:.5f} "
          f"({result.probe_final / result.probe_initial:.4f}x); checkpoint {out / 'checkpoint.uadt'}")
    return EXIT_OK


def _load_inputs(args):
    from .codec import temporal_layout
    from .container import load_checkpoint
    from .errors import ValidationError
    from .media import read_image
    from .pose import load_pose_sequence

    model = load_checkpoint(args.checkpoint)
    reference = read_image(args.ref)
    poses = load_pose_sequence(args.poses)
    ref_pose = load_pose_sequence(args.ref_pose) if args.ref_pose else None
    if args.frames is not None:
        temporal_layout(args.frames)
        if poses.frames < args.frames:
            raise ValidationError(f"pose file {args.poses} has {poses.frames} frames but {args.frames} are required")
        poses = poses.slice(0, args.frames)
    temporal_layout(poses.frames)
    return model, reference, poses, ref_pose


def _write_video(video, args) -> None:
    from .container import save_video
    from .media import write_frames, write_gif

    out = Path(args.out)
    paths = write_frames(out, video, args.format)
    save_video(out / "video.uadt", video)
    if args.gif:
        write_gif(out / "animation.gif", video)
    print(f"wrote {len(paths)} frame(s) to {out}")


def cmd_animate(args) -> int:
    from .config import SampleConfig
    from .metrics import animate

    model, reference, poses, ref_pose = _load_inputs(args)
    _, video = animate(model, reference, poses, SampleConfig(args.steps, args.seed), ref_pose)
    _write_video(video, args)
    return EXIT_OK


def cmd_animate_long(args) -> int:
    from .config import SampleConfig
    from .long_video import animate_long, plan_table
    from .model import make_condition

    model, reference, poses, ref_pose = _load_inputs(args)
    cond = make_condition(reference, poses, ref_pose, sigma=model.config.pose_sigma)
    res = animate_long(model, cond, args.window, SampleConfig(args.steps, args.seed), args.discard)
    print(plan_table(res.plan))
    _write_video(res.video, args)
    return EXIT_OK


def cmd_check_grads(args) -> int:
    from .gradsuite import TOLERANCE, run_suite, suite_table

    results, seconds = run_suite(args.seed, args.seeds)
    print(suite_table(results))
    ok = all(r.passed for r in results)
    worst = max(r.max_error for r in results)
    print(f"{'PASS' if ok else 'FAIL'}: max relative error {worst:.3e} (tolerance {TOLERANCE:g}), "
          f"{args.seeds} seeds, {seconds:.1f} s")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_plan_windows(args) -> int:
    from .long_video import plan_table, plan_windows

    print(plan_table(plan_windows(args.latent_frames, args.window, args.discard)))
    return EXIT_OK


def cmd_report(args) -> int:
    from .config import SampleConfig
    from .container import load_checkpoint
    from .dataset import load_dataset
    from .metrics import build_report, report_table

    model = load_checkpoint(args.checkpoint)
    clips = load_dataset(args.dataset)
    report = build_report(model, clips, SampleConfig(args.steps, args.seed), args.window, max_clips=args.max_clips)
    print(report_table(report))
    text = json.dumps(report, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "animate": cmd_animate, "animate-long": cmd_animate_long,
    "check-grads": cmd_check_grads, "plan-windows": cmd_plan_windows, "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    apply_thread_cap()
    args = build_parser().parse_args(argv)
    from .errors import NumericalError, ValidationError

    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(json.dumps({"error": "validation", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(json.dumps({"error": "numerical", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(json.dumps({"error": "validation", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
