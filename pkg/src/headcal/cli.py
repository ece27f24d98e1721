"""Command-line entry point: ``headcal {calibrate,simulate,evaluate,export-scene}``.

Exit codes: 0 success, 2 usage error, 3 validation error, 4 numerical or
pipeline-stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import face_model as fm
from . import io as hio
from .errors import (
    CalibrationError,
    HeadCalError,
    ParseError,
    UnknownParticipantError,
    ValidationError,
)
from .evaluation import MM_RATIO_MODES, emit_report, participant_stats
from .pipeline import calibrate
from .simulator import (
    NoiseConfig,
    PoseRanges,
    ScaleRanges,
    generate_scene,
    render_observations,
    run_trials,
    summarize,
    trials_csv,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_FAILURE = 4


def _non_negative(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return value


def cmd_calibrate(args: argparse.Namespace) -> int:
    manifest = hio.load_manifest(args.manifest)
    inp = hio.build_calibration_input(manifest)
    result = calibrate(inp)
    out = Path(args.out) if args.out else manifest.output_dir / "calibration_result.json"
    hio.write_json(out, hio.result_to_dict(result, inp.model))
    hp = result.head_pose
    print(
        f"calibrated: scale={result.uniform_scale:.6f} rms={hp.reprojection_rms:.3g}px "
        f"iterations={hp.iterations} converged={hp.converged} -> {out}"
    )
    return EXIT_OK


def _scale_ranges(args) -> ScaleRanges:
    return ScaleRanges(args.scale_min, args.scale_max, args.anisotropy)


def cmd_simulate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trials = run_trials(
        args.trials,
        args.seed,
        args.pixel_noise,
        args.depth_noise,
        args.dropout,
        scale_ranges=_scale_ranges(args),
    )
    ids = fm.default_model().ids
    (out / "trials.csv").write_text(trials_csv(trials, ids))
    summary = {
        "flags": {
            "trials": args.trials,
            "seed": args.seed,
            "pixel_noise": args.pixel_noise,
            "depth_noise": args.depth_noise,
            "dropout": args.dropout,
            "scale_min": args.scale_min,
            "scale_max": args.scale_max,
            "anisotropy": args.anisotropy,
        },
        **summarize(trials),
    }
    hio.write_json(out / "summary.json", summary)
    print(
        f"{summary['n_trials']} trials, {summary['n_failed']} failed; "
        f"median feature overlay error {summary['median_feature_overlay_mm']} mm -> {out}"
    )
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    samples = hio.load_samples(args.samples)
    sizes = hio.load_head_sizes(args.head_sizes)
    stats = participant_stats(samples, sizes, mode=args.mm_ratio)
    csv_path, json_path = emit_report(stats, args.out, mode=args.mm_ratio)
    print(f"report: {csv_path} {json_path}")
    return EXIT_OK


def cmd_export_scene(args: argparse.Namespace) -> int:
    """Write a simulated scene as calibrate-ready input files plus its ground truth."""
    out = Path(args.out)
    scene = generate_scene(args.seed, PoseRanges(), _scale_ranges(args))
    noise = NoiseConfig(args.pixel_noise, args.depth_noise, args.dropout, seed=args.seed)
    inp = render_observations(scene, noise)
    if args.keep is not None:
        keep = set(args.keep.split(","))
        inp_head = {k: v for k, v in inp.headset_landmarks.items() if k in keep}
    else:
        inp_head = dict(inp.headset_landmarks)

    rgbd_size = (scene.rgbd_intrinsics.width, scene.rgbd_intrinsics.height)
    head_size = (scene.headset_intrinsics.width, scene.headset_intrinsics.height)
    hio.write_json(out / "rgbd_intrinsics.json", hio.intrinsics_to_dict(scene.rgbd_intrinsics))
    hio.write_json(out / "headset_intrinsics.json", hio.intrinsics_to_dict(scene.headset_intrinsics))
    hio.write_json(out / "rgbd_landmarks.json", hio.landmarks_to_dict("rgbd", rgbd_size, inp.rgbd_landmarks))
    hio.write_json(out / "headset_landmarks.json", hio.landmarks_to_dict("headset", head_size, inp_head))
    hio.write_json(out / "slam_pose.json", hio.pose_to_dict(scene.true_slam_pose))
    hio.write_json(out / "canonical_model.json", scene.model.to_dict())
    hio.write_json(
        out / "manifest.json",
        {
            "rgbd_intrinsics": "rgbd_intrinsics.json",
            "headset_intrinsics": "headset_intrinsics.json",
            "rgbd_landmarks": "rgbd_landmarks.json",
            "headset_landmarks": "headset_landmarks.json",
            "slam_pose": "slam_pose.json",
            "canonical_model": "canonical_model.json",
            "output_dir": ".",
        },
    )
    hio.write_json(
        out / "ground_truth.json",
        {
            "seed": args.seed,
            "head_pose": hio.pose_to_dict(scene.true_head_pose),
            "face_scale": list(scene.true_face_scale.as_tuple()),
            "world_landmarks_mm": {k: [float(x) for x in p] for k, p in zip(scene.ids, scene.world_points())},
        },
    )
    print(f"scene {args.seed} exported -> {out / 'manifest.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="headcal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="run the calibration pipeline on a run manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="result JSON path (default: <output_dir>/calibration_result.json)")
    p.set_defaults(func=cmd_calibrate)

    def scene_flags(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--pixel-noise", type=_non_negative, default=0.0, help="pixel sigma (px)")
        p.add_argument("--depth-noise", type=_non_negative, default=0.0, help="depth sigma (mm)")
        p.add_argument("--dropout", type=_probability, default=0.0)
        p.add_argument("--scale-min", type=float, default=0.6)
        p.add_argument("--scale-max", type=float, default=1.0)
        p.add_argument("--anisotropy", type=_non_negative, default=0.0)
        p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="run seeded closed-loop trials")
    p.add_argument("--trials", type=_positive_int, required=True)
    scene_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="overlay-error statistics from annotated samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--head-sizes", required=True)
    p.add_argument("--mm-ratio", choices=MM_RATIO_MODES, default="width")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-scene", help="write one simulated scene as calibrate input files")
    scene_flags(p)
    p.add_argument("--keep", help="comma-separated headset landmark ids to keep (default: all)")
    p.set_defaults(func=cmd_export_scene)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, ParseError, UnknownParticipantError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CalibrationError as exc:
        print(f"error: stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return EXIT_FAILURE
    except (HeadCalError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
