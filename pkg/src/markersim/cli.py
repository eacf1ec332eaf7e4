"""Command-line interface.

Subcommands: render (single scene), cloud (pose cloud + images), bench
(closed-loop or external-CSV scoring), diff (overlay comparison), sequence
(dump sampler points), kernel (dump the diffraction kernel).

Exit codes: 0 success, 1 validation/configuration, 2 I/O, 3 internal.
A JSON config file may supply any flag value; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, imgio, sampling, viz
from .camera import load_camera
from .detect import detect_square_marker
from .errors import MarkerSimError, ValidationError
from .marker import MarkerSpec, marker_from_spec
from .optics import build_kernel
from .pose import Pose6D
from .rendering import Scene, render, scene_hash

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INTERNAL = 3


def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser) -> argparse.Namespace:
    """Apply config-file values for flags the user left at their defaults."""
    if not getattr(args, "config", None):
        return args
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    defaults = {a.dest: a.default for a in parser._actions}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ValidationError(f"config file sets unknown option {key!r}")
        if getattr(args, dest) == defaults.get(dest):
            setattr(args, dest, value)
    return args


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) is None]
    if missing:
        raise ValidationError(
            "missing required option(s): " + ", ".join(f"--{n}" for n in missing)
        )


def _parse_pose(value) -> Pose6D:
    if isinstance(value, (list, tuple)):
        parts = [float(x) for x in value]
    else:
        parts = [float(x) for x in str(value).split(",")]
    if len(parts) != 6:
        raise ValidationError("pose must be X,Y,Z,roll,pitch,yaw")
    return Pose6D(*parts)


def _parse_ranges(text: str | None, margin: float) -> bench.PoseRanges:
    if not text:
        return bench.PoseRanges(margin=margin)
    vals = [float(x) for x in text.split(",")]
    if len(vals) != 8:
        raise ValidationError(
            "ranges must be zmin,zmax,rollmin,rollmax,pitchmin,pitchmax,yawmin,yawmax"
        )
    return bench.PoseRanges(
        z_mm=(vals[0], vals[1]),
        roll_deg=(vals[2], vals[3]),
        pitch_deg=(vals[4], vals[5]),
        yaw_deg=(vals[6], vals[7]),
        margin=margin,
    )


def _load_marker_arg(args) -> MarkerSpec:
    return marker_from_spec(args.marker, side_mm=args.side_mm)


def _halton_config(seed: int | None) -> sampling.HaltonConfig:
    if seed is None:
        return sampling.HaltonConfig.faure(6)
    return sampling.HaltonConfig.random(6, seed)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_render(args) -> int:
    _require(args, "camera", "marker", "pose")
    rig = load_camera(args.camera)
    marker = _load_marker_arg(args)
    pose = _parse_pose(args.pose)
    scene = Scene(rig, marker, pose)
    image = render(scene, spp_max=args.spp_max, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    imgio.write_image(out, image.pixels, image.bit_depth)
    imgio.write_sidecar(out, image.metadata)
    print(f"wrote {out} ({image.pixels.shape[1]}x{image.pixels.shape[0]}, "
          f"{image.bit_depth}-bit, scene {scene_hash(scene)})")
    return EXIT_OK


def cmd_cloud(args) -> int:
    _require(args, "camera", "marker", "cloud-size")
    rig = load_camera(args.camera)
    marker = _load_marker_arg(args)
    ranges = _parse_ranges(args.ranges, args.margin)
    poses = bench.sample_pose_cloud(
        args.cloud_size, ranges, rig, marker, halton=_halton_config(args.seed)
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    bench.write_poses_csv(poses, out_dir / "poses.csv")
    digits = max(4, len(str(len(poses) - 1)))
    for pid, pose in enumerate(poses):
        scene = Scene(rig, marker, pose)
        image = render(scene, spp_max=args.spp_max, workers=args.workers)
        img_path = out_dir / f"pose_{pid:0{digits}d}.{args.format}"
        imgio.write_image(img_path, image.pixels, image.bit_depth)
        imgio.write_sidecar(img_path, image.metadata)
    print(f"wrote {len(poses)} images + poses.csv to {out_dir}")
    return EXIT_OK


def cmd_bench(args) -> int:
    _require(args, "camera", "marker")
    rig = load_camera(args.camera)
    marker = _load_marker_arg(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.detections:
        if not args.poses:
            raise ValidationError("--detections scoring requires --poses (ground truth CSV)")
        truth = bench.read_poses_csv(args.poses)
        record_sets = {}
        for det_path in args.detections:
            detections = bench.read_detections_csv(det_path)
            record_sets[Path(det_path).stem] = bench.records_from_detections(
                truth, detections, marker, rig
            )
        if len(record_sets) == 1:
            records = next(iter(record_sets.values()))
        else:
            filtered, common = bench.common_subset(record_sets)
            print(f"common subset: {len(common)} of {len(truth)} poses detected by all")
            if not common:
                print("warning: empty common subset, reporting per-set accuracy on all poses")
                filtered = record_sets
            for name, recs in filtered.items():
                source = record_sets[name]
                rate = sum(r.detected for r in source) / len(source)
                print(f"\n== {name} (detection rate {100 * rate:.2f}%)")
                if any(r.detected for r in recs):
                    print(bench.accuracy(recs).summary())
            records = next(iter(record_sets.values()))
    else:
        ranges = _parse_ranges(args.ranges, args.margin)
        poses = bench.sample_pose_cloud(
            args.cloud_size, ranges, rig, marker, halton=_halton_config(args.seed)
        )
        bench.write_poses_csv(poses, out_dir / "poses.csv")
        records = bench.run_closed_loop(
            rig, marker, poses, spp_max=args.spp_max, workers=args.workers
        )
        bench.write_detections_csv(records, out_dir / "detections.csv")

    report = bench.accuracy(records)
    bench.write_correlation_csv(records, out_dir / "correlation.csv")
    viz.scatter_grid_svg(records, out_dir / "scatter.svg")
    bench.write_report_csv(report, out_dir / "report.csv")
    (out_dir / "report.txt").write_text(report.summary() + "\n", encoding="utf-8")
    print(report.summary())
    print(f"outputs in {out_dir}")
    return EXIT_OK


def cmd_diff(args) -> int:
    a = imgio.read_image(args.image_a)
    b = imgio.read_image(args.image_b)
    rgb = viz.overlay_diff(a, b)
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_sequence(args) -> int:
    if args.kind == "sobol":
        pts = sampling.sobol_points(args.count, args.dims)
    else:
        config = (
            sampling.HaltonConfig.plain(args.dims)
            if args.plain
            else _halton_config(args.seed)
            if args.dims == 6
            else sampling.HaltonConfig.faure(args.dims)
        )
        pts = sampling.halton_points(args.count, config)
    header = ",".join(f"dim{i}" for i in range(pts.shape[1]))
    lines = [header] + [",".join(repr(float(v)) for v in row) for row in pts]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {args.count} {args.kind} points to {args.out}")
    return EXIT_OK


def cmd_kernel(args) -> int:
    rig = load_camera(args.camera)
    kernel = build_kernel(rig)
    np.savetxt(args.out, kernel.taps, delimiter=",")
    print(
        f"wrote {kernel.taps.shape[0]}x{kernel.taps.shape[0]} kernel "
        f"(airy radius {kernel.airy_radius_um:.3f} um) to {args.out}"
    )
    return EXIT_OK


def cmd_detect(args) -> int:
    rig = load_camera(args.camera)
    pixels = imgio.read_image(args.image)
    corners = detect_square_marker(pixels, rig)
    if corners is None:
        print("not detected")
        return EXIT_OK
    for i, (x, y) in enumerate(corners):
        print(f"corner {i}: {x:.4f}, {y:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markersim",
        description="Render synthetic fiducial-marker images and benchmark pose accuracy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, marker=True):
        # scene parameters stay optional at parse time so a --config file can
        # supply them; _require checks after the merge
        p.add_argument("--camera", default=None, help="camera config JSON")
        if marker:
            p.add_argument(
                "--marker",
                default=None,
                help="marker bitmap path, 'square:<side_mm>' or 'chessboard:RxC:<square_mm>'",
            )
            p.add_argument("--side-mm", type=float, default=None, help="physical width for bitmap files")
        p.add_argument("--spp-max", type=int, default=None, help="cap on rays per refined pixel")
        p.add_argument("--workers", type=int, default=1, help="render worker threads")
        p.add_argument("--config", default=None, help="JSON scene/job file supplying any of these flags")

    p = sub.add_parser("render", help="render one scene to an image + ground-truth sidecar")
    add_common(p)
    p.add_argument("--pose", default=None, help="X,Y,Z,roll,pitch,yaw (mm/deg)")
    p.add_argument("--out", required=True, help="output image (.png or .pgm)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("cloud", help="sample a pose cloud and render every pose")
    add_common(p)
    p.add_argument("--cloud-size", type=int, default=None)
    p.add_argument("--ranges", default=None, help="zmin,zmax,rollmin,rollmax,pitchmin,pitchmax,yawmin,yawmax")
    p.add_argument("--margin", type=float, default=1.0, help="frustum margin factor")
    p.add_argument("--seed", type=int, default=None, help="seeded random digit permutations (default: Faure)")
    p.add_argument("--format", choices=("png", "pgm"), default="png")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_cloud)

    p = sub.add_parser("bench", help="closed-loop benchmark or external detection scoring")
    add_common(p)
    p.add_argument("--cloud-size", type=int, default=200)
    p.add_argument("--ranges", default=None)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--poses", default=None, help="ground-truth poses.csv (for --detections)")
    p.add_argument(
        "--detections",
        nargs="*",
        default=None,
        help="external detection-results CSVs; two or more trigger a common-subset comparison",
    )
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("diff", help="overlay-difference image (red: a>b, cyan: a<b)")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diff, config=None)

    p = sub.add_parser("sequence", help="dump low-discrepancy sequence points as CSV")
    p.add_argument("--kind", choices=("sobol", "halton"), required=True)
    p.add_argument("--count", type=int, default=256)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--plain", action="store_true", help="halton without permutations")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sequence, config=None)

    p = sub.add_parser("kernel", help="dump the diffraction kernel as CSV")
    p.add_argument("--camera", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kernel, config=None)

    p = sub.add_parser("detect", help="run the built-in detector on an image")
    p.add_argument("--camera", required=True)
    p.add_argument("image")
    p.set_defaults(func=cmd_detect, config=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args, parser)
        return args.func(args)
    except MarkerSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
