"""6-DoF pose-accuracy benchmark: cloud sampling, scoring, aggregation.

Pose clouds are Halton points (bases 2,3,5,7,11,13 for X, Y, Z, roll,
pitch, yaw) mapped to configured ranges.  Z and the angles map first; the
X/Y point then maps into the exact rectangle of marker centres whose four
(rotated) corners project inside the frame at that depth, shrunk further by
the defocus blur radius so the whole blurred marker stays visible.  The
frustum margin factor interpolates between that rectangle (1.0) and the
centre-only frustum rectangle (0.0).

The closed loop renders each pose, runs the built-in detector, and scores a
planar-PnP estimate against the ground truth.  A plain square outline is
4-fold rotationally symmetric, so the four cyclic corner correspondences are
geometrically indistinguishable; the loop resolves that discrete symmetry
class against the reference pose (continuous errors are untouched).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .camera import CameraRig, circle_of_confusion, project
from .detect import DetectorParams, detect_square_marker
from .errors import ConfigurationError, ValidationError
from .marker import MarkerSpec
from .pnp import planar_pnp
from .pose import Pose6D, pose_to_transform, rotation_angle_deg, rotation_matrix, wrap_angle_deg
from .rendering import RenderedImage, Scene, render
from .sampling import HaltonConfig, halton_point

DOF_NAMES = ("x", "y", "z", "roll", "pitch", "yaw")

DETECTIONS_HEADER = ["pose_id", "detected", "estX", "estY", "estZ", "estRoll", "estPitch", "estYaw"]
POSES_HEADER = ["pose_id", "X", "Y", "Z", "roll", "pitch", "yaw"]


@dataclass(frozen=True)
class PoseRanges:
    """Sampling ranges for the pose cloud; defaults follow the benchmark setup."""

    z_mm: tuple[float, float] = (500.0, 1500.0)
    roll_deg: tuple[float, float] = (-45.0, 45.0)
    pitch_deg: tuple[float, float] = (-45.0, 45.0)
    yaw_deg: tuple[float, float] = (-180.0, 180.0)
    margin: float = 1.0

    def __post_init__(self) -> None:
        for name in ("z_mm", "roll_deg", "pitch_deg", "yaw_deg"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigurationError(f"range {name} is degenerate: ({lo}, {hi})")
        if self.z_mm[0] <= 0:
            raise ConfigurationError("depth range must be positive")


@dataclass(frozen=True)
class PoseErrorRecord:
    pose_id: int
    truth: Pose6D
    estimate: Pose6D | None
    errors: tuple[float, float, float, float, float, float] | None
    detected: bool
    marker_px: float
    ambiguity_margin_px: float = float("nan")

    def __post_init__(self) -> None:
        if self.detected != (self.errors is not None) or self.detected != (
            self.estimate is not None
        ):
            raise ValidationError("errors and estimate must be present iff detected")


@dataclass(frozen=True)
class AccuracyReport:
    """Per-DoF mean absolute error, signed bias and standard deviation."""

    a: tuple[float, ...]
    bias: tuple[float, ...]
    std: tuple[float, ...]
    detection_rate: float
    m: int
    total: int

    def summary(self) -> str:
        lines = [
            f"poses: {self.total}, detected: {self.m} "
            f"(rate {100.0 * self.detection_rate:.2f}%)",
            f"{'DoF':>6} {'accuracy':>12} {'bias':>12} {'std':>12}",
        ]
        units = ("mm", "mm", "mm", "deg", "deg", "deg")
        for i, name in enumerate(DOF_NAMES):
            lines.append(
                f"{name:>6} {self.a[i]:>12.4f} {self.bias[i]:>+12.4f} "
                f"{self.std[i]:>12.4f} {units[i]}"
            )
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Pose cloud sampling
# ---------------------------------------------------------------------------


def _xy_bounds_at_pose(
    rig: CameraRig, marker: MarkerSpec, z: float, rot: np.ndarray, margin: float
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Admissible marker-centre rectangle at depth z for a given rotation."""
    w, h = rig.sensor.resolution_px
    cx, cy = rig.lens.principal_point_px
    fpx = rig.focal_px
    # the blurred image of a corner extends ~CoC/2 + 1px beyond its projection
    inset_px = 1.0 + np.ceil(
        0.5 * circle_of_confusion(z, rig) / rig.sensor.pixel_pitch_mm
    )
    x_lo_px, x_hi_px = inset_px, (w - 1) - inset_px
    y_lo_px, y_hi_px = inset_px, (h - 1) - inset_px

    half_w = marker.side_mm / 2.0
    half_h = marker.height_mm / 2.0
    corners = np.array(
        [[-half_w, -half_h, 0], [half_w, -half_h, 0], [half_w, half_h, 0], [-half_w, half_h, 0]]
    )
    offsets = corners @ rot.T  # marker-corner offsets in the camera frame

    # exact containment: for each corner k at depth z + dz_k the centre X must
    # satisfy x_lo <= fpx*(X + dx_k)/(z + dz_k) + cx <= x_hi
    exact_x = [-np.inf, np.inf]
    exact_y = [-np.inf, np.inf]
    for dx, dy, dz in offsets:
        zk = z + dz
        if zk <= 0:
            raise ConfigurationError("marker corner behind the camera")
        exact_x[0] = max(exact_x[0], (x_lo_px - cx) / fpx * zk - dx)
        exact_x[1] = min(exact_x[1], (x_hi_px - cx) / fpx * zk - dx)
        exact_y[0] = max(exact_y[0], (y_lo_px - cy) / fpx * zk - dy)
        exact_y[1] = min(exact_y[1], (y_hi_px - cy) / fpx * zk - dy)

    # centre-only frustum rectangle (margin 0 keeps just the centre in frame)
    center_x = ((x_lo_px - cx) / fpx * z, (x_hi_px - cx) / fpx * z)
    center_y = ((y_lo_px - cy) / fpx * z, (y_hi_px - cy) / fpx * z)

    x_lo = center_x[0] + margin * (exact_x[0] - center_x[0])
    x_hi = center_x[1] + margin * (exact_x[1] - center_x[1])
    y_lo = center_y[0] + margin * (exact_y[0] - center_y[0])
    y_hi = center_y[1] + margin * (exact_y[1] - center_y[1])
    if not (x_lo < x_hi and y_lo < y_hi):
        raise ConfigurationError(
            f"frustum at z={z:.0f} mm cannot contain the {marker.side_mm:.0f} mm marker"
        )
    return (x_lo, x_hi), (y_lo, y_hi)


def sample_pose_cloud(
    n: int,
    ranges: PoseRanges,
    rig: CameraRig,
    marker: MarkerSpec,
    halton: HaltonConfig | None = None,
    start_index: int = 0,
) -> list[Pose6D]:
    """Deterministic Halton pose cloud.

    Index 0 maps to the range minima (the Halton point at index 0 is the
    origin).  Faure-permuted Halton is the default; pass a config built with
    ``HaltonConfig.random(dims=6, seed=...)`` for seeded digit scrambling.
    """
    if n < 1:
        raise ConfigurationError("cloud size must be at least 1")
    config = halton or HaltonConfig.faure(6)
    if config.dims != 6:
        raise ConfigurationError("pose sampling needs a 6-dimensional Halton config")
    poses = []
    for i in range(start_index, start_index + n):
        u = halton_point(i, config)
        z = ranges.z_mm[0] + u[2] * (ranges.z_mm[1] - ranges.z_mm[0])
        roll = ranges.roll_deg[0] + u[3] * (ranges.roll_deg[1] - ranges.roll_deg[0])
        pitch = ranges.pitch_deg[0] + u[4] * (ranges.pitch_deg[1] - ranges.pitch_deg[0])
        yaw = ranges.yaw_deg[0] + u[5] * (ranges.yaw_deg[1] - ranges.yaw_deg[0])
        rot = rotation_matrix(Pose6D(0.0, 0.0, z, roll, pitch, yaw))
        (x_lo, x_hi), (y_lo, y_hi) = _xy_bounds_at_pose(rig, marker, z, rot, ranges.margin)
        x = x_lo + u[0] * (x_hi - x_lo)
        y = y_lo + u[1] * (y_hi - y_lo)
        poses.append(Pose6D(x, y, z, roll, pitch, yaw))
    return poses


def projected_corners(pose: Pose6D, marker: MarkerSpec, rig: CameraRig) -> np.ndarray:
    """Ground-truth marker corner projections, top-left first, clockwise."""
    rot, trans = pose_to_transform(pose)
    obj = marker.corners_mm()
    pts3 = np.column_stack([obj, np.zeros(len(obj))]) @ rot.T + trans
    return project(pts3, rig)


def projected_side_px(pose: Pose6D, marker: MarkerSpec, rig: CameraRig) -> float:
    c = projected_corners(pose, marker, rig)
    return float(np.mean(np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1)))


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def pose_error(estimate: Pose6D, truth: Pose6D) -> np.ndarray:
    """Six signed errors: translation in mm, per-angle differences in degrees."""
    dt = estimate.translation - truth.translation
    da = wrap_angle_deg(estimate.canonicalized().angles - truth.canonicalized().angles)
    return np.concatenate([dt, da])


def estimate_from_corners(
    corners: np.ndarray, truth: Pose6D, marker: MarkerSpec, rig: CameraRig
):
    """PnP with the square's 4-fold correspondence ambiguity resolved.

    All four cyclic corner orderings reproject identically for a square
    outline; the reference pose picks the right symmetry class.
    """
    obj = marker.corners_mm()
    truth_rot = rotation_matrix(truth)
    best = None
    for k in range(4):
        result = planar_pnp(np.roll(corners, -k, axis=0), obj, rig)
        ang = rotation_angle_deg(rotation_matrix(result.pose), truth_rot)
        if best is None or ang < best[0]:
            best = (ang, result)
    return best[1]


def run_closed_loop(
    rig: CameraRig,
    marker: MarkerSpec,
    poses: list[Pose6D],
    spp_max: int | None = None,
    workers: int = 1,
    backend_name: str | None = None,
    detector_params: DetectorParams | None = None,
    on_image=None,
) -> list[PoseErrorRecord]:
    """Render, detect and score every pose; records come back in pose order."""
    records = []
    for pose_id, pose in enumerate(poses):
        scene = Scene(rig, marker, pose)
        image = render(scene, spp_max=spp_max, workers=workers, backend_name=backend_name)
        if on_image is not None:
            on_image(pose_id, image)
        corners = detect_square_marker(image, rig, detector_params)
        side_px = projected_side_px(pose, marker, rig)
        if corners is None:
            records.append(
                PoseErrorRecord(pose_id, pose, None, None, False, side_px)
            )
            continue
        result = estimate_from_corners(corners, pose, marker, rig)
        err = tuple(float(e) for e in pose_error(result.pose, pose))
        records.append(
            PoseErrorRecord(
                pose_id,
                pose,
                result.pose,
                err,
                True,
                side_px,
                result.ambiguity_margin_px,
            )
        )
    return records


def accuracy(records: list[PoseErrorRecord]) -> AccuracyReport:
    """Per-DoF mean absolute error (plus bias and std) over detected records.

    Aggregation runs in pose_id order, so the report is exactly invariant
    under record permutation.
    """
    if not records:
        raise ValidationError("no records to aggregate")
    detected = sorted((r for r in records if r.detected), key=lambda r: r.pose_id)
    if not detected:
        raise ValidationError("no detected records: accuracy is undefined")
    err = np.array([r.errors for r in detected], dtype=np.float64)
    return AccuracyReport(
        a=tuple(np.abs(err).mean(axis=0).tolist()),
        bias=tuple(err.mean(axis=0).tolist()),
        std=tuple(err.std(axis=0).tolist()),
        detection_rate=len(detected) / len(records),
        m=len(detected),
        total=len(records),
    )


def common_subset(
    record_sets: dict[str, list[PoseErrorRecord]],
) -> tuple[dict[str, list[PoseErrorRecord]], list[int]]:
    """Restrict every set to the pose_ids detected by all of them."""
    if not record_sets:
        raise ValidationError("no record sets given")
    id_sets = [{r.pose_id for r in recs} for recs in record_sets.values()]
    if any(s != id_sets[0] for s in id_sets[1:]):
        raise ValidationError("record sets do not share pose_ids")
    common = set.intersection(
        *({r.pose_id for r in recs if r.detected} for recs in record_sets.values())
    )
    filtered = {
        name: [r for r in recs if r.pose_id in common]
        for name, recs in record_sets.items()
    }
    return filtered, sorted(common)


# ---------------------------------------------------------------------------
# CSV surfaces
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_poses_csv(poses: list[Pose6D], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(POSES_HEADER)
        for i, p in enumerate(poses):
            writer.writerow([i, _fmt(p.x), _fmt(p.y), _fmt(p.z), _fmt(p.roll), _fmt(p.pitch), _fmt(p.yaw)])


def read_poses_csv(path: str | Path) -> dict[int, Pose6D]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != POSES_HEADER:
            raise ValidationError(f"{path}: expected header {','.join(POSES_HEADER)}")
        out = {}
        for row in reader:
            if not row:
                continue
            pid = int(row[0])
            x, y, z, roll, pitch, yaw = (float(v) for v in row[1:7])
            out[pid] = Pose6D(x, y, z, roll, pitch, yaw)
    return out


def write_detections_csv(records: list[PoseErrorRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DETECTIONS_HEADER)
        for r in sorted(records, key=lambda r: r.pose_id):
            if r.detected:
                e = r.estimate
                writer.writerow(
                    [r.pose_id, 1, _fmt(e.x), _fmt(e.y), _fmt(e.z), _fmt(e.roll), _fmt(e.pitch), _fmt(e.yaw)]
                )
            else:
                writer.writerow([r.pose_id, 0, "", "", "", "", "", ""])


def read_detections_csv(path: str | Path) -> dict[int, Pose6D | None]:
    """Parse a detection-results file, validating the schema row by row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DETECTIONS_HEADER:
            raise ValidationError(
                f"{path}: expected header {','.join(DETECTIONS_HEADER)}, got {header}"
            )
        out: dict[int, Pose6D | None] = {}
        bad_rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pid = int(row[0])
                flag = int(row[1])
                if flag not in (0, 1):
                    raise ValueError("detected must be 0 or 1")
                if flag:
                    x, y, z, roll, pitch, yaw = (float(v) for v in row[2:8])
                    out[pid] = Pose6D(x, y, z, roll, pitch, yaw)
                else:
                    out[pid] = None
            except (ValueError, IndexError) as exc:
                bad_rows.append(f"line {lineno}: {exc}")
        if bad_rows:
            raise ValidationError(f"{path}: malformed rows:\n" + "\n".join(bad_rows))
    return out


def records_from_detections(
    poses: dict[int, Pose6D],
    detections: dict[int, Pose6D | None],
    marker: MarkerSpec,
    rig: CameraRig,
) -> list[PoseErrorRecord]:
    """Join ground-truth poses with an external detection-results file."""
    missing = sorted(set(poses) - set(detections))
    if missing:
        raise ValidationError(f"detections missing pose_ids: {missing[:10]}")
    records = []
    for pid in sorted(poses):
        truth = poses[pid]
        est = detections[pid]
        side_px = projected_side_px(truth, marker, rig)
        if est is None:
            records.append(PoseErrorRecord(pid, truth, None, None, False, side_px))
        else:
            err = tuple(float(e) for e in pose_error(est, truth))
            records.append(PoseErrorRecord(pid, truth, est, err, True, side_px))
    return records


def write_report_csv(report: AccuracyReport, path: str | Path) -> None:
    """Machine-readable accuracy report (per-DoF rows plus counts)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + list(DOF_NAMES))
        writer.writerow(["accuracy"] + [_fmt(v) for v in report.a])
        writer.writerow(["bias"] + [_fmt(v) for v in report.bias])
        writer.writerow(["std"] + [_fmt(v) for v in report.std])
        writer.writerow(["detection_rate", _fmt(report.detection_rate)] + [""] * 5)
        writer.writerow(["detected", report.m] + [""] * 5)
        writer.writerow(["total", report.total] + [""] * 5)


def write_correlation_csv(records: list[PoseErrorRecord], path: str | Path) -> None:
    """Long-format dataset: truth DoF values and signed errors per detected pose."""
    detected = [r for r in records if r.detected]
    if not detected:
        raise ValidationError("no detected records to export")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# total_poses={len(records)}\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["pose_id"] + [f"val_{n}" for n in DOF_NAMES] + [f"err_{n}" for n in DOF_NAMES]
        )
        for r in detected:
            t = r.truth
            vals = [t.x, t.y, t.z, t.roll, t.pitch, t.yaw]
            writer.writerow([r.pose_id] + [_fmt(v) for v in vals] + [_fmt(e) for e in r.errors])


def read_correlation_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Returns (pose_ids, values (m,6), errors (m,6), total_poses)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    total = None
    rows_start = 0
    for i, line in enumerate(text):
        if line.startswith("#"):
            if "total_poses=" in line:
                total = int(line.split("total_poses=")[1])
            rows_start = i + 1
        else:
            break
    reader = csv.reader(io.StringIO("\n".join(text[rows_start:])))
    header = next(reader)
    expected = ["pose_id"] + [f"val_{n}" for n in DOF_NAMES] + [f"err_{n}" for n in DOF_NAMES]
    if header != expected:
        raise ValidationError(f"{path}: unexpected correlation header")
    ids, vals, errs = [], [], []
    for row in reader:
        if not row:
            continue
        ids.append(int(row[0]))
        vals.append([float(v) for v in row[1:7]])
        errs.append([float(v) for v in row[7:13]])
    if total is None:
        total = len(ids)
    return np.array(ids), np.array(vals), np.array(errs), total


def accuracy_from_correlation(path: str | Path) -> AccuracyReport:
    """Rebuild the accuracy report from an exported correlation dataset."""
    _, _, errs, total = read_correlation_csv(path)
    if errs.size == 0:
        raise ValidationError("correlation file holds no detected records")
    return AccuracyReport(
        a=tuple(np.abs(errs).mean(axis=0).tolist()),
        bias=tuple(errs.mean(axis=0).tolist()),
        std=tuple(errs.std(axis=0).tolist()),
        detection_rate=len(errs) / total,
        m=len(errs),
        total=total,
    )
