#!/usr/bin/env python3
"""Run real third-party fiducial detectors over a rendered image directory.

Input: a directory of rendered marker images (``pose_<id>.png`` / ``.pgm``)
plus the camera config JSON the images were rendered with.  Output: one
detection-results CSV in the benchmark schema
(``pose_id,detected,estX,estY,estZ,estRoll,estPitch,estYaw``), rows sorted by
pose_id, plus a ``<out>.meta.json`` recording the detector backend and
version (versions are recorded, not pinned).

Detectors:

* ``aruco`` - OpenCV ArUco.  Detection runs a parameter ladder (an accurate
  configuration with AprilTag-style corner refinement first, then a
  permissive one tuned for small markers, each optionally on a cubic-upscaled
  copy for sub-15 px tags).  Pose uses ArUco's native square path
  (``SOLVEPNP_IPPE_SQUARE``) in the tag frame, converted to the renderer's
  marker frame.
* ``apriltag`` - the AprilRobotics library when importable
  (``pupil_apriltags`` or ``apriltag``), otherwise OpenCV's
  AprilTag-dictionary pipeline; pose falls back to generic planar PnP from
  the detected corners.

This tool deliberately does not import the renderer: it consumes only the
documented camera-file format, the rendered images, and emits the documented
CSV schema.

Conventions (matching the renderer's docs): camera frame +X right, +Y down,
+Z forward; marker frame +x right, +y down, z = 0 on the plane; continuous
pixel coordinates are corner-origin (array pixel (i, j) has centre
(i+0.5, j+0.5)); estRoll/estPitch/estYaw are intrinsic Z(yaw)Y(pitch)X(roll)
Euler angles in degrees.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

SUPPORTED_DETECTORS = ("aruco", "apriltag")
CSV_HEADER = ["pose_id", "detected", "estX", "estY", "estZ", "estRoll", "estPitch", "estYaw"]


class BridgeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Camera file (documented renderer format)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Camera:
    matrix: np.ndarray        # 3x3, corner-origin continuous pixel coords
    dist: np.ndarray          # [k1 k2 p1 p2 k3 k4 k5 k6 s1 s2 s3 s4]
    bit_depth: int
    resolution: tuple[int, int]


def load_camera(path: str | Path) -> Camera:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    required = ["f_mm", "cx_px", "cy_px", "pitch_um", "width", "height", "bit_depth"]
    missing = [k for k in required if k not in doc]
    if missing:
        raise BridgeError(f"camera file {path} missing fields: {', '.join(missing)}")
    f_px = float(doc["f_mm"]) / (float(doc["pitch_um"]) * 1e-3)
    matrix = np.array(
        [[f_px, 0.0, float(doc["cx_px"])], [0.0, f_px, float(doc["cy_px"])], [0.0, 0.0, 1.0]]
    )
    dist = list(doc.get("dist") or [])
    if len(dist) > 12:
        raise BridgeError("dist vector longer than 12 entries")
    dist = np.array(dist + [0.0] * (12 - len(dist)), dtype=np.float64)
    return Camera(matrix, dist, int(doc["bit_depth"]), (int(doc["width"]), int(doc["height"])))


# ---------------------------------------------------------------------------
# Pose helpers
# ---------------------------------------------------------------------------

# tag frames (ArUco/AprilTag: +y up, +z out of the tag) vs the renderer's
# marker frame (+y down, +z into the plane): a 180 deg rotation about x
_RX180 = np.diag([1.0, -1.0, -1.0])


def euler_zyx_deg(rot: np.ndarray) -> tuple[float, float, float]:
    """(roll, pitch, yaw) with R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    pitch = np.arcsin(np.clip(-rot[2, 0], -1.0, 1.0))
    if abs(abs(rot[2, 0]) - 1.0) < 1e-12:
        roll = 0.0
        yaw = np.arctan2(-rot[0, 1], rot[1, 1])
    else:
        roll = np.arctan2(rot[2, 1], rot[2, 2])
        yaw = np.arctan2(rot[1, 0], rot[0, 0])
    return float(np.degrees(roll)), float(np.degrees(pitch)), float(np.degrees(yaw))


def solve_square_pose(corners_xy: np.ndarray, side_mm: float, camera: Camera):
    """Tag-frame IPPE_SQUARE solve, result expressed in the marker frame.

    ``corners_xy`` are corner-origin continuous coordinates ordered
    TL, TR, BR, BL as reported by the detector.
    """
    s = side_mm
    obj = np.array(
        [[-s / 2, s / 2, 0], [s / 2, s / 2, 0], [s / 2, -s / 2, 0], [-s / 2, -s / 2, 0]]
    )
    ok, rvec, tvec = cv2.solvePnP(
        obj, corners_xy.astype(np.float64), camera.matrix, camera.dist,
        flags=cv2.SOLVEPNP_IPPE_SQUARE,
    )
    if not ok:
        return None
    rot = cv2.Rodrigues(rvec)[0] @ _RX180
    t = tvec.ravel()
    if t[2] <= 0:
        return None
    roll, pitch, yaw = euler_zyx_deg(rot)
    return (float(t[0]), float(t[1]), float(t[2]), roll, pitch, yaw)


# ---------------------------------------------------------------------------
# Detectors
# ---------------------------------------------------------------------------


def _aruco_params(accurate: bool) -> "cv2.aruco.DetectorParameters":
    p = cv2.aruco.DetectorParameters()
    p.adaptiveThreshConstant = 5
    p.errorCorrectionRate = 1.0
    if accurate:
        p.perspectiveRemovePixelPerCell = 8
        p.cornerRefinementMethod = cv2.aruco.CORNER_REFINE_APRILTAG
    else:
        # permissive stage for small, strongly tilted tags
        p.perspectiveRemovePixelPerCell = 10
        p.perspectiveRemoveIgnoredMarginPerCell = 0.25
        p.cornerRefinementMethod = cv2.aruco.CORNER_REFINE_SUBPIX
        p.cornerRefinementWinSize = 3
        p.minOtsuStdDev = 2.0
        p.adaptiveThreshWinSizeMin = 3
        p.adaptiveThreshWinSizeStep = 4
    return p


class ArucoAdapter:
    name = "aruco"

    def __init__(self, dictionary: str, marker_id: int | None):
        dict_id = getattr(cv2.aruco, dictionary, None)
        if dict_id is None:
            raise BridgeError(f"unknown aruco dictionary {dictionary!r}")
        self.dictionary_name = dictionary
        self.marker_id = marker_id
        dic = cv2.aruco.getPredefinedDictionary(dict_id)
        self.stages = [
            cv2.aruco.ArucoDetector(dic, _aruco_params(accurate=True)),
            cv2.aruco.ArucoDetector(dic, _aruco_params(accurate=False)),
        ]

    def detect(self, gray: np.ndarray, upscales=(1, 2)) -> np.ndarray | None:
        """Corner-origin TL,TR,BR,BL corners of the first matching tag."""
        for detector in self.stages:
            for scale in upscales:
                work = gray if scale == 1 else cv2.resize(
                    gray, None, fx=scale, fy=scale, interpolation=cv2.INTER_CUBIC
                )
                corners, ids, _ = detector.detectMarkers(work)
                if ids is None:
                    continue
                ids = ids.ravel().tolist()
                if self.marker_id is not None:
                    if self.marker_id not in ids:
                        continue
                    k = ids.index(self.marker_id)
                else:
                    k = 0
                c = corners[k][0].astype(np.float64)
                # cv2 reports centre-at-integer coordinates; at scale f the
                # corner-origin position is (x_f - (f-1)/2) / f + 0.5
                return (c - (scale - 1) / 2.0) / scale + 0.5
        return None

    def describe(self) -> dict:
        return {
            "backend": f"opencv-aruco {cv2.__version__}",
            "dictionary": self.dictionary_name,
            "stages": "accurate(april-refine) -> permissive(subpix), upscale ladder",
        }


class AprilTagAdapter:
    name = "apriltag"

    def __init__(self, family: str, marker_id: int | None):
        self.family = family
        self.marker_id = marker_id
        self._native = None
        try:  # AprilRobotics bindings, when installed
            import pupil_apriltags

            self._native = pupil_apriltags.Detector(families=family)
            self._backend = f"pupil_apriltags ({family})"
        except ImportError:
            try:
                import apriltag

                self._native = apriltag.Detector(apriltag.DetectorOptions(families=family))
                self._backend = f"apriltag ({family})"
            except ImportError:
                fam_map = {
                    "tag36h11": "DICT_APRILTAG_36h11",
                    "tag25h9": "DICT_APRILTAG_25h9",
                    "tag16h5": "DICT_APRILTAG_16h5",
                }
                if family not in fam_map:
                    raise BridgeError(
                        f"no native apriltag library installed and no OpenCV fallback "
                        f"for family {family!r}"
                    )
                self._fallback = ArucoAdapter(fam_map[family], marker_id)
                self._backend = f"opencv-aruco {cv2.__version__} ({fam_map[family]} fallback)"

    def detect(self, gray: np.ndarray, upscales=(1, 2)) -> np.ndarray | None:
        if self._native is None:
            return self._fallback.detect(gray, upscales)
        detections = self._native.detect(gray)
        for d in detections:
            if self.marker_id is not None and d.tag_id != self.marker_id:
                continue
            # AprilRobotics order is BL, BR, TR, TL in centre-at-integer coords
            c = np.asarray(d.corners, dtype=np.float64)[::-1]
            c = np.roll(c, 1, axis=0)  # -> TL, TR, BR, BL
            return c + 0.5
        return None

    def describe(self) -> dict:
        return {"backend": self._backend, "family": self.family}


def make_detector(name: str, dictionary: str, family: str, marker_id: int | None):
    if name == "aruco":
        return ArucoAdapter(dictionary, marker_id)
    if name == "apriltag":
        return AprilTagAdapter(family, marker_id)
    raise BridgeError(
        f"unknown detector {name!r}; supported: {', '.join(SUPPORTED_DETECTORS)}"
    )


# ---------------------------------------------------------------------------
# Directory run
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BridgeConfig:
    image_dir: Path
    camera_file: Path
    detector: str
    side_mm: float
    out_csv: Path
    dictionary: str = "DICT_4X4_50"
    family: str = "tag36h11"
    marker_id: int | None = 0
    upscales: tuple[int, ...] = (1, 2)

    def __post_init__(self) -> None:
        if self.detector not in SUPPORTED_DETECTORS:
            raise BridgeError(
                f"unknown detector {self.detector!r}; supported: "
                f"{', '.join(SUPPORTED_DETECTORS)}"
            )
        if self.side_mm <= 0:
            raise BridgeError("marker side must be positive")


_POSE_ID_RE = re.compile(r"(\d+)\D*$")


def _pose_id_from_name(path: Path) -> int | None:
    m = _POSE_ID_RE.search(path.stem)
    return int(m.group(1)) if m else None


def _read_gray8(path: Path, bit_depth: int) -> np.ndarray:
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise OSError(f"unreadable image {path}")
    if arr.ndim == 3:
        arr = cv2.cvtColor(arr, cv2.COLOR_BGR2GRAY)
    if arr.dtype != np.uint8:
        levels = (1 << bit_depth) - 1
        arr = np.round(arr.astype(np.float64) * (255.0 / levels)).astype(np.uint8)
    return arr


def run_detector(config: BridgeConfig) -> Path:
    """Detect every image in the directory and write the results CSV."""
    camera = load_camera(config.camera_file)
    detector = make_detector(config.detector, config.dictionary, config.family, config.marker_id)

    images = sorted(
        p for p in config.image_dir.iterdir()
        if p.suffix.lower() in (".png", ".pgm") and _pose_id_from_name(p) is not None
    )
    rows = []
    skipped = []
    for path in sorted(images, key=_pose_id_from_name):
        pose_id = _pose_id_from_name(path)
        try:
            gray = _read_gray8(path, camera.bit_depth)
        except OSError as exc:
            print(f"warning: skipping {path.name}: {exc}", file=sys.stderr)
            skipped.append(path.name)
            continue
        corners = detector.detect(gray, config.upscales)
        pose = solve_square_pose(corners, config.side_mm, camera) if corners is not None else None
        if pose is None:
            rows.append([pose_id, 0, "", "", "", "", "", ""])
        else:
            rows.append([pose_id, 1] + [repr(v) for v in pose])

    # write to a temp file first so a failure never leaves a partial CSV
    tmp = config.out_csv.with_name(config.out_csv.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)
    tmp.replace(config.out_csv)

    meta = {
        "detector": detector.name,
        **detector.describe(),
        "images": len(rows),
        "detected": sum(1 for r in rows if r[1] == 1),
        "skipped_unreadable": skipped,
        "side_mm": config.side_mm,
        "upscales": list(config.upscales),
    }
    Path(str(config.out_csv) + ".meta.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )
    return config.out_csv


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--images", required=True, help="directory of rendered images")
    parser.add_argument("--camera", required=True, help="camera config JSON")
    parser.add_argument("--detector", required=True, help="aruco | apriltag")
    parser.add_argument("--dictionary", default="DICT_4X4_50", help="aruco dictionary name")
    parser.add_argument("--family", default="tag36h11", help="apriltag family")
    parser.add_argument("--marker-id", type=int, default=0, help="tag id to track (-1: any)")
    parser.add_argument("--side-mm", type=float, required=True, help="physical marker side")
    parser.add_argument("--out", required=True, help="output detections CSV")
    parser.add_argument(
        "--upscales", default="1,2",
        help="comma-separated cubic upscale ladder tried per detector stage",
    )
    args = parser.parse_args(argv)
    try:
        config = BridgeConfig(
            image_dir=Path(args.images),
            camera_file=Path(args.camera),
            detector=args.detector,
            side_mm=args.side_mm,
            out_csv=Path(args.out),
            dictionary=args.dictionary,
            family=args.family,
            marker_id=None if args.marker_id < 0 else args.marker_id,
            upscales=tuple(int(x) for x in args.upscales.split(",")),
        )
        out = run_detector(config)
    except BridgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
