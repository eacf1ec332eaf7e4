"""Synthetic camera: thin-lens geometry, distortion model, projection.

Conventions
-----------
* Camera frame is right-handed with +X right, +Y down, +Z in front of the
  lens.  The lens plane is z = 0; object distances are +z in millimetres.
* Continuous pixel coordinates are corner-origin: array pixel (i, j) covers
  the square [i, i+1) x [j, j+1), so its centre is (i + 0.5, j + 0.5).  The
  principal point and all projected/detected coordinates live in this frame.
* Normalized coordinates are (u, v) = ((x - c_x) / f_px, (y - c_y) / f_px)
  with f_px the focal length expressed in pixels (f_mm / pixel pitch).

The distortion polynomial takes ideal normalized coordinates to distorted
ones; ``undistort`` inverts it by damped fixed-point iteration.  All
operations are pure functions of immutable inputs and are safe to call from
any number of threads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DomainError

UNDISTORT_TOL = 1e-10
UNDISTORT_MAX_ITER = 20


@dataclass(frozen=True)
class LensRig:
    """Thin-lens parameters: f, principal point, f-number, focus distance."""

    focal_length_mm: float
    principal_point_px: tuple[float, float]
    f_number: float
    focus_distance_mm: float

    def __post_init__(self) -> None:
        if self.focal_length_mm <= 0:
            raise ConfigurationError("focal length must be positive")
        if self.f_number <= 0:
            raise ConfigurationError("f-number must be positive")
        if self.focus_distance_mm <= self.focal_length_mm:
            raise ConfigurationError(
                "focus distance must exceed the focal length "
                f"({self.focus_distance_mm} <= {self.focal_length_mm})"
            )

    @property
    def pupil_diameter_mm(self) -> float:
        """Entrance pupil diameter d = f / N."""
        return self.focal_length_mm / self.f_number


@dataclass(frozen=True)
class DistortionCoefficients:
    """Rational radial (k1..k6), tangential (p1, p2) and thin-prism (s1..s4)."""

    radial: tuple[float, float, float, float, float, float] = (0.0,) * 6
    tangential: tuple[float, float] = (0.0, 0.0)
    prism: tuple[float, float, float, float] = (0.0,) * 4

    def __post_init__(self) -> None:
        if len(self.radial) != 6 or len(self.tangential) != 2 or len(self.prism) != 4:
            raise ConfigurationError("expected 6 radial, 2 tangential, 4 prism coefficients")

    @property
    def is_zero(self) -> bool:
        return not any(self.radial) and not any(self.tangential) and not any(self.prism)

    @classmethod
    def from_opencv_vector(cls, dist: list[float] | None) -> "DistortionCoefficients":
        """Build from the calibration-output ordering [k1,k2,p1,p2,k3,k4,k5,k6,s1..s4].

        Shorter vectors are padded with zeros, matching the usual truncated
        calibration outputs (4, 5, 8 or 12 entries).
        """
        d = list(dist or [])
        if len(d) > 12:
            raise ConfigurationError(f"distortion vector has {len(d)} entries, at most 12 allowed")
        d += [0.0] * (12 - len(d))
        k1, k2, p1, p2, k3, k4, k5, k6, s1, s2, s3, s4 = map(float, d)
        return cls((k1, k2, k3, k4, k5, k6), (p1, p2), (s1, s2, s3, s4))

    def to_opencv_vector(self) -> list[float]:
        k1, k2, k3, k4, k5, k6 = self.radial
        p1, p2 = self.tangential
        s1, s2, s3, s4 = self.prism
        return [k1, k2, p1, p2, k3, k4, k5, k6, s1, s2, s3, s4]


@dataclass(frozen=True)
class SensorSpec:
    """Sensor geometry and quantization depth."""

    resolution_px: tuple[int, int]
    pixel_pitch_um: float
    bit_depth: int

    def __post_init__(self) -> None:
        w, h = self.resolution_px
        if w < 16 or h < 16:
            raise ConfigurationError("sensor resolution must be at least 16x16")
        if self.pixel_pitch_um <= 0:
            raise ConfigurationError("pixel pitch must be positive")
        if self.bit_depth not in (8, 10, 12):
            raise ConfigurationError("bit depth must be one of 8, 10, 12")

    @property
    def levels(self) -> int:
        return 2**self.bit_depth

    @property
    def pixel_pitch_mm(self) -> float:
        return self.pixel_pitch_um * 1e-3


@dataclass(frozen=True)
class CameraRig:
    """Complete synthetic camera.

    ``valid_radius`` bounds the normalized radius over which the distortion
    model is trusted; it defaults to 1.05x the circumscribed radius of the
    sensor.  ``coc_classical`` switches the circle-of-confusion denominator
    from (f + z_f) to the classical (z_f - f); it is off by default.
    """

    lens: LensRig
    distortion: DistortionCoefficients
    sensor: SensorSpec
    wavelength_nm: float
    valid_radius: float | None = None
    coc_classical: bool = False

    def __post_init__(self) -> None:
        if not 300.0 <= self.wavelength_nm <= 1100.0:
            raise ConfigurationError("wavelength must lie in [300, 1100] nm")
        if self.valid_radius is None:
            object.__setattr__(self, "valid_radius", 1.05 * self._circumscribed_radius())
        if self.valid_radius <= 0:
            raise ConfigurationError("valid radius must be positive")
        self._check_rational_denominator()

    def _circumscribed_radius(self) -> float:
        w, h = self.sensor.resolution_px
        cx, cy = self.lens.principal_point_px
        corners = [(0.0, 0.0), (float(w), 0.0), (0.0, float(h)), (float(w), float(h))]
        r_px = max(np.hypot(x - cx, y - cy) for x, y in corners)
        return float(r_px / self.focal_px)

    def _check_rational_denominator(self) -> None:
        k4, k5, k6 = self.distortion.radial[3:]
        r2 = np.linspace(0.0, self.valid_radius, 512) ** 2
        den = 1.0 + k4 * r2 + k5 * r2**2 + k6 * r2**3
        if np.any(den <= 0.0):
            raise ConfigurationError(
                "rational distortion denominator is non-positive inside the valid radius"
            )

    @property
    def focal_px(self) -> float:
        """Focal length in pixels; single source for projection and rendering."""
        return self.lens.focal_length_mm / self.sensor.pixel_pitch_mm


# ---------------------------------------------------------------------------
# Thin-lens geometry
# ---------------------------------------------------------------------------


def image_distance(z_f: float, f: float) -> float:
    """Distance lens-to-sharp-image z_s with 1/z_f + 1/z_s = 1/f."""
    if z_f <= f:
        raise DomainError(f"object distance {z_f} must exceed focal length {f}")
    return f * z_f / (z_f - f)


def circle_of_confusion(z: float, rig: CameraRig) -> float:
    """Blur-disk diameter (mm) for an object point at distance z (mm)."""
    if z <= 0:
        raise DomainError("object distance must be positive")
    f = rig.lens.focal_length_mm
    z_f = rig.lens.focus_distance_mm
    d = rig.lens.pupil_diameter_mm
    den = (z_f - f) if rig.coc_classical else (f + z_f)
    return abs(d * f * (z - z_f) / (z * den))


# ---------------------------------------------------------------------------
# Distortion
# ---------------------------------------------------------------------------


def _distortion_terms(u, v, coeffs: DistortionCoefficients):
    k1, k2, k3, k4, k5, k6 = coeffs.radial
    p1, p2 = coeffs.tangential
    s1, s2, s3, s4 = coeffs.prism
    r2 = u * u + v * v
    r4 = r2 * r2
    r6 = r4 * r2
    num = 1.0 + k1 * r2 + k2 * r4 + k3 * r6
    den = 1.0 + k4 * r2 + k5 * r4 + k6 * r6
    ratio = num / den
    du = u * ratio + 2.0 * p1 * u * v + p2 * (r2 + 2.0 * u * u) + s1 * r2 + s2 * r4
    dv = v * ratio + p1 * (r2 + 2.0 * v * v) + 2.0 * p2 * u * v + s3 * r2 + s4 * r4
    return du, dv, den, r2


def distort(u, v, coeffs: DistortionCoefficients, valid_radius: float | None = None):
    """Apply the distortion model to ideal normalized coordinates.

    Scalar or array inputs.  Raises if the rational denominator is
    non-positive at the evaluated radius, or (when ``valid_radius`` is
    given) if an input lies outside it.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    du, dv, den, r2 = _distortion_terms(u, v, coeffs)
    if valid_radius is not None and np.any(r2 > valid_radius**2 * (1.0 + 1e-12)):
        raise DomainError("normalized coordinates outside the configured valid radius")
    if np.any(den <= 0.0):
        raise DomainError("rational distortion denominator non-positive at this radius")
    if du.ndim == 0:
        return float(du), float(dv)
    return du, dv


def _distortion_jacobian(u, v, coeffs: DistortionCoefficients):
    """Distorted coordinates and their Jacobian w.r.t. the ideal ones."""
    k1, k2, k3, k4, k5, k6 = coeffs.radial
    p1, p2 = coeffs.tangential
    s1, s2, s3, s4 = coeffs.prism
    r2 = u * u + v * v
    r4 = r2 * r2
    r6 = r4 * r2
    num = 1.0 + k1 * r2 + k2 * r4 + k3 * r6
    den = 1.0 + k4 * r2 + k5 * r4 + k6 * r6
    q = num / den
    nump = k1 + 2.0 * k2 * r2 + 3.0 * k3 * r4
    denp = k4 + 2.0 * k5 * r2 + 3.0 * k6 * r4
    qp = (nump * den - num * denp) / (den * den)
    du = u * q + 2.0 * p1 * u * v + p2 * (r2 + 2.0 * u * u) + s1 * r2 + s2 * r4
    dv = v * q + p1 * (r2 + 2.0 * v * v) + 2.0 * p2 * u * v + s3 * r2 + s4 * r4
    j00 = q + 2.0 * u * u * qp + 2.0 * p1 * v + 6.0 * p2 * u + 2.0 * u * s1 + 4.0 * u * r2 * s2
    j01 = 2.0 * u * v * qp + 2.0 * p1 * u + 2.0 * p2 * v + 2.0 * v * s1 + 4.0 * v * r2 * s2
    j10 = 2.0 * u * v * qp + 2.0 * p1 * u + 2.0 * p2 * v + 2.0 * u * s3 + 4.0 * u * r2 * s4
    j11 = q + 2.0 * v * v * qp + 6.0 * p1 * v + 2.0 * p2 * u + 2.0 * v * s3 + 4.0 * v * r2 * s4
    return du, dv, j00, j01, j10, j11


def undistort(
    u_d,
    v_d,
    coeffs: DistortionCoefficients,
    tol: float = UNDISTORT_TOL,
    max_iter: int = UNDISTORT_MAX_ITER,
):
    """Invert ``distort`` by a damped Newton iteration.

    Plain fixed-point stalls past 20 iterations for strong rational models
    near the frame corner, so the update solves the 2x2 linearized system
    (falling back to a fixed-point step when it degenerates).  Elements are
    frozen once their update falls below ``tol`` so the per-element
    trajectory does not depend on what else is in the batch.
    """
    u_d = np.asarray(u_d, dtype=np.float64)
    v_d = np.asarray(v_d, dtype=np.float64)
    scalar = u_d.ndim == 0
    u = np.atleast_1d(u_d).copy()
    v = np.atleast_1d(v_d).copy()
    uo = np.atleast_1d(u_d)
    vo = np.atleast_1d(v_d)
    active = np.ones(u.shape, dtype=bool)
    for _ in range(max_iter):
        du, dv, j00, j01, j10, j11 = _distortion_jacobian(u[active], v[active], coeffs)
        fx = du - uo[active]
        fy = dv - vo[active]
        det = j00 * j11 - j01 * j10
        degenerate = np.abs(det) < 1e-12
        det = np.where(degenerate, 1.0, det)
        su = np.where(degenerate, fx, (j11 * fx - j01 * fy) / det)
        sv = np.where(degenerate, fy, (j00 * fy - j10 * fx) / det)
        u[active] = u[active] - su
        v[active] = v[active] - sv
        step = np.maximum(np.abs(su), np.abs(sv))
        still = step >= tol
        active[active.nonzero()[0][~still]] = False
        if not active.any():
            break
    else:
        if active.any():
            raise ConvergenceError(
                f"undistort did not converge in {max_iter} iterations "
                f"for {int(active.sum())} point(s)"
            )
    if scalar:
        return float(u[0]), float(v[0])
    return u, v


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


def project(points, rig: CameraRig):
    """Project camera-frame points (mm) to continuous pixel coordinates.

    ``points`` is (3,) or (N, 3); output matches ((2,) or (N, 2)).
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    z = pts[:, 2]
    if np.any(z <= 0.0):
        raise DomainError("point behind the camera (z <= 0)")
    u = pts[:, 0] / z
    v = pts[:, 1] / z
    ud, vd = distort(u, v, rig.distortion)
    ud = np.atleast_1d(ud)
    vd = np.atleast_1d(vd)
    cx, cy = rig.lens.principal_point_px
    out = np.stack([rig.focal_px * ud + cx, rig.focal_px * vd + cy], axis=1)
    return out[0] if single else out


def unproject_pixel(px, py, rig: CameraRig):
    """Pixel coordinates to ideal normalized coordinates (undistorted)."""
    cx, cy = rig.lens.principal_point_px
    u_d = (np.asarray(px, dtype=np.float64) - cx) / rig.focal_px
    v_d = (np.asarray(py, dtype=np.float64) - cy) / rig.focal_px
    return undistort(u_d, v_d, rig.distortion)


# ---------------------------------------------------------------------------
# Camera config files
# ---------------------------------------------------------------------------

_CAMERA_FIELDS = (
    "f_mm",
    "cx_px",
    "cy_px",
    "f_number",
    "focus_mm",
    "width",
    "height",
    "pitch_um",
    "bit_depth",
    "wavelength_nm",
)


def load_camera(path: str | Path) -> CameraRig:
    """Read a camera config JSON document.

    The ``dist`` entry uses the calibration-output ordering
    [k1, k2, p1, p2, k3, k4, k5, k6, s1, s2, s3, s4]; missing trailing
    entries default to zero.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"camera file {path} is not valid JSON: {exc}") from exc
    missing = [k for k in _CAMERA_FIELDS if k not in doc]
    if missing:
        raise ConfigurationError(f"camera file {path} missing fields: {', '.join(missing)}")
    lens = LensRig(
        focal_length_mm=float(doc["f_mm"]),
        principal_point_px=(float(doc["cx_px"]), float(doc["cy_px"])),
        f_number=float(doc["f_number"]),
        focus_distance_mm=float(doc["focus_mm"]),
    )
    sensor = SensorSpec(
        resolution_px=(int(doc["width"]), int(doc["height"])),
        pixel_pitch_um=float(doc["pitch_um"]),
        bit_depth=int(doc["bit_depth"]),
    )
    dist = DistortionCoefficients.from_opencv_vector(doc.get("dist"))
    return CameraRig(
        lens=lens,
        distortion=dist,
        sensor=sensor,
        wavelength_nm=float(doc["wavelength_nm"]),
        valid_radius=float(doc["valid_radius"]) if "valid_radius" in doc else None,
        coc_classical=bool(doc.get("coc_classical", False)),
    )


def save_camera(rig: CameraRig, path: str | Path) -> None:
    doc = {
        "f_mm": rig.lens.focal_length_mm,
        "cx_px": rig.lens.principal_point_px[0],
        "cy_px": rig.lens.principal_point_px[1],
        "f_number": rig.lens.f_number,
        "focus_mm": rig.lens.focus_distance_mm,
        "dist": rig.distortion.to_opencv_vector(),
        "width": rig.sensor.resolution_px[0],
        "height": rig.sensor.resolution_px[1],
        "pitch_um": rig.sensor.pixel_pitch_um,
        "bit_depth": rig.sensor.bit_depth,
        "wavelength_nm": rig.wavelength_nm,
        "valid_radius": rig.valid_radius,
        "coc_classical": rig.coc_classical,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def camera_hash(rig: CameraRig) -> str:
    """Stable short hash of every parameter that affects rendering."""
    payload = json.dumps(
        {
            "f": rig.lens.focal_length_mm,
            "c": rig.lens.principal_point_px,
            "N": rig.lens.f_number,
            "zf": rig.lens.focus_distance_mm,
            "dist": rig.distortion.to_opencv_vector(),
            "res": rig.sensor.resolution_px,
            "pitch": rig.sensor.pixel_pitch_um,
            "bits": rig.sensor.bit_depth,
            "lambda": rig.wavelength_nm,
            "valid_r": rig.valid_radius,
            "coc_classical": rig.coc_classical,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def logitech_c270() -> CameraRig:
    """The 640x480 webcam example rig used throughout the test suite."""
    return CameraRig(
        lens=LensRig(4.47, (319.5, 239.5), 2.8, 150.0),
        distortion=DistortionCoefficients.from_opencv_vector([-0.286, 0.057, 0.0, 0.0, 0.112]),
        sensor=SensorSpec((640, 480), 8.3, 8),
        wavelength_nm=650.0,
    )


def canon_rebel_xs() -> CameraRig:
    """The 2816x1880 12-bit DSLR example rig."""
    return CameraRig(
        lens=LensRig(26.49, (1407.5, 939.5), 4.5, 700.0),
        distortion=DistortionCoefficients.from_opencv_vector([-0.125, 3.855, 0.0, 0.0, -40.371]),
        sensor=SensorSpec((2816, 1880), 5.7, 12),
        wavelength_nm=650.0,
    )
