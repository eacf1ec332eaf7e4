"""Two-pass adaptive rendering of a marker scene.

Pipeline: a coarse pass traces one centre ray per pixel through the lens
centre, a refine mask is built from (a) neighbour contrast of at least one
output quantization step and (b) defocus (circle of confusion wider than the
pixel pitch) on the marker footprint, the mask is dilated to cover the blur
support, and masked pixels are re-rendered with up to 2^bit_depth rays using
4D Sobol points (sub-pixel x/y + concentric-mapped lens u/v).  The linear
raster then goes through diffraction convolution, Rec. 709 gamma and
quantization.

Determinism: sample indices are a pure function of the pixel, worker threads
write disjoint slices, so output is byte-identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import _kernels, optics, sampling
from .camera import (
    UNDISTORT_MAX_ITER,
    UNDISTORT_TOL,
    CameraRig,
    camera_hash,
    undistort,
)
from .errors import ConfigurationError, ConvergenceError
from .marker import MarkerSpec
from .pose import Pose6D, pose_to_transform

MAX_PLANE_TILT_DEG = 89.9


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ConfigurationError("ray direction must be normalized")


@dataclass(frozen=True)
class Scene:
    rig: CameraRig
    marker: MarkerSpec
    pose: Pose6D
    ambient: float = 0.5

    def __post_init__(self) -> None:
        rot, _ = pose_to_transform(self.pose)
        # angle between the plane normal and the optical axis
        tilt = np.rad2deg(np.arccos(np.clip(abs(rot[2, 2]), 0.0, 1.0)))
        if tilt > MAX_PLANE_TILT_DEG:
            raise ConfigurationError(f"marker plane is {tilt:.2f} deg from frontal: edge-on")
        if not 0.0 <= self.ambient <= 1.0:
            raise ConfigurationError("ambient level must lie in [0, 1]")


def scene_hash(scene: Scene) -> str:
    payload = json.dumps(
        {
            "camera": camera_hash(scene.rig),
            "bitmap": hashlib.sha256(
                np.ascontiguousarray(scene.marker.bitmap).tobytes()
            ).hexdigest()[:16],
            "side_mm": scene.marker.side_mm,
            "marker_bg": scene.marker.background_color,
            "pose": dataclasses.astuple(scene.pose),
            "ambient": scene.ambient,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RenderedImage:
    """Quantized raster plus provenance metadata."""

    pixels: np.ndarray = field(repr=False)
    bit_depth: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        levels = (1 << self.bit_depth) - 1
        if self.pixels.min() < 0 or self.pixels.max() > levels:
            raise ConfigurationError("pixel values exceed the bit depth")


# ---------------------------------------------------------------------------
# Kernel plumbing
# ---------------------------------------------------------------------------


def _cam_params(rig: CameraRig) -> tuple:
    # kernels take the distortion vector in the internal order
    # k1..k6, p1, p2, s1..s4 (not the calibration-file order)
    dist = np.array(
        rig.distortion.radial + rig.distortion.tangential + rig.distortion.prism,
        dtype=np.float64,
    )
    cx, cy = rig.lens.principal_point_px
    return (
        rig.focal_px,
        cx,
        cy,
        dist,
        UNDISTORT_TOL,
        UNDISTORT_MAX_ITER,
        rig.lens.focus_distance_mm,
    )


def _geom_params(scene: Scene) -> tuple:
    rot, trans = pose_to_transform(scene.pose)
    bitmap = np.ascontiguousarray(scene.marker.bitmap, dtype=np.float64)
    nrows, ncols = bitmap.shape
    half_w = scene.marker.side_mm / 2.0
    half_h = scene.marker.height_mm / 2.0
    tex_sx = ncols / scene.marker.side_mm
    tex_sy = nrows / scene.marker.height_mm
    return (
        rot,
        trans,
        bitmap,
        half_w,
        half_h,
        tex_sx,
        tex_sy,
        scene.marker.background_color,
        scene.ambient,
    )


def _run_chunked(fn, total: int, workers: int, chunk_args) -> int:
    """Split [0, total) into per-worker chunks; returns summed return values."""
    if total == 0:
        return 0
    workers = max(1, min(workers, total))
    bounds = np.linspace(0, total, workers + 1).astype(int)
    jobs = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if len(jobs) == 1:
        return fn(*jobs[0], *chunk_args)
    with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
        futs = [pool.submit(fn, lo, hi, *chunk_args) for lo, hi in jobs]
        return sum(f.result() for f in futs)


# ---------------------------------------------------------------------------
# Reference single-ray path (readable counterpart of the kernels)
# ---------------------------------------------------------------------------


def generate_ray(
    pixel: tuple[int, int],
    subpixel: tuple[float, float],
    lens_uv: tuple[float, float],
    scene: Scene,
) -> Ray:
    """Build one sensor-to-scene ray.

    The sensor position is undistorted to ideal normalized coordinates, the
    in-focus point is taken at depth z_f along the ideal pinhole direction,
    the origin is the concentric-mapped lens point, and the direction runs
    from origin to focus point (rays through the lens centre are undeviated).
    """
    rig = scene.rig
    px, py = pixel
    w, h = rig.sensor.resolution_px
    if not (0 <= px < w and 0 <= py < h):
        raise ConfigurationError(f"pixel {pixel} outside the {w}x{h} sensor")
    cx, cy = rig.lens.principal_point_px
    u_d = (px + subpixel[0] - cx) / rig.focal_px
    v_d = (py + subpixel[1] - cy) / rig.focal_px
    u, v = undistort(u_d, v_d, rig.distortion)
    z_f = rig.lens.focus_distance_mm
    focus = np.array([u * z_f, v * z_f, z_f])
    lx, ly = sampling.concentric_disk_map(*lens_uv)
    pupil_radius = rig.lens.pupil_diameter_mm / 2.0
    origin = np.array([lx * pupil_radius, ly * pupil_radius, 0.0])
    direction = focus - origin
    direction = direction / np.linalg.norm(direction)
    return Ray(origin=origin, direction=direction)


def intersect_marker(ray: Ray, scene: Scene):
    """Intersect one ray with the marker plane.

    Returns (value, hit_point or None, inside_bitmap).  A plane hit outside
    the bitmap footprint shows the marker background; a miss (parallel ray
    or hit behind the lens) shows the scene ambient level.
    """
    rot, trans = pose_to_transform(scene.pose)
    normal = rot[:, 2]
    denom = float(normal @ ray.direction)
    if abs(denom) < 1e-15:
        return scene.ambient, None, False
    s = float(normal @ (trans - ray.origin)) / denom
    if s <= 0.0:
        return scene.ambient, None, False
    hit = ray.origin + s * ray.direction
    local = rot.T @ (hit - trans)
    half_w = scene.marker.side_mm / 2.0
    half_h = scene.marker.height_mm / 2.0
    if abs(local[0]) <= half_w and abs(local[1]) <= half_h:
        nrows, ncols = scene.marker.bitmap.shape
        col = min(int((local[0] + half_w) / scene.marker.side_mm * ncols), ncols - 1)
        row = min(int((local[1] + half_h) / scene.marker.height_mm * nrows), nrows - 1)
        return float(scene.marker.bitmap[row, col]), hit, True
    return scene.marker.background_color, hit, False


# ---------------------------------------------------------------------------
# Passes
# ---------------------------------------------------------------------------


def _disk_structure(radius: int) -> np.ndarray:
    g = np.arange(-radius, radius + 1)
    xx, yy = np.meshgrid(g, g)
    return xx * xx + yy * yy <= radius * radius


def render_coarse(
    scene: Scene, workers: int = 1, backend=None
) -> tuple[np.ndarray, np.ndarray]:
    """Coarse pass: one centre ray per pixel; returns (float image, refine mask)."""
    image, mask, _, _ = _coarse_with_aux(scene, workers, backend or _kernels)
    return image, mask


def _coarse_with_aux(scene: Scene, workers: int, backend):
    rig = scene.rig
    w, h = rig.sensor.resolution_px
    cam = _cam_params(rig)
    geom = _geom_params(scene)
    image = np.empty((h, w), dtype=np.float64)
    depth = np.empty((h, w), dtype=np.float64)
    inbm = np.empty((h, w), dtype=np.uint8)

    def run_rows(y0, y1, *args):
        return backend.coarse_trace(y0, y1, w, cam, geom, image, depth, inbm)

    nonconv = _run_chunked(run_rows, h, workers, ())
    if nonconv:
        raise ConvergenceError(f"undistort failed to converge for {nonconv} coarse rays")

    mask = _refine_mask(scene, image, depth, inbm.astype(bool))
    return image, mask, depth, inbm


def _refine_mask(
    scene: Scene, image: np.ndarray, depth: np.ndarray, inbm: np.ndarray
) -> np.ndarray:
    rig = scene.rig
    levels = rig.sensor.levels
    step = 1.0 / (levels - 1)
    pitch_mm = rig.sensor.pixel_pitch_mm

    encoded = optics.gamma_rec709(image)
    edge = np.zeros(image.shape, dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            shifted = np.roll(encoded, (dy, dx), axis=(0, 1))
            diff = np.abs(encoded - shifted)
            # roll wraps around; ignore the wrapped border rows/columns
            if dy == 1:
                diff[0, :] = 0.0
            elif dy == -1:
                diff[-1, :] = 0.0
            if dx == 1:
                diff[:, 0] = 0.0
            elif dx == -1:
                diff[:, -1] = 0.0
            edge |= diff >= step

    with np.errstate(invalid="ignore"):
        coc = np.where(
            np.isfinite(depth),
            _coc_vector(depth, rig),
            0.0,
        )
    defocus = inbm & (coc > pitch_mm)
    base = edge | defocus
    if not base.any():
        return base

    # dilate each masked pixel by 1 + ceil(CoC/pitch) pixels of blur support
    radius = np.ones(image.shape, dtype=np.int64)
    radius += np.ceil(coc / pitch_mm).astype(np.int64)
    mask = np.zeros(image.shape, dtype=bool)
    for r in np.unique(radius[base]):
        sel = base & (radius == r)
        mask |= ndimage.binary_dilation(sel, structure=_disk_structure(int(r)))
    return mask


def _coc_vector(z: np.ndarray, rig: CameraRig) -> np.ndarray:
    f = rig.lens.focal_length_mm
    z_f = rig.lens.focus_distance_mm
    d = rig.lens.pupil_diameter_mm
    den = (z_f - f) if rig.coc_classical else (f + z_f)
    safe = np.where(np.isfinite(z) & (z > 0), z, 1.0)
    return np.abs(d * f * (safe - z_f) / (safe * den))


def refine_sample_count(rig: CameraRig, spp_max: int | None) -> int:
    n = rig.sensor.levels
    if spp_max is not None:
        if spp_max < 1:
            raise ConfigurationError("spp_max must be at least 1")
        n = min(spp_max, n)
    return n


def render_linear(
    scene: Scene,
    spp_max: int | None = None,
    workers: int = 1,
    backend_name: str | None = None,
) -> tuple[np.ndarray, dict]:
    """Trace the scene to a linear radiance raster (before diffraction/gamma).

    Returns (float image, stats) where stats records the refine mask, sample
    counts and backend used.
    """
    backend = _kernels.get_backend(backend_name)
    image, mask, _, _ = _coarse_with_aux(scene, workers, backend)

    n_samples = refine_sample_count(scene.rig, spp_max)
    ys, xs = np.nonzero(mask)
    stats = {
        "backend": backend.BACKEND,
        "coarse_rays": image.size,
        "refined_pixels": int(xs.size),
        "samples_per_refined_pixel": int(n_samples),
        "workers": int(workers),
    }
    if xs.size == 0:
        return image, stats

    pts = sampling.sobol_points(n_samples, 4)
    sub = np.ascontiguousarray(pts[:, :2])
    lens_x, lens_y = sampling.concentric_disk_map(pts[:, 2], pts[:, 3])
    pupil_radius = scene.rig.lens.pupil_diameter_mm / 2.0
    lens = np.ascontiguousarray(
        np.stack([lens_x * pupil_radius, lens_y * pupil_radius], axis=1)
    )

    cam = _cam_params(scene.rig)
    geom = _geom_params(scene)
    xs64 = np.ascontiguousarray(xs.astype(np.int64))
    ys64 = np.ascontiguousarray(ys.astype(np.int64))
    values = np.empty(xs.size, dtype=np.float64)

    def run_chunk(lo, hi, *args):
        return backend.refine_trace(
            xs64[lo:hi], ys64[lo:hi], sub, lens, cam, geom, values[lo:hi]
        )

    nonconv = _run_chunked(run_chunk, xs.size, workers, ())
    if nonconv:
        raise ConvergenceError(f"undistort failed to converge for {nonconv} refine rays")

    image = image.copy()
    image[ys, xs] = values
    return image, stats


def render(
    scene: Scene,
    spp_max: int | None = None,
    workers: int = 1,
    backend_name: str | None = None,
) -> RenderedImage:
    """Full pipeline: trace, diffraction convolution, gamma, quantization."""
    linear, stats = render_linear(scene, spp_max, workers, backend_name)
    kernel = optics.build_kernel(scene.rig)
    blurred = optics.convolve(linear, kernel)
    encoded = optics.gamma_rec709(blurred)
    pixels = optics.quantize(encoded, scene.rig.sensor.bit_depth)
    meta = {
        "scene": scene_hash(scene),
        "camera": camera_hash(scene.rig),
        "pose": dataclasses.asdict(scene.pose),
        "diffraction_kernel_taps": kernel.taps.shape[0],
        **stats,
    }
    return RenderedImage(pixels=pixels, bit_depth=scene.rig.sensor.bit_depth, metadata=meta)
