"""Reference detector for a plain square marker.

Pipeline: adaptive threshold (local mean), connected components, coarse
quadrilateral fit on the component boundary, then corner refinement by
intersecting total-least-squares line fits through sub-pixel edge points.
Each edge point is located as the gradient-magnitude centroid of an
intensity profile sampled along the edge normal, which stays unbiased under
the symmetric defocus/diffraction blur the renderer produces.

Corners are returned in continuous pixel coordinates (array pixel (i, j)
has centre (i + 0.5, j + 0.5)), ordered top-left first, then clockwise.
Interior payload is ignored: pose accuracy is a function of corner
localization only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .camera import CameraRig
from .optics import inverse_gamma_rec709
from .rendering import RenderedImage

MIN_QUAD_SIDE_PX = 12.0


@dataclass(frozen=True)
class DetectorParams:
    window: int = 31           # adaptive threshold window (odd)
    offset: float = 0.08       # threshold margin below the local mean
    min_area_px: int = 64
    profile_halfwidth: float = 6.0
    profile_step: float = 0.5
    edge_trim: float = 0.12    # fraction of each edge skipped near corners
    max_corner_shift: float = 6.0


def detect_square_marker(
    image: RenderedImage | np.ndarray,
    rig: CameraRig,
    params: DetectorParams | None = None,
) -> np.ndarray | None:
    """Locate the marker's four corners; None when no valid quad is found."""
    params = params or DetectorParams()
    if isinstance(image, RenderedImage):
        levels = (1 << image.bit_depth) - 1
        img = image.pixels.astype(np.float64) / levels
    else:
        arr = np.asarray(image)
        levels = (1 << rig.sensor.bit_depth) - 1
        img = arr.astype(np.float64) / levels

    binary = _adaptive_threshold(img, params)
    labels, count = ndimage.label(binary)
    if count == 0:
        return None

    # sub-pixel analysis happens on linear radiance: the gamma curve would
    # otherwise skew blurred edge profiles toward the dark side
    linear = inverse_gamma_rec709(img)
    h, w = img.shape
    order = np.argsort(ndimage.sum_labels(binary, labels, np.arange(1, count + 1)))[::-1]
    for lab in order + 1:
        comp = labels == lab
        if comp.sum() < params.min_area_px:
            continue
        ys, xs = np.nonzero(comp)
        if xs.min() == 0 or ys.min() == 0 or xs.max() == w - 1 or ys.max() == h - 1:
            continue  # touching the border: marker partially out of frame
        quad = _coarse_quad(comp)
        if quad is None:
            continue
        if not _quad_plausible(quad, comp):
            continue
        refined = _refine_quad(linear, quad, params)
        if refined is None:
            continue
        return _order_corners(refined) + 0.5  # index -> continuous pixel coords
    return None


def _adaptive_threshold(img: np.ndarray, params: DetectorParams) -> np.ndarray:
    local_mean = ndimage.uniform_filter(img, size=params.window, mode="nearest")
    binary = img < (local_mean - params.offset)
    return ndimage.binary_fill_holes(binary)


def _coarse_quad(comp: np.ndarray) -> np.ndarray | None:
    boundary = comp & ~ndimage.binary_erosion(comp)
    ys, xs = np.nonzero(boundary)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    if len(pts) < 8:
        return None
    centroid = pts.mean(axis=0)
    p0 = pts[np.argmax(((pts - centroid) ** 2).sum(axis=1))]
    p1 = pts[np.argmax(((pts - p0) ** 2).sum(axis=1))]
    # signed distance to the diagonal p0-p1 splits the remaining corners
    diag = p1 - p0
    normal = np.array([-diag[1], diag[0]])
    nrm = np.linalg.norm(normal)
    if nrm < 1e-9:
        return None
    normal /= nrm
    sd = (pts - p0) @ normal
    if sd.max() <= 0 or sd.min() >= 0:
        return None
    p2 = pts[np.argmax(sd)]
    p3 = pts[np.argmin(sd)]
    quad = np.stack([p0, p2, p1, p3])
    centroid2 = quad.mean(axis=0)
    ang = np.arctan2(quad[:, 1] - centroid2[1], quad[:, 0] - centroid2[0])
    return quad[np.argsort(ang)]


def _quad_area(quad: np.ndarray) -> float:
    area2 = 0.0
    for i in range(4):
        x0, y0 = quad[i]
        x1, y1 = quad[(i + 1) % 4]
        area2 += x0 * y1 - x1 * y0
    return abs(area2) / 2.0


def _quad_plausible(quad: np.ndarray, comp: np.ndarray) -> bool:
    quad_area = _quad_area(quad)
    comp_area = float(comp.sum())
    if quad_area < 0.5 * comp_area or quad_area > 2.0 * comp_area:
        return False
    sides = np.linalg.norm(np.roll(quad, -1, axis=0) - quad, axis=1)
    # size gate on the mean side: strong tilt foreshortens one axis without
    # making the marker undetectable
    return bool(sides.mean() >= MIN_QUAD_SIDE_PX * 0.7)


def _edge_points(
    img: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    params: DetectorParams,
    halfwidth_cap: float,
):
    """Sub-pixel edge points along segment a->b via gradient centroids."""
    side = np.linalg.norm(b - a)
    n_probes = int(np.clip(side * 0.5, 7, 41))
    # blur rounds the corners over ~2.5 px; keep probes clear of that zone
    trim = max(params.edge_trim, min(2.5 / side, 0.3))
    ts = np.linspace(trim, 1.0 - trim, n_probes)
    tangent = (b - a) / side
    normal = np.array([-tangent[1], tangent[0]])
    halfwidth = float(np.clip(min(side * 0.3, halfwidth_cap), 2.0, params.profile_halfwidth))
    ss = np.arange(-halfwidth, halfwidth + 1e-9, params.profile_step)

    base = a[None, :] + ts[:, None] * (b - a)[None, :]          # (P, 2)
    coords = base[:, None, :] + ss[None, :, None] * normal[None, None, :]  # (P, S, 2)
    # map_coordinates indexes (row, col) = (y, x)
    samples = ndimage.map_coordinates(
        img, [coords[..., 1].ravel(), coords[..., 0].ravel()], order=1, mode="nearest"
    ).reshape(len(ts), len(ss))

    grad = np.abs(np.gradient(samples, params.profile_step, axis=1))
    peak = np.argmax(grad, axis=1)
    points = []
    for i in range(len(ts)):
        lo = max(0, peak[i] - 6)
        hi = min(len(ss), peak[i] + 7)
        g = grad[i, lo:hi]
        wsum = g.sum()
        if wsum < 1e-9 or grad[i, peak[i]] < 1e-3:
            continue
        s_star = float((g * ss[lo:hi]).sum() / wsum)
        points.append(base[i] + s_star * normal)
    if len(points) < 4:
        return None
    return np.asarray(points)


def _fit_line(points: np.ndarray):
    """Total-least-squares line; returns (point_on_line, unit_direction)."""
    mean = points.mean(axis=0)
    u, s, vt = np.linalg.svd(points - mean)
    return mean, vt[0]


def _intersect_lines(p1, d1, p2, d2) -> np.ndarray | None:
    # p1 + t1 d1 = p2 + t2 d2
    mat = np.array([[d1[0], -d2[0]], [d1[1], -d2[1]]])
    det = np.linalg.det(mat)
    if abs(det) < 1e-12:
        return None
    t = np.linalg.solve(mat, p2 - p1)
    return p1 + t[0] * d1


def _refine_quad(img: np.ndarray, quad: np.ndarray, params: DetectorParams) -> np.ndarray | None:
    # probes must not reach the opposite edge of strongly foreshortened quads
    perimeter = np.linalg.norm(np.roll(quad, -1, axis=0) - quad, axis=1).sum()
    inradius = 2.0 * _quad_area(quad) / max(perimeter, 1e-9)
    halfwidth_cap = max(2.0, 0.85 * inradius)
    lines = []
    for i in range(4):
        pts = _edge_points(img, quad[i], quad[(i + 1) % 4], params, halfwidth_cap)
        if pts is None:
            return None
        lines.append(_fit_line(pts))
    corners = []
    for i in range(4):
        prev = lines[i - 1]
        cur = lines[i]
        c = _intersect_lines(prev[0], prev[1], cur[0], cur[1])
        if c is None:
            return None
        if np.linalg.norm(c - quad[i]) > params.max_corner_shift:
            return None
        corners.append(c)
    corners = np.asarray(corners)
    sides = np.linalg.norm(np.roll(corners, -1, axis=0) - corners, axis=1)
    if sides.mean() < MIN_QUAD_SIDE_PX:
        return None
    return corners


def _order_corners(corners: np.ndarray) -> np.ndarray:
    """Clockwise in image coordinates (y down), starting at the top-left."""
    centroid = corners.mean(axis=0)
    ang = np.arctan2(corners[:, 1] - centroid[1], corners[:, 0] - centroid[0])
    cw = corners[np.argsort(ang)]
    start = int(np.argmin(cw.sum(axis=1)))
    return np.roll(cw, -start, axis=0)
