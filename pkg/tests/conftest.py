import numpy as np
import pytest
from matplotlib.path import Path as PolyPath
from shapely.geometry import Polygon, box

import markersim as ms


@pytest.fixture
def logitech() -> ms.CameraRig:
    return ms.logitech_c270()


@pytest.fixture
def canon() -> ms.CameraRig:
    return ms.canon_rebel_xs()


@pytest.fixture
def square50() -> ms.MarkerSpec:
    return ms.generate_square_marker(50.0)


def distorted_region_vertices(rig, pose, rect_mm, samples_per_edge=6000) -> np.ndarray:
    """Pixel-space outline of a marker-plane rectangle under the full projection.

    ``rect_mm`` is (x0, y0, x1, y1) in the marker frame.  Uses only the
    forward projection (no undistort), so it is independent of the render
    path it is used to check.
    """
    from markersim.pose import pose_to_transform

    x0, y0, x1, y1 = rect_mm
    t = np.linspace(0.0, 1.0, samples_per_edge, endpoint=False)
    xs = np.concatenate(
        [x0 + (x1 - x0) * t, np.full_like(t, x1), x1 - (x1 - x0) * t, np.full_like(t, x0)]
    )
    ys = np.concatenate(
        [np.full_like(t, y0), y0 + (y1 - y0) * t, np.full_like(t, y1), y1 - (y1 - y0) * t]
    )
    rot, trans = pose_to_transform(pose)
    pts3 = np.stack([xs, ys, np.zeros_like(xs)], axis=1) @ rot.T + trans
    return ms.project(pts3, rig)


def region_path(vertices: np.ndarray) -> PolyPath:
    return PolyPath(vertices)


def region_polygon(vertices: np.ndarray) -> Polygon:
    return Polygon(vertices)


def polygon_coverage(poly: Polygon, pixel_x: int, pixel_y: int) -> float:
    """Exact area fraction of pixel [x, x+1) x [y, y+1) inside the polygon."""
    return poly.intersection(box(pixel_x, pixel_y, pixel_x + 1, pixel_y + 1)).area


def border_pixels(poly_vertices: np.ndarray) -> set[tuple[int, int]]:
    """Integer pixels crossed by a dense polygon boundary."""
    out = set()
    for x, y in poly_vertices:
        out.add((int(np.floor(x)), int(np.floor(y))))
    return out
