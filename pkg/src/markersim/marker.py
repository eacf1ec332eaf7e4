"""Marker definitions: a textured plane patch with physical dimensions.

The bitmap is authoritative: texel lookup during rendering is
nearest-neighbour, values are linear radiance in [0, 1].  ``side_mm`` is the
physical width (x extent); the height follows from the bitmap aspect ratio
so texels stay square.  The plane outside the bitmap footprint shows
``background_color``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError


@dataclass(frozen=True)
class MarkerSpec:
    bitmap: np.ndarray = field(repr=False)
    side_mm: float
    background_color: float = 0.5

    def __post_init__(self) -> None:
        bm = np.asarray(self.bitmap, dtype=np.float64)
        if bm.ndim != 2 or bm.size == 0:
            raise ConfigurationError("bitmap must be a non-empty 2D array")
        if bm.min() < 0.0 or bm.max() > 1.0:
            raise ConfigurationError("bitmap values must lie in [0, 1]")
        if self.side_mm <= 0:
            raise ConfigurationError("marker side must be positive")
        if not 0.0 <= self.background_color <= 1.0:
            raise ConfigurationError("background color must lie in [0, 1]")
        bm.setflags(write=False)
        object.__setattr__(self, "bitmap", bm)

    @property
    def height_mm(self) -> float:
        rows, cols = self.bitmap.shape
        return self.side_mm * rows / cols

    def corners_mm(self) -> np.ndarray:
        """Footprint corners in the marker frame, top-left first, clockwise.

        Marker-local axes follow the image convention: +x right, +y down,
        so the top-left bitmap texel sits at (-w/2, -h/2).
        """
        w = self.side_mm
        h = self.height_mm
        return np.array(
            [
                [-w / 2, -h / 2],
                [w / 2, -h / 2],
                [w / 2, h / 2],
                [-w / 2, h / 2],
            ],
            dtype=np.float64,
        )


def generate_chessboard(rows: int, cols: int, square_mm: float) -> MarkerSpec:
    """Alternating black/white board; the top-left square is black."""
    if rows < 2 or cols < 2:
        raise ConfigurationError("chessboard needs at least 2x2 squares")
    if square_mm <= 0:
        raise ConfigurationError("square size must be positive")
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    bitmap = ((r + c) % 2).astype(np.float64)
    return MarkerSpec(bitmap=bitmap, side_mm=cols * square_mm)


def generate_square_marker(side_mm: float, texels: int = 16) -> MarkerSpec:
    """Solid black square; the reference target for the built-in detector."""
    if texels < 1:
        raise ConfigurationError("texel count must be positive")
    return MarkerSpec(bitmap=np.zeros((texels, texels)), side_mm=side_mm)


def load_marker(path: str | Path, side_mm: float, background_color: float = 0.5) -> MarkerSpec:
    """Load a bitmap image file as a marker of the given physical width."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return MarkerSpec(bitmap=arr, side_mm=side_mm, background_color=background_color)


def marker_from_spec(spec: str, side_mm: float | None = None) -> MarkerSpec:
    """Parse a marker argument: builtin pattern string or bitmap file path.

    Supported patterns: ``square:<side_mm>``, ``chessboard:<rows>x<cols>:<square_mm>``.
    A plain path requires ``side_mm``.
    """
    if spec.startswith("square:"):
        return generate_square_marker(float(spec.split(":", 1)[1]))
    if spec.startswith("chessboard:"):
        try:
            _, dims, sq = spec.split(":")
            rows, cols = (int(x) for x in dims.lower().split("x"))
        except ValueError as exc:
            raise ConfigurationError(
                f"bad chessboard spec {spec!r}, expected chessboard:RxC:square_mm"
            ) from exc
        return generate_chessboard(rows, cols, float(sq))
    path = Path(spec)
    if not path.exists():
        raise ConfigurationError(f"marker file not found: {path}")
    if side_mm is None:
        raise ConfigurationError("a marker bitmap file needs an explicit side_mm")
    return load_marker(path, side_mm)
