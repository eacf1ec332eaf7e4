"""Image file I/O for rendered rasters.

8-bit images are written as plain 8-bit PGM/PNG.  10- and 12-bit images use
a 16-bit container with raw (right-aligned) values, maximum 2^bit_depth - 1.
A JSON sidecar carries the exact pose and render provenance so external
detectors can be scored without re-deriving ground truth.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError


def write_image(path: str | Path, pixels: np.ndarray, bit_depth: int) -> None:
    path = Path(path)
    arr = np.asarray(pixels)
    if arr.max(initial=0) >= (1 << bit_depth):
        raise ValidationError(f"pixel values exceed {bit_depth}-bit range")
    wide = bit_depth > 8
    arr = arr.astype(np.uint16 if wide else np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        _write_pgm(path, arr, wide)
    elif suffix == ".png":
        Image.fromarray(arr).save(path)  # uint8 -> L, uint16 -> I;16
    else:
        raise ValidationError(f"unsupported image format {suffix!r} (use .pgm or .png)")


def read_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return _read_pgm(path)
    with Image.open(path) as img:
        if img.mode in ("I;16", "I"):
            return np.asarray(img, dtype=np.uint16)
        return np.asarray(img.convert("L"), dtype=np.uint8)


def _write_pgm(path: Path, arr: np.ndarray, wide: bool) -> None:
    h, w = arr.shape
    maxval = 65535 if wide else 255
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    data = arr.astype(">u2").tobytes() if wide else arr.tobytes()
    path.write_bytes(header + data)


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if not raw.startswith(b"P5"):
        raise ValidationError(f"{path} is not a binary PGM file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    dtype = ">u2" if maxval > 255 else np.uint8
    arr = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return arr.astype(np.uint16) if maxval > 255 else arr.copy()


def sidecar_path(image_path: str | Path) -> Path:
    # appended suffix (image.png -> image.png.json) so sidecars can never
    # collide with other .json inputs sharing the image's stem
    p = Path(image_path)
    return p.with_name(p.name + ".json")


def write_sidecar(image_path: str | Path, payload: dict) -> Path:
    side = sidecar_path(image_path)
    side.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return side


def read_sidecar(image_path: str | Path) -> dict:
    side = sidecar_path(image_path)
    if not side.exists():
        raise ValidationError(f"missing sidecar {side}")
    return json.loads(side.read_text(encoding="utf-8"))
