import json
import subprocess
import sys
from pathlib import Path

import cv2
import numpy as np
import pytest

BRIDGE_DIR = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(BRIDGE_DIR))


def write_camera_file(path: Path, *, resolution=(640, 480), pitch_um=8.3,
                      principal=(319.5, 239.5), focus_mm=750.0) -> Path:
    """Camera config in the documented renderer format (written directly)."""
    doc = {
        "f_mm": 4.47,
        "cx_px": principal[0],
        "cy_px": principal[1],
        "f_number": 2.8,
        "focus_mm": focus_mm,
        "dist": [-0.286, 0.057, 0.0, 0.0, 0.112],
        "width": resolution[0],
        "height": resolution[1],
        "pitch_um": pitch_um,
        "bit_depth": 8,
        "wavelength_nm": 650.0,
    }
    path.write_text(json.dumps(doc, indent=2))
    return path


def write_aruco_bitmap(path: Path, marker_id=0, dictionary=cv2.aruco.DICT_4X4_50) -> Path:
    dic = cv2.aruco.getPredefinedDictionary(dictionary)
    bitmap = cv2.aruco.generateImageMarker(dic, marker_id, 6)  # 1 px per module
    cv2.imwrite(str(path), bitmap)
    return path


def render_cli(*args: str) -> None:
    """Drive the renderer through its CLI (the bridge's only contact surface)."""
    result = subprocess.run(
        ["markersim", *args], capture_output=True, text=True, timeout=3600
    )
    if result.returncode != 0:
        raise RuntimeError(f"markersim {' '.join(args)} failed:\n{result.stderr}")


@pytest.fixture(scope="session")
def frontal_set(tmp_path_factory):
    """Ten rendered frontal-ish ArUco poses plus the camera file."""
    root = tmp_path_factory.mktemp("frontal")
    camera = write_camera_file(root / "camera.json")
    bitmap = write_aruco_bitmap(root / "tag.png")
    images = root / "images"
    images.mkdir()
    poses = [
        (0.0, 0.0, 600.0, 0.0, 0.0, 0.0),
        (30.0, 20.0, 650.0, 5.0, -5.0, 10.0),
        (-40.0, -25.0, 700.0, -8.0, 6.0, 30.0),
        (60.0, -40.0, 750.0, 10.0, 10.0, -20.0),
        (-40.0, 40.0, 800.0, -12.0, -9.0, 45.0),
        (90.0, 10.0, 850.0, 15.0, 4.0, 60.0),
        (0.0, -60.0, 900.0, -5.0, 12.0, 90.0),
        (-100.0, 0.0, 950.0, 8.0, -14.0, 120.0),
        (50.0, 55.0, 1000.0, -10.0, 8.0, -90.0),
        (0.0, 0.0, 820.0, 20.0, -20.0, 150.0),
    ]
    for i, pose in enumerate(poses):
        render_cli(
            "render", "--camera", str(camera), "--marker", str(bitmap),
            "--side-mm", "50", f"--pose={','.join(str(v) for v in pose)}",
            "--out", str(images / f"pose_{i:04d}.png"), "--workers", "4",
        )
    return {"camera": camera, "images": images, "poses": poses}
