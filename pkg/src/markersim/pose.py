"""Marker pose representation and rigid-transform helpers.

A pose is the marker's rigid placement in the camera frame: translation in
millimetres plus intrinsic Euler angles in degrees.  The rotation applied to
marker-local coordinates is R = Rz(yaw) @ Ry(pitch) @ Rx(roll); extraction
uses the matching ZYX convention with pitch in [-90, 90] and prefers
roll = 0 at the gimbal singularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def wrap_angle_deg(angle):
    """Wrap degrees into (-180, 180]."""
    a = np.asarray(angle, dtype=np.float64)
    wrapped = -(np.mod(-a + 180.0, 360.0) - 180.0)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


@dataclass(frozen=True)
class Pose6D:
    """Marker pose: translation (mm) and roll/pitch/yaw (deg), camera frame."""

    x: float
    y: float
    z: float
    roll: float
    pitch: float
    yaw: float

    def __post_init__(self) -> None:
        if self.z <= 0:
            raise DomainError("marker must be in front of the camera (z > 0)")

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw], dtype=np.float64)

    def canonicalized(self) -> "Pose6D":
        """Round-trip through the rotation matrix to canonical angle ranges."""
        r, p, y = euler_from_matrix(rotation_matrix(self))
        return Pose6D(self.x, self.y, self.z, r, p, y)


def _rx(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix(pose: Pose6D) -> np.ndarray:
    """Rotation taking marker-local coordinates into the camera frame."""
    roll, pitch, yaw = np.deg2rad(pose.angles)
    return _rz(yaw) @ _ry(pitch) @ _rx(roll)


def pose_to_transform(pose: Pose6D) -> tuple[np.ndarray, np.ndarray]:
    """(R, t) with p_camera = R @ p_marker + t."""
    return rotation_matrix(pose), pose.translation


def euler_from_matrix(r: np.ndarray) -> tuple[float, float, float]:
    """Extract (roll, pitch, yaw) in degrees from a ZYX-composed rotation."""
    pitch = np.arcsin(np.clip(-r[2, 0], -1.0, 1.0))
    if abs(abs(r[2, 0]) - 1.0) < 1e-12:
        # gimbal: yaw and roll are coupled, report roll = 0
        roll = 0.0
        yaw = np.arctan2(-r[0, 1], r[1, 1])
    else:
        roll = np.arctan2(r[2, 1], r[2, 2])
        yaw = np.arctan2(r[1, 0], r[0, 0])
    return float(np.rad2deg(roll)), float(np.rad2deg(pitch)), float(np.rad2deg(yaw))


def pose_from_transform(r: np.ndarray, t: np.ndarray) -> Pose6D:
    roll, pitch, yaw = euler_from_matrix(r)
    return Pose6D(float(t[0]), float(t[1]), float(t[2]), roll, pitch, yaw)


def rodrigues(rvec: np.ndarray) -> np.ndarray:
    """Axis-angle vector to rotation matrix."""
    theta = float(np.linalg.norm(rvec))
    if theta < 1e-14:
        return np.eye(3)
    k = rvec / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1.0 - np.cos(theta)) * (kx @ kx)


def rodrigues_inverse(r: np.ndarray) -> np.ndarray:
    """Rotation matrix to axis-angle vector."""
    cos_theta = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta < 1e-12:
        return np.zeros(3)
    if abs(np.pi - theta) < 1e-6:
        # near 180 deg the off-diagonal difference loses the axis; use the
        # symmetric part instead
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(m), 0.0))
        # fix signs from the largest component
        i = int(np.argmax(axis))
        axis[(i + 1) % 3] = m[i, (i + 1) % 3] / axis[i] if axis[i] > 0 else axis[(i + 1) % 3]
        axis[(i + 2) % 3] = m[i, (i + 2) % 3] / axis[i] if axis[i] > 0 else axis[(i + 2) % 3]
        axis /= np.linalg.norm(axis)
        return theta * axis
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return theta / (2.0 * np.sin(theta)) * axis


def rotation_angle_deg(r_a: np.ndarray, r_b: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees."""
    cos_theta = np.clip((np.trace(r_a @ r_b.T) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.rad2deg(np.arccos(cos_theta)))
