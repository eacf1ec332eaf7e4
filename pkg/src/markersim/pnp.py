"""Planar pose estimation from 2D-3D correspondences.

Homography estimation (normalized DLT) on undistorted points, decomposition
into the two planar-ambiguity pose candidates, then Gauss-Newton refinement
of both on the reprojection residual.  The candidate with lower error wins;
the error gap between the candidates is reported as the ambiguity margin so
near-ambiguous detections can be analyzed downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraRig, undistort
from .errors import DomainError
from .pose import Pose6D, pose_from_transform, rodrigues, rodrigues_inverse

GN_MAX_ITER = 50
GN_STEP_TOL = 1e-14


@dataclass(frozen=True)
class PnPResult:
    pose: Pose6D
    reproj_rms_px: float
    ambiguity_margin_px: float


def _normalize_points(pts: np.ndarray):
    mean = pts.mean(axis=0)
    scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - mean, axis=1)), 1e-12)
    T = np.array([[scale, 0, -scale * mean[0]], [0, scale, -scale * mean[1]], [0, 0, 1]])
    hom = np.column_stack([pts, np.ones(len(pts))])
    return (T @ hom.T).T, T


def homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Homography with src (N,2) -> dst (N,2), Hartley-normalized DLT."""
    if len(src) < 4 or len(dst) != len(src):
        raise DomainError("homography needs at least 4 correspondences")
    s, Ts = _normalize_points(np.asarray(src, dtype=np.float64))
    d, Td = _normalize_points(np.asarray(dst, dtype=np.float64))
    rows = []
    for (x, y, _), (u, v, _) in zip(s, d):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    H = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ H @ Ts
    return H / H[2, 2]


def _pose_from_homography(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Decompose an object-plane-to-ideal-image homography into (R, t)."""
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    r1 = lam * h1
    r2 = lam * h2
    t = lam * h3
    if t[2] < 0:  # object must sit in front of the camera
        r1, r2, t = -r1, -r2, -t
    r3 = np.cross(r1, r2)
    R = np.column_stack([r1, r2, r3])
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    if np.linalg.det(R) < 0:
        u[:, 2] *= -1
        R = u @ vt
    return R, t


def _mirror_candidate(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Second planar-ambiguity pose: plane normal reflected about the view ray."""
    n = R[:, 2]
    v = t / np.linalg.norm(t)
    n2 = 2.0 * float(n @ v) * v - n
    axis = np.cross(n, n2)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        return R
    axis = axis / s
    angle = float(np.arctan2(s, np.clip(n @ n2, -1.0, 1.0)))
    return rodrigues(axis * angle) @ R


def _residuals(rvec, tvec, obj_xyz, ideal_uv):
    R = rodrigues(rvec)
    p = obj_xyz @ R.T + tvec
    if np.any(p[:, 2] <= 1e-9):
        return None
    proj = p[:, :2] / p[:, 2:3]
    return (proj - ideal_uv).ravel()


def _gauss_newton(rvec, tvec, obj_xyz, ideal_uv):
    params = np.concatenate([rvec, tvec])
    res = _residuals(params[:3], params[3:], obj_xyz, ideal_uv)
    if res is None:
        return None, np.inf
    cost = float(res @ res)
    lam = 1e-8
    for _ in range(GN_MAX_ITER):
        jac = np.empty((res.size, 6))
        for j in range(6):
            h = 1e-7 * max(1.0, abs(params[j]))
            up = params.copy()
            dn = params.copy()
            up[j] += h
            dn[j] -= h
            r_up = _residuals(up[:3], up[3:], obj_xyz, ideal_uv)
            r_dn = _residuals(dn[:3], dn[3:], obj_xyz, ideal_uv)
            if r_up is None or r_dn is None:
                return params, cost
            jac[:, j] = (r_up - r_dn) / (2.0 * h)
        jtj = jac.T @ jac
        jtr = jac.T @ res
        step = None
        for _ in range(8):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj) + 1e-12), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = params + step
            r_try = _residuals(trial[:3], trial[3:], obj_xyz, ideal_uv)
            if r_try is not None and float(r_try @ r_try) < cost:
                params = trial
                res = r_try
                cost = float(r_try @ r_try)
                lam = max(lam * 0.1, 1e-12)
                break
            lam *= 10.0
        else:
            break
        if np.max(np.abs(step)) < GN_STEP_TOL:
            break
    return params, cost


def planar_pnp(corners_px: np.ndarray, object_xy_mm: np.ndarray, rig: CameraRig) -> PnPResult:
    """Pose of a planar object from >= 4 image-point correspondences.

    ``object_xy_mm`` are marker-frame coordinates on the z = 0 plane, in the
    same order as ``corners_px`` (continuous pixel coordinates, distorted).
    """
    corners_px = np.asarray(corners_px, dtype=np.float64)
    object_xy = np.asarray(object_xy_mm, dtype=np.float64)
    if corners_px.shape[0] < 4:
        raise DomainError("planar pose needs at least 4 correspondences")
    if corners_px.shape != (object_xy.shape[0], 2) or object_xy.shape[1] != 2:
        raise DomainError("correspondence arrays must both be (N, 2)")
    spread = np.linalg.svd(object_xy - object_xy.mean(axis=0), compute_uv=False)
    if spread[-1] < 1e-9 * max(spread[0], 1.0):
        raise DomainError("object points are collinear")

    cx, cy = rig.lens.principal_point_px
    u_d = (corners_px[:, 0] - cx) / rig.focal_px
    v_d = (corners_px[:, 1] - cy) / rig.focal_px
    u, v = undistort(u_d, v_d, rig.distortion)
    ideal_uv = np.stack([np.atleast_1d(u), np.atleast_1d(v)], axis=1)

    H = homography_dlt(object_xy, ideal_uv)
    R0, t0 = _pose_from_homography(H)
    obj_xyz = np.column_stack([object_xy, np.zeros(len(object_xy))])

    candidates = []
    for R_init in (R0, _mirror_candidate(R0, t0)):
        params, cost = _gauss_newton(rodrigues_inverse(R_init), t0.copy(), obj_xyz, ideal_uv)
        if params is not None:
            candidates.append((cost, params))
    if not candidates:
        raise DomainError("pose refinement failed from both ambiguity candidates")
    candidates.sort(key=lambda c: c[0])
    best_cost, best = candidates[0]
    n_res = 2 * len(object_xy)
    rms_px = rig.focal_px * float(np.sqrt(best_cost / n_res))
    if len(candidates) > 1:
        margin = rig.focal_px * abs(
            float(np.sqrt(candidates[1][0] / n_res)) - float(np.sqrt(best_cost / n_res))
        )
    else:
        margin = np.inf
    pose = pose_from_transform(rodrigues(best[:3]), best[3:])
    return PnPResult(pose=pose, reproj_rms_px=rms_px, ambiguity_margin_px=margin)
