"""Pure-numpy ray-tracing kernels (fallback backend).

These functions define the canonical operation order; the compiled backend
mirrors them expression for expression so both produce the same doubles
(the extension is built with FP contraction disabled).  Keep any change in
lock-step with ``_core.pyx``.

Distortion coefficients arrive as a 12-vector in the internal order
(k1..k6, p1, p2, s1..s4).  Lens points arrive pre-mapped to millimetres on
the aperture disk, so no trigonometry happens inside the kernels.
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def _distort_jacobian(u, v, dist):
    """Distorted coordinates plus the 2x2 Jacobian w.r.t. the ideal ones."""
    k1, k2, k3, k4, k5, k6, p1, p2, s1, s2, s3, s4 = dist
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


def _undistort(uo, vo, dist, tol, max_iter):
    """Newton inversion with per-element freezing.

    Returns (u, v, nonconverged_count).  Elements stop updating the sweep
    their step drops below ``tol``, so results do not depend on batching.
    """
    u = uo.copy()
    v = vo.copy()
    active = np.ones(u.shape, dtype=bool)
    for _ in range(max_iter):
        du, dv, j00, j01, j10, j11 = _distort_jacobian(u[active], v[active], dist)
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
        done = step < tol
        active[active.nonzero()[0][done]] = False
        if not active.any():
            break
    return u, v, int(active.sum())


def _trace(posx, posy, ox, oy, cam, geom):
    """Trace rays from lens points (ox, oy, 0) through sensor positions.

    Returns (value, depth, in_bitmap); depth is NaN for rays missing the
    plane (parallel or hit behind the lens).
    """
    fpx, cx, cy, dist, tol, max_iter, zf = cam
    rot, trans, bitmap, half_w, half_h, tex_sx, tex_sy, marker_bg, ambient = geom
    nrows, ncols = bitmap.shape

    ud = (posx - cx) / fpx
    vd = (posy - cy) / fpx
    u, v, nonconv = _undistort(ud, vd, dist, tol, max_iter)

    fx = u * zf
    fy = v * zf
    dx = fx - ox
    dy = fy - oy
    dz = zf
    norm = np.sqrt(dx * dx + dy * dy + dz * dz)
    dx = dx / norm
    dy = dy / norm
    dz = dz / norm

    n0, n1, n2 = rot[0, 2], rot[1, 2], rot[2, 2]
    tx, ty, tz = trans
    ndotd = n0 * dx + n1 * dy + n2 * dz
    wx = tx - ox
    wy = ty - oy
    wz = tz
    ndotw = n0 * wx + n1 * wy + n2 * wz

    with np.errstate(divide="ignore", invalid="ignore"):
        s = ndotw / ndotd
    hit = (np.abs(ndotd) >= 1e-15) & (s > 0.0)
    s = np.where(hit, s, 1.0)  # keep downstream arithmetic finite for misses

    hx = ox + s * dx
    hy = oy + s * dy
    hz = s * dz
    ex = hx - tx
    ey = hy - ty
    ez = hz - tz
    qx = rot[0, 0] * ex + rot[1, 0] * ey + rot[2, 0] * ez
    qy = rot[0, 1] * ex + rot[1, 1] * ey + rot[2, 1] * ez

    inside = hit & (np.abs(qx) <= half_w) & (np.abs(qy) <= half_h)
    txi = (qx + half_w) * tex_sx
    tyi = (qy + half_h) * tex_sy
    col = np.clip(np.floor(txi).astype(np.int64), 0, ncols - 1)
    row = np.clip(np.floor(tyi).astype(np.int64), 0, nrows - 1)

    value = np.where(hit, marker_bg, ambient)
    value = np.where(inside, bitmap[row, col], value)
    depth = np.where(hit, hz, np.nan)
    return value, depth, inside, nonconv


def coarse_trace(y0, y1, width, cam, geom, out_img, out_depth, out_inbm):
    """Centre-ray pass for rows [y0, y1): one pinhole ray per pixel."""
    ys, xs = np.mgrid[y0:y1, 0:width]
    posx = xs.ravel().astype(np.float64) + 0.5
    posy = ys.ravel().astype(np.float64) + 0.5
    value, depth, inside, nonconv = _trace(posx, posy, 0.0, 0.0, cam, geom)
    shape = (y1 - y0, width)
    out_img[y0:y1, :] = value.reshape(shape)
    out_depth[y0:y1, :] = depth.reshape(shape)
    out_inbm[y0:y1, :] = inside.reshape(shape)
    return nonconv


def refine_trace(xs, ys, sub, lens, cam, geom, out_vals):
    """Average ``len(sub)`` rays per masked pixel.

    Samples accumulate in index order per pixel, matching the compiled
    backend's per-pixel loop.
    """
    n = xs.shape[0]
    n_samples = sub.shape[0]
    acc = np.zeros(n, dtype=np.float64)
    basex = xs.astype(np.float64)
    basey = ys.astype(np.float64)
    nonconv = 0
    for s in range(n_samples):
        posx = basex + sub[s, 0]
        posy = basey + sub[s, 1]
        value, _, _, nc = _trace(posx, posy, lens[s, 0], lens[s, 1], cam, geom)
        acc += value
        nonconv += nc
    out_vals[:] = acc / n_samples
    return nonconv
