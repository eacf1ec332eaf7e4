# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled ray-tracing kernels.

Expression-for-expression mirror of ``pure.py`` (see its module docstring);
compiled with FP contraction off so both backends produce identical doubles.
"""

import numpy as np

cimport cython
from libc.math cimport fabs, floor, sqrt, NAN

BACKEND = "compiled"


cdef inline int _undistort_scalar(
    double uo, double vo, const double* d, double tol, int max_iter,
    double* out_u, double* out_v,
) noexcept nogil:
    """Newton inversion of the distortion polynomial; 1 on convergence."""
    cdef double u = uo
    cdef double v = vo
    cdef double r2, r4, r6, num, den, q, nump, denp, qp, du, dv
    cdef double j00, j01, j10, j11, fx, fy, det, su, sv, step_u, step_v, step
    cdef int it
    for it in range(max_iter):
        r2 = u * u + v * v
        r4 = r2 * r2
        r6 = r4 * r2
        num = 1.0 + d[0] * r2 + d[1] * r4 + d[2] * r6
        den = 1.0 + d[3] * r2 + d[4] * r4 + d[5] * r6
        q = num / den
        nump = d[0] + 2.0 * d[1] * r2 + 3.0 * d[2] * r4
        denp = d[3] + 2.0 * d[4] * r2 + 3.0 * d[5] * r4
        qp = (nump * den - num * denp) / (den * den)
        du = u * q + 2.0 * d[6] * u * v + d[7] * (r2 + 2.0 * u * u) + d[8] * r2 + d[9] * r4
        dv = v * q + d[6] * (r2 + 2.0 * v * v) + 2.0 * d[7] * u * v + d[10] * r2 + d[11] * r4
        j00 = q + 2.0 * u * u * qp + 2.0 * d[6] * v + 6.0 * d[7] * u + 2.0 * u * d[8] + 4.0 * u * r2 * d[9]
        j01 = 2.0 * u * v * qp + 2.0 * d[6] * u + 2.0 * d[7] * v + 2.0 * v * d[8] + 4.0 * v * r2 * d[9]
        j10 = 2.0 * u * v * qp + 2.0 * d[6] * u + 2.0 * d[7] * v + 2.0 * u * d[10] + 4.0 * u * r2 * d[11]
        j11 = q + 2.0 * v * v * qp + 6.0 * d[6] * v + 2.0 * d[7] * u + 2.0 * v * d[10] + 4.0 * v * r2 * d[11]
        fx = du - uo
        fy = dv - vo
        det = j00 * j11 - j01 * j10
        if fabs(det) < 1e-12:
            su = fx
            sv = fy
        else:
            su = (j11 * fx - j01 * fy) / det
            sv = (j00 * fy - j10 * fx) / det
        u = u - su
        v = v - sv
        step_u = fabs(su)
        step_v = fabs(sv)
        step = step_u if step_u > step_v else step_v
        if step < tol:
            out_u[0] = u
            out_v[0] = v
            return 1
    out_u[0] = u
    out_v[0] = v
    return 0


cdef inline double _trace_one(
    double posx, double posy, double ox, double oy,
    double fpx, double cx, double cy, const double* dist, double tol, int max_iter,
    double zf,
    const double* rot, const double* trans,
    const double[:, ::1] bitmap, int nrows, int ncols,
    double half_w, double half_h, double tex_sx, double tex_sy,
    double marker_bg, double ambient,
    double* out_depth, int* out_inside, int* nonconv,
) noexcept nogil:
    cdef double ud = (posx - cx) / fpx
    cdef double vd = (posy - cy) / fpx
    cdef double u, v
    if not _undistort_scalar(ud, vd, dist, tol, max_iter, &u, &v):
        nonconv[0] += 1

    cdef double fx = u * zf
    cdef double fy = v * zf
    cdef double dx = fx - ox
    cdef double dy = fy - oy
    cdef double dz = zf
    cdef double norm = sqrt(dx * dx + dy * dy + dz * dz)
    dx = dx / norm
    dy = dy / norm
    dz = dz / norm

    cdef double n0 = rot[2]   # rot is row-major 3x3: [0,2] -> 2
    cdef double n1 = rot[5]
    cdef double n2 = rot[8]
    cdef double tx = trans[0]
    cdef double ty = trans[1]
    cdef double tz = trans[2]
    cdef double ndotd = n0 * dx + n1 * dy + n2 * dz
    cdef double wx = tx - ox
    cdef double wy = ty - oy
    cdef double wz = tz
    cdef double ndotw = n0 * wx + n1 * wy + n2 * wz

    out_inside[0] = 0
    cdef double s
    if fabs(ndotd) < 1e-15:
        out_depth[0] = NAN
        return ambient
    s = ndotw / ndotd
    if not (s > 0.0):
        out_depth[0] = NAN
        return ambient

    cdef double hx = ox + s * dx
    cdef double hy = oy + s * dy
    cdef double hz = s * dz
    cdef double ex = hx - tx
    cdef double ey = hy - ty
    cdef double ez = hz - tz
    cdef double qx = rot[0] * ex + rot[3] * ey + rot[6] * ez
    cdef double qy = rot[1] * ex + rot[4] * ey + rot[7] * ez
    cdef long ti, tj

    out_depth[0] = hz
    if fabs(qx) <= half_w and fabs(qy) <= half_h:
        out_inside[0] = 1
        # texel indices: clip exact far-edge hits back into range
        ti = <long> floor((qx + half_w) * tex_sx)
        tj = <long> floor((qy + half_h) * tex_sy)
        if ti < 0:
            ti = 0
        if ti > ncols - 1:
            ti = ncols - 1
        if tj < 0:
            tj = 0
        if tj > nrows - 1:
            tj = nrows - 1
        return bitmap[tj, ti]
    return marker_bg


def coarse_trace(
    long y0, long y1, long width,
    tuple cam, tuple geom,
    double[:, ::1] out_img, double[:, ::1] out_depth, unsigned char[:, ::1] out_inbm,
):
    """Centre-ray pass for rows [y0, y1); writes into the full-frame outputs."""
    fpx, cx, cy, dist, tol, max_iter, zf = cam
    rot, trans, bitmap, half_w, half_h, tex_sx, tex_sy, marker_bg, ambient = geom

    cdef double c_fpx = fpx, c_cx = cx, c_cy = cy, c_tol = tol, c_zf = zf
    cdef int c_maxit = max_iter
    cdef double c_hw = half_w, c_hh = half_h, c_tsx = tex_sx, c_tsy = tex_sy
    cdef double c_bg = marker_bg, c_amb = ambient
    cdef double[::1] c_dist = np.ascontiguousarray(dist, dtype=np.float64)
    cdef double[::1] c_rot = np.ascontiguousarray(np.asarray(rot, dtype=np.float64).ravel())
    cdef double[::1] c_trans = np.ascontiguousarray(trans, dtype=np.float64)
    cdef const double[:, ::1] c_bitmap = np.ascontiguousarray(bitmap, dtype=np.float64)
    cdef int nrows = c_bitmap.shape[0]
    cdef int ncols = c_bitmap.shape[1]

    cdef long px, py
    cdef double value, depth
    cdef int inside, nonconv = 0
    with nogil:
        for py in range(y0, y1):
            for px in range(width):
                value = _trace_one(
                    px + 0.5, py + 0.5, 0.0, 0.0,
                    c_fpx, c_cx, c_cy, &c_dist[0], c_tol, c_maxit, c_zf,
                    &c_rot[0], &c_trans[0], c_bitmap, nrows, ncols,
                    c_hw, c_hh, c_tsx, c_tsy, c_bg, c_amb,
                    &depth, &inside, &nonconv,
                )
                out_img[py, px] = value
                out_depth[py, px] = depth
                out_inbm[py, px] = <unsigned char> inside
    return nonconv


def refine_trace(
    long[::1] xs, long[::1] ys,
    double[:, ::1] sub, double[:, ::1] lens,
    tuple cam, tuple geom,
    double[::1] out_vals,
):
    """Average len(sub) rays per masked pixel, accumulating in sample order."""
    fpx, cx, cy, dist, tol, max_iter, zf = cam
    rot, trans, bitmap, half_w, half_h, tex_sx, tex_sy, marker_bg, ambient = geom

    cdef double c_fpx = fpx, c_cx = cx, c_cy = cy, c_tol = tol, c_zf = zf
    cdef int c_maxit = max_iter
    cdef double c_hw = half_w, c_hh = half_h, c_tsx = tex_sx, c_tsy = tex_sy
    cdef double c_bg = marker_bg, c_amb = ambient
    cdef double[::1] c_dist = np.ascontiguousarray(dist, dtype=np.float64)
    cdef double[::1] c_rot = np.ascontiguousarray(np.asarray(rot, dtype=np.float64).ravel())
    cdef double[::1] c_trans = np.ascontiguousarray(trans, dtype=np.float64)
    cdef const double[:, ::1] c_bitmap = np.ascontiguousarray(bitmap, dtype=np.float64)
    cdef int nrows = c_bitmap.shape[0]
    cdef int ncols = c_bitmap.shape[1]

    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t n_samples = sub.shape[0]
    cdef Py_ssize_t i, s
    cdef double acc, value, depth, basex, basey
    cdef int inside, nonconv = 0
    with nogil:
        for i in range(n):
            basex = <double> xs[i]
            basey = <double> ys[i]
            acc = 0.0
            for s in range(n_samples):
                value = _trace_one(
                    basex + sub[s, 0], basey + sub[s, 1], lens[s, 0], lens[s, 1],
                    c_fpx, c_cx, c_cy, &c_dist[0], c_tol, c_maxit, c_zf,
                    &c_rot[0], &c_trans[0], c_bitmap, nrows, ncols,
                    c_hw, c_hh, c_tsx, c_tsy, c_bg, c_amb,
                    &depth, &inside, &nonconv,
                )
                acc += value
            out_vals[i] = acc / n_samples
    return nonconv
