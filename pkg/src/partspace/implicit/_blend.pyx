# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled blend kernel; see _blend_py for the reference semantics."""
import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite

COMPILED = True


def eval_batch(points, origin, double h, values, node_gradients):
    pts_arr = np.atleast_2d(np.ascontiguousarray(points, dtype=np.float64))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = pts_arr
    cdef cnp.ndarray[cnp.float64_t, ndim=1] org = np.ascontiguousarray(origin, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] val3 = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=4] grd4 = np.ascontiguousarray(node_gradients, dtype=np.float64)

    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t nx = val3.shape[0], ny = val3.shape[1], nz = val3.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vals = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] grads = np.empty((n, 3), dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] support = np.zeros(n, dtype=np.uint8)

    cdef double inv_h = 1.0 / h
    cdef double inv_h2 = inv_h * inv_h
    cdef Py_ssize_t p, di, dj, dk, i0, j0, k0, ii, jj, kk
    cdef double px, py, pz, gx, gy, gz
    cdef double dx, dy, dz, r2, u, w, dwc, vc
    cdef double W, V, taylor
    cdef double numx, numy, numz, sdwx, sdwy, sdwz, swgx, swgy, swgz
    cdef double tdwx_t, tdwy_t, tdwz_t, val

    for p in range(n):
        px = pts[p, 0]; py = pts[p, 1]; pz = pts[p, 2]
        gx = (px - org[0]) * inv_h
        gy = (py - org[1]) * inv_h
        gz = (pz - org[2]) * inv_h
        i0 = <Py_ssize_t>gx if gx >= 0 else <Py_ssize_t>gx - 1
        j0 = <Py_ssize_t>gy if gy >= 0 else <Py_ssize_t>gy - 1
        k0 = <Py_ssize_t>gz if gz >= 0 else <Py_ssize_t>gz - 1
        if i0 < 0: i0 = 0
        if i0 > nx - 2: i0 = nx - 2
        if j0 < 0: j0 = 0
        if j0 > ny - 2: j0 = ny - 2
        if k0 < 0: k0 = 0
        if k0 > nz - 2: k0 = nz - 2

        W = 0.0; V = 0.0
        sdwx = 0.0; sdwy = 0.0; sdwz = 0.0
        tdwx_t = 0.0; tdwy_t = 0.0; tdwz_t = 0.0
        swgx = 0.0; swgy = 0.0; swgz = 0.0
        for di in range(2):
            ii = i0 + di
            for dj in range(2):
                jj = j0 + dj
                for dk in range(2):
                    kk = k0 + dk
                    vc = val3[ii, jj, kk]
                    if not isfinite(vc):
                        continue
                    dx = px - (org[0] + h * ii)
                    dy = py - (org[1] + h * jj)
                    dz = pz - (org[2] + h * kk)
                    r2 = dx * dx + dy * dy + dz * dz
                    u = 1.0 - r2 * inv_h2
                    if u <= 0.0:
                        continue
                    w = u * u * u
                    dwc = -6.0 * u * u * inv_h2   # times diff gives grad of w
                    taylor = vc + grd4[ii, jj, kk, 0] * dx \
                                + grd4[ii, jj, kk, 1] * dy \
                                + grd4[ii, jj, kk, 2] * dz
                    W += w
                    V += w * taylor
                    sdwx += dwc * dx; sdwy += dwc * dy; sdwz += dwc * dz
                    tdwx_t += dwc * dx * taylor
                    tdwy_t += dwc * dy * taylor
                    tdwz_t += dwc * dz * taylor
                    swgx += w * grd4[ii, jj, kk, 0]
                    swgy += w * grd4[ii, jj, kk, 1]
                    swgz += w * grd4[ii, jj, kk, 2]
        if W > 1e-300:
            val = V / W
            vals[p] = val
            grads[p, 0] = (tdwx_t + swgx - val * sdwx) / W
            grads[p, 1] = (tdwy_t + swgy - val * sdwy) / W
            grads[p, 2] = (tdwz_t + swgz - val * sdwz) / W
            support[p] = 1
        else:
            vals[p] = np.nan
            grads[p, 0] = np.nan; grads[p, 1] = np.nan; grads[p, 2] = np.nan
    return vals, grads, support.view(np.bool_)
