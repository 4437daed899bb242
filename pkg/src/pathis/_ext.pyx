# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Mirrors ``_fallback`` exactly.

Parallel loops write disjoint outputs (rows of q for splat, pixels for
gather, grid rows for the stencil), so results do not depend on the
thread count.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sqrt, floor

cnp.import_array()

BACKEND = "cython"


def splat(const double[::1] x, const double[:, ::1] sensors, const double[::1] px,
          const double[::1] py, double inv_cdt, Py_ssize_t m_samples, int threads=1):
    cdef Py_ssize_t k = sensors.shape[0], npix = px.shape[0], i, j, m0
    cdef double dx, dy, u, w, xv
    q_arr = np.zeros((k, m_samples))
    cdef double[:, ::1] q = q_arr
    for i in prange(k, nogil=True, num_threads=threads, schedule="static"):
        for j in range(npix):
            xv = x[j]
            dx = px[j] - sensors[i, 0]
            dy = py[j] - sensors[i, 1]
            u = sqrt(dx * dx + dy * dy) * inv_cdt
            m0 = <Py_ssize_t>floor(u)
            if m0 + 1 >= m_samples:
                continue
            w = u - m0
            q[i, m0] += (1.0 - w) * xv
            q[i, m0 + 1] += w * xv
    return q_arr


def gather(const double[:, ::1] z, const double[:, ::1] sensors, const double[::1] px,
           const double[::1] py, double inv_cdt, int threads=1):
    cdef Py_ssize_t k = z.shape[0], m_samples = z.shape[1], npix = px.shape[0], i, j, m0
    cdef double dx, dy, u, w, acc
    x_arr = np.zeros(npix)
    cdef double[::1] x = x_arr
    for j in prange(npix, nogil=True, num_threads=threads, schedule="static"):
        acc = 0.0
        for i in range(k):
            dx = px[j] - sensors[i, 0]
            dy = py[j] - sensors[i, 1]
            u = sqrt(dx * dx + dy * dy) * inv_cdt
            m0 = <Py_ssize_t>floor(u)
            if m0 + 1 >= m_samples:
                continue
            w = u - m0
            acc = acc + ((1.0 - w) * z[i, m0] + w * z[i, m0 + 1])
        x[j] = acc
    return x_arr


cdef inline double _lap(const double[:, ::1] p, Py_ssize_t a, Py_ssize_t b,
                        Py_ssize_t na, Py_ssize_t nb) nogil:
    cdef double s = -4.0 * p[a, b]
    if a > 0:
        s = s + p[a - 1, b]
    if a < na - 1:
        s = s + p[a + 1, b]
    if b > 0:
        s = s + p[a, b - 1]
    if b < nb - 1:
        s = s + p[a, b + 1]
    return s


def laplacian(p):
    cdef double[:, ::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef Py_ssize_t na = pv.shape[0], nb = pv.shape[1], a, b
    out_arr = np.empty((na, nb))
    cdef double[:, ::1] out = out_arr
    for a in range(na):
        for b in range(nb):
            out[a, b] = _lap(pv, a, b, na, nb)
    return out_arr


def leapfrog(p_prev, p_cur, double coef, taper, Py_ssize_t nsteps, rec_nodes,
             src_nodes=None, src_values=None, int threads=1):
    cdef double[:, ::1] prev = np.array(p_prev, dtype=np.float64, order="C")
    cdef double[:, ::1] cur = np.array(p_cur, dtype=np.float64, order="C")
    cdef double[:, ::1] nxt = np.zeros_like(np.asarray(cur))
    cdef const double[:, ::1] tp = np.ascontiguousarray(taper, dtype=np.float64)
    cdef const long long[::1] rec_idx = np.ascontiguousarray(rec_nodes, dtype=np.int64)
    cdef Py_ssize_t na = cur.shape[0], nb = cur.shape[1]
    cdef Py_ssize_t nrec = rec_idx.shape[0], s, a, b, r, nsrc = 0
    cdef const long long[::1] src_idx
    cdef const double[:, ::1] src_val
    cdef double[:, ::1] tmp
    rec_arr = np.zeros((nsteps, nrec))
    cdef double[:, ::1] rec = rec_arr
    cdef bint has_src = src_nodes is not None
    if has_src:
        src_idx = np.ascontiguousarray(src_nodes, dtype=np.int64)
        src_val = np.ascontiguousarray(src_values, dtype=np.float64)
        nsrc = src_idx.shape[0]
    for s in range(nsteps):
        for a in prange(na, nogil=True, num_threads=threads, schedule="static"):
            for b in range(nb):
                nxt[a, b] = (2.0 * cur[a, b] - prev[a, b] + coef * _lap(cur, a, b, na, nb)) * tp[a, b]
        for a in range(na):
            for b in range(nb):
                cur[a, b] = cur[a, b] * tp[a, b]
        if has_src:
            for r in range(nsrc):
                nxt[src_idx[r] // nb, src_idx[r] % nb] = src_val[s, r]
        for r in range(nrec):
            rec[s, r] = nxt[rec_idx[r] // nb, rec_idx[r] % nb]
        tmp = prev
        prev = cur
        cur = nxt
        nxt = tmp
    return rec_arr, np.asarray(prev), np.asarray(cur)
