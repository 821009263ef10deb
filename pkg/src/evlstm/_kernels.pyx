# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-event loops. Semantics mirror ``evlstm._kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def memory_filter(const cnp.int64_t[::1] t, const cnp.int64_t[::1] x, const cnp.int64_t[::1] y,
                  int width, int height, int dx, int dy, double tau, double theta,
                  bint include_center, bint update_all):
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t i
    cdef int m, k, x0, x1, y0, y1, xi, yi
    cdef cnp.int64_t ti, tm
    cdef double s
    keep_arr = np.zeros(n, dtype=np.uint8)
    score_arr = np.zeros(n, dtype=np.float64)
    last_arr = np.full(width * height, -1, dtype=np.int64)
    cdef cnp.uint8_t[::1] keep = keep_arr
    cdef double[::1] score = score_arr
    cdef cnp.int64_t[::1] last = last_arr
    for i in range(n):
        ti = t[i]
        xi = <int>x[i]
        yi = <int>y[i]
        y0 = yi - dy if yi - dy > 0 else 0
        y1 = yi + dy if yi + dy < height - 1 else height - 1
        x0 = xi - dx if xi - dx > 0 else 0
        x1 = xi + dx if xi + dx < width - 1 else width - 1
        s = 0.0
        for k in range(y0, y1 + 1):
            for m in range(x0, x1 + 1):
                if m == xi and k == yi and not include_center:
                    continue
                tm = last[k * width + m]
                if tm >= 0:
                    s += exp(-(<double>(ti - tm)) / tau)
        score[i] = s
        if s >= theta:
            keep[i] = 1
            last[yi * width + xi] = ti
        elif update_all:
            last[yi * width + xi] = ti
    return keep_arr.view(np.bool_), score_arr


def baseline_filter(const cnp.int64_t[::1] t, const cnp.int64_t[::1] x, const cnp.int64_t[::1] y,
                    int width, int height, int dx, int dy, cnp.int64_t dT):
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t i
    cdef int m, k, x0, x1, y0, y1, xi, yi
    cdef cnp.int64_t ti, tm
    cdef bint ok
    keep_arr = np.zeros(n, dtype=np.uint8)
    last_arr = np.full(width * height, -1, dtype=np.int64)
    cdef cnp.uint8_t[::1] keep = keep_arr
    cdef cnp.int64_t[::1] last = last_arr
    for i in range(n):
        ti = t[i]
        xi = <int>x[i]
        yi = <int>y[i]
        y0 = yi - dy if yi - dy > 0 else 0
        y1 = yi + dy if yi + dy < height - 1 else height - 1
        x0 = xi - dx if xi - dx > 0 else 0
        x1 = xi + dx if xi + dx < width - 1 else width - 1
        ok = False
        for k in range(y0, y1 + 1):
            for m in range(x0, x1 + 1):
                if m == xi and k == yi:
                    continue
                tm = last[k * width + m]
                if tm >= 0 and ti - tm <= dT:
                    ok = True
                    break
            if ok:
                break
        keep[i] = ok
        last[yi * width + xi] = ti
    return keep_arr.view(np.bool_)


def lif_spike_count(const cnp.int64_t[::1] t, const cnp.int64_t[::1] pixel, Py_ssize_t n_pixels,
                    double w, double v_threshold, double leak_tau):
    cdef Py_ssize_t n = t.shape[0]
    cdef Py_ssize_t i, q
    cdef double v
    counts_arr = np.zeros(n_pixels, dtype=np.int64)
    v_arr = np.zeros(n_pixels, dtype=np.float64)
    last_arr = np.full(n_pixels, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double[::1] vm = v_arr
    cdef cnp.int64_t[::1] last = last_arr
    for i in range(n):
        q = pixel[i]
        v = vm[q]
        if last[q] >= 0:
            v = v * exp(-(<double>(t[i] - last[q])) / leak_tau)
        v = v + w
        if v >= v_threshold:
            counts[q] += 1
            v = 0.0
        vm[q] = v
        last[q] = t[i]
    return counts_arr
