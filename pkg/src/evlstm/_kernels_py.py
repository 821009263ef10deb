"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``.

Same loop order and floating point operations, so results match the
compiled build bit for bit.
"""
from math import exp

import numpy as np


def memory_filter(t, x, y, width, height, dx, dy, tau, theta, include_center, update_all):
    n = len(t)
    keep = np.zeros(n, dtype=bool)
    score = np.zeros(n, dtype=np.float64)
    last = [-1] * (width * height)
    t = t.tolist()
    x = x.tolist()
    y = y.tolist()
    for i in range(n):
        ti, xi, yi = t[i], x[i], y[i]
        s = 0.0
        for k in range(max(yi - dy, 0), min(yi + dy, height - 1) + 1):
            row = k * width
            for m in range(max(xi - dx, 0), min(xi + dx, width - 1) + 1):
                if m == xi and k == yi and not include_center:
                    continue
                tm = last[row + m]
                if tm >= 0:
                    s += exp(-float(ti - tm) / tau)
        score[i] = s
        if s >= theta:
            keep[i] = True
            last[yi * width + xi] = ti
        elif update_all:
            last[yi * width + xi] = ti
    return keep, score


def baseline_filter(t, x, y, width, height, dx, dy, dT):
    n = len(t)
    keep = np.zeros(n, dtype=bool)
    last = [-1] * (width * height)
    t = t.tolist()
    x = x.tolist()
    y = y.tolist()
    for i in range(n):
        ti, xi, yi = t[i], x[i], y[i]
        ok = False
        for k in range(max(yi - dy, 0), min(yi + dy, height - 1) + 1):
            row = k * width
            for m in range(max(xi - dx, 0), min(xi + dx, width - 1) + 1):
                if m == xi and k == yi:
                    continue
                tm = last[row + m]
                if tm >= 0 and ti - tm <= dT:
                    ok = True
                    break
            if ok:
                break
        keep[i] = ok
        last[yi * width + xi] = ti
    return keep


def lif_spike_count(t, pixel, n_pixels, w, v_threshold, leak_tau):
    counts = np.zeros(n_pixels, dtype=np.int64)
    vm = [0.0] * n_pixels
    last = [-1] * n_pixels
    for ti, q in zip(t.tolist(), pixel.tolist()):
        v = vm[q]
        if last[q] >= 0:
            v = v * exp(-float(ti - last[q]) / leak_tau)
        v = v + w
        if v >= v_threshold:
            counts[q] += 1
            v = 0.0
        vm[q] = v
        last[q] = ti
    return counts
