"""Compiled inner loops over concatenated profiles.

Profiles are passed as one flat array ``values`` with ``offsets`` such that
profile ``s`` is ``values[offsets[s]:offsets[s + 1]]``. Prefix sums of the
centred profiles use ``offsets[s] + s`` as their start (one extra leading 0
per profile).
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _level(k, t, cps):
    # jumps undergone by 1-based time t, in units of delta
    if k == 1:
        return 0.0
    if k == 2:
        return 1.0 if t > cps[0] else 0.0
    if k == 4:
        return 2.0 if t > cps[0] else 0.0
    if t > cps[1]:
        return 2.0
    if t > cps[0]:
        return 1.0
    return 0.0


@njit(cache=True, nogil=True)
def residual_sums(values, offsets, mu, delta, cps):
    S = offsets.size - 1
    out = np.empty((S, 4))
    for s in range(S):
        a = offsets[s]
        n = offsets[s + 1] - a
        for kk in range(4):
            k = kk + 1
            m = mu[s, kk]
            acc = 0.0
            for i in range(n):
                r = values[a + i] - m - _level(k, i + 1, cps[s, kk]) * delta
                acc += r * r
            out[s, kk] = acc
    return out


@njit(cache=True, nogil=True)
def incidence_products(values, offsets, mu, cps):
    """Per (s, k): sum_t T_t (y_t - mu), sum_t T_t^2 and sum_t T_t."""
    S = offsets.size - 1
    t_r = np.zeros((S, 4))
    t_t = np.zeros((S, 4))
    t_1 = np.zeros((S, 4))
    for s in range(S):
        a = offsets[s]
        n = offsets[s + 1] - a
        for kk in range(1, 4):
            k = kk + 1
            m = mu[s, kk]
            acc_r = 0.0
            acc_t = 0.0
            acc_1 = 0.0
            for i in range(n):
                c = _level(k, i + 1, cps[s, kk])
                if c != 0.0:
                    acc_r += c * (values[a + i] - m)
                    acc_t += c * c
                    acc_1 += c
            t_r[s, kk] = acc_r
            t_t[s, kk] = acc_t
            t_1[s, kk] = acc_1
    return t_r, t_t, t_1


@njit(cache=True, nogil=True)
def best_single(prefix, start, n, scale, delta):
    """Argmin over u in [1, n-1] of the profiled RSS (minus the centred sum of
    squares) for a single jump of ``scale * delta``; smallest u on ties."""
    best_u = 1
    best = np.inf
    c_d = scale * delta
    for u in range(1, n):
        m = n - u
        g = 2.0 * c_d * prefix[start + u] + c_d * c_d * (m - m * m / n)
        if g < best:
            best = g
            best_u = u
    return best_u, best


@njit(cache=True, nogil=True)
def best_pair(prefix, start, n, delta):
    """Argmin over 1 <= u < v <= n-1 for the two-jump cluster; lexicographic ties."""
    best_u = 1
    best_v = 2
    best = np.inf
    d2 = delta * delta
    for u in range(1, n - 1):
        qu = prefix[start + u]
        for v in range(u + 1, n):
            m = 2 * n - u - v
            g = 2.0 * delta * (qu + prefix[start + v]) + d2 * ((4 * n - u - 3 * v) - m * m / n)
            if g < best:
                best = g
                best_u = u
                best_v = v
    return best_u, best_v, best


@njit(cache=True, nogil=True)
def segment_all(prefix, offsets, delta, cps_out, obj_out):
    """Run the change-point search for clusters 2-4 on every profile."""
    S = offsets.size - 1
    for s in range(S):
        a = offsets[s]
        n = offsets[s + 1] - a
        start = a + s
        u, g = best_single(prefix, start, n, 1.0, delta)
        cps_out[s, 1, 0] = u
        obj_out[s, 1] = g
        u, v, g = best_pair(prefix, start, n, delta)
        cps_out[s, 2, 0] = u
        cps_out[s, 2, 1] = v
        obj_out[s, 2] = g
        u, g = best_single(prefix, start, n, 2.0, delta)
        cps_out[s, 3, 0] = u
        obj_out[s, 3] = g
