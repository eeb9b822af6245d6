# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: SAD block matching and dense linear assignment."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libc.stdint cimport int64_t

cnp.import_array()

cdef int64_t UNSET = 0x7FFFFFFFFFFFFFFF
cdef int RATIO_NUM = 19
cdef int RATIO_DEN = 20


def sad_block_match(left, right, int block_size, int max_disparity):
    cdef cnp.ndarray[cnp.int32_t, ndim=2] L = np.ascontiguousarray(left, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=2] R = np.ascontiguousarray(right, dtype=np.int32)
    cdef Py_ssize_t height = L.shape[0], width = L.shape[1]
    cdef int half = block_size // 2
    out_arr = np.zeros((height, width), dtype=np.int32)
    cdef int[:, ::1] out = out_arr
    if height < block_size or width < block_size or max_disparity < 1:
        return out_arr

    cdef int[:, ::1] lv = L
    cdef int[:, ::1] rv = R
    cdef Py_ssize_t inner_h = height - 2 * half, inner_w = width - 2 * half
    # plane-major cost volume; UNSET marks disparities without a full block
    costs_arr = np.full((max_disparity, inner_h, inner_w), UNSET, dtype=np.int64)
    cdef int64_t[:, :, ::1] costs = costs_arr
    cdef int64_t[::1] colsum = np.zeros(width, dtype=np.int64)
    cdef Py_ssize_t v, u, k, r, d
    cdef int64_t acc
    cdef int x
    for d in range(1, min(max_disparity, width - 1) + 1):
        for u in range(width):
            colsum[u] = 0
        for u in range(d, width):
            acc = 0
            for r in range(block_size):
                x = lv[r, u] - rv[r, u - d]
                acc += x if x >= 0 else -x
            colsum[u] = acc
        for v in range(inner_h):
            if v > 0:
                for u in range(d, width):
                    x = lv[v - 1, u] - rv[v - 1, u - d]
                    colsum[u] -= x if x >= 0 else -x
                    x = lv[v + block_size - 1, u] - rv[v + block_size - 1, u - d]
                    colsum[u] += x if x >= 0 else -x
            acc = 0
            for u in range(block_size):
                acc += colsum[u]
            for k in range(inner_w):
                if k > 0:
                    acc += colsum[k + block_size - 1] - colsum[k - 1]
                if k >= d:
                    costs[d - 1, v, k] = acc

    cdef int64_t best, second, c
    cdef int best_d
    for v in range(inner_h):
        for k in range(inner_w):
            best = UNSET
            best_d = -1
            for d in range(max_disparity):
                c = costs[d, v, k]
                if c < best:
                    best = c
                    best_d = <int>d
            if best_d < 0:
                continue
            second = UNSET
            for d in range(max_disparity):
                if d >= best_d - 1 and d <= best_d + 1:
                    continue
                c = costs[d, v, k]
                if c < second:
                    second = c
            if second == UNSET:
                continue
            if RATIO_DEN * best < RATIO_NUM * second:
                out[v + half, k + half] = best_d + 1
    return out_arr


def solve_dense(cost):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a_arr = np.ascontiguousarray(cost, dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    cdef Py_ssize_t n = a_arr.shape[0], m = a_arr.shape[1]
    if n == 0:
        return []
    if n > m:
        raise ValueError("solve_dense expects rows <= cols")
    cdef double[::1] u = np.zeros(n + 1)
    cdef double[::1] v = np.zeros(m + 1)
    cdef double[::1] minv = np.empty(m + 1)
    cdef Py_ssize_t[::1] p = np.zeros(m + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] way = np.zeros(m + 1, dtype=np.intp)
    cdef unsigned char[::1] used = np.zeros(m + 1, dtype=np.uint8)
    cdef Py_ssize_t i, j, j0, j1, i0
    cdef double delta, cur, ui0
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(m + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            ui0 = u[i0]
            delta = INFINITY
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = a[i0 - 1, j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = [0] * n
    for j in range(1, m + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
    return col_of_row
