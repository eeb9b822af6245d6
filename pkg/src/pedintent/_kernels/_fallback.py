"""Reference kernels in numpy / plain Python.

Used when the compiled ``_core`` extension is unavailable or when
``PEDINTENT_PURE_PYTHON=1`` is set. Results are bit-identical to the
compiled versions: SAD costs are integers and the ratio test is evaluated
in integer arithmetic.
"""
import math

import numpy as np

# best/second-best >= 0.95  <=>  20 * best >= 19 * second
RATIO_NUM = 19
RATIO_DEN = 20

_UNAVAILABLE = np.iinfo(np.int64).max


def sad_block_match(left, right, block_size, max_disparity):
    """Winner-take-all SAD block matching with a uniqueness ratio test.

    Returns an int32 array of disparities, 0 marking invalid pixels.
    """
    left = np.ascontiguousarray(left, dtype=np.int64)
    right = np.ascontiguousarray(right, dtype=np.int64)
    height, width = left.shape
    half = block_size // 2
    out = np.zeros((height, width), dtype=np.int32)
    if height < block_size or width < block_size or max_disparity < 1:
        return out

    inner_h = height - 2 * half
    inner_w = width - 2 * half
    costs = np.full((inner_h, inner_w, max_disparity), _UNAVAILABLE, dtype=np.int64)
    for d in range(1, max_disparity + 1):
        if d >= width:
            break
        diff = np.zeros((height, width), dtype=np.int64)
        diff[:, d:] = np.abs(left[:, d:] - right[:, :-d])
        integral = np.zeros((height + 1, width + 1), dtype=np.int64)
        integral[1:, 1:] = diff.cumsum(axis=0).cumsum(axis=1)
        sums = (
            integral[block_size:, block_size:]
            - integral[:-block_size, block_size:]
            - integral[block_size:, :-block_size]
            + integral[:-block_size, :-block_size]
        )
        # centre column u = half + k; the block stays on valid columns iff u - half >= d
        usable = np.arange(inner_w) >= d
        costs[:, usable, d - 1] = sums[:, usable]

    best_idx = np.argmin(costs, axis=2)
    best = np.take_along_axis(costs, best_idx[..., None], axis=2)[..., 0]
    masked = costs.copy()
    for off in (-1, 0, 1):
        idx = np.clip(best_idx + off, 0, max_disparity - 1)
        np.put_along_axis(masked, idx[..., None], _UNAVAILABLE, axis=2)
    second = masked.min(axis=2)

    have_best = best != _UNAVAILABLE
    have_second = second != _UNAVAILABLE
    # guard the multiply against the sentinel
    safe_best = np.where(have_best, best, 0)
    safe_second = np.where(have_second, second, 0)
    unique = RATIO_DEN * safe_best < RATIO_NUM * safe_second
    valid = have_best & have_second & unique
    out[half : height - half, half : width - half] = np.where(valid, best_idx + 1, 0)
    return out


def solve_dense(cost):
    """Minimum-cost assignment of every row of an n x m matrix (n <= m).

    Shortest augmenting path with row/column potentials. Returns a list
    ``col_of_row``.
    """
    cost = np.asarray(cost, dtype=float).tolist()
    n = len(cost)
    m = len(cost[0]) if n else 0
    if n == 0:
        return []
    if n > m:
        raise ValueError("solve_dense expects rows <= cols")
    inf = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (m + 1)
    p = [0] * (m + 1)
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            row = cost[i0 - 1]
            ui0 = u[i0]
            delta = inf
            j1 = 0
            for j in range(1, m + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
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
