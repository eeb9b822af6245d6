"""Minimum-cost bipartite assignment with infeasible (gated) pairs."""
from dataclasses import dataclass, field
import math

import numpy as np

from .. import _kernels

INFEASIBLE = math.inf


@dataclass
class Assignment:
    matches: list = field(default_factory=list)  # (row, col) pairs
    unmatched_rows: list = field(default_factory=list)
    unmatched_cols: list = field(default_factory=list)
    total: float = 0.0


def hungarian_solve(costs, backend=None):
    """Solve the assignment problem on ``costs``; ``inf`` entries are never matched.

    Among all matchings that use only finite entries, the result has the
    largest possible number of pairs and, among those, the smallest total
    cost. Infeasible pairs are replaced by a penalty larger than the sum of
    all finite costs, so trading one penalty for any finite combination is
    always preferred; penalised pairs are dropped afterwards.
    """
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    n, m = c.shape
    if n == 0 or m == 0:
        return Assignment([], list(range(n)), list(range(m)), 0.0)
    if np.isnan(c).any():
        raise ValueError("cost matrix contains NaN")
    feasible = np.isfinite(c)
    if (c[feasible] < 0).any():
        raise ValueError("finite costs must be non-negative")
    penalty = float(np.abs(c[feasible]).sum()) + 1.0
    work = np.where(feasible, c, penalty)
    transposed = n > m
    if transposed:
        work = work.T
    kern = _kernels if backend is None else _kernels.get_backend(backend)
    col_of_row = kern.solve_dense(work)
    pairs = [(r, cidx) for r, cidx in enumerate(col_of_row)]
    if transposed:
        pairs = [(cidx, r) for r, cidx in pairs]
    matches = sorted((r, cidx) for r, cidx in pairs if feasible[r, cidx])
    rows = {r for r, _ in matches}
    cols = {cc for _, cc in matches}
    total = float(sum(c[r, cc] for r, cc in matches))
    return Assignment(
        matches,
        [r for r in range(n) if r not in rows],
        [cc for cc in range(m) if cc not in cols],
        total,
    )
