"""8-connected A* over a Boolean grid.

Axis moves cost 1 and diagonal moves cost sqrt(2); a diagonal is allowed
only when both axis cells it passes are free.  The octile heuristic is
consistent for these costs, so the first expansion of the goal is optimal.
Open-list ties break on the heuristic, then row-major cell order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from ..terrain import CellIndex

SQRT2 = math.sqrt(2.0)

MOVES = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class GridPath:
    cells: tuple
    cost: float

    def __len__(self):
        return len(self.cells)


def octile(a, b) -> float:
    dr, dc = abs(a[0] - b[0]), abs(a[1] - b[1])
    return (max(dr, dc) - min(dr, dc)) + SQRT2 * min(dr, dc)


def _grid(fmap) -> np.ndarray:
    return np.asarray(getattr(fmap, "cells", fmap), dtype=bool)


def neighbours(free: np.ndarray, r: int, c: int):
    n_rows, n_cols = free.shape
    for dr, dc in MOVES:
        rr, cc = r + dr, c + dc
        if not (0 <= rr < n_rows and 0 <= cc < n_cols) or not free[rr, cc]:
            continue
        if dr and dc:
            if not (free[r + dr, c] and free[r, c + dc]):
                continue
            yield rr, cc, SQRT2
        else:
            yield rr, cc, 1.0


def _check_endpoint(free, cell, label):
    r, c = cell
    if not (0 <= r < free.shape[0] and 0 <= c < free.shape[1]):
        raise PreconditionError(f"{label} {tuple(cell)} is outside the grid")
    if not free[r, c]:
        raise PreconditionError(f"{label} {tuple(cell)} is not a feasible cell")


def astar(fmap, start, goal) -> GridPath | None:
    """Shortest path from ``start`` to ``goal``; None when the goal is unreachable."""
    free = _grid(fmap)
    start, goal = CellIndex(*start), CellIndex(*goal)
    _check_endpoint(free, start, "start")
    _check_endpoint(free, goal, "goal")

    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    h0 = octile(start, goal)
    heap = [(h0, h0, start.row, start.col)]
    while heap:
        f, h, r, c = heapq.heappop(heap)
        cell = (r, c)
        if cell in closed:
            continue
        closed.add(cell)
        if cell == goal:
            return GridPath(_unwind(parent, goal), g[cell])
        gc = g[cell]
        for rr, cc, step in neighbours(free, r, c):
            nb = (rr, cc)
            if nb in closed:
                continue
            cand = gc + step
            if cand < g.get(nb, math.inf) - 1e-12:
                g[nb] = cand
                parent[nb] = cell
                hn = octile(nb, goal)
                heapq.heappush(heap, (cand + hn, hn, rr, cc))
    return None


def _unwind(parent, goal):
    path = []
    cell = goal
    while cell is not None:
        path.append(CellIndex(*cell))
        cell = parent[cell]
    return tuple(reversed(path))


def path_cost(cells) -> float:
    total = 0.0
    for a, b in zip(cells, cells[1:]):
        total += SQRT2 if (a[0] != b[0] and a[1] != b[1]) else 1.0
    return total
