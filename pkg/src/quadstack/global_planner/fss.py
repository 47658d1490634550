"""Heightmap to Boolean traversability map.

Cells whose height deviation exceeds a threshold are grouped into
8-connected components, each component is wrapped in a convex hull, and
every cell in or around the hull is probed with a short gait plan.  Cells
outside any region are traversable by default.
"""

from __future__ import annotations

import json
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..kinematics import RobotModel
from ..local_planner import (BodyState, GaitPattern, PlannerConfig, base_height, check_feasibility,
                             plan_gait)
from ..terrain import CellIndex, HeightMap, cell_to_world, deviation_grid

DEFAULT_THRESHOLD = 0.1
DEFAULT_PROBE_LENGTH = 0.15
MAX_PROBE_LENGTH = 0.2


@dataclass(frozen=True)
class ConvexRegion:
    """Hull vertices in counter-clockwise order plus the member cells.

    ``kind`` is "point", "segment" or "polygon"; degenerate hulls keep one
    or two vertices.
    """

    vertices: tuple
    members: tuple
    kind: str

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        return point_in_hull(self.vertices, x, y, tol)


@dataclass(eq=False)
class FeasibilityMap:
    cells: np.ndarray
    resolution: float = 1.0
    origin: tuple = (0.0, 0.0)
    reasons: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2:
            raise ValueError("feasibility cells must be a 2-D array")

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_cols(self) -> int:
        return self.cells.shape[1]

    def __getitem__(self, cell) -> bool:
        return bool(self.cells[cell[0], cell[1]])

    def __eq__(self, other):
        if not isinstance(other, FeasibilityMap):
            return NotImplemented
        return np.array_equal(self.cells, other.cells) and self.resolution == other.resolution \
            and tuple(self.origin) == tuple(other.origin)

    def to_json(self) -> str:
        return json.dumps({
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "resolution": self.resolution,
            "origin": list(self.origin),
            "cells": ["".join("1" if c else "0" for c in row) for row in self.cells],
            "reasons": {f"{r},{c}": msg for (r, c), msg in sorted(self.reasons.items())},
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FeasibilityMap":
        data = json.loads(text)
        cells = np.array([[ch == "1" for ch in row] for row in data["cells"]], dtype=bool)
        if cells.shape != (data["n_rows"], data["n_cols"]):
            raise ValueError("cell rows do not match the declared shape")
        reasons = {}
        for key, msg in data.get("reasons", {}).items():
            r, c = key.split(",")
            reasons[CellIndex(int(r), int(c))] = msg
        return cls(cells, data["resolution"], tuple(data["origin"]), reasons)


# ---------------------------------------------------------------------------
# violations and regions


def detect_violations(hmap: HeightMap, threshold: float = DEFAULT_THRESHOLD) -> set[CellIndex]:
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    rows, cols = np.nonzero(deviation_grid(hmap) > threshold)
    return {CellIndex(int(r), int(c)) for r, c in zip(rows, cols)}


def connected_components(cells) -> list[list[CellIndex]]:
    """8-connected components, each sorted, ordered by their first cell."""
    remaining = set(map(tuple, cells))
    components = []
    for seed in sorted(remaining):
        if seed not in remaining:
            continue
        remaining.discard(seed)
        comp = [seed]
        queue = deque([seed])
        while queue:
            r, c = queue.popleft()
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    nb = (r + dr, c + dc)
                    if nb in remaining:
                        remaining.discard(nb)
                        comp.append(nb)
                        queue.append(nb)
        components.append(sorted(CellIndex(*cell) for cell in comp))
    return components


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list[tuple[float, float]]:
    """Monotone chain; collinear points are dropped, output is counter-clockwise."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return pts
    lower = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 and hull[0] == hull[1]:
        return hull[:1]
    return hull


def point_in_hull(vertices, x: float, y: float, tol: float = 1e-9) -> bool:
    n = len(vertices)
    if n == 0:
        return False
    if n == 1:
        return math.hypot(x - vertices[0][0], y - vertices[0][1]) <= tol
    if n == 2:
        (ax, ay), (bx, by) = vertices
        dx, dy = bx - ax, by - ay
        length2 = dx * dx + dy * dy
        t = max(0.0, min(1.0, ((x - ax) * dx + (y - ay) * dy) / length2))
        return math.hypot(x - (ax + t * dx), y - (ay + t * dy)) <= tol
    for i in range(n):
        a, b = vertices[i], vertices[(i + 1) % n]
        edge = math.hypot(b[0] - a[0], b[1] - a[1])
        if _cross(a, b, (x, y)) < -tol * edge:
            return False
    return True


def group_and_hull(cells, hmap: HeightMap) -> list[ConvexRegion]:
    regions = []
    for comp in connected_components(cells):
        hull = convex_hull(cell_to_world(hmap, cell) for cell in comp)
        kind = {1: "point", 2: "segment"}.get(len(hull), "polygon")
        regions.append(ConvexRegion(tuple(hull), tuple(comp), kind))
    return regions


# ---------------------------------------------------------------------------
# probing


class GaitOracle:
    """Feasibility of a short gait plan between two body states."""

    def __init__(self, terrain: HeightMap, model: RobotModel | None = None,
                 pattern: GaitPattern | None = None, config: PlannerConfig | None = None):
        self.terrain = terrain
        self.model = model or RobotModel()
        self.pattern = pattern or GaitPattern()
        self.config = config or PlannerConfig()

    def __call__(self, start: BodyState, goal: BodyState):
        plan = plan_gait(start, goal, self.terrain, self.pattern, self.model, config=self.config)
        return check_feasibility(plan, self.model, self.terrain, self.config)


def probe_cells(region: ConvexRegion, hmap: HeightMap) -> list[CellIndex]:
    """Members, cells centred inside the hull, and a one-cell ring around them."""
    core = set(region.members)
    rows = [c.row for c in region.members]
    cols = [c.col for c in region.members]
    for r in range(min(rows), max(rows) + 1):
        for c in range(min(cols), max(cols) + 1):
            if (r, c) not in core and region.contains(*cell_to_world(hmap, (r, c))):
                core.add(CellIndex(r, c))
    probed = set(core)
    for r, c in core:
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < hmap.n_rows and 0 <= cc < hmap.n_cols:
                    probed.add(CellIndex(rr, cc))
    return sorted(probed)


def crossing_direction(region: ConvexRegion, hmap: HeightMap) -> tuple[float, float]:
    """Dominant height-gradient direction over the region (unit vector in x, y)."""
    gy, gx = np.gradient(np.asarray(hmap.heights, dtype=float))
    idx = tuple(np.array(region.members).T)
    sx, sy = gx[idx], gy[idx]
    tensor = np.array([[np.dot(sx, sx), np.dot(sx, sy)], [np.dot(sx, sy), np.dot(sy, sy)]])
    if np.trace(tensor) <= 1e-12:
        return 1.0, 0.0
    vals, vecs = np.linalg.eigh(tensor)
    dx, dy = vecs[:, 1]
    # fix the sign so the result does not depend on the eigen solver
    if dx < -1e-12 or (abs(dx) <= 1e-12 and dy < 0):
        dx, dy = -dx, -dy
    return float(dx), float(dy)


@dataclass(frozen=True)
class ProbeResult:
    cell: CellIndex
    feasible: bool
    reason: str = ""


def _probe_one(cell, hmap, direction, oracle, probe_length, model) -> ProbeResult:
    cx, cy = cell_to_world(hmap, cell)
    dx, dy = direction
    half = 0.5 * probe_length
    yaw = math.atan2(dy, dx)
    try:
        sx, sy = cx - dx * half, cy - dy * half
        gx, gy = cx + dx * half, cy + dy * half
        start = BodyState((sx, sy, base_height(hmap, model, sx, sy, yaw)), (0.0, 0.0, yaw))
        goal = BodyState((gx, gy, base_height(hmap, model, gx, gy, yaw)), (0.0, 0.0, yaw))
        verdict = oracle(start, goal)
    except Exception as exc:  # a failing probe is treated as infeasible
        return ProbeResult(cell, False, f"probe error: {exc}")
    ok = bool(verdict)
    reason = "" if ok else "; ".join(getattr(verdict, "reasons", ())) or "infeasible"
    return ProbeResult(cell, ok, reason)


def probe_microtrajectories(region: ConvexRegion, hmap: HeightMap, oracle,
                            probe_length: float = DEFAULT_PROBE_LENGTH, workers: int = 1,
                            model: RobotModel | None = None, order=None) -> dict:
    """Label every cell in and around ``region`` with a probe verdict.

    ``order`` optionally permutes the evaluation schedule; the labelling
    never depends on it.
    """
    assert 0 < probe_length < MAX_PROBE_LENGTH, "probe length must be below 0.2 m"
    model = model or getattr(oracle, "model", None) or RobotModel()
    cells = probe_cells(region, hmap)
    if order is not None:
        cells = [cells[i] for i in order]
    direction = crossing_direction(region, hmap)
    results = _run_probes(cells, hmap, direction, oracle, probe_length, workers, model)
    return {r.cell: r for r in results}


def _run_probes(cells, hmap, direction, oracle, probe_length, workers, model):
    work = lambda cell: _probe_one(cell, hmap, direction, oracle, probe_length, model)  # noqa: E731
    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(work, cells))
    return [work(cell) for cell in cells]


def build_feasibility_map(hmap: HeightMap, threshold: float = DEFAULT_THRESHOLD, oracle=None,
                          probe_length: float = DEFAULT_PROBE_LENGTH, workers: int = 1,
                          model: RobotModel | None = None, shuffle_seed: int | None = None) -> FeasibilityMap:
    """Full transform; cells probed from several regions are feasible only if every probe agrees."""
    oracle = oracle if oracle is not None else GaitOracle(hmap, model)
    cells = np.ones(hmap.shape, dtype=bool)
    reasons = {}
    rng = np.random.default_rng(shuffle_seed) if shuffle_seed is not None else None
    for region in group_and_hull(detect_violations(hmap, threshold), hmap):
        n = len(probe_cells(region, hmap))
        order = rng.permutation(n) if rng is not None else None
        labels = probe_microtrajectories(region, hmap, oracle, probe_length, workers, model, order)
        for cell, res in labels.items():
            if not res.feasible:
                cells[cell] = False
                reasons.setdefault(cell, res.reason)
    return FeasibilityMap(cells, hmap.resolution, hmap.origin, reasons)


def inflate(fmap: FeasibilityMap, radius: float, border: bool = True) -> FeasibilityMap:
    """Block cells whose centre lies within ``radius`` of a blocked cell or of the map edge."""
    res = fmap.resolution
    k = int(math.floor(radius / res + 1e-9))
    blocked = ~fmap.cells
    out = blocked.copy()
    n_rows, n_cols = blocked.shape
    for dr in range(-k, k + 1):
        for dc in range(-k, k + 1):
            if (dr == 0 and dc == 0) or math.hypot(dr, dc) * res > radius + 1e-9:
                continue
            src = blocked[max(0, -dr):n_rows - max(0, dr), max(0, -dc):n_cols - max(0, dc)]
            out[max(0, dr):n_rows - max(0, -dr), max(0, dc):n_cols - max(0, -dc)] |= src
    if border and k > 0:
        # the outer cell edge sits half a cell beyond the outermost centre
        edge = int(math.floor(radius / res - 0.5 + 1e-9)) + 1
        edge = max(0, min(edge, min(n_rows, n_cols)))
        out[:edge, :] = out[-edge:, :] = True
        out[:, :edge] = out[:, -edge:] = True
    return FeasibilityMap(~out, fmap.resolution, fmap.origin, dict(fmap.reasons))
