"""Heightmap plus start/goal to a global spline."""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..kinematics import RobotModel
from ..terrain import HeightMap, cell_to_world, world_to_cell
from .astar import GridPath, astar
from .fss import DEFAULT_PROBE_LENGTH, DEFAULT_THRESHOLD, FeasibilityMap, build_feasibility_map, inflate
from .spline import GlobalPath, prune_collinear, spline_through

# half the body diagonal plus a little slack; obstacles are kept this far from the path
DEFAULT_CLEARANCE = 0.3


class UnreachableError(RuntimeError):
    pass


@dataclass(eq=False)
class GlobalPlan:
    feasibility: FeasibilityMap
    search_map: FeasibilityMap
    grid_path: GridPath
    path: GlobalPath

    def to_json(self) -> str:
        return json.dumps({
            "feasibility": json.loads(self.feasibility.to_json()),
            "grid_path": [list(c) for c in self.grid_path.cells],
            "grid_cost": self.grid_path.cost,
            "path": json.loads(self.path.to_json()),
        }, indent=1)


def plan_global(hmap: HeightMap, start_xy, goal_xy, threshold: float = DEFAULT_THRESHOLD,
                probe_length: float = DEFAULT_PROBE_LENGTH, clearance: float = DEFAULT_CLEARANCE,
                workers: int = 1, model: RobotModel | None = None, oracle=None,
                feasibility: FeasibilityMap | None = None) -> GlobalPlan:
    """Feasibility transform, obstacle inflation, A* and spline fit.

    The spline starts and ends exactly at ``start_xy`` and ``goal_xy``
    rather than at the enclosing cell centres.
    """
    model = model or RobotModel()
    if feasibility is None:
        feasibility = build_feasibility_map(hmap, threshold, oracle, probe_length, workers, model)
    search = inflate(feasibility, clearance)
    start = world_to_cell(hmap, *start_xy)
    goal = world_to_cell(hmap, *goal_xy)
    grid_path = astar(search, start, goal)
    if grid_path is None:
        raise UnreachableError(f"no traversable path from {tuple(start_xy)} to {tuple(goal_xy)}")
    pts = [cell_to_world(hmap, c) for c in grid_path.cells]
    pts[0] = tuple(map(float, start_xy))
    pts[-1] = tuple(map(float, goal_xy))
    pts = prune_collinear(_dedupe(pts))
    if len(pts) < 2:
        pts = [tuple(map(float, start_xy)), tuple(map(float, goal_xy))]
    return GlobalPlan(feasibility, search, grid_path, spline_through(_dedupe(pts)))


def _dedupe(pts):
    out = [pts[0]]
    for p in pts[1:]:
        if abs(p[0] - out[-1][0]) > 1e-12 or abs(p[1] - out[-1][1]) > 1e-12:
            out.append(p)
    return out
