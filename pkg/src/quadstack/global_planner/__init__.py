from .astar import GridPath, PreconditionError, astar, octile, path_cost
from .fss import (DEFAULT_PROBE_LENGTH, DEFAULT_THRESHOLD, ConvexRegion, FeasibilityMap, GaitOracle,
                  build_feasibility_map, connected_components, convex_hull, detect_violations,
                  group_and_hull, inflate, point_in_hull, probe_cells, probe_microtrajectories)
from .spline import GlobalPath, fit_spline, natural_cubic_coefficients, prune_collinear, spline_through
from .stitching import (DEFAULT_REPLAN_THRESHOLD, DEFAULT_STEP_SIZE, ReplanDecision, StitchError,
                        StitchPreconditionError, StitchSchedule, goal_on_path, next_segment_goal,
                        replan_trigger, stitch, trim)
from .planner import GlobalPlan, plan_global

__all__ = [
    "ConvexRegion", "DEFAULT_PROBE_LENGTH", "DEFAULT_REPLAN_THRESHOLD", "DEFAULT_STEP_SIZE",
    "DEFAULT_THRESHOLD", "FeasibilityMap", "GaitOracle", "GlobalPath", "GlobalPlan", "GridPath",
    "PreconditionError", "ReplanDecision", "StitchError", "StitchPreconditionError", "StitchSchedule",
    "astar", "build_feasibility_map", "connected_components", "convex_hull", "detect_violations",
    "fit_spline", "goal_on_path", "group_and_hull", "inflate", "natural_cubic_coefficients", "next_segment_goal",
    "octile", "path_cost", "plan_global", "point_in_hull", "probe_cells", "probe_microtrajectories",
    "prune_collinear", "replan_trigger", "spline_through", "stitch", "trim",
]
