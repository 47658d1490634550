"""Heightmap terrain: file I/O, interpolation and seeded task environments.

Cell ``(row, col)`` has its center at ``(origin_x + col * res, origin_y + row * res)``,
so columns run along world x and rows along world y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

TASKS = ("walking", "avoidance", "climbing")


class TerrainError(ValueError):
    pass


class MapParseError(TerrainError):
    def __init__(self, message: str, line: int):
        super().__init__(f"{message} at line {line}")
        self.line = line


class OutOfBoundsError(TerrainError):
    def __init__(self, x: float, y: float):
        super().__init__(f"point ({x:.6g}, {y:.6g}) is outside the map")
        self.point = (x, y)


class CellIndex(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True, eq=False)
class HeightMap:
    """Immutable n_rows x n_cols grid of terrain heights in meters."""

    heights: np.ndarray
    resolution: float
    origin: tuple[float, float] = (0.0, 0.0)
    _flat: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        h = np.array(self.heights, dtype=float)
        if h.ndim != 2 or h.size == 0:
            raise TerrainError("heights must be a non-empty 2D grid")
        if not np.all(np.isfinite(h)):
            raise TerrainError("heights must be finite")
        if not self.resolution > 0:
            raise TerrainError("resolution must be positive")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        # plain-list copy for the scalar interpolation hot path
        object.__setattr__(self, "_flat", h.ravel().tolist())

    @property
    def n_rows(self) -> int:
        return self.heights.shape[0]

    @property
    def n_cols(self) -> int:
        return self.heights.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) of the outer cell edges."""
        half = 0.5 * self.resolution
        ox, oy = self.origin
        return (ox - half, ox + (self.n_cols - 0.5) * self.resolution,
                oy - half, oy + (self.n_rows - 0.5) * self.resolution)

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        x0, x1, y0, y1 = self.bounds
        return (x0 + margin <= x <= x1 - margin) and (y0 + margin <= y <= y1 - margin)

    def __eq__(self, other):
        if not isinstance(other, HeightMap):
            return NotImplemented
        return (self.resolution == other.resolution and self.origin == other.origin
                and self.heights.shape == other.heights.shape
                and bool(np.array_equal(self.heights, other.heights)))

    __hash__ = None


# ---------------------------------------------------------------------------
# file format


def _fmt(v: float) -> str:
    r = repr(float(v))
    return r[:-2] if r.endswith(".0") else r


def parse_heightmap(text: str) -> HeightMap:
    """Parse the line-oriented map format.

    Two header lines ``resolution <m>`` and ``origin <x> <y>`` followed by
    one whitespace-separated row of heights per line. Blank lines and
    ``#`` comments are ignored.
    """
    resolution = origin = None
    rows: list[list[float]] = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        key = tokens[0].lower()
        if key == "resolution":
            if rows or len(tokens) != 2:
                raise MapParseError("malformed resolution header", lineno)
            resolution = _number(tokens[1], lineno)
            continue
        if key == "origin":
            if rows or len(tokens) != 3:
                raise MapParseError("malformed origin header", lineno)
            origin = (_number(tokens[1], lineno), _number(tokens[2], lineno))
            continue
        if resolution is None or origin is None:
            raise MapParseError("missing header before grid body", lineno)
        values = [_number(tok, lineno) for tok in tokens]
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise MapParseError("ragged row", lineno)
        rows.append(values)
    if resolution is None or origin is None:
        raise MapParseError("missing header", 1)
    if not rows:
        raise MapParseError("empty grid body", len(text.splitlines()) + 1)
    if not resolution > 0:
        raise MapParseError("resolution must be positive", 1)
    return HeightMap(np.array(rows), resolution, origin)


def _number(token: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MapParseError(f"non-numeric cell {token!r}", lineno) from None
    if not math.isfinite(value):
        raise MapParseError(f"non-finite cell {token!r}", lineno)
    return value


def serialize_heightmap(hmap: HeightMap) -> str:
    lines = [f"resolution {_fmt(hmap.resolution)}",
             f"origin {_fmt(hmap.origin[0])} {_fmt(hmap.origin[1])}"]
    lines.extend(" ".join(_fmt(v) for v in row) for row in hmap.heights)
    return "\n".join(lines) + "\n"


def load_heightmap(path) -> HeightMap:
    with open(path, encoding="utf-8") as fh:
        return parse_heightmap(fh.read())


def save_heightmap(hmap: HeightMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_heightmap(hmap))


# ---------------------------------------------------------------------------
# queries


def world_to_cell(hmap: HeightMap, x: float, y: float) -> CellIndex:
    """Nearest cell center; raises OutOfBoundsError outside the cell edges."""
    if not hmap.contains(x, y):
        raise OutOfBoundsError(x, y)
    col = math.floor((x - hmap.origin[0]) / hmap.resolution + 0.5)
    row = math.floor((y - hmap.origin[1]) / hmap.resolution + 0.5)
    return CellIndex(min(max(row, 0), hmap.n_rows - 1), min(max(col, 0), hmap.n_cols - 1))


def cell_to_world(hmap: HeightMap, cell) -> tuple[float, float]:
    row, col = cell
    if not (0 <= row < hmap.n_rows and 0 <= col < hmap.n_cols):
        raise TerrainError(f"cell {tuple(cell)} outside {hmap.n_rows}x{hmap.n_cols} map")
    return (hmap.origin[0] + col * hmap.resolution, hmap.origin[1] + row * hmap.resolution)


def height_at(hmap: HeightMap, x: float, y: float) -> float:
    """Bilinear interpolation between cell-center heights.

    Inside the outer half cell the border value is held constant.
    """
    ox, oy = hmap.origin
    res = hmap.resolution
    nr, nc = hmap.heights.shape
    u = (x - ox) / res
    v = (y - oy) / res
    if not (-0.5 <= u <= nc - 0.5 and -0.5 <= v <= nr - 0.5):
        raise OutOfBoundsError(x, y)
    u = min(max(u, 0.0), nc - 1.0)
    v = min(max(v, 0.0), nr - 1.0)
    c0 = min(int(u), nc - 2) if nc > 1 else 0
    r0 = min(int(v), nr - 2) if nr > 1 else 0
    fu = u - c0
    fv = v - r0
    c1 = c0 + 1 if nc > 1 else 0
    r1 = r0 + 1 if nr > 1 else 0
    h = hmap._flat
    h00 = h[r0 * nc + c0]
    h01 = h[r0 * nc + c1]
    h10 = h[r1 * nc + c0]
    h11 = h[r1 * nc + c1]
    if h00 == h01 == h10 == h11:
        return h00
    top = h00 + (h01 - h00) * fu
    bottom = h10 + (h11 - h10) * fu
    return top + (bottom - top) * fv


def heights_at(hmap: HeightMap, xs, ys) -> np.ndarray:
    """Vectorized :func:`height_at` over matching arrays of query points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nr, nc = hmap.heights.shape
    u = (xs - hmap.origin[0]) / hmap.resolution
    v = (ys - hmap.origin[1]) / hmap.resolution
    bad = ~((u >= -0.5) & (u <= nc - 0.5) & (v >= -0.5) & (v <= nr - 0.5))
    if np.any(bad):
        i = int(np.flatnonzero(bad.ravel())[0])
        raise OutOfBoundsError(float(xs.ravel()[i]), float(ys.ravel()[i]))
    u = np.clip(u, 0.0, nc - 1.0)
    v = np.clip(v, 0.0, nr - 1.0)
    c0 = np.minimum(u.astype(int), max(nc - 2, 0))
    r0 = np.minimum(v.astype(int), max(nr - 2, 0))
    c1 = np.minimum(c0 + 1, nc - 1)
    r1 = np.minimum(r0 + 1, nr - 1)
    fu = u - c0
    fv = v - r0
    h = hmap.heights
    top = h[r0, c0] + (h[r0, c1] - h[r0, c0]) * fu
    bottom = h[r1, c0] + (h[r1, c1] - h[r1, c0]) * fu
    return top + (bottom - top) * fv


def deviation_grid(hmap: HeightMap) -> np.ndarray:
    """Max absolute height difference to the 8-neighborhood, per cell."""
    h = hmap.heights
    padded = np.pad(h, 1, mode="constant", constant_values=np.nan)
    out = np.zeros_like(h)
    nr, nc = h.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            nb = padded[1 + dr:1 + dr + nr, 1 + dc:1 + dc + nc]
            diff = np.abs(h - nb)
            out = np.fmax(out, np.where(np.isnan(diff), 0.0, diff))
    return out


def height_deviation(hmap: HeightMap, cell) -> float:
    row, col = cell
    h = hmap.heights
    best = 0.0
    for r in range(max(row - 1, 0), min(row + 2, hmap.n_rows)):
        for c in range(max(col - 1, 0), min(col + 2, hmap.n_cols)):
            best = max(best, abs(h[row, col] - h[r, c]))
    return float(best)


def neighbors8(cell, shape) -> Iterable[CellIndex]:
    row, col = cell
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if (dr or dc) and 0 <= row + dr < shape[0] and 0 <= col + dc < shape[1]:
                yield CellIndex(row + dr, col + dc)


# ---------------------------------------------------------------------------
# task environments


@dataclass(frozen=True)
class TaskEnvConfig:
    size: float = 3.0
    resolution: float = 0.05
    wall_height: float = 1.0
    wall_thickness: float = 0.1
    gap_range: tuple[float, float] = (0.95, 1.2)
    gap_offset: float = 0.55        # max distance of the gap centre from the start line
    plateau_height: float = 0.06
    max_step_height: float = 0.08
    start: tuple[float, float] = (0.5, 1.5)
    goal: tuple[float, float] = (2.5, 1.5)


def generate_task_env(task: str, seed: int, config: TaskEnvConfig | None = None) -> HeightMap:
    """Build the walking / avoidance / climbing map for ``seed``.

    Deterministic in (task, seed, config).
    """
    cfg = config or TaskEnvConfig()
    if task not in TASKS:
        raise TerrainError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    if cfg.plateau_height > cfg.max_step_height:
        raise TerrainError("plateau height exceeds the max step height")
    n = int(round(cfg.size / cfg.resolution))
    heights = np.zeros((n, n))
    rng = np.random.default_rng([seed, TASKS.index(task)])
    res = cfg.resolution

    def col_of(x):
        return int(math.floor(x / res + 0.5))

    if task == "avoidance":
        # a broken barrier across the straight line: one wall rising from the
        # lower edge, one hanging from the upper edge, with a gap between them
        gap = rng.uniform(*cfg.gap_range)
        center = rng.uniform(cfg.start[1] - cfg.gap_offset, cfg.start[1] + cfg.gap_offset)
        lo, hi = center - gap / 2, center + gap / 2
        thick = max(1, int(round(cfg.wall_thickness / res)))
        for x_lo, x_hi, y_lo, y_hi in (
            (0.95, 1.35, 0.0, lo),
            (1.55, 1.95, hi, cfg.size),
        ):
            c0 = col_of(rng.uniform(x_lo, x_hi))
            r0 = max(0, col_of(y_lo))
            r1 = min(n, col_of(y_hi))
            heights[r0:r1, c0:c0 + thick] = cfg.wall_height
    elif task == "climbing":
        n_plateaus = int(rng.integers(1, 3))
        lo = col_of(0.95)
        hi = col_of(2.05)
        if n_plateaus == 1:
            spans = [(lo, hi)]
        else:
            mid = col_of(1.5)
            spans = [(lo, mid - 2), (mid + 2, hi)]
        for a, b in spans:
            length = int(rng.integers(max(4, (b - a) // 3), b - a + 1))
            start = int(rng.integers(a, b - length + 1))
            heights[:, start:start + length] = cfg.plateau_height
    return HeightMap(heights, res, (0.0, 0.0))


def flat_map(length: float, width: float, resolution: float = 0.1) -> HeightMap:
    """All-zero map covering [0, length] x [0, width]."""
    n_cols = int(round(length / resolution)) + 1
    n_rows = int(round(width / resolution)) + 1
    return HeightMap(np.zeros((n_rows, n_cols)), resolution, (0.0, 0.0))
