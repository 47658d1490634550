"""Natural cubic spline through grid-path waypoints, evaluated by arc length."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass

import numpy as np

from ..terrain import HeightMap, cell_to_world

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def natural_cubic_coefficients(u, y) -> np.ndarray:
    """Per-interval coefficients (a, b, c, d) of y = a + b h + c h^2 + d h^3, h = u - u_i.

    Second derivatives vanish at both ends.  Solved with the Thomas algorithm.
    """
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(u)
    if n < 2:
        raise ValueError("need at least two knots")
    h = np.diff(u)
    if np.any(h <= 0):
        raise ValueError("knot parameters must be strictly increasing")
    m = np.zeros(n)  # second derivatives
    if n > 2:
        k = n - 2
        diag = 2.0 * (h[:-1] + h[1:])
        off = h[1:-1].copy()
        rhs = 6.0 * ((y[2:] - y[1:-1]) / h[1:] - (y[1:-1] - y[:-2]) / h[:-1])
        # forward sweep
        cp = np.zeros(k)
        dp = np.zeros(k)
        cp[0] = off[0] / diag[0] if k > 1 else 0.0
        dp[0] = rhs[0] / diag[0]
        for i in range(1, k):
            denom = diag[i] - off[i - 1] * cp[i - 1]
            cp[i] = off[i] / denom if i < k - 1 else 0.0
            dp[i] = (rhs[i] - off[i - 1] * dp[i - 1]) / denom
        sol = np.zeros(k)
        sol[-1] = dp[-1]
        for i in range(k - 2, -1, -1):
            sol[i] = dp[i] - cp[i] * sol[i + 1]
        m[1:-1] = sol
    a = y[:-1]
    b = (y[1:] - y[:-1]) / h - h * (2.0 * m[:-1] + m[1:]) / 6.0
    c = m[:-1] / 2.0
    d = (m[1:] - m[:-1]) / (6.0 * h)
    return np.column_stack([a, b, c, d])


def prune_collinear(points, tol: float = 1e-9) -> list[tuple[float, float]]:
    """Drop interior points lying on the straight run between their neighbours."""
    pts = [tuple(map(float, p)) for p in points]
    out = [pts[0]]
    for i in range(1, len(pts) - 1):
        a, b, c = out[-1], pts[i], pts[i + 1]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        dot = (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1])
        if abs(cross) <= tol and dot > 0:
            continue
        out.append(b)
    out.append(pts[-1])
    return out


@dataclass(eq=False)
class GlobalPath:
    """Planar cubic spline.

    Coefficients are stored per interval in the chord-length parameter
    ``u``; ``knot_s`` holds the arc length at every knot so that points can
    be looked up by arc length ``s`` in [0, length].
    """

    knots: np.ndarray
    u: np.ndarray
    coef_x: np.ndarray
    coef_y: np.ndarray
    knot_s: np.ndarray

    @property
    def length(self) -> float:
        return float(self.knot_s[-1])

    # -- chord-parameter evaluation -------------------------------------
    def _interval(self, u: float) -> int:
        i = bisect.bisect_right(self.u, u) - 1
        return min(max(i, 0), len(self.u) - 2)

    def eval_u(self, u: float, order: int = 0) -> tuple[float, float]:
        i = self._interval(u)
        h = u - self.u[i]
        out = []
        for coef in (self.coef_x, self.coef_y):
            a, b, c, d = coef[i]
            if order == 0:
                out.append(a + h * (b + h * (c + h * d)))
            elif order == 1:
                out.append(b + h * (2 * c + 3 * d * h))
            elif order == 2:
                out.append(2 * c + 6 * d * h)
            else:
                raise ValueError("order must be 0, 1 or 2")
        return out[0], out[1]

    def _speed(self, i: int, h):
        bx, cx, dx = self.coef_x[i, 1:]
        by, cy, dy = self.coef_y[i, 1:]
        return np.hypot(bx + h * (2 * cx + 3 * dx * h), by + h * (2 * cy + 3 * dy * h))

    def _arc(self, i: int, h_end: float) -> float:
        hs = 0.5 * h_end * (_GL_X + 1.0)
        return float(0.5 * h_end * np.dot(_GL_W, self._speed(i, hs)))

    # -- arc-length evaluation ------------------------------------------
    def u_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = bisect.bisect_right(self.knot_s, s) - 1
        i = min(max(i, 0), len(self.u) - 2)
        target = s - self.knot_s[i]
        span = self.u[i + 1] - self.u[i]
        seg_len = self.knot_s[i + 1] - self.knot_s[i]
        h = span * target / seg_len if seg_len > 0 else 0.0
        lo, hi = 0.0, span
        for _ in range(50):
            f = self._arc(i, h) - target
            if abs(f) < 1e-12:
                break
            if f > 0:
                hi = h
            else:
                lo = h
            v = float(self._speed(i, h))
            step = h - f / v if v > 1e-12 else 0.5 * (lo + hi)
            h = step if lo < step < hi else 0.5 * (lo + hi)
        return float(self.u[i] + h)

    def point(self, s: float) -> tuple[float, float]:
        return self.eval_u(self.u_at(s))

    def tangent(self, s: float) -> tuple[float, float]:
        dx, dy = self.eval_u(self.u_at(s), 1)
        n = math.hypot(dx, dy)
        return (dx / n, dy / n) if n > 0 else (1.0, 0.0)

    def heading(self, s: float) -> float:
        dx, dy = self.eval_u(self.u_at(s), 1)
        return math.atan2(dy, dx)

    def _table(self, spacing: float):
        cache = self.__dict__.setdefault("_tables", {})
        if spacing not in cache:
            n = max(2, int(math.ceil(self.length / spacing)) + 1)
            ss = np.linspace(0.0, self.length, n)
            cache[spacing] = (ss, np.array([self.point(s) for s in ss]))
        return cache[spacing]

    def project(self, x: float, y: float, spacing: float = 0.01) -> float:
        """Arc length of the spline point nearest to (x, y)."""
        ss, pts = self._table(spacing)
        n = len(ss)
        k = int(np.argmin(np.hypot(pts[:, 0] - x, pts[:, 1] - y)))
        # golden-section refinement on the bracketing interval
        a, b = ss[max(k - 1, 0)], ss[min(k + 1, n - 1)]
        g = (math.sqrt(5) - 1) / 2

        def dist(s):
            px, py = self.point(s)
            return math.hypot(px - x, py - y)

        for _ in range(40):
            c1, c2 = b - g * (b - a), a + g * (b - a)
            if dist(c1) <= dist(c2):
                b = c2
            else:
                a = c1
        return 0.5 * (a + b)

    def to_json(self) -> str:
        return json.dumps({
            "knots": self.knots.tolist(),
            "u": self.u.tolist(),
            "coef_x": self.coef_x.tolist(),
            "coef_y": self.coef_y.tolist(),
            "knot_s": self.knot_s.tolist(),
            "length": self.length,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GlobalPath":
        d = json.loads(text)
        return cls(np.array(d["knots"]), np.array(d["u"]), np.array(d["coef_x"]),
                   np.array(d["coef_y"]), np.array(d["knot_s"]))


def spline_through(points) -> GlobalPath:
    knots = np.array(points, dtype=float)
    if len(knots) < 2:
        raise ValueError("a spline needs at least two distinct points")
    chord = np.hypot(*np.diff(knots, axis=0).T)
    if np.any(chord <= 0):
        raise ValueError("consecutive knots must be distinct")
    u = np.concatenate([[0.0], np.cumsum(chord)])
    path = GlobalPath(knots, u, natural_cubic_coefficients(u, knots[:, 0]),
                      natural_cubic_coefficients(u, knots[:, 1]), np.zeros(len(u)))
    seg = [path._arc(i, u[i + 1] - u[i]) for i in range(len(u) - 1)]
    path.knot_s = np.concatenate([[0.0], np.cumsum(seg)])
    return path


def fit_spline(cells, hmap: HeightMap) -> GlobalPath:
    """Spline through the world coordinates of a grid path."""
    if len(cells) < 2:
        raise ValueError("degenerate path: a spline needs at least two cells")
    pts = prune_collinear([cell_to_world(hmap, c) for c in cells])
    return spline_through(pts)
