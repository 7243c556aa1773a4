"""Planar variant: convex-hull vertices jump along interior angle bisectors.

Agents are points in the plane.  Each tick, every strict vertex of the
current convex hull moves one unit along its interior angle bisector
with probability ``1 - epsilon``, or along the opposite (outward)
direction with probability ``epsilon``; all draws are independent and
all moves are applied simultaneously.  Interior points, and points on
the interior of hull edges, never move.

Conventions for degenerate hulls mirror the 1D rules: a single distinct
location stays put; two effective vertices (including fully collinear
sets) move along the segment toward or away from each other; exactly
coincident points count once for hull construction and only the
lowest-index copy moves.

Orientation tests use a floating-point filter with an exact rational
fallback (floats are exact rationals, so `fractions.Fraction` settles
every sign), making hull membership independent of evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateConfigurationError, ValidationError
from .rw_analytics import WalkParams

__all__ = [
    "HullInfo",
    "SwarmState2D",
    "Trajectory2DRow",
    "orientation",
    "convex_hull",
    "bisector_direction",
    "new_swarm2d",
    "step2d",
    "run2d",
    "hull_diameter",
]

# Shewchuk-style static filter: trust the float determinant when it
# clears this multiple of the term magnitudes, else fall back to exact.
_EPS = 2.0**-53
_CCW_ERRBOUND = (3.0 + 16.0 * _EPS) * _EPS

_POOL_SIZE = 4096


def orientation(a, b, c) -> int:
    """Sign of the cross product (b - a) x (c - a): +1 CCW, -1 CW, 0 collinear."""
    d1 = b[0] - a[0]
    d2 = c[1] - a[1]
    d3 = b[1] - a[1]
    d4 = c[0] - a[0]
    left = d1 * d2
    right = d3 * d4
    det = left - right
    bound = _CCW_ERRBOUND * (abs(left) + abs(right))
    if det > bound:
        return 1
    if -det > bound:
        return -1
    det_exact = (Fraction(b[0]) - Fraction(a[0])) * (Fraction(c[1]) - Fraction(a[1])) - (
        Fraction(b[1]) - Fraction(a[1])
    ) * (Fraction(c[0]) - Fraction(a[0]))
    if det_exact > 0:
        return 1
    if det_exact < 0:
        return -1
    return 0


class Trajectory2DRow(NamedTuple):
    t: int
    centroid_x: float
    centroid_y: float
    diameter: float
    hull_count: int


@dataclass(frozen=True)
class HullInfo:
    """Strict extreme points in CCW order with interior bisectors.

    ``vertices`` are indices into the original point sequence; exactly
    coincident input points are represented by their lowest index.
    ``bisectors[i]`` is the unit interior direction at ``vertices[i]``
    (for a 2-vertex hull: toward the other vertex; ``None`` for a single
    vertex, which has no defined direction).
    """

    vertices: tuple[int, ...]
    coordinates: tuple[tuple[float, float], ...]
    bisectors: tuple[tuple[float, float] | None, ...]


def _unit(dx: float, dy: float) -> tuple[float, float]:
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        raise DegenerateConfigurationError("zero-length direction has no unit vector")
    return dx / norm, dy / norm


def _hull_bisectors(
    verts: list[int], coords: list[tuple[float, float]]
) -> list[tuple[float, float] | None]:
    h = len(verts)
    if h == 1:
        return [None]
    if h == 2:
        (ax, ay), (bx, by) = coords
        return [_unit(bx - ax, by - ay), _unit(ax - bx, ay - by)]
    out: list[tuple[float, float] | None] = []
    for i in range(h):
        vx, vy = coords[i]
        px, py = coords[i - 1]
        nx, ny = coords[(i + 1) % h]
        e1x, e1y = _unit(px - vx, py - vy)
        e2x, e2y = _unit(nx - vx, ny - vy)
        # sum of unit vectors toward both neighbours bisects the interior
        # angle; it cannot vanish since strict vertices have angle < pi
        out.append(_unit(e1x + e2x, e1y + e2y))
    return out


def convex_hull(points: Sequence) -> HullInfo:
    """Strict convex hull in CCW order.

    Duplicate coordinates collapse to their lowest index; collinear
    points interior to an edge are excluded.  Degenerate results: one
    point for an all-coincident set, the two endpoints for an
    all-collinear set.
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    if not pts:
        raise ValidationError("need at least one point")
    if any(not (math.isfinite(x) and math.isfinite(y)) for x, y in pts):
        raise ValidationError("coordinates must be finite")

    first_index: dict[tuple[float, float], int] = {}
    for i, xy in enumerate(pts):
        first_index.setdefault(xy, i)
    distinct = sorted(first_index)  # lexicographic by (x, y)

    if len(distinct) == 1:
        xy = distinct[0]
        return HullInfo((first_index[xy],), (xy,), (None,))

    lower: list[tuple[float, float]] = []
    for p in distinct:
        while len(lower) >= 2 and orientation(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(distinct):
        while len(upper) >= 2 and orientation(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    ring = lower[:-1] + upper[:-1]

    verts = [first_index[xy] for xy in ring]
    return HullInfo(tuple(verts), tuple(ring), tuple(_hull_bisectors(verts, ring)))


def bisector_direction(hull: HullInfo, vertex_index: int) -> tuple[float, float]:
    """Unit interior bisector at the given hull vertex (by original index)."""
    try:
        i = hull.vertices.index(vertex_index)
    except ValueError:
        raise ValidationError(f"index {vertex_index} is not a hull vertex") from None
    b = hull.bisectors[i]
    if b is None:
        raise DegenerateConfigurationError(
            "a single-vertex hull has no bisector direction"
        )
    return b


def hull_diameter(hull: HullInfo) -> float:
    """Largest pairwise distance, attained between hull vertices."""
    coords = hull.coordinates
    if len(coords) == 1:
        return 0.0
    best = 0.0
    for i in range(len(coords)):
        xi, yi = coords[i]
        for j in range(i + 1, len(coords)):
            best = max(best, math.hypot(coords[j][0] - xi, coords[j][1] - yi))
    return best


class SwarmState2D:
    """Planar point set plus tick counter and a seeded RNG stream."""

    __slots__ = ("params", "t", "_pts", "_rng", "_pool", "_pool_i")

    def __init__(
        self,
        points: Sequence,
        params: WalkParams,
        rng: np.random.Generator,
    ) -> None:
        pts = [(float(p[0]), float(p[1])) for p in points]
        if not pts:
            raise ValidationError("need at least one agent")
        if any(not (math.isfinite(x) and math.isfinite(y)) for x, y in pts):
            raise ValidationError("coordinates must be finite")
        self.params = params
        self.t = 0
        self._pts = pts
        self._rng = rng
        self._pool: list[float] = []
        self._pool_i = 0

    @property
    def n_agents(self) -> int:
        return len(self._pts)

    @property
    def points(self) -> tuple[tuple[float, float], ...]:
        return tuple(self._pts)

    def centroid(self) -> tuple[float, float]:
        n = len(self._pts)
        return (
            math.fsum(x for x, _ in self._pts) / n,
            math.fsum(y for _, y in self._pts) / n,
        )

    def _draw(self) -> float:
        i = self._pool_i
        if i >= len(self._pool):
            self._pool = self._rng.random(_POOL_SIZE).tolist()
            i = 0
        self._pool_i = i + 1
        return self._pool[i]


def new_swarm2d(
    points: Sequence,
    epsilon: float | WalkParams,
    seed: int | np.random.SeedSequence,
) -> SwarmState2D:
    params = epsilon if isinstance(epsilon, WalkParams) else WalkParams(epsilon)
    rng = np.random.Generator(np.random.PCG64(seed))
    return SwarmState2D(points, params, rng)


def step2d(state: SwarmState2D) -> HullInfo:
    """Advance one tick; every hull vertex jumps one unit along +-bisector.

    Returns the hull that drove the tick.  Draws are consumed in the
    hull's CCW vertex order.  A single distinct location stays put.
    """
    hull = convex_hull(state._pts)
    keep = 1.0 - state.params.epsilon
    if len(hull.vertices) > 1:
        moves = []
        for idx, bis in zip(hull.vertices, hull.bisectors):
            sign = 1.0 if state._draw() < keep else -1.0
            moves.append((idx, sign * bis[0], sign * bis[1]))
        pts = state._pts
        for idx, dx, dy in moves:
            x, y = pts[idx]
            pts[idx] = (x + dx, y + dy)
    state.t += 1
    return hull


def run2d(
    state: SwarmState2D,
    steps: int,
    stride: int = 1,
    sink: Callable[[Trajectory2DRow], None] | None = None,
) -> list[Trajectory2DRow]:
    """Iterate `step2d`, recording (t, centroid, diameter, hull size) rows.

    A row is recorded at t=0 and every ``stride`` ticks (plus the final
    tick); rows are returned and also pushed to ``sink`` when given.
    """
    if steps < 1:
        raise ValidationError(f"steps must be >= 1, got {steps}")
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    rows: list[Trajectory2DRow] = []

    def record() -> None:
        cx, cy = state.centroid()
        hull = convex_hull(state._pts)
        row = Trajectory2DRow(state.t, cx, cy, hull_diameter(hull), len(hull.vertices))
        rows.append(row)
        if sink is not None:
            sink(row)

    record()
    for i in range(steps):
        step2d(state)
        if state.t % stride == 0 or i == steps - 1:
            record()
    return rows
