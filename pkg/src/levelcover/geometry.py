"""Planar and 3D primitives: points, poses, polygons, circles.

Everything here is a pure function over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import InvalidPolygonError, InvalidResolutionError, LevelCoverError

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Map an angle to [0, 2*pi)."""
    a = math.fmod(a, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    if a >= TWO_PI:
        a = 0.0
    return a


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise LevelCoverError(f"non-finite point ({self.x}, {self.y})")

    def distance(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class Pose3:
    """Position, altitude and heading (radians, counter-clockwise from +x)."""

    x: float
    y: float
    h: float
    heading: float

    def __post_init__(self):
        for v in (self.x, self.y, self.h, self.heading):
            if not math.isfinite(v):
                raise LevelCoverError("non-finite pose component")
        if self.h < 0.0:
            raise LevelCoverError(f"negative altitude {self.h}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def xy(self) -> Point2:
        return Point2(self.x, self.y)

    def distance3(self, other: "Pose3") -> float:
        return math.sqrt((self.x - other.x) ** 2 + (self.y - other.y) ** 2 + (self.h - other.h) ** 2)

    def to_dict(self):
        return {"x": self.x, "y": self.y, "h": self.h, "heading": self.heading}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["x"]), float(d["y"]), float(d.get("h", 0.0)), float(d.get("heading", 0.0)))


@dataclass(frozen=True)
class Circle:
    center: Point2
    radius: float

    def __post_init__(self):
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise LevelCoverError(f"circle radius must be positive, got {self.radius}")

    def to_dict(self):
        return {"x": self.center.x, "y": self.center.y, "r": self.radius}


def _segments_properly_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True
    return False


def _on_segment(a, b, p, tol) -> bool:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(px - ax, py - ay) <= tol
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy)) <= tol


def segments_intersect(p1, p2, q1, q2, tol=0.0) -> bool:
    """Closed segment intersection (touching counts)."""
    if _segments_properly_cross(p1, p2, q1, q2):
        return True
    return (
        _on_segment(q1, q2, p1, tol)
        or _on_segment(q1, q2, p2, tol)
        or _on_segment(p1, p2, q1, tol)
        or _on_segment(p1, p2, q2, tol)
    )


class Polygon:
    """A simple polygon, implicitly closed.

    Parameters
    ----------
    vertices : sequence of (x, y) pairs or Point2
    check_simple : bool
        Run the O(n^2) self-intersection check.
    """

    def __init__(self, vertices: Iterable, check_simple: bool = True):
        pts = []
        for v in vertices:
            if isinstance(v, Point2):
                pts.append((v.x, v.y))
            else:
                x, y = v
                pts.append((float(x), float(y)))
        # a repeated closing vertex is tolerated
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts = pts[:-1]
        if len(pts) < 3:
            raise InvalidPolygonError(f"polygon needs at least 3 vertices, got {len(pts)}")
        arr = np.asarray(pts, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InvalidPolygonError("polygon has non-finite coordinates")
        self._xy = arr
        self._xy.setflags(write=False)
        if abs(self.signed_area) <= 1e-12 * max(1.0, self.extent) ** 2:
            raise InvalidPolygonError("polygon has zero area")
        if check_simple and not self.is_simple():
            raise InvalidPolygonError("polygon is self-intersecting")

    @classmethod
    def from_xy(cls, xs: Sequence[float], ys: Sequence[float], **kw) -> "Polygon":
        if len(xs) != len(ys):
            raise InvalidPolygonError(f"X has {len(xs)} vertices but Y has {len(ys)}")
        return cls(list(zip(xs, ys)), **kw)

    @property
    def xy(self) -> np.ndarray:
        return self._xy

    @property
    def vertices(self):
        return [Point2(float(x), float(y)) for x, y in self._xy]

    def __len__(self):
        return len(self._xy)

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self._xy, other._xy)

    def __hash__(self):
        return hash(self._xy.tobytes())

    def __repr__(self):
        return f"Polygon(n={len(self)}, bounds={self.bounds})"

    @property
    def bounds(self):
        mn = self._xy.min(axis=0)
        mx = self._xy.max(axis=0)
        return (float(mn[0]), float(mn[1]), float(mx[0]), float(mx[1]))

    @property
    def extent(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return max(x1 - x0, y1 - y0)

    @property
    def signed_area(self) -> float:
        x = self._xy[:, 0]
        y = self._xy[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def area(self) -> float:
        return abs(self.signed_area)

    def edges(self):
        n = len(self._xy)
        for i in range(n):
            a = self._xy[i]
            b = self._xy[(i + 1) % n]
            yield (float(a[0]), float(a[1])), (float(b[0]), float(b[1]))

    def is_simple(self) -> bool:
        edges = list(self.edges())
        n = len(edges)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    # adjacent edges share a vertex; only a collinear fold-back is bad
                    a1, a2 = edges[i]
                    b1, b2 = edges[j]
                    a_far, b_far = (a1, b2) if j == i + 1 else (a2, b1)
                    if _on_segment(b1, b2, a_far, 0.0) or _on_segment(a1, a2, b_far, 0.0):
                        return False
                    continue
                if segments_intersect(*edges[i], *edges[j]):
                    return False
        return True

    @property
    def boundary_tol(self) -> float:
        return 1e-9 * max(1.0, self.extent)

    def to_dict(self):
        return {"x": self._xy[:, 0].tolist(), "y": self._xy[:, 1].tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls.from_xy(d["x"], d["y"])


def points_in_polygon(points, poly: Polygon, tol: float | None = None) -> np.ndarray:
    """Vectorized crossing-number test; boundary points count as inside."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if tol is None:
        tol = poly.boundary_tol
    px = pts[:, 0]
    py = pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    xy = poly.xy
    n = len(xy)
    for i in range(n):
        x1, y1 = xy[i]
        x2, y2 = xy[(i + 1) % n]
        cond = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (x2 - x1) * (py - y1) / (y2 - y1) + x1
        inside ^= cond & (px < xint)
        dx, dy = x2 - x1, y2 - y1
        L2 = dx * dx + dy * dy
        t = np.clip(((px - x1) * dx + (py - y1) * dy) / L2, 0.0, 1.0)
        d2 = (px - (x1 + t * dx)) ** 2 + (py - (y1 + t * dy)) ** 2
        on_edge |= d2 <= tol * tol
    return inside | on_edge


def point_in_polygon(p, poly: Polygon) -> bool:
    if isinstance(p, Point2):
        p = (p.x, p.y)
    return bool(points_in_polygon([p], poly)[0])


def circle_overlap_area(c1: Circle, c2: Circle) -> float:
    """Exact area of the intersection lens of two circles."""
    r1, r2 = c1.radius, c2.radius
    d = c1.center.distance(c2.center)
    if d >= r1 + r2:
        return 0.0
    rs = min(r1, r2)
    if d <= abs(r1 - r2):
        return math.pi * rs * rs
    a1 = math.acos(max(-1.0, min(1.0, (d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1))))
    a2 = math.acos(max(-1.0, min(1.0, (d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2))))
    k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)
    return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * math.sqrt(max(0.0, k))


def circle_grid(c: Circle, resolution: float) -> np.ndarray:
    """Cell centres of a lattice of spacing ``resolution``, symmetric about the
    circle centre, that fall inside the circle."""
    if not resolution > 0.0:
        raise InvalidResolutionError(f"resolution must be positive, got {resolution}")
    if resolution > c.radius:
        raise InvalidResolutionError(f"resolution {resolution} exceeds circle radius {c.radius}")
    k = int(math.ceil(c.radius / resolution))
    offs = (np.arange(-k, k) + 0.5) * resolution
    gx, gy = np.meshgrid(offs, offs)
    mask = gx * gx + gy * gy <= c.radius * c.radius
    return np.column_stack([gx[mask] + c.center.x, gy[mask] + c.center.y])


def circle_fraction_outside(c: Circle, poly: Polygon, resolution: float) -> float:
    """Fraction of the disk lying outside ``poly``, by deterministic grid sampling."""
    pts = circle_grid(c, resolution)
    inside = points_in_polygon(pts, poly)
    return 1.0 - float(inside.sum()) / len(pts)


def square_vertices(center: Point2, side: float):
    """Corners of an axis-aligned square, counter-clockwise from the lower-left."""
    if not side > 0.0:
        raise LevelCoverError(f"square side must be positive, got {side}")
    h = side / 2.0
    cx, cy = center.x, center.y
    return [Point2(cx - h, cy - h), Point2(cx + h, cy - h), Point2(cx + h, cy + h), Point2(cx - h, cy + h)]


def square_intersects_polygon(center: Point2, side: float, poly: Polygon) -> bool:
    """True when the closed square and the closed polygon share any point."""
    corners = square_vertices(center, side)
    if points_in_polygon([(p.x, p.y) for p in corners], poly).any():
        return True
    h = side / 2.0
    xy = poly.xy
    if np.any(
        (np.abs(xy[:, 0] - center.x) <= h) & (np.abs(xy[:, 1] - center.y) <= h)
    ):
        return True
    sq_edges = [((corners[i].x, corners[i].y), (corners[(i + 1) % 4].x, corners[(i + 1) % 4].y)) for i in range(4)]
    for a, b in poly.edges():
        for s1, s2 in sq_edges:
            if segments_intersect(a, b, s1, s2):
                return True
    return False
