"""Four-level hierarchical square packing of a polygonal area.

The bounding square has side ``16 * r_l_min``. It is bisected on both axes while
the side exceeds ``sqrt(2) * r_l_min``, which always takes four bisections and
yields level-4 squares of side ``8 * r_l_min`` down to level-1 (base) squares of
side ``r_l_min``. Each square is then classified against the polygon.

Classification modes
--------------------
``vertex``
    A square is kept when at least one of its four corners lies inside the
    polygon (boundary inclusive).
``robust``
    A square is kept when it shares any point with the polygon, which also
    catches squares crossed by an edge and squares that contain the polygon.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import FleetConfig, loiter_radius_for_level, min_turn_radius  # noqa: F401  (re-exported)
from .exceptions import AreaTooLargeError, InvalidConfigError, NoSuperSquareError
from .geometry import Point2, Polygon, points_in_polygon, square_intersects_polygon

SCHEMA_VERSION = 1
CLASSIFICATIONS = ("vertex", "robust")
# child order inside a parent: SW, SE, NW, NE
_CHILD_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))


@dataclass(frozen=True)
class BoundingSquare:
    min_corner: Point2
    side: float

    @property
    def max_corner(self) -> Point2:
        return Point2(self.min_corner.x + self.side, self.min_corner.y + self.side)


@dataclass(frozen=True)
class PackSquare:
    id: int
    level: int
    center: Point2
    side: float
    parent: int | None
    children: tuple
    inside: bool
    vertex_inside_count: int
    ix: int
    iy: int

    @property
    def circle_radius(self) -> float:
        # the loiter circle of a level-i square has radius 2**(i-1) * r_l_min == side
        return self.side

    def contains_point(self, p: Point2, tol: float = 1e-9) -> bool:
        h = self.side / 2 + tol
        return abs(p.x - self.center.x) <= h and abs(p.y - self.center.y) <= h

    def to_dict(self):
        return {
            "id": self.id,
            "level": self.level,
            "center": [self.center.x, self.center.y],
            "side": self.side,
            "parent": self.parent,
            "children": list(self.children),
            "inside": self.inside,
            "vertex_inside_count": self.vertex_inside_count,
            "ix": self.ix,
            "iy": self.iy,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=int(d["id"]),
            level=int(d["level"]),
            center=Point2(*map(float, d["center"])),
            side=float(d["side"]),
            parent=None if d["parent"] is None else int(d["parent"]),
            children=tuple(int(c) for c in d["children"]),
            inside=bool(d["inside"]),
            vertex_inside_count=int(d["vertex_inside_count"]),
            ix=int(d["ix"]),
            iy=int(d["iy"]),
        )


class Packing:
    """The full square tree over the bounding square plus its classification."""

    def __init__(self, config, polygon, bounding, squares, classification="vertex", anchor="per-axis", top_down=False):
        self.config = config
        self.polygon = polygon
        self.bounding = bounding
        self.squares = tuple(squares)
        self.classification = classification
        self.anchor = anchor
        self.top_down = top_down
        self.base_squares = tuple(s.id for s in self.squares if s.level == 1 and s.inside)
        self._by_grid = {(s.level, s.ix, s.iy): s.id for s in self.squares}

    def __getitem__(self, sq_id: int) -> PackSquare:
        return self.squares[sq_id]

    def __len__(self):
        return len(self.squares)

    def level_squares(self, level: int, inside_only: bool = False):
        return [s for s in self.squares if s.level == level and (s.inside or not inside_only)]

    @property
    def roots(self):
        return [s.id for s in self.squares if s.parent is None]

    def super_square_of(self, sq_id: int) -> int:
        sq = self.squares[sq_id]
        if sq.parent is None:
            raise NoSuperSquareError(f"square {sq_id} is at level {sq.level} and has no super-square")
        return sq.parent

    def sibling_group(self, sq_id: int):
        """Inside-classified children of the parent of ``sq_id`` (including itself)."""
        parent = self.super_square_of(sq_id)
        return [c for c in self.squares[parent].children if self.squares[c].inside]

    def ancestors(self, sq_id: int):
        out = []
        p = self.squares[sq_id].parent
        while p is not None:
            out.append(p)
            p = self.squares[p].parent
        return out

    def descendants(self, sq_id: int):
        out = []
        stack = list(self.squares[sq_id].children)
        while stack:
            c = stack.pop()
            out.append(c)
            stack.extend(self.squares[c].children)
        return sorted(out)

    def is_within(self, sq_id: int, ancestor_id: int) -> bool:
        return sq_id == ancestor_id or ancestor_id in self.ancestors(sq_id)

    def adjacent_squares(self, sq_id: int):
        """Same-level squares sharing an edge or a corner with ``sq_id``."""
        sq = self.squares[sq_id]
        out = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                k = (sq.level, sq.ix + dx, sq.iy + dy)
                if k in self._by_grid:
                    out.append(self._by_grid[k])
        return sorted(out)

    def locate(self, p: Point2, level: int = 1):
        """Id of the level square whose closed extent contains ``p``, or None."""
        b = self.bounding
        side = b.side / 2 ** (5 - level)
        ix = math.floor((p.x - b.min_corner.x) / side)
        iy = math.floor((p.y - b.min_corner.y) / side)
        n = 2 ** (5 - level)
        if p.x == b.min_corner.x + b.side:
            ix = n - 1
        if p.y == b.min_corner.y + b.side:
            iy = n - 1
        return self._by_grid.get((level, ix, iy))

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "polygon": self.polygon.to_dict(),
            "bounding": {
                "min_corner": [self.bounding.min_corner.x, self.bounding.min_corner.y],
                "side": self.bounding.side,
            },
            "classification": self.classification,
            "anchor": list(self.anchor) if isinstance(self.anchor, tuple) else self.anchor,
            "top_down": self.top_down,
            "base_count": len(self.base_squares),
            "base_squares": list(self.base_squares),
            "squares": [s.to_dict() for s in self.squares],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @classmethod
    def from_dict(cls, d) -> "Packing":
        b = d["bounding"]
        anchor = d.get("anchor", "per-axis")
        if isinstance(anchor, list):
            anchor = tuple(anchor)
        return cls(
            FleetConfig.from_dict(d["config"]),
            Polygon.from_dict(d["polygon"]),
            BoundingSquare(Point2(*map(float, b["min_corner"])), float(b["side"])),
            [PackSquare.from_dict(s) for s in d["squares"]],
            classification=d.get("classification", "vertex"),
            anchor=anchor,
            top_down=bool(d.get("top_down", False)),
        )


def bounding_anchor(poly: Polygon, anchor="per-axis") -> Point2:
    """Lower-left corner of the bounding square.

    ``"per-axis"`` uses (min X, min Y); ``"scalar"`` uses min(min X, min Y) on both
    axes; a pair of numbers is taken verbatim.
    """
    x0, y0, _, _ = poly.bounds
    if anchor == "per-axis":
        return Point2(x0, y0)
    if anchor == "scalar":
        m = min(x0, y0)
        return Point2(m, m)
    if isinstance(anchor, (tuple, list)) and len(anchor) == 2:
        return Point2(float(anchor[0]), float(anchor[1]))
    raise InvalidConfigError(f"unknown anchor {anchor!r}")


def _check_extent(poly: Polygon, corner: Point2, side: float, r_l_min: float):
    x0, y0, x1, y1 = poly.bounds
    tol = 1e-9 * max(1.0, side)
    need = max(x1 - corner.x, y1 - corner.y)
    if x0 < corner.x - tol or y0 < corner.y - tol or need > side + tol:
        span = max(x1 - min(x0, corner.x), y1 - min(y0, corner.y))
        mult = 2 ** math.ceil(math.log2(span / r_l_min)) if span > 0 else 1
        raise AreaTooLargeError(
            f"area does not fit the {side:g} m bounding square (16 x r_l_min); "
            f"a bounding multiple of {mult} x r_l_min would be required",
            required_multiple=mult,
        )


def build_packing(
    poly: Polygon,
    config: FleetConfig,
    classification: str = "vertex",
    anchor="per-axis",
    top_down: bool = False,
) -> Packing:
    """Build and classify the square hierarchy.

    With ``top_down=True`` a square is only kept when its parent is kept too.
    This variant is not used for deployment; it exists to reproduce the pruned
    counts discussed in the README.
    """
    if classification not in CLASSIFICATIONS:
        raise InvalidConfigError(f"classification must be one of {CLASSIFICATIONS}")
    r = config.r_l_min
    corner = bounding_anchor(poly, anchor)
    bside = 16.0 * r
    _check_extent(poly, corner, bside, r)
    bounding = BoundingSquare(corner, bside)

    # bisection loop: halve while the side exceeds sqrt(2) * r_l_min
    sides = []
    side = bside
    while side > math.sqrt(2.0) * r:
        side /= 2.0
        sides.append(side)
    assert len(sides) == 4, sides

    squares: list[PackSquare] = []
    # frontier of (ix, iy, parent_id) per level, coarsest first
    frontier = [(ix, iy, None) for iy in (0, 1) for ix in (0, 1)]
    for depth, side in enumerate(sides):
        level = 4 - depth
        centers = np.array(
            [(corner.x + (ix + 0.5) * side, corner.y + (iy + 0.5) * side) for ix, iy, _ in frontier]
        )
        h = side / 2.0
        corners = np.concatenate(
            [centers + np.array([sx * h, sy * h]) for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
        )
        vin = points_in_polygon(corners, poly).reshape(4, -1).sum(axis=0)
        base_id = len(squares)
        for k, (ix, iy, parent) in enumerate(frontier):
            cnt = int(vin[k])
            c = Point2(float(centers[k, 0]), float(centers[k, 1]))
            if classification == "vertex":
                inside = cnt >= 1
            else:
                inside = cnt >= 1 or square_intersects_polygon(c, side, poly)
            if top_down and parent is not None:
                inside = inside and squares[parent].inside
            squares.append(PackSquare(base_id + k, level, c, side, parent, (), inside, cnt, ix, iy))
        if level > 1:
            nxt = []
            for k, (ix, iy, _) in enumerate(frontier):
                pid = base_id + k
                kids = []
                for dx, dy in _CHILD_OFFSETS:
                    kids.append(base_id + len(frontier) + len(nxt))
                    nxt.append((2 * ix + dx, 2 * iy + dy, pid))
                sq = squares[pid]
                squares[pid] = PackSquare(
                    sq.id, sq.level, sq.center, sq.side, sq.parent, tuple(kids), sq.inside,
                    sq.vertex_inside_count, sq.ix, sq.iy,
                )
            frontier = nxt
    return Packing(config, poly, bounding, squares, classification, anchor, top_down)
