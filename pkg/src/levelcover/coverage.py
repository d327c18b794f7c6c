"""Per-cycle coverage, effective coverage and the full-coverage predicate.

Over one loiter cycle the footprint disk (radius ``r_c``) of an agent circling at
radius ``r_l`` sweeps the annulus ``max(0, r_l - r_c) <= d <= r_l + r_c`` about
the loiter centre. A point is covered when it lies in that region for at least
one loitering agent. Dropped and transitioning agents cover nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import InvalidResolutionError
from .fleet import LOITERING, coverage_radius, quality
from .geometry import Point2, Polygon, circle_fraction_outside, circle_overlap_area, points_in_polygon


def cycle_cover_bounds(agent, fov_half_angle: float):
    r_l = agent.loiter_circle.radius
    r_c = coverage_radius(agent.altitude, fov_half_angle)
    return max(0.0, r_l - r_c), r_l + r_c


def cycle_covered_region_test(p, agent, fov_half_angle: float) -> bool:
    if agent.mode != LOITERING:
        return False
    if isinstance(p, Point2):
        p = (p.x, p.y)
    r_in, r_out = cycle_cover_bounds(agent, fov_half_angle)
    c = agent.loiter_circle.center
    d = math.hypot(p[0] - c.x, p[1] - c.y)
    return r_in <= d <= r_out


def effective_coverage(agent, neighbors, poly: Polygon, resolution: float | None = None) -> float:
    """(1 - f) * pi * r_l**2 minus the lens overlap with each same-level neighbour, floored at 0."""
    if agent.mode != LOITERING:
        return 0.0
    circle = agent.loiter_circle
    if resolution is None:
        resolution = circle.radius / 20.0
    f = circle_fraction_outside(circle, poly, resolution)
    e = (1.0 - f) * math.pi * circle.radius ** 2
    for nb in neighbors:
        if nb.id == agent.id or nb.mode != LOITERING or nb.level != agent.level:
            continue
        e -= circle_overlap_area(circle, nb.loiter_circle)
    return max(0.0, e)


@dataclass
class CoverageGrid:
    resolution: float
    samples: np.ndarray
    covered: np.ndarray
    covering_count: np.ndarray
    best_quality: np.ndarray


@dataclass
class CoverageReport:
    fraction_covered: float
    uncovered_samples: list
    per_agent_effective: dict
    total_overlap: float
    mean_quality: float
    n_samples: int = 0
    resolution: float = 0.0
    live_count: int = 0
    loitering_count: int = 0
    instantaneous_fraction: float | None = None
    union_area: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def fully_covered(self) -> bool:
        return not self.uncovered_samples and self.n_samples > 0

    def to_dict(self, max_uncovered: int | None = None):
        unc = self.uncovered_samples if max_uncovered is None else self.uncovered_samples[:max_uncovered]
        return {
            "fraction_covered": self.fraction_covered,
            "fully_covered": self.fully_covered,
            "n_samples": self.n_samples,
            "n_uncovered": len(self.uncovered_samples),
            "uncovered_samples": [list(p) for p in unc],
            "per_agent_effective": {str(k): v for k, v in sorted(self.per_agent_effective.items())},
            "total_overlap": self.total_overlap,
            "mean_quality": self.mean_quality,
            "resolution": self.resolution,
            "live_count": self.live_count,
            "loitering_count": self.loitering_count,
            "instantaneous_fraction": self.instantaneous_fraction,
            "union_area": self.union_area,
        }


@lru_cache(maxsize=32)
def _lattice(poly: Polygon, resolution: float):
    x0, y0, x1, y1 = poly.bounds
    xs = np.arange(x0 + resolution / 2, x1, resolution)
    ys = np.arange(y0 + resolution / 2, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    inside = points_in_polygon(np.column_stack([gx.ravel(), gy.ravel()]), poly).reshape(gx.shape)
    xs.setflags(write=False)
    ys.setflags(write=False)
    inside.setflags(write=False)
    return xs, ys, inside


def _accumulate(xs, ys, shape, centers, r_in, r_out):
    """Count, per lattice node, the annuli (centre, r_in, r_out) containing it."""
    count = np.zeros(shape, dtype=np.int32)
    for (cx, cy), ri, ro in zip(centers, r_in, r_out):
        i0 = np.searchsorted(xs, cx - ro, "left")
        i1 = np.searchsorted(xs, cx + ro, "right")
        j0 = np.searchsorted(ys, cy - ro, "left")
        j1 = np.searchsorted(ys, cy + ro, "right")
        if i0 >= i1 or j0 >= j1:
            continue
        dx = xs[i0:i1] - cx
        dy = ys[j0:j1] - cy
        d2 = dy[:, None] ** 2 + dx[None, :] ** 2
        hit = d2 <= ro * ro
        if ri > 0:
            hit &= d2 >= ri * ri
        count[j0:j1, i0:i1] += hit
    return count


def coverage_grid(fleet, poly: Polygon, resolution: float, fov_half_angle: float) -> CoverageGrid:
    xs, ys, inside = _lattice(poly, float(resolution))
    loit = [a for a in fleet if a.mode == LOITERING]
    count = np.zeros(inside.shape, dtype=np.int32)
    best_q = np.zeros(inside.shape)
    for lvl in sorted({a.level for a in loit}):
        group = [a for a in loit if a.level == lvl]
        bounds = [cycle_cover_bounds(a, fov_half_angle) for a in group]
        c = _accumulate(
            xs, ys, inside.shape,
            [(a.loiter_circle.center.x, a.loiter_circle.center.y) for a in group],
            [b[0] for b in bounds], [b[1] for b in bounds],
        )
        count += c
        best_q = np.where(c > 0, np.maximum(best_q, quality(lvl)), best_q)
    gx, gy = np.meshgrid(xs, ys)
    sel = inside.ravel()
    samples = np.column_stack([gx.ravel()[sel], gy.ravel()[sel]])
    cnt = count.ravel()[sel]
    return CoverageGrid(resolution, samples, cnt > 0, cnt, best_q.ravel()[sel])


def instantaneous_fraction(fleet, poly: Polygon, resolution: float, fov_half_angle: float) -> float:
    """Diagnostic: fraction of samples inside some agent's current footprint disk."""
    xs, ys, inside = _lattice(poly, float(resolution))
    loit = [a for a in fleet if a.mode == LOITERING]
    if not inside.any():
        return 0.0
    if not loit:
        return 0.0
    centers = [(a.position.x, a.position.y) for a in loit]
    r_out = [coverage_radius(a.position.h, fov_half_angle) for a in loit]
    count = _accumulate(xs, ys, inside.shape, centers, [0.0] * len(loit), r_out)
    return float(((count > 0) & inside).sum()) / float(inside.sum())


def _neighbors_of(agent, loit, r_com):
    c = agent.loiter_circle.center
    return [
        b for b in loit
        if b.id != agent.id and b.level == agent.level
        and (r_com is None or math.hypot(b.loiter_circle.center.x - c.x, b.loiter_circle.center.y - c.y) <= r_com)
    ]


def verify_full_coverage(
    fleet, poly: Polygon, resolution: float, config, per_agent: bool = True, instantaneous: bool = True
) -> CoverageReport:
    """Evaluate the per-cycle full-coverage predicate on a sample lattice.

    ``resolution`` must not exceed ``config.r_l_min / 10``.
    """
    if not resolution > 0 or resolution > config.r_l_min / 10.0 * (1 + 1e-12):
        raise InvalidResolutionError(
            f"resolution {resolution} must be positive and at most r_l_min/10 = {config.r_l_min / 10.0:g}"
        )
    fleet = list(fleet)
    grid = coverage_grid(fleet, poly, resolution, config.fov_half_angle)
    n = len(grid.samples)
    if n == 0:
        raise InvalidResolutionError("no lattice sample falls inside the polygon")
    n_cov = int(grid.covered.sum())
    fraction = 1.0 if n_cov == n else n_cov / n
    uncovered = [(float(x), float(y)) for x, y in grid.samples[~grid.covered]]
    loit = [a for a in fleet if a.mode == LOITERING]
    mean_q = float(grid.best_quality[grid.covered].mean()) if n_cov else 0.0

    per_agent_e = {}
    overlap = 0.0
    by_level = {}
    for a in loit:
        by_level.setdefault(a.level, []).append(a)
    for group in by_level.values():
        for i, a in enumerate(group):
            for b in group[i + 1:]:
                overlap += circle_overlap_area(a.loiter_circle, b.loiter_circle)
    if per_agent:
        for a in loit:
            per_agent_e[a.id] = effective_coverage(
                a, _neighbors_of(a, loit, config.r_com), poly, min(resolution, a.loiter_circle.radius)
            )
    return CoverageReport(
        fraction_covered=fraction,
        uncovered_samples=uncovered,
        per_agent_effective=per_agent_e,
        total_overlap=overlap,
        mean_quality=mean_q,
        n_samples=n,
        resolution=resolution,
        live_count=sum(1 for a in fleet if a.mode != "dropped"),
        loitering_count=len(loit),
        instantaneous_fraction=(
            instantaneous_fraction(fleet, poly, resolution, config.fov_half_angle) if instantaneous else None
        ),
        union_area=n_cov * resolution * resolution,
    )
