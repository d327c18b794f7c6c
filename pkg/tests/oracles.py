"""Independent reference implementations used by the tests.

None of these import the code under test; they are written from first
principles so that agreement means something.
"""

from __future__ import annotations

import math

import numpy as np
from PIL import Image, ImageDraw

TWO_PI = 2.0 * math.pi

# frozen expected values (computed once from the closed forms noted beside them)
LENS_EQUAL_R_AT_D_EQ_R = 2.0 * math.pi / 3.0 - math.sqrt(3.0) / 2.0  # lens / r^2 = 1.2283696986...
MIN_TURN_V20_PSI05 = 20.0 ** 2 * 0.5 / 9.81  # 20.38735983690112 m
UH_BASE_SQUARES_FLAT = 165
UH_BASE_SQUARES_TOPDOWN_ORIGIN = 109

UH_X = [100, 50, 100, 200, 275, 475, 550, 650, 700, 700, 875, 875, 1075, 1075, 1250,
        1250, 1075, 1075, 875, 875, 700, 700, 650, 475, 475, 420, 330, 275, 275]
UH_Y = [1000, 500, 200, 150, 100, 100, 150, 200, 400, 100, 100, 350, 350, 100, 100,
        1000, 1000, 650, 650, 1000, 1000, 600, 1000, 1000, 350, 300, 300, 350, 1000]


# ---------------------------------------------------------------- polygons

def raster_inside(xy, points, px=1.0):
    """Point-in-polygon by rasterizing the polygon with PIL at ``px`` metres per pixel."""
    xy = np.asarray(xy, float)
    x0, y0 = xy.min(axis=0) - 2 * px
    x1, y1 = xy.max(axis=0) + 2 * px
    w, h = int(math.ceil((x1 - x0) / px)) + 1, int(math.ceil((y1 - y0) / px)) + 1
    img = Image.new("1", (w, h), 0)
    # pixel (i, j) covers [x0 + i*px, x0 + (i+1)*px); PIL samples pixel centres
    verts = [((x - x0) / px - 0.5, (y - y0) / px - 0.5) for x, y in xy]
    ImageDraw.Draw(img).polygon(verts, fill=1, outline=1)
    mask = np.array(img, dtype=bool)
    pts = np.asarray(points, float)
    i = np.floor((pts[:, 0] - x0) / px).astype(int)
    j = np.floor((pts[:, 1] - y0) / px).astype(int)
    ok = (i >= 0) & (i < w) & (j >= 0) & (j < h)
    out = np.zeros(len(pts), dtype=bool)
    out[ok] = mask[j[ok], i[ok]]
    return out


def boundary_distance(xy, points):
    """Euclidean distance from each point to the polygon boundary."""
    xy = np.asarray(xy, float)
    a = xy
    b = np.roll(xy, -1, axis=0)
    p = np.asarray(points, float)[:, None, :]
    ab = (b - a)[None]
    t = np.clip(((p - a[None]) * ab).sum(-1) / (ab ** 2).sum(-1), 0.0, 1.0)
    proj = a[None] + t[..., None] * ab
    return np.sqrt(((p - proj) ** 2).sum(-1)).min(axis=1)


def star_polygon(rng, center, r_min, r_max, n):
    """Random star-shaped (hence simple) polygon."""
    ang = np.sort(rng.uniform(0, TWO_PI, n))
    # keep consecutive angles apart so no edge is degenerate
    ang = ang + np.arange(n) * 1e-3
    rad = rng.uniform(r_min, r_max, n)
    return np.column_stack([center[0] + rad * np.cos(ang), center[1] + rad * np.sin(ang)])


def shoelace(xy):
    x, y = np.asarray(xy, float).T
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# ---------------------------------------------------------------- circles

def monte_carlo_lens(c1, r1, c2, r2, n=10_000_000, seed=0, chunk=2_000_000):
    """Area of the intersection of two disks by uniform sampling.

    Samples are drawn in a box around the lens, in a frame whose x axis runs
    through both centres, so thin lenses still get a useful hit rate.
    """
    rng = np.random.default_rng(seed)
    d = math.dist(c1, c2)
    if d >= r1 + r2:
        return 0.0
    # c1 at the origin, c2 at (d, 0)
    x_lo, x_hi = max(-r1, d - r2), min(r1, d + r2)
    y_hi = min(r1, r2)
    x0 = (d * d + r1 * r1 - r2 * r2) / (2 * d) if d > 0 else math.inf
    if 0.0 <= x0 <= d:
        y_hi = min(y_hi, math.sqrt(max(r1 * r1 - x0 * x0, 0.0)))
    box = (x_hi - x_lo) * 2 * y_hi
    hits = 0
    done = 0
    while done < n:
        m = min(chunk, n - done)
        x = rng.uniform(x_lo, x_hi, m)
        y = rng.uniform(-y_hi, y_hi, m)
        y2 = y * y
        hits += int(np.count_nonzero((x * x + y2 <= r1 * r1) & ((x - d) ** 2 + y2 <= r2 * r2)))
        done += m
    return box * hits / n


def sweep_covered(p, center, r_l, r_c, steps=1000):
    """Is ``p`` inside the footprint disk at any of ``steps`` instants of one loiter cycle?"""
    phi = np.arange(steps) * (TWO_PI / steps)
    fx = center[0] + r_l * np.cos(phi)
    fy = center[1] + r_l * np.sin(phi)
    return bool((np.hypot(p[0] - fx, p[1] - fy) <= r_c + 1e-12).any())


# ---------------------------------------------------------------- Dubins

def _m(a):
    a = a % TWO_PI
    return 0.0 if a > TWO_PI - 1e-9 else a


def _centre(x, y, h, r, side):
    # side +1 = left (CCW) circle, -1 = right (CW) circle
    return x - side * r * math.sin(h), y + side * r * math.cos(h)


def _arc(h_from, h_to, side):
    return _m(h_to - h_from) if side > 0 else _m(h_from - h_to)


def _csc(start, goal, r, word):
    x0, y0, h0 = start
    x1, y1, h1 = goal
    s0 = 1 if word[0] == "L" else -1
    s1 = 1 if word[2] == "L" else -1
    cs = _centre(x0, y0, h0, r, s0)
    cg = _centre(x1, y1, h1, r, s1)
    dx, dy = cg[0] - cs[0], cg[1] - cs[1]
    D = math.hypot(dx, dy)
    phi = math.atan2(dy, dx)
    if s0 == s1:
        theta, straight = phi, D
    else:
        if D < 2 * r:
            return math.inf
        theta = phi + s0 * math.asin(2 * r / D)
        straight = math.sqrt(max(D * D - 4 * r * r, 0.0))
    return r * (_arc(h0, theta, s0) + _arc(theta, h1, s1)) + straight


def dubins_ccc_variants(start, goal, r, word):
    """Lengths of ``word`` (LRL or RLR) for both placements of the middle circle."""
    x0, y0, h0 = start
    x1, y1, h1 = goal
    s = 1 if word[0] == "L" else -1
    cs = _centre(x0, y0, h0, r, s)
    cg = _centre(x1, y1, h1, r, s)
    dx, dy = cg[0] - cs[0], cg[1] - cs[1]
    D = math.hypot(dx, dy)
    if D > 4 * r or D < 1e-12:
        return []
    phi = math.atan2(dy, dx)
    out = []
    for sgn in (1, -1):
        alpha = sgn * math.acos(D / (4 * r))
        cm = (cs[0] + 2 * r * math.cos(phi + alpha), cs[1] + 2 * r * math.sin(phi + alpha))
        beta = math.atan2(cm[1] - cs[1], cm[0] - cs[0])
        gamma = math.atan2(cg[1] - cm[1], cg[0] - cm[0])
        # heading on an s-circle at polar angle a is a + s*pi/2
        ha = beta + s * math.pi / 2
        hb = gamma - s * math.pi / 2
        out.append(r * (_arc(h0, ha, s) + _arc(ha, hb, -s) + _arc(hb, h1, s)))
    return out


def dubins_word_lengths(start, goal, r):
    """Horizontal length of every word by explicit tangent construction.

    ``start``/``goal`` are (x, y, heading). CCC words report the shorter of the
    two middle-circle placements.
    """
    out = {w: _csc(start, goal, r, w) for w in ("LSL", "RSR", "LSR", "RSL")}
    for w in ("LRL", "RLR"):
        v = dubins_ccc_variants(start, goal, r, w)
        out[w] = min(v) if v else math.inf
    return out


def dubins_oracle_length(start, goal, r):
    return min(dubins_word_lengths(start, goal, r).values())


def horizontal_curvature(xy, dt):
    """Finite-difference curvature of a uniformly time-sampled planar curve."""
    xy = np.asarray(xy, float)
    d1 = (xy[2:] - xy[:-2]) / (2 * dt)
    d2 = (xy[2:] - 2 * xy[1:-1] + xy[:-2]) / dt ** 2
    cross = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    speed = np.hypot(d1[:, 0], d1[:, 1])
    return cross / np.maximum(speed, 1e-300) ** 3


def wrap_pm(a):
    return (a + math.pi) % TWO_PI - math.pi
