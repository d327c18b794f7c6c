"""Plain-text SVG figures: packings, recovery keyframes and transition paths.

Output depends only on the inputs (fixed number formatting, sorted drawing
order), so identical inputs give identical bytes.
"""

from __future__ import annotations

import math

from .dubins import sample_path_array
from .geometry import Circle, Point2

POLYGON = "#000000"
SQUARE = "#808080"
CIRCLE = "#d62728"
FAILED = "#8b4513"
RECOVERY = "#1f77b4"
SURVIVOR = "#c8c8c8"
PATH = "#2ca02c"


def _f(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class _Canvas:
    def __init__(self, bounds, width=800, margin=0.05):
        x0, y0, x1, y1 = bounds
        span = max(x1 - x0, y1 - y0) or 1.0
        pad = span * margin
        self.x0, self.y0 = x0 - pad, y0 - pad
        self.w, self.h = (x1 - x0) + 2 * pad, (y1 - y0) + 2 * pad
        self.px = width
        self.stroke = span / 400.0
        self.items = []

    def add(self, s):
        self.items.append(s)

    def render(self, title=None):
        height = self.px * self.h / self.w
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(self.px)}" height="{_f(height)}" '
            f'viewBox="{_f(self.x0)} {_f(-(self.y0 + self.h))} {_f(self.w)} {_f(self.h)}">\n'
        )
        body = [head]
        if title:
            body.append(f"<title>{title}</title>\n")
        # world y points up; flip once for the whole drawing
        body.append('<g transform="scale(1,-1)">\n')
        body.extend(s + "\n" for s in self.items)
        body.append("</g>\n</svg>\n")
        return "".join(body)

    def polygon(self, poly, stroke=POLYGON, fill="none", width=2.0):
        pts = " ".join(f"{_f(v.x)},{_f(v.y)}" for v in poly.vertices)
        self.add(f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" stroke-width="{_f(width * self.stroke)}"/>')

    def square(self, sq, stroke=SQUARE, fill="none", dashed=True, opacity=1.0):
        h = sq.side / 2
        dash = f' stroke-dasharray="{_f(4 * self.stroke)},{_f(3 * self.stroke)}"' if dashed else ""
        op = f' fill-opacity="{_f(opacity)}"' if fill != "none" else ""
        self.add(
            f'<rect x="{_f(sq.center.x - h)}" y="{_f(sq.center.y - h)}" width="{_f(sq.side)}" height="{_f(sq.side)}" '
            f'fill="{fill}"{op} stroke="{stroke}" stroke-width="{_f(self.stroke)}"{dash}/>'
        )

    def circle(self, c, stroke=CIRCLE, width=1.0, dashed=False):
        dash = f' stroke-dasharray="{_f(3 * self.stroke)},{_f(3 * self.stroke)}"' if dashed else ""
        self.add(
            f'<circle cx="{_f(c.center.x)}" cy="{_f(c.center.y)}" r="{_f(c.radius)}" fill="none" '
            f'stroke="{stroke}" stroke-width="{_f(width * self.stroke)}"{dash}/>'
        )

    def polyline(self, xy, stroke=PATH, width=1.5):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in xy)
        self.add(f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{_f(width * self.stroke)}"/>')

    def arrow(self, x, y, heading, size, color=PATH):
        tip = (x + size * math.cos(heading), y + size * math.sin(heading))
        left = (x + 0.4 * size * math.cos(heading + 2.5), y + 0.4 * size * math.sin(heading + 2.5))
        right = (x + 0.4 * size * math.cos(heading - 2.5), y + 0.4 * size * math.sin(heading - 2.5))
        pts = " ".join(f"{_f(px)},{_f(py)}" for px, py in (tip, left, right))
        self.add(f'<polygon points="{pts}" fill="{color}" stroke="none"/>')


def _extent(packing):
    x0, y0, x1, y1 = packing.polygon.bounds
    for sid in packing.base_squares:
        sq = packing[sid]
        h = sq.side / 2
        x0, y0 = min(x0, sq.center.x - h), min(y0, sq.center.y - h)
        x1, y1 = max(x1, sq.center.x + h), max(y1, sq.center.y + h)
    return x0, y0, x1, y1


def render_packing(packing, fleet=None, title="packing") -> str:
    """Polygon in black, inside base squares dashed gray, loiter circles red."""
    cv = _Canvas(_extent(packing))
    for sid in packing.base_squares:
        cv.square(packing[sid])
    cv.polygon(packing.polygon)
    if fleet is None:
        circles = [Circle(packing[s].center, packing[s].circle_radius) for s in packing.base_squares]
    else:
        circles = [a.loiter_circle for a in sorted(fleet, key=lambda a: a.id) if a.mode != "dropped"]
    for c in circles:
        cv.circle(c)
    return cv.render(title)


def render_keyframe(packing, fleet, failed_squares=(), recovery_squares=(), title="keyframe",
                    show_circles=True) -> str:
    """Failed squares solid brown, surviving squares gray, recovery squares blue."""
    cv = _Canvas(_extent(packing))
    failed = set(failed_squares)
    live_sq = {a.assigned_square for a in fleet if a.mode != "dropped" and a.level == 1}
    for sid in packing.base_squares:
        sq = packing[sid]
        if sid in failed:
            cv.square(sq, stroke=FAILED, fill=FAILED, dashed=False, opacity=0.8)
        elif sid in live_sq:
            cv.square(sq, fill=SURVIVOR, opacity=0.6)
        else:
            cv.square(sq)
    for sid in sorted(set(recovery_squares)):
        cv.square(packing[sid], stroke=RECOVERY, fill=RECOVERY, dashed=False, opacity=0.25)
    cv.polygon(packing.polygon)
    if show_circles:
        for a in sorted(fleet, key=lambda a: a.id):
            if a.mode == "loitering":
                cv.circle(a.loiter_circle, stroke=CIRCLE if a.level == 1 else RECOVERY)
    return cv.render(title)


def _draw_path(cv, path, n_arrows=4, dt=None):
    dt = dt or max(path.duration / 200.0, 1e-3)
    arr = sample_path_array(path, dt)
    cv.polyline(arr[:, :2])
    if len(arr) > 1:
        step = max(1, (len(arr) - 1) // max(1, n_arrows))
        size = 8 * cv.stroke
        for k in list(range(0, len(arr) - 1, step)) + [len(arr) - 1]:
            cv.arrow(arr[k, 0], arr[k, 1], arr[k, 3], size)


def render_transitions(plans, packing=None, title="transitions") -> str:
    """Transition paths with heading arrows over origin (dashed) and target circles."""
    plans = sorted(plans, key=lambda p: (p.break_off_time, p.uav_id))
    if packing is not None:
        bounds = _extent(packing)
    else:
        xs, ys = [], []
        for p in plans:
            for c in (p.origin_circle, p.target_circle):
                xs += [c.center.x - c.radius, c.center.x + c.radius]
                ys += [c.center.y - c.radius, c.center.y + c.radius]
            arr = sample_path_array(p.path, max(p.path.duration / 50.0, 1e-3))
            xs += list(arr[:, 0])
            ys += list(arr[:, 1])
        bounds = (min(xs), min(ys), max(xs), max(ys)) if xs else (0, 0, 1, 1)
    cv = _Canvas(bounds)
    if packing is not None:
        for sid in packing.base_squares:
            cv.square(packing[sid])
        cv.polygon(packing.polygon)
    for p in plans:
        cv.circle(p.origin_circle, stroke=CIRCLE, dashed=True)
        cv.circle(p.target_circle, stroke=RECOVERY)
        _draw_path(cv, p.path)
    return cv.render(title)


def render_dubins(path, start_circle=None, goal_circle=None, r_turn=None, title="dubins") -> str:
    """One path with optional start/goal circles; turning circles at both ends when ``r_turn`` is given."""
    arr = sample_path_array(path, max(path.duration / 200.0, 1e-3))
    ends = [c for c in (start_circle, goal_circle) if c is not None]
    turns = []
    if r_turn:
        for pose in (path.start, path.goal):
            for sgn in (1, -1):
                cx = pose.x - sgn * r_turn * math.sin(pose.heading)
                cy = pose.y + sgn * r_turn * math.cos(pose.heading)
                turns.append(Circle(Point2(cx, cy), r_turn))
    every = ends + turns
    xs = list(arr[:, 0]) + [c.center.x + s * c.radius for c in every for s in (-1, 1)]
    ys = list(arr[:, 1]) + [c.center.y + s * c.radius for c in every for s in (-1, 1)]
    cv = _Canvas((min(xs), min(ys), max(xs), max(ys)))
    for c in turns:
        cv.circle(c, stroke=SQUARE, dashed=True)
    for c in ends:
        cv.circle(c)
    _draw_path(cv, path)
    return cv.render(title)
