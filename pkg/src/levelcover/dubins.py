"""Curvature-bounded transition paths between loiter circles.

Planar paths use the six classical words (LSL, RSR, LSR, RSL, RLR, LRL). A path
that must change altitude is lifted to 3D by turning its arcs into helices
(``Hl``/``Hr``) with a common climb rate; when the arcs are too short for the
configured maximum climb rate, whole helix loops are added to the last arc.
Horizontal speed is constant throughout.

Level transitions choose the break-off point on the current circle and the
join-in point on the target circle so the agent arrives exactly at the target
level's clock phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .exceptions import InvalidModeError, PlanningError, SynchronizationError
from .fleet import altitude_for_level, loiter_pose
from .geometry import TWO_PI, Circle, Pose3, wrap_angle

WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")
PRIMITIVES = ("S", "L", "R", "Hl", "Hr", "N")
_SNAP = 1e-11
PHASE_TOL = 1e-6
# finite stand-in for an infeasible break-off point inside the bounded search
_BIG = 1e12


def _mod2pi(a):
    a = np.mod(a, TWO_PI)
    return np.where(a > TWO_PI - _SNAP, 0.0, a)


def _word_params(x0, y0, h0, gx, gy, gh, r):
    """Normalised segment parameters for all six words.

    Returns an array of shape (n, 6, 3); infeasible words are NaN. Turning
    parameters are angles, the straight parameter is a length divided by ``r``.
    """
    gx = np.atleast_1d(np.asarray(gx, dtype=float))
    gy = np.atleast_1d(np.asarray(gy, dtype=float))
    gh = np.atleast_1d(np.asarray(gh, dtype=float))
    dx = gx - x0
    dy = gy - y0
    D = np.hypot(dx, dy)
    d = D / r
    theta = np.where(D > 0, _mod2pi(np.arctan2(dy, dx)), 0.0)
    a = _mod2pi(h0 - theta)
    b = _mod2pi(gh - theta)
    sa, sb, ca, cb = np.sin(a), np.sin(b), np.cos(a), np.cos(b)
    cab = np.cos(a - b)
    d2 = d * d
    out = np.full((len(d), 6, 3), np.nan)

    with np.errstate(invalid="ignore"):
        # LSL
        psq = 2 + d2 - 2 * cab + 2 * d * (sa - sb)
        ok = psq >= 0
        t1 = np.arctan2(cb - ca, d + sa - sb)
        out[:, 0, 0] = np.where(ok, _mod2pi(t1 - a), np.nan)
        out[:, 0, 1] = np.where(ok, np.sqrt(np.maximum(psq, 0)), np.nan)
        out[:, 0, 2] = np.where(ok, _mod2pi(b - t1), np.nan)
        # RSR
        psq = 2 + d2 - 2 * cab + 2 * d * (sb - sa)
        ok = psq >= 0
        t1 = np.arctan2(ca - cb, d - sa + sb)
        out[:, 1, 0] = np.where(ok, _mod2pi(a - t1), np.nan)
        out[:, 1, 1] = np.where(ok, np.sqrt(np.maximum(psq, 0)), np.nan)
        out[:, 1, 2] = np.where(ok, _mod2pi(t1 - b), np.nan)
        # LSR
        psq = -2 + d2 + 2 * cab + 2 * d * (sa + sb)
        ok = psq >= 0
        p = np.sqrt(np.maximum(psq, 0))
        t0 = np.arctan2(-ca - cb, d + sa + sb) - np.arctan2(-2.0, p)
        out[:, 2, 0] = np.where(ok, _mod2pi(t0 - a), np.nan)
        out[:, 2, 1] = np.where(ok, p, np.nan)
        out[:, 2, 2] = np.where(ok, _mod2pi(t0 - b), np.nan)
        # RSL
        psq = -2 + d2 + 2 * cab - 2 * d * (sa + sb)
        ok = psq >= 0
        p = np.sqrt(np.maximum(psq, 0))
        t0 = np.arctan2(ca + cb, d - sa - sb) - np.arctan2(2.0, p)
        out[:, 3, 0] = np.where(ok, _mod2pi(a - t0), np.nan)
        out[:, 3, 1] = np.where(ok, p, np.nan)
        out[:, 3, 2] = np.where(ok, _mod2pi(b - t0), np.nan)
        # RLR
        tmp = (6 - d2 + 2 * cab + 2 * d * (sa - sb)) / 8
        ok = np.abs(tmp) <= 1
        phi = np.arctan2(ca - cb, d - sa + sb)
        p = _mod2pi(TWO_PI - np.arccos(np.clip(tmp, -1, 1)))
        t = _mod2pi(a - phi + _mod2pi(p / 2))
        out[:, 4, 0] = np.where(ok, t, np.nan)
        out[:, 4, 1] = np.where(ok, p, np.nan)
        out[:, 4, 2] = np.where(ok, _mod2pi(a - b - t + p), np.nan)
        # LRL
        tmp = (6 - d2 + 2 * cab + 2 * d * (sb - sa)) / 8
        ok = np.abs(tmp) <= 1
        phi = np.arctan2(ca - cb, d + sa - sb)
        p = _mod2pi(TWO_PI - np.arccos(np.clip(tmp, -1, 1)))
        t = _mod2pi(-a - phi + p / 2)
        out[:, 5, 0] = np.where(ok, t, np.nan)
        out[:, 5, 1] = np.where(ok, p, np.nan)
        out[:, 5, 2] = np.where(ok, _mod2pi(b - a - t + p), np.nan)
    return out


def _m2p(a):
    a = math.fmod(a, TWO_PI)
    if a < 0:
        a += TWO_PI
    return 0.0 if a > TWO_PI - _SNAP else a


def _word_params_scalar(x0, y0, h0, gx, gy, gh, r):
    """Scalar twin of :func:`_word_params`; returns six (t, p, q) tuples or None."""
    dx, dy = gx - x0, gy - y0
    D = math.hypot(dx, dy)
    d = D / r
    theta = _m2p(math.atan2(dy, dx)) if D > 0 else 0.0
    a = _m2p(h0 - theta)
    b = _m2p(gh - theta)
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    cab = math.cos(a - b)
    d2 = d * d
    out = [None] * 6
    psq = 2 + d2 - 2 * cab + 2 * d * (sa - sb)
    if psq >= 0:
        t1 = math.atan2(cb - ca, d + sa - sb)
        out[0] = (_m2p(t1 - a), math.sqrt(psq), _m2p(b - t1))
    psq = 2 + d2 - 2 * cab + 2 * d * (sb - sa)
    if psq >= 0:
        t1 = math.atan2(ca - cb, d - sa + sb)
        out[1] = (_m2p(a - t1), math.sqrt(psq), _m2p(t1 - b))
    psq = -2 + d2 + 2 * cab + 2 * d * (sa + sb)
    if psq >= 0:
        p = math.sqrt(psq)
        t0 = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        out[2] = (_m2p(t0 - a), p, _m2p(t0 - b))
    psq = -2 + d2 + 2 * cab - 2 * d * (sa + sb)
    if psq >= 0:
        p = math.sqrt(psq)
        t0 = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        out[3] = (_m2p(a - t0), p, _m2p(b - t0))
    tmp = (6 - d2 + 2 * cab + 2 * d * (sa - sb)) / 8
    if abs(tmp) <= 1:
        phi = math.atan2(ca - cb, d - sa + sb)
        p = _m2p(TWO_PI - math.acos(tmp))
        t = _m2p(a - phi + _m2p(p / 2))
        out[4] = (t, p, _m2p(a - b - t + p))
    tmp = (6 - d2 + 2 * cab + 2 * d * (sb - sa)) / 8
    if abs(tmp) <= 1:
        phi = math.atan2(ca - cb, d + sa - sb)
        p = _m2p(TWO_PI - math.acos(tmp))
        t = _m2p(-a - phi + p / 2)
        out[5] = (t, p, _m2p(b - a - t + p))
    return out


def _min_duration_scalar(x0, y0, h0, gx, gy, gh, r, dh, speed, max_climb, allowed):
    best = math.inf
    need = abs(dh) * speed / max_climb if dh != 0.0 else 0.0
    loop_len = TWO_PI * r
    for i, prm in enumerate(_word_params_scalar(x0, y0, h0, gx, gy, gh, r)):
        if prm is None or not allowed[i]:
            continue
        t, p, q = prm
        turn = r * (t + q) + (r * p if i >= 4 else 0.0)
        horiz = r * (t + p + q)
        if dh != 0.0 and turn < need:
            horiz += math.ceil((need - turn) / loop_len - 1e-12) * loop_len
        dur = horiz / speed
        if dur < best:
            best = dur
    return best


def _allowed_mask(denied: Iterable[str]) -> np.ndarray:
    deny = {w.upper().rstrip("N") for w in denied}
    bad = deny - set(WORDS)
    if bad:
        raise PlanningError(f"unknown Dubins words in deny list: {sorted(bad)}")
    return np.array([w not in deny for w in WORDS])


_CCC = np.array([False, False, False, False, True, True])


def _lift(params, r, dh, speed, max_climb, is_ccc=_CCC):
    """Horizontal lengths, turning lengths, extra loop counts and total durations.

    ``params`` has shape (n, k, 3) with ``is_ccc`` flagging the k words.
    Returns arrays of shape (n, k).
    """
    turn = r * (params[..., 0] + params[..., 2])
    mid = r * params[..., 1]
    turn = turn + np.where(is_ccc, mid, 0.0)
    straight = np.where(is_ccc, 0.0, mid)
    horiz = turn + straight
    if dh == 0.0:
        loops = np.zeros_like(horiz)
    else:
        need = abs(dh) * speed / max_climb
        loop_len = TWO_PI * r
        loops = np.where(turn >= need, 0.0, np.ceil((need - turn) / loop_len - 1e-12))
    total_h = horiz + loops * TWO_PI * r
    return horiz, turn, loops, total_h / speed


@dataclass(frozen=True)
class MotionPrimitive:
    kind: str
    duration: float
    turn_radius: float = 0.0
    climb_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in PRIMITIVES:
            raise PlanningError(f"unknown primitive {self.kind!r}")
        if self.duration < 0:
            raise PlanningError("negative primitive duration")
        if self.kind == "N" and self.duration != 0:
            raise PlanningError("N primitive must have zero duration")

    @property
    def turn_sign(self) -> int:
        if self.kind in ("L", "Hl"):
            return 1
        if self.kind in ("R", "Hr"):
            return -1
        return 0

    def to_dict(self):
        return {"kind": self.kind, "duration": self.duration, "turn_radius": self.turn_radius, "climb_rate": self.climb_rate}


@dataclass(frozen=True)
class DubinsPath3D:
    word: tuple
    start: Pose3
    goal: Pose3
    speed: float
    base_word: str = ""
    _knots: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if len(self.word) > 4:
            raise PlanningError(f"word has {len(self.word)} primitives (at most 4 allowed)")
        knots = [(self.start.x, self.start.y, self.start.h, self.start.heading)]
        for prim in self.word:
            knots.append(_advance(knots[-1], prim, prim.duration, self.speed))
        object.__setattr__(self, "_knots", tuple(knots))

    @property
    def duration(self) -> float:
        return float(sum(p.duration for p in self.word))

    @property
    def horizontal_length(self) -> float:
        return self.speed * self.duration

    @property
    def length(self) -> float:
        """3D arc length: the integral of the 3D speed over the path."""
        return float(sum(p.duration * math.hypot(self.speed, p.climb_rate) for p in self.word))

    @property
    def word_string(self) -> str:
        return "".join(p.kind for p in self.word)

    def pose_at(self, t: float) -> Pose3:
        t = min(max(t, 0.0), self.duration)
        acc = 0.0
        for i, prim in enumerate(self.word):
            if t <= acc + prim.duration or i == len(self.word) - 1:
                x, y, h, hd = _advance(self._knots[i], prim, t - acc, self.speed)
                return Pose3(x, y, max(h, 0.0), hd)
            acc += prim.duration
        k = self._knots[-1]
        return Pose3(k[0], k[1], max(k[2], 0.0), k[3])

    @property
    def end_state(self):
        return self._knots[-1]

    def to_dict(self):
        return {
            "word": self.word_string,
            "base_word": self.base_word,
            "primitives": [p.to_dict() for p in self.word],
            "start": self.start.to_dict(),
            "goal": self.goal.to_dict(),
            "speed": self.speed,
            "length": self.length,
            "duration": self.duration,
        }


def _advance(state, prim: MotionPrimitive, tau: float, speed: float):
    x, y, h, hd = state
    if prim.kind == "N" or tau <= 0:
        return (x, y, h, hd)
    s = speed * tau
    if prim.kind == "S":
        return (x + s * math.cos(hd), y + s * math.sin(hd), h, hd)
    r = prim.turn_radius
    sgn = prim.turn_sign
    cx = x - sgn * r * math.sin(hd)
    cy = y + sgn * r * math.cos(hd)
    hd2 = hd + sgn * s / r
    return (cx + sgn * r * math.sin(hd2), cy - sgn * r * math.cos(hd2), h + prim.climb_rate * tau, hd2)


def _primitives_for(word_idx, params_row, r, dh, speed, max_climb):
    """Build the primitive list for one word given its normalised parameters."""
    word = WORDS[word_idx]
    segs = []
    for letter, val in zip(word, params_row):
        length = float(val) * r
        segs.append([letter, length])
    _, turn, loops, _ = _lift(params_row[None, None, :], r, dh, speed, max_climb, _CCC[word_idx:word_idx + 1])
    turn_len = float(turn[0, 0])
    n_loops = int(loops[0, 0])
    prims_raw = [s for s in segs if s[1] > 0.0]
    if n_loops:
        turning = [s for s in prims_raw if s[0] != "S"]
        if turning:
            turning[-1][1] += n_loops * TWO_PI * r
        else:
            prims_raw.insert(0, ["L", n_loops * TWO_PI * r])
        turn_len += n_loops * TWO_PI * r
    rate = 0.0
    if dh != 0.0:
        rate = dh * speed / turn_len
    out = []
    for letter, length in prims_raw:
        dur = length / speed
        if letter == "S":
            out.append(MotionPrimitive("S", dur))
        elif dh != 0.0:
            out.append(MotionPrimitive("H" + letter.lower(), dur, r, rate))
        else:
            out.append(MotionPrimitive(letter, dur, r))
    out.append(MotionPrimitive("N", 0.0))
    return tuple(out)


def plan_dubins_3d(start: Pose3, goal: Pose3, r_turn: float, speed: float = 1.0,
                   max_climb_rate: float = math.inf, denied: Iterable[str] = ()) -> DubinsPath3D:
    """Shortest lifted path over the allowed words (minimum total duration)."""
    if not r_turn > 0:
        raise PlanningError("turn radius must be positive")
    if not speed > 0:
        raise PlanningError("speed must be positive")
    allowed = _allowed_mask(denied)
    if not allowed.any():
        raise PlanningError("every Dubins word is denied")
    dh = goal.h - start.h
    if (start.x, start.y, start.heading) == (goal.x, goal.y, goal.heading) and dh == 0.0:
        return DubinsPath3D((MotionPrimitive("N", 0.0),), start, goal, speed, base_word="N")
    if dh != 0.0 and not max_climb_rate > 0:
        raise PlanningError("altitude change requires a positive climb rate")
    params = _word_params(start.x, start.y, start.heading, goal.x, goal.y, goal.heading, r_turn)
    _, _, _, dur = _lift(params, r_turn, dh, speed, max_climb_rate)
    dur = np.where(allowed[None, :], dur, np.nan)[0]
    if np.all(np.isnan(dur)):
        raise PlanningError("no allowed Dubins word connects the two poses")
    k = int(np.nanargmin(dur))
    prims = _primitives_for(k, params[0, k], r_turn, dh, speed, max_climb_rate)
    if all(p.kind == "N" for p in prims):
        prims = (MotionPrimitive("N", 0.0),)
    return DubinsPath3D(prims, start, goal, speed, base_word=WORDS[k])


def plan_dubins_2d(start: Pose3, goal: Pose3, r_turn: float, speed: float = 1.0,
                   denied: Iterable[str] = ()) -> DubinsPath3D:
    """Shortest planar path between two poses at the same altitude."""
    if start.h != goal.h:
        raise PlanningError("planar planning requires equal start and goal altitude")
    return plan_dubins_3d(start, goal, r_turn, speed, denied=denied)


def word_lengths(start: Pose3, goal: Pose3, r_turn: float) -> dict:
    """Planar length of every feasible word (infeasible words are omitted)."""
    params = _word_params(start.x, start.y, start.heading, goal.x, goal.y, goal.heading, r_turn)[0]
    out = {}
    for i, w in enumerate(WORDS):
        if not np.isnan(params[i]).any():
            out[w] = float(params[i].sum() * r_turn)
    return out


def sample_path_array(path: DubinsPath3D, dt: float) -> np.ndarray:
    """Poses at t = 0, dt, 2dt, ... and the final time, as an (n, 4) array of x, y, h, heading."""
    if not dt > 0:
        raise PlanningError("dt must be positive")
    T = path.duration
    if T == 0.0:
        s = path.start
        return np.array([[s.x, s.y, s.h, s.heading]])
    n = int(math.floor(T / dt + 1e-9))
    ts = np.arange(n + 1) * dt
    if ts[-1] < T - 1e-12 * max(1.0, T):
        ts = np.append(ts, T)
    else:
        ts[-1] = min(ts[-1], T)
    out = np.empty((len(ts), 4))
    acc = 0.0
    v = path.speed
    for i, prim in enumerate(path.word):
        lo, hi = acc, acc + prim.duration
        last = i == len(path.word) - 1
        m = (ts >= lo) & ((ts < hi) | (last & (ts <= hi + 1e-12)))
        if prim.duration == 0 and not last:
            acc = hi
            continue
        tau = ts[m] - lo
        x, y, h, hd = path._knots[i]
        if prim.kind in ("S", "N"):
            s = v * tau if prim.kind == "S" else 0.0 * tau
            out[m, 0] = x + s * math.cos(hd)
            out[m, 1] = y + s * math.sin(hd)
            out[m, 2] = h
            out[m, 3] = hd
        else:
            r = prim.turn_radius
            sg = prim.turn_sign
            cx = x - sg * r * math.sin(hd)
            cy = y + sg * r * math.cos(hd)
            hd2 = hd + sg * v * tau / r
            out[m, 0] = cx + sg * r * np.sin(hd2)
            out[m, 1] = cy - sg * r * np.cos(hd2)
            out[m, 2] = h + prim.climb_rate * tau
            out[m, 3] = hd2
        acc = hi
    out[:, 3] = np.mod(out[:, 3], TWO_PI)
    return out


def sample_path(path: DubinsPath3D, dt: float):
    return [Pose3(float(x), float(y), max(float(h), 0.0), float(hd)) for x, y, h, hd in sample_path_array(path, dt)]


@dataclass(frozen=True)
class TransitionPlan:
    uav_id: int
    break_off: Pose3
    break_off_time: float
    join_in: Pose3
    join_in_time: float
    path: DubinsPath3D
    target_level: int
    target_circle: Circle
    target_altitude: float
    origin_circle: Circle
    origin_altitude: float
    origin_phase: float
    origin_time: float
    origin_rate: float
    target_square: Optional[int] = None

    def pose_at(self, t: float) -> Pose3:
        """Pose while still loitering before break-off, or on the path afterwards."""
        if t < self.break_off_time:
            phi = self.origin_phase + self.origin_rate * (t - self.origin_time)
            return loiter_pose(self.origin_circle, phi, self.origin_altitude)
        return self.path.pose_at(t - self.break_off_time)

    def to_dict(self):
        return {
            "uav_id": self.uav_id,
            "break_off": self.break_off.to_dict(),
            "break_off_time": self.break_off_time,
            "join_in": self.join_in.to_dict(),
            "join_in_time": self.join_in_time,
            "target_level": self.target_level,
            "target_circle": self.target_circle.to_dict(),
            "target_square": self.target_square,
            "path": self.path.to_dict(),
        }


def _wrap_pm(a):
    return np.mod(np.asarray(a) + math.pi, TWO_PI) - math.pi


class _Sync:
    """Arrival-phase mismatch for a fixed break-off pose."""

    def __init__(self, start: Pose3, tau, circle, alt, r_turn, speed, max_climb, allowed, phase_at):
        self.start = start
        self.tau = tau
        self.circle = circle
        self.alt = alt
        self.r = r_turn
        self.v = speed
        self.cmax = max_climb
        self.allowed = allowed
        self.phase_at = phase_at

    def durations(self, psi):
        psi = np.atleast_1d(psi)
        R = self.circle.radius
        gx = self.circle.center.x + R * np.cos(psi)
        gy = self.circle.center.y + R * np.sin(psi)
        gh = psi + math.pi / 2
        params = _word_params(self.start.x, self.start.y, self.start.heading, gx, gy, gh, self.r)
        _, _, _, dur = _lift(params, self.r, self.alt - self.start.h, self.v, self.cmax)
        dur = np.where(self.allowed[None, :], dur, np.inf)
        dur = np.where(np.isnan(dur), np.inf, dur)
        return dur.min(axis=1)

    def mismatch(self, psi):
        dur = self.durations(psi)
        arrive = self.tau + dur
        target = np.array([self.phase_at(float(a)) for a in arrive])
        return _wrap_pm(np.atleast_1d(psi) - target), dur

    def mismatch_scalar(self, psi):
        R = self.circle.radius
        c = self.circle.center
        dur = _min_duration_scalar(
            self.start.x, self.start.y, self.start.heading,
            c.x + R * math.cos(psi), c.y + R * math.sin(psi), psi + math.pi / 2,
            self.r, self.alt - self.start.h, self.v, self.cmax, self.allowed,
        )
        if not math.isfinite(dur):
            return math.nan, dur
        g = (psi - self.phase_at(self.tau + dur) + math.pi) % TWO_PI - math.pi
        return g, dur

    def roots(self, n_grid, keep=2):
        """Synchronized join-in angles, as (duration, psi) pairs.

        Only the ``keep`` brackets with the shortest interpolated duration are refined.
        """
        psi = np.arange(n_grid) * (TWO_PI / n_grid)
        g, dur = self.mismatch(psi)
        brackets = []
        for k in range(n_grid):
            k2 = (k + 1) % n_grid
            if not (np.isfinite(dur[k]) and np.isfinite(dur[k2])):
                continue
            ga, gb = g[k], g[k2]
            if ga == 0.0 or ((ga < 0) != (gb < 0) and abs(gb - ga) < math.pi):
                w = 0.0 if ga == 0.0 else ga / (ga - gb)
                brackets.append((dur[k] + w * (dur[k2] - dur[k]), psi[k], psi[k] + TWO_PI / n_grid, ga == 0.0))
        brackets.sort(key=lambda b: b[0])
        out = []
        for _, a, b, exact in brackets[:keep]:
            if exact:
                root = a
            else:
                try:
                    root = brentq(lambda s: self.mismatch_scalar(s)[0], a, b, xtol=1e-14,
                                  rtol=4 * np.finfo(float).eps, maxiter=200)
                except ValueError:
                    continue
            gr, dr = self.mismatch_scalar(root)
            if abs(gr) < 1e-9 and math.isfinite(dr):
                out.append((dr, wrap_angle(root)))
        return out


def _path_length_for(start, goal, r, v, cmax, denied):
    return plan_dubins_3d(start, goal, r, v, cmax, denied)


def plan_level_transition(
    current,
    target_circle: Circle,
    target_level: int,
    level_phase_at: Callable[[float], float],
    config,
    t0: float = 0.0,
    denied: Iterable[str] = (),
    target_square: Optional[int] = None,
    n_breakoff: int = 24,
    n_join: int = 96,
) -> TransitionPlan:
    """Plan a synchronized transition from ``current``'s loiter circle.

    ``current`` must be loitering at time ``t0``. The break-off point is chosen on
    the current circle (within one loiter period after ``t0``) to minimise the 3D
    path length subject to arriving on ``target_circle`` exactly at the phase
    ``level_phase_at(arrival_time)``.
    """
    if current.mode == "dropped":
        raise InvalidModeError(f"agent {current.id} is dropped")
    v = config.velocity
    r = config.turn_radius
    cmax = config.max_climb_rate
    allowed = _allowed_mask(denied)
    if not allowed.any():
        raise PlanningError("every Dubins word is denied")
    circ = current.loiter_circle
    alt0 = current.position.h if current.mode == "loitering" else current.altitude
    alt1 = altitude_for_level(target_level, config)
    omega = v / circ.radius
    phi0 = current.phase

    def make_plan(tau, beta, psi):
        start = loiter_pose(circ, beta, alt0)
        goal = loiter_pose(target_circle, psi, alt1)
        path = plan_dubins_3d(start, goal, r, v, cmax, denied)
        return TransitionPlan(
            current.id, start, tau, goal, tau + path.duration, path, target_level, target_circle, alt1,
            circ, alt0, phi0, t0, omega, target_square,
        )

    # already there and in phase
    if (circ == target_circle and alt0 == alt1
            and abs(float(_wrap_pm(phi0 - level_phase_at(t0)))) < 1e-12):
        return make_plan(t0, phi0, phi0)

    def best_for(w):
        beta = phi0 + omega * w
        start = loiter_pose(circ, beta, alt0)
        sync = _Sync(start, t0 + w, target_circle, alt1, r, v, cmax, allowed, level_phase_at)
        roots = sync.roots(n_join)
        if not roots:
            return math.inf, None
        # rank by 3D length; equal lengths keep the first (smallest psi)
        best = None
        for dur, psi in roots:
            path = _path_length_for(start, loiter_pose(target_circle, psi, alt1), r, v, cmax, denied)
            if best is None or path.length < best[0] - 1e-9 * max(1.0, path.length):
                best = (path.length, psi)
        return best

    period = TWO_PI / omega
    # absolute break-off phases on a fixed grid, so the candidate set does not depend on t0
    grid = np.arange(n_breakoff) * (TWO_PI / n_breakoff)
    ws = sorted({0.0} | {float(wrap_angle(g - phi0)) / omega for g in grid})
    cands = []
    for w in ws:
        L, psi = best_for(w)
        if psi is not None:
            cands.append((L, w, psi))
    if not cands:
        raise SynchronizationError(f"no phase-synchronized arrival found for agent {current.id}")
    cands.sort(key=lambda c: (c[0], c[1]))
    L0, w0, psi0 = cands[0]
    for L, w, psi in cands[1:]:
        if L <= L0 * (1 + 1e-9) and w < w0:
            L0, w0, psi0 = L, w, psi

    # local refinement of the break-off point
    step = period / n_breakoff
    lo, hi = max(0.0, w0 - step), min(period, w0 + step)
    if hi > lo:
        res = minimize_scalar(lambda w: min(best_for(w)[0], _BIG), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-4 * period, "maxiter": 16})
        if res.success and np.isfinite(res.fun) and res.fun < L0 * (1 - 1e-9):
            L1, psi1 = best_for(float(res.x))
            if psi1 is not None:
                L0, w0, psi0 = L1, float(res.x), psi1

    plan = make_plan(t0 + w0, phi0 + omega * w0, psi0)
    err = abs(float(_wrap_pm(psi0 - level_phase_at(plan.join_in_time))))
    if err > PHASE_TOL:
        raise SynchronizationError(f"arrival phase error {err:.3g} rad exceeds tolerance")
    return plan
