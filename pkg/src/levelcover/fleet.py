"""Agent kinematic state, per-level clocks and the level/altitude/quality arithmetic.

All agents loiter counter-clockwise. The phase of a loitering agent is the polar
angle of its position about the loiter centre, measured from +x, and every
level runs a shared clock ``phase(t) = (v / r_level) * t mod 2*pi`` so agents of a
level are synchronized by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .config import MAX_LEVELS, FleetConfig, loiter_radius_for_level
from .exceptions import InvalidConfigError, InvalidModeError
from .geometry import TWO_PI, Circle, Point2, Pose3, wrap_angle

LOITERING = "loitering"
TRANSITIONING = "transitioning"
DROPPED = "dropped"
MODES = (LOITERING, TRANSITIONING, DROPPED)


def _check_level(level):
    if not (isinstance(level, int) and 1 <= level <= MAX_LEVELS):
        raise InvalidConfigError(f"level must be in 1..{MAX_LEVELS}, got {level!r}")


def altitude_for_level(level: int, config: FleetConfig) -> float:
    """Altitude at which the footprint radius equals the level's loiter radius."""
    _check_level(level)
    return loiter_radius_for_level(level, config.r_l_min) / math.tan(config.fov_half_angle)


def coverage_radius(altitude: float, fov_half_angle: float) -> float:
    if altitude < 0:
        raise InvalidConfigError("altitude must be non-negative")
    return altitude * math.tan(fov_half_angle)


def quality(level: int, config: FleetConfig | None = None) -> float:
    """Sensing quality normalised to 1 at level 1 (inversely proportional to altitude)."""
    _check_level(level)
    return 1.0 / 2 ** (level - 1)


@dataclass(frozen=True)
class LevelClock:
    level: int
    angular_rate: float

    @classmethod
    def for_level(cls, level: int, config: FleetConfig) -> "LevelClock":
        return cls(level, config.velocity / loiter_radius_for_level(level, config.r_l_min))

    def phase_at(self, t: float) -> float:
        return wrap_angle(self.angular_rate * t)

    @property
    def period(self) -> float:
        return TWO_PI / self.angular_rate


def level_clocks(config: FleetConfig):
    return {lvl: LevelClock.for_level(lvl, config) for lvl in range(1, MAX_LEVELS + 1)}


def loiter_pose(circle: Circle, phase: float, altitude: float) -> Pose3:
    """Pose of a counter-clockwise loiterer at ``phase`` on ``circle``."""
    return Pose3(
        circle.center.x + circle.radius * math.cos(phase),
        circle.center.y + circle.radius * math.sin(phase),
        altitude,
        phase + math.pi / 2,
    )


@dataclass(frozen=True)
class UavState:
    id: int
    mode: str
    level: int
    altitude: float
    assigned_square: int
    loiter_circle: Circle
    phase: float
    position: Pose3
    velocity: float
    transition: Optional[object] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidModeError(f"unknown mode {self.mode!r}")

    @property
    def live(self) -> bool:
        return self.mode != DROPPED

    def to_dict(self):
        d = {
            "id": self.id,
            "mode": self.mode,
            "level": self.level,
            "altitude": self.altitude,
            "square": self.assigned_square,
            "circle": self.loiter_circle.to_dict(),
            "phase": self.phase,
            "position": self.position.to_dict(),
        }
        if self.transition is not None:
            d["transition"] = {
                "break_off_time": self.transition.break_off_time,
                "join_in_time": self.transition.join_in_time,
                "word": self.transition.path.word_string,
            }
        return d

    @classmethod
    def from_dict(cls, d, velocity: float):
        c = d["circle"]
        return cls(
            id=int(d["id"]),
            mode=d["mode"] if d["mode"] != TRANSITIONING else LOITERING,
            level=int(d["level"]),
            altitude=float(d["altitude"]),
            assigned_square=int(d["square"]),
            loiter_circle=Circle(Point2(float(c["x"]), float(c["y"])), float(c["r"])),
            phase=float(d["phase"]),
            position=Pose3.from_dict(d["position"]),
            velocity=velocity,
        )


def make_loiterer(uav_id, level, square_id, center: Point2, config: FleetConfig, t: float = 0.0) -> UavState:
    circle = Circle(center, loiter_radius_for_level(level, config.r_l_min))
    alt = altitude_for_level(level, config)
    phi = LevelClock.for_level(level, config).phase_at(t)
    return UavState(uav_id, LOITERING, level, alt, square_id, circle, phi, loiter_pose(circle, phi, alt), config.velocity)


def step_loiter(state: UavState, clock: LevelClock, dt: float) -> UavState:
    """Advance a loitering agent by ``dt`` along its circle."""
    if state.mode != LOITERING:
        raise InvalidModeError(f"step_loiter called on a {state.mode} agent {state.id}")
    if dt == 0:
        return state
    phi = wrap_angle(state.phase + clock.angular_rate * dt)
    return replace(state, phase=phi, position=loiter_pose(state.loiter_circle, phi, state.altitude))


def place_on_clock(state: UavState, clock: LevelClock, t: float) -> UavState:
    """Put a loitering agent at the level clock's phase for time ``t``."""
    if state.mode != LOITERING:
        raise InvalidModeError(f"cannot place a {state.mode} agent on a loiter clock")
    phi = clock.phase_at(t)
    return replace(state, phase=phi, position=loiter_pose(state.loiter_circle, phi, state.altitude))
