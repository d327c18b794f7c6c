"""Fleet configuration and the level arithmetic every module shares."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

from .exceptions import InvalidConfigError

MAX_LEVELS = 4


def min_turn_radius(v: float, psi_max: float, g: float = 9.81, formula: str = "linear") -> float:
    """Minimum turning radius of a fixed-wing vehicle.

    ``formula="linear"`` evaluates ``v**2 * psi_max / g``; ``"conventional"`` is the
    coordinated-turn radius ``v**2 / (g * tan(psi_max))``.
    """
    if not (v > 0 and psi_max > 0 and g > 0):
        raise InvalidConfigError(f"v, psi_max and g must be positive (got {v}, {psi_max}, {g})")
    if formula == "linear":
        return v * v * psi_max / g
    if formula == "conventional":
        if psi_max >= math.pi / 2:
            raise InvalidConfigError("bank angle must be below 90 degrees")
        return v * v / (g * math.tan(psi_max))
    raise InvalidConfigError(f"unknown turn-radius formula {formula!r}")


def loiter_radius_for_level(level: int, r_l_min: float) -> float:
    if not (isinstance(level, int) and 1 <= level <= MAX_LEVELS):
        raise InvalidConfigError(f"level must be in 1..{MAX_LEVELS}, got {level!r}")
    return float(2 ** (level - 1)) * r_l_min


@dataclass(frozen=True)
class FleetConfig:
    """Homogeneous fleet parameters.

    ``r_com`` defaults to the smallest allowed value, sqrt(2) times the loiter
    radius of the highest level. ``turn_radius`` is the radius used for transition
    arcs and defaults to ``r_l_min``.
    """

    r_l_min: float = 80.0
    fov_half_angle: float = math.pi / 4
    velocity: float = 20.0
    psi_max: float = 0.5
    g: float = 9.81
    r_com: float | None = None
    max_level: int = 4
    turn_radius: float | None = None
    max_climb_rate: float = 5.0
    turn_formula: str = "linear"

    def __post_init__(self):
        if self.r_com is None:
            object.__setattr__(self, "r_com", self.r_com_bound)
        if self.turn_radius is None:
            object.__setattr__(self, "turn_radius", float(self.r_l_min))
        self.validate()

    @property
    def r_min_turn(self) -> float:
        return min_turn_radius(self.velocity, self.psi_max, self.g, self.turn_formula)

    @property
    def r_l_max(self) -> float:
        return self.r_l_min * 2 ** (self.max_level - 1)

    @property
    def r_com_bound(self) -> float:
        return math.sqrt(2.0) * self.r_l_min * 2 ** (self.max_level - 1)

    def validate(self):
        if not (isinstance(self.max_level, int) and 1 <= self.max_level <= MAX_LEVELS):
            raise InvalidConfigError(f"max_level must be in 1..{MAX_LEVELS}")
        if not self.r_l_min > 0:
            raise InvalidConfigError("r_l_min must be positive")
        if not 0 < self.fov_half_angle < math.pi / 2:
            raise InvalidConfigError("fov_half_angle must lie in (0, pi/2)")
        if not self.max_climb_rate > 0:
            raise InvalidConfigError("max_climb_rate must be positive")
        rmt = self.r_min_turn
        if self.r_l_min < rmt:
            raise InvalidConfigError(f"r_l_min {self.r_l_min} is below the minimum turning radius {rmt:.6g}")
        if self.turn_radius < rmt:
            raise InvalidConfigError(f"turn_radius {self.turn_radius} is below the minimum turning radius {rmt:.6g}")
        if self.r_com < self.r_com_bound * (1 - 1e-12):
            raise InvalidConfigError(
                f"r_com {self.r_com} is below sqrt(2) * r_l_max = {self.r_com_bound:.6g}"
            )

    def with_(self, **changes) -> "FleetConfig":
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FleetConfig":
        d = dict(d)
        if "fov_half_angle_deg" in d:
            d["fov_half_angle"] = math.radians(d.pop("fov_half_angle_deg"))
        if "psi_max_deg" in d:
            d["psi_max"] = math.radians(d.pop("psi_max_deg"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)
