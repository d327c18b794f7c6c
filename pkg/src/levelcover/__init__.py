"""Level-homogeneous loitering coverage with failure recovery for fixed-wing fleets."""

from .config import FleetConfig, loiter_radius_for_level, min_turn_radius
from .coverage import CoverageReport, cycle_covered_region_test, effective_coverage, verify_full_coverage
from .dubins import DubinsPath3D, TransitionPlan, plan_dubins_2d, plan_dubins_3d, plan_level_transition
from .engine import Scenario, ScenarioEvent, initial_deploy, run
from .estimators import LevelCoverage, SquarePacker
from .exceptions import LevelCoverError
from .fleet import UavState, altitude_for_level, coverage_radius, quality
from .geometry import Circle, Point2, Polygon, Pose3, circle_overlap_area, point_in_polygon
from .packing import Packing, build_packing
from .protocol import (
    NeighborTable,
    ProtocolMessage,
    RecoveryDecision,
    apply_decision,
    build_neighborhood,
    detect_failures,
    resolve_failures,
    select_recovery_uav,
)

__version__ = "0.1.0"

__all__ = [
    "Circle", "CoverageReport", "DubinsPath3D", "FleetConfig", "LevelCoverError", "LevelCoverage",
    "NeighborTable", "Packing", "Point2", "Polygon", "Pose3", "ProtocolMessage", "RecoveryDecision",
    "Scenario", "ScenarioEvent", "SquarePacker", "TransitionPlan", "UavState", "altitude_for_level",
    "apply_decision", "build_neighborhood", "build_packing", "circle_overlap_area", "coverage_radius",
    "cycle_covered_region_test", "detect_failures", "effective_coverage", "initial_deploy",
    "loiter_radius_for_level", "min_turn_radius", "plan_dubins_2d", "plan_dubins_3d",
    "plan_level_transition", "point_in_polygon", "quality", "resolve_failures", "run",
    "select_recovery_uav", "verify_full_coverage",
]
