import math

import pytest

from levelcover import Circle, FleetConfig, Point2, UavState, altitude_for_level, coverage_radius, quality
from levelcover.exceptions import InvalidConfigError, InvalidModeError
from levelcover.fleet import (
    LevelClock,
    level_clocks,
    loiter_pose,
    make_loiterer,
    place_on_clock,
    step_loiter,
)


def test_altitudes_match_radii_at_45_degrees(config):
    assert [altitude_for_level(i, config) for i in (1, 2, 3, 4)] == pytest.approx([80, 160, 320, 640])
    for i in (1, 2, 3, 4):
        h = altitude_for_level(i, config)
        assert coverage_radius(h, config.fov_half_angle) == pytest.approx(80 * 2 ** (i - 1))


def test_narrower_fov_flies_higher():
    c = FleetConfig(fov_half_angle=math.radians(30))
    assert altitude_for_level(1, c) == pytest.approx(80 / math.tan(math.radians(30)))


def test_quality_halves_per_level():
    assert [quality(i) for i in (1, 2, 3, 4)] == [1.0, 0.5, 0.25, 0.125]
    assert quality(4) / quality(1) == 1 / 8
    with pytest.raises(InvalidConfigError):
        quality(5)


def test_coverage_radius_rejects_negative_altitude():
    with pytest.raises(InvalidConfigError):
        coverage_radius(-1.0, 0.5)


def test_level_clock_periods(config):
    clocks = level_clocks(config)
    for lvl, clk in clocks.items():
        assert clk.period == pytest.approx(2 * math.pi * 80 * 2 ** (lvl - 1) / 20)
    assert clocks[1].phase_at(0.0) == 0.0
    assert clocks[1].phase_at(clocks[1].period / 4) == pytest.approx(math.pi / 2)


def test_loiter_pose_is_tangent_ccw():
    c = Circle(Point2(10, 20), 5)
    p = loiter_pose(c, 0.0, 30)
    assert (p.x, p.y, p.h) == pytest.approx((15, 20, 30))
    assert p.heading == pytest.approx(math.pi / 2)


def test_make_loiterer_is_on_clock(config):
    a = make_loiterer(7, 2, 3, Point2(0, 0), config, t=12.5)
    assert a.phase == pytest.approx(LevelClock.for_level(2, config).phase_at(12.5))
    assert a.loiter_circle.radius == 160
    assert a.altitude == pytest.approx(160)
    assert a.position.h == pytest.approx(160)


def test_step_loiter_matches_clock(config):
    clk = LevelClock.for_level(1, config)
    a = make_loiterer(0, 1, 0, Point2(0, 0), config, 0.0)
    for _ in range(100):
        a = step_loiter(a, clk, 0.1)
    assert a.phase == pytest.approx(clk.phase_at(10.0), abs=1e-9)
    # the speed along the circle is v
    b = step_loiter(a, clk, 0.01)
    assert math.dist((a.position.x, a.position.y), (b.position.x, b.position.y)) == pytest.approx(0.2, rel=1e-4)


def test_modes_are_checked(config):
    a = make_loiterer(0, 1, 0, Point2(0, 0), config)
    with pytest.raises(InvalidModeError):
        UavState(0, "hovering", 1, 80, 0, a.loiter_circle, 0, a.position, 20)
    from dataclasses import replace

    d = replace(a, mode="dropped")
    assert not d.live
    with pytest.raises(InvalidModeError):
        step_loiter(d, LevelClock.for_level(1, config), 0.1)
    with pytest.raises(InvalidModeError):
        place_on_clock(d, LevelClock.for_level(1, config), 0.1)


def test_state_round_trip(config):
    a = make_loiterer(4, 3, 11, Point2(5, 6), config, 3.0)
    assert UavState.from_dict(a.to_dict(), config.velocity) == a
