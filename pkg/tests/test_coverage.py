import math
from dataclasses import replace

import numpy as np
import pytest

from levelcover import Point2, Polygon, cycle_covered_region_test, effective_coverage, verify_full_coverage
from levelcover.coverage import cycle_cover_bounds, instantaneous_fraction
from levelcover.exceptions import InvalidResolutionError
from levelcover.fleet import make_loiterer
from oracles import sweep_covered


def test_cycle_bounds_at_45_degrees(config):
    a = make_loiterer(0, 1, 0, Point2(0, 0), config)
    assert cycle_cover_bounds(a, config.fov_half_angle) == pytest.approx((0.0, 160.0))


def test_cycle_bounds_narrow_fov_leaves_hole(config):
    a = make_loiterer(0, 1, 0, Point2(0, 0), config)
    a = replace(a, altitude=40.0)
    r_in, r_out = cycle_cover_bounds(a, math.pi / 4)
    assert (r_in, r_out) == pytest.approx((40.0, 120.0))
    assert not cycle_covered_region_test((0, 0), a, math.pi / 4)
    assert cycle_covered_region_test((0, 60), a, math.pi / 4)


def test_cycle_test_matches_sweep_oracle(config):
    rng = np.random.default_rng(4)
    for alt in (40.0, 80.0, 100.0):
        a = replace(make_loiterer(0, 1, 0, Point2(0, 0), config), altitude=alt)
        r_c = alt * math.tan(config.fov_half_angle)
        pts = rng.uniform(-200, 200, (400, 2))
        r_in, r_out = cycle_cover_bounds(a, config.fov_half_angle)
        for p in pts:
            d = math.hypot(*p)
            if min(abs(d - r_in), abs(d - r_out)) < 0.5:
                continue
            assert cycle_covered_region_test(p, a, config.fov_half_angle) == sweep_covered(p, (0, 0), 80.0, r_c, 4000)


def test_dropped_agent_covers_nothing(config):
    a = replace(make_loiterer(0, 1, 0, Point2(0, 0), config), mode="dropped")
    assert not cycle_covered_region_test(Point2(0, 0), a, config.fov_half_angle)
    assert effective_coverage(a, [], Polygon.from_xy([-1, 1, 0], [0, 0, 1])) == 0.0


def test_effective_coverage_examples(config):
    big = Polygon.from_xy([-1000, 1000, 1000, -1000], [-1000, -1000, 1000, 1000])
    a = make_loiterer(0, 1, 0, Point2(0, 0), config)
    assert effective_coverage(a, [], big) == pytest.approx(math.pi * 80 ** 2, rel=1e-12)
    b = make_loiterer(1, 1, 1, Point2(80, 0), config)
    lens = (2 * math.pi / 3 - math.sqrt(3) / 2) * 80 ** 2
    assert effective_coverage(a, [b], big) == pytest.approx(math.pi * 80 ** 2 - lens)
    # other levels do not count as overlap
    c = make_loiterer(2, 2, 2, Point2(0, 0), config)
    assert effective_coverage(a, [c], big) == pytest.approx(math.pi * 80 ** 2)
    half = Polygon.from_xy([0, 1000, 1000, 0], [-1000, -1000, 1000, 1000])
    assert effective_coverage(a, [], half, 1.0) == pytest.approx(math.pi * 80 ** 2 / 2, rel=1e-3)
    many = [make_loiterer(i, 1, i, Point2(1e-3 * i, 0), config) for i in range(1, 5)]
    assert effective_coverage(a, many, big) == 0.0


def test_initial_uh_deployment_is_fully_covered(uh_packing, config):
    from levelcover import initial_deploy

    fleet = initial_deploy(uh_packing, config)
    rep = verify_full_coverage(fleet, uh_packing.polygon, 4.0, config)
    assert rep.fraction_covered == 1.0 and rep.fully_covered
    assert rep.mean_quality == 1.0
    assert rep.live_count == rep.loitering_count == len(fleet)
    assert len(rep.per_agent_effective) == len(fleet)
    assert rep.instantaneous_fraction is not None and 0 < rep.instantaneous_fraction <= 1
    assert rep.union_area == pytest.approx(uh_packing.polygon.area, rel=0.02)
    d = rep.to_dict(max_uncovered=3)
    assert d["n_uncovered"] == 0


def test_coverage_is_monotone_in_agents(config):
    poly = Polygon.from_xy([0, 640, 640, 0], [0, 0, 640, 640])
    from levelcover import build_packing, initial_deploy

    pk = build_packing(poly, config)
    fleet = initial_deploy(pk, config)
    prev = 1.0
    rng = np.random.default_rng(1)
    order = rng.permutation(len(fleet))
    for k in range(0, len(order), 8):
        f = [replace(a, mode="dropped") if a.id in set(order[:k].tolist()) else a for a in fleet]
        frac = verify_full_coverage(f, poly, 8.0, config, per_agent=False, instantaneous=False).fraction_covered
        assert frac <= prev + 1e-12
        prev = frac


def test_missing_agent_leaves_gap(config):
    poly = Polygon.from_xy([0, 1280, 1280, 0], [0, 0, 1280, 1280])
    from levelcover import build_packing, initial_deploy

    pk = build_packing(poly, config)
    fleet = initial_deploy(pk, config)
    centre = pk.locate(Point2(640, 640))
    gone = {a.id for a in fleet if math.dist((a.loiter_circle.center.x, a.loiter_circle.center.y),
                                             (pk[centre].center.x, pk[centre].center.y)) < 250}
    f = [replace(a, mode="dropped") if a.id in gone else a for a in fleet]
    rep = verify_full_coverage(f, poly, 8.0, config, per_agent=False)
    assert rep.fraction_covered < 1.0
    assert rep.uncovered_samples


def test_resolution_bounds(config):
    poly = Polygon.from_xy([0, 100, 100, 0], [0, 0, 100, 100])
    with pytest.raises(InvalidResolutionError):
        verify_full_coverage([], poly, 8.5, config)
    with pytest.raises(InvalidResolutionError):
        verify_full_coverage([], poly, 0.0, config)
    rep = verify_full_coverage([], poly, 8.0, config)
    assert rep.fraction_covered == 0.0


def test_instantaneous_is_below_cycle(config):
    poly = Polygon.from_xy([0, 640, 640, 0], [0, 0, 640, 640])
    from levelcover import build_packing, initial_deploy

    pk = build_packing(poly, config)
    fleet = initial_deploy(pk, config)
    inst = instantaneous_fraction(fleet, poly, 8.0, config.fov_half_angle)
    assert 0 < inst <= 1.0
