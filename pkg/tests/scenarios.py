"""Shared builders for protocol and property tests."""

from dataclasses import replace
from itertools import combinations

import numpy as np

from levelcover import FleetConfig, Polygon, build_packing, initial_deploy, resolve_failures, verify_full_coverage
from levelcover.fleet import make_loiterer
from levelcover.protocol import LEND_DEFICIT, LEND_PRIMARY, PROMOTION, UNRECOVERABLE
from oracles import star_polygon

FULL_SQUARE = Polygon.from_xy([0, 1280, 1280, 0], [0, 0, 1280, 1280])


def full_fleet(config=None):
    config = config or FleetConfig()
    pk = build_packing(FULL_SQUARE, config)
    return pk, initial_deploy(pk, config)


def interior_group(pk):
    """A level-2 super-square away from the border, with its four members."""
    for sq in pk.level_squares(2):
        if 1 <= sq.ix <= 6 and 1 <= sq.iy <= 6 and all(pk[c].inside for c in sq.children):
            return sq.id, list(sq.children)
    raise AssertionError("no interior super-square")


def loss_patterns(members):
    for k in range(1, len(members) + 1):
        yield from combinations(members, k)


def classify_outcome(decisions):
    kinds = sorted(d.kind for d in decisions)
    if kinds == [PROMOTION]:
        return "promotion"
    if kinds == sorted([LEND_PRIMARY, LEND_DEFICIT]):
        return "lending"
    return "other:" + ",".join(kinds)


def enumerate_group_losses(pk, fleet, policy="effective-coverage"):
    """Outcome of every non-empty loss pattern of one interior sibling group."""
    S, kids = interior_group(pk)
    owner = {a.assigned_square: a.id for a in fleet}
    members = [owner[c] for c in kids]
    rows = []
    for lost in loss_patterns(members):
        ds = resolve_failures(pk, fleet, set(lost), policy=policy)
        rows.append((lost, ds, classify_outcome(ds)))
    return S, members, rows


def place_decisions(fleet, decisions, pk, config, dropped):
    """Fleet after the drops with each chosen agent loitering at its target square."""
    out = [replace(a, mode="dropped") if a.id in dropped else a for a in fleet]
    for d in decisions:
        if d.kind == UNRECOVERABLE:
            continue
        sq = pk[d.target_square]
        out = [make_loiterer(a.id, sq.level, sq.id, sq.center, config) if a.id == d.chosen_uav else a for a in out]
    return out


def random_polygon(rng):
    xy = star_polygon(rng, (640, 640), 150, 620, int(rng.integers(5, 14)))
    return Polygon.from_xy(xy[:, 0], xy[:, 1])


def single_drop_sweep(n_polygons=20, seed=2024, resolution=4.0, config=None):
    """For each random polygon: initial coverage and coverage after every single drop."""
    config = config or FleetConfig()
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(n_polygons):
        poly = random_polygon(rng)
        pk = build_packing(poly, config)
        fleet = initial_deploy(pk, config)
        r0 = verify_full_coverage(fleet, poly, resolution, config, per_agent=False, instantaneous=False)
        after = []
        for a in fleet:
            ds = resolve_failures(pk, fleet, {a.id}, config=config)
            f2 = place_decisions(fleet, ds, pk, config, {a.id})
            r = verify_full_coverage(f2, poly, resolution, config, per_agent=False, instantaneous=False)
            after.append((a.id, [d.kind for d in ds], len(r.uncovered_samples)))
        results.append((poly, len(fleet), len(r0.uncovered_samples), after))
    return results
