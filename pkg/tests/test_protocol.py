import math
from dataclasses import replace

import numpy as np
import pytest

from levelcover import (
    NeighborTable,
    ProtocolMessage,
    RecoveryDecision,
    apply_decision,
    build_neighborhood,
    detect_failures,
    resolve_failures,
    select_recovery_uav,
)
from levelcover.exceptions import InvalidConfigError, ProtocolError
from levelcover.protocol import (
    CLAIM_PROMOTION,
    DROP_REPORT,
    LABEL_ACTIVE,
    LABEL_DROPPED,
    LABEL_PROMOTED,
    LEND_DEFICIT,
    LEND_GRANT,
    LEND_PRIMARY,
    LEND_REQUEST,
    LEVEL_UPDATE,
    PROMOTION,
    UNRECOVERABLE,
    TransitionPlanner,
    decision_messages,
    deliver,
    dropped_ids,
    level_update_messages,
)
from scenarios import enumerate_group_losses, full_fleet, interior_group, place_decisions


@pytest.fixture(scope="module")
def full():
    return full_fleet()


# ---------------------------------------------------------------- tables

def test_label_transitions():
    t = NeighborTable(0, {1: LABEL_ACTIVE, 2: LABEL_ACTIVE})
    assert t.mark(1, LABEL_PROMOTED)
    assert t.mark(1, LABEL_DROPPED)
    assert not t.mark(1, LABEL_DROPPED)
    with pytest.raises(ProtocolError):
        t.mark(1, LABEL_ACTIVE)
    with pytest.raises(ProtocolError):
        t.mark(1, LABEL_PROMOTED)
    assert not t.mark(99, LABEL_DROPPED)
    assert t.state_vector() == [0, 1]


def test_neighborhood_is_local_and_inclusive(full):
    pk, fleet = full
    cfg = pk.config
    a = fleet[0]
    t = build_neighborhood(a, fleet, cfg.r_com, cfg)
    assert a.id not in t.entries
    for b in fleet:
        if b.id == a.id:
            continue
        d = math.dist((a.position.x, a.position.y, a.position.h), (b.position.x, b.position.y, b.position.h))
        assert (b.id in t.entries) == (d <= cfg.r_com)
    with pytest.raises(InvalidConfigError):
        build_neighborhood(a, fleet, 10.0, cfg)
    with pytest.raises(InvalidConfigError):
        build_neighborhood(a, fleet, 0.0)


def test_neighborhood_labels(full):
    pk, fleet = full
    f = [replace(fleet[1], mode="dropped")] + [fleet[0]] + fleet[2:]
    t = build_neighborhood(fleet[0], f, pk.config.r_com)
    assert t.entries[1] == LABEL_DROPPED
    assert t.entries[2] == LABEL_ACTIVE


def test_detect_failures():
    tables = {i: NeighborTable(i, {j: LABEL_ACTIVE for j in range(4) if j != i}) for i in range(4)}
    ev = detect_failures(tables, heartbeats={0, 1, 2})
    assert dropped_ids(ev) == {3}
    assert {e.observer for e in ev} == {0, 1, 2}
    assert tables[3].entries[0] == LABEL_ACTIVE
    # already detected drops are not reported twice
    assert detect_failures(tables, heartbeats={0, 1, 2}) == frozenset()


# ---------------------------------------------------------------- selection

def test_select_single_survivor_unconditionally(full):
    _, fleet = full
    assert select_recovery_uav(fleet[:4], failed={0, 1, 2}) == 3
    assert select_recovery_uav(fleet[:2], failed={0, 1}) is None


def test_select_minimum_effective_then_length_then_id(full):
    _, fleet = full
    group = fleet[:3]
    assert select_recovery_uav(group, effective={0: 5.0, 1: 3.0, 2: 4.0}) == 1
    eff = {0: 3.0, 1: 3.0, 2: 4.0}
    assert select_recovery_uav(group, effective=eff) == 0
    lengths = {0: 10.0, 1: 9.0, 2: 1.0}
    assert select_recovery_uav(group, effective=eff, transfer_length=lambda a: lengths[a.id]) == 1
    assert select_recovery_uav(group, policy="phase-nearest", effective=eff,
                               transfer_length=lambda a: lengths[a.id]) == 2
    with pytest.raises(InvalidConfigError):
        select_recovery_uav(group, policy="random")


# ---------------------------------------------------------------- resolution

def test_all_fifteen_loss_patterns(full):
    pk, fleet = full
    S, members, rows = enumerate_group_losses(pk, fleet)
    assert len(rows) == 15
    for lost, ds, outcome in rows:
        if len(lost) < 4:
            assert outcome == "promotion"
            (d,) = ds
            assert d.chosen_uav in members and d.chosen_uav not in lost
            assert d.target_square == S and d.target_level == 2
        else:
            assert outcome == "lending"
            x1 = next(d for d in ds if d.kind == LEND_PRIMARY)
            x2 = next(d for d in ds if d.kind == LEND_DEFICIT)
            assert x1.target_square == S
            assert x2.target_square == x1.donor_super_square
            assert x2.target_square in pk.adjacent_squares(S)
            assert x1.chosen_uav != x2.chosen_uav
            assert {x1.chosen_uav, x2.chosen_uav} <= set(x1.group)


def test_lending_picks_nearest_donor(full):
    pk, fleet = full
    S, kids = interior_group(pk)
    owner = {a.assigned_square: a.id for a in fleet}
    ds = resolve_failures(pk, fleet, {owner[c] for c in kids})
    D = ds[0].donor_super_square
    cS, cD = pk[S].center, pk[D].center
    # edge neighbours are closer than diagonal ones
    assert math.hypot(cS.x - cD.x, cS.y - cD.y) == pytest.approx(pk[S].side)


def test_resolution_is_deterministic_and_pure(full):
    pk, fleet = full
    before = [a.to_dict() for a in fleet]
    d1 = resolve_failures(pk, fleet, {5, 6, 40})
    d2 = resolve_failures(pk, fleet, {40, 6, 5})
    assert d1 == d2
    assert [a.to_dict() for a in fleet] == before


def test_resolution_errors(full):
    pk, fleet = full
    with pytest.raises(ProtocolError):
        resolve_failures(pk, fleet, {10_000})
    f = [replace(a, mode="dropped") if a.id == 3 else a for a in fleet]
    with pytest.raises(ProtocolError):
        resolve_failures(pk, f, {3})
    assert resolve_failures(pk, fleet, set()) == []
    with pytest.raises(InvalidConfigError):
        resolve_failures(pk, fleet, {1}, policy="nope")


def test_one_decision_per_super_square(full):
    pk, fleet = full
    rng = np.random.default_rng(0)
    for _ in range(20):
        drops = set(int(i) for i in rng.choice(len(fleet), size=12, replace=False))
        ds = resolve_failures(pk, fleet, drops)
        promos = [d for d in ds if d.kind == PROMOTION]
        assert len({d.target_square for d in promos}) == len(promos)
        chosen = [d.chosen_uav for d in ds if d.chosen_uav is not None]
        assert len(chosen) == len(set(chosen))
        assert not set(chosen) & drops


def test_conservation_after_resolution(full):
    pk, fleet = full
    drops = {0, 1, 2}
    ds = resolve_failures(pk, fleet, drops)
    after = place_decisions(fleet, ds, pk, pk.config, drops)
    assert sum(a.mode != "dropped" for a in after) == len(fleet) - len(drops)
    assert sum(a.mode == "dropped" for a in after) == len(drops)


def test_higher_level_loss_re_promotes_inside(full):
    pk, fleet = full
    S, kids = interior_group(pk)
    owner = {a.assigned_square: a.id for a in fleet}
    first = resolve_failures(pk, fleet, {owner[kids[0]]})
    f1 = place_decisions(fleet, first, pk, pk.config, {owner[kids[0]]})
    promoted = first[0].chosen_uav
    ds = resolve_failures(pk, f1, {promoted})
    assert [d.kind for d in ds] == [PROMOTION]
    assert ds[0].target_square == S
    assert ds[0].chosen_uav in {owner[c] for c in kids} - {owner[kids[0]], promoted}


def test_drop_inside_covered_square_needs_no_decision(full):
    pk, fleet = full
    S, kids = interior_group(pk)
    owner = {a.assigned_square: a.id for a in fleet}
    first = resolve_failures(pk, fleet, {owner[kids[0]]})
    f1 = place_decisions(fleet, first, pk, pk.config, {owner[kids[0]]})
    rest = [owner[c] for c in kids if owner[c] not in (owner[kids[0]], first[0].chosen_uav)]
    assert resolve_failures(pk, f1, {rest[0]}) == []


def test_isolated_agent_is_unrecoverable(config):
    from levelcover import Polygon, build_packing, initial_deploy

    tri = Polygon.from_xy([10, 30, 20], [10, 10, 30])
    pk = build_packing(tri, config)
    fleet = initial_deploy(pk, config)
    ds = resolve_failures(pk, fleet, {0})
    assert [d.kind for d in ds] == [UNRECOVERABLE]
    assert ds[0].reason


# ---------------------------------------------------------------- application and messages

def test_apply_decision_starts_transition(full):
    pk, fleet = full
    S, kids = interior_group(pk)
    owner = {a.assigned_square: a.id for a in fleet}
    ds = resolve_failures(pk, fleet, {owner[kids[0]]})
    f = [replace(a, mode="dropped") if a.id == owner[kids[0]] else a for a in fleet]
    planner = TransitionPlanner(pk.config, pk, t=0.0)
    f2, plan = apply_decision(ds[0], f, planner)
    a = next(x for x in f2 if x.id == ds[0].chosen_uav)
    assert a.mode == "transitioning" and a.level == 2 and a.assigned_square == S
    assert plan.target_circle.radius == 160
    with pytest.raises(ProtocolError):
        apply_decision(ds[0], f2, planner)
    with pytest.raises(ProtocolError):
        apply_decision(RecoveryDecision(S, None, 2, UNRECOVERABLE), f, planner)


def test_promotion_messages_stay_in_group(full):
    pk, fleet = full
    S, kids = interior_group(pk)
    owner = {a.assigned_square: a.id for a in fleet}
    lost = owner[kids[0]]
    f = [replace(a, mode="dropped") if a.id == lost else a for a in fleet]
    (d,) = resolve_failures(pk, fleet, {lost})
    msgs = decision_messages(d, f, pk, 1.0)
    ids = set(d.group)
    assert all(m.sender in ids and m.receiver in ids for m in msgs)
    assert {m.kind for m in msgs} == {DROP_REPORT, CLAIM_PROMOTION}
    claims = [m for m in msgs if m.kind == CLAIM_PROMOTION]
    assert all(m.sender == d.chosen_uav for m in claims) and len(claims) == 2


def test_lending_messages(full):
    pk, fleet = full
    S, kids = interior_group(pk)
    owner = {a.assigned_square: a.id for a in fleet}
    lost = {owner[c] for c in kids}
    f = [replace(a, mode="dropped") if a.id in lost else a for a in fleet]
    ds = resolve_failures(pk, fleet, lost)
    kinds = set()
    for d in ds:
        for m in decision_messages(d, f, pk, 1.0):
            kinds.add(m.kind)
            assert m.sender in d.group and m.receiver in d.group
    assert {LEND_REQUEST, LEND_GRANT} <= kinds


def test_deliver_marks_promoted_and_drops_unreachable(full):
    pk, fleet = full
    by_id = {a.id: a for a in fleet}
    tables = {a.id: build_neighborhood(a, fleet, pk.config.r_com) for a in fleet[:10]}
    msgs = level_update_messages(fleet[0], tables[0], 2.0)
    delivered, lost = deliver(msgs, tables, by_id, pk.config.r_com)
    assert not lost
    for m in delivered:
        if m.receiver in tables:
            assert tables[m.receiver].entries[0] == LABEL_PROMOTED
    far = ProtocolMessage(fleet[0].id, fleet[-1].id, LEVEL_UPDATE, {}, 3.0)
    _, lost = deliver([far], tables, by_id, 100.0)
    assert lost == [far]
    with pytest.raises(ProtocolError):
        ProtocolMessage(0, 1, "gossip", {}, 0.0)
