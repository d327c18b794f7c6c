"""Failure detection and recovery: neighbour tables, survivor selection, promotion and lending.

Agents exchange :class:`ProtocolMessage` objects through the engine. Each agent
keeps a :class:`NeighborTable` with one label per neighbour (0 dropped, 1 active,
2 promoted). Labels only move 1->0, 1->2 or 2->0.

Recovery works per super-square. When members of a sibling group drop, one
survivor of the group is promoted to the super-square's loiter circle one level
up. When no member survives, the nearest adjacent super-square with at least two
survivors lends two agents: ``x1`` covers the failed super-square and ``x2``
covers the lender's own super-square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

from .exceptions import InvalidConfigError, NoSuperSquareError, PlanningError, ProtocolError
from .fleet import DROPPED, LOITERING, TRANSITIONING, altitude_for_level, level_clocks
from .geometry import Circle

LABEL_DROPPED = 0
LABEL_ACTIVE = 1
LABEL_PROMOTED = 2
_ALLOWED = {(LABEL_ACTIVE, LABEL_DROPPED), (LABEL_ACTIVE, LABEL_PROMOTED), (LABEL_PROMOTED, LABEL_DROPPED)}

HEARTBEAT = "heartbeat"
DROP_REPORT = "drop_report"
CLAIM_PROMOTION = "claim_promotion"
LEND_REQUEST = "lend_request"
LEND_GRANT = "lend_grant"
LEVEL_UPDATE = "level_update"
MESSAGE_KINDS = (HEARTBEAT, DROP_REPORT, CLAIM_PROMOTION, LEND_REQUEST, LEND_GRANT, LEVEL_UPDATE)

PROMOTION = "promotion"
LEND_PRIMARY = "lend_primary"
LEND_DEFICIT = "lend_deficit"
UNRECOVERABLE = "unrecoverable"
DECISION_KINDS = (PROMOTION, LEND_PRIMARY, LEND_DEFICIT, UNRECOVERABLE)

POLICIES = ("effective-coverage", "phase-nearest")
_E_RTOL = 1e-9


@dataclass
class NeighborTable:
    owner: int
    entries: dict = field(default_factory=dict)

    def mark(self, uav_id: int, label: int) -> bool:
        """Set a label; returns True when it changed. Illegal transitions raise ProtocolError."""
        if uav_id not in self.entries:
            return False
        old = self.entries[uav_id]
        if old == label:
            return False
        if (old, label) not in _ALLOWED:
            raise ProtocolError(f"table {self.owner}: label of {uav_id} cannot go {old} -> {label}")
        self.entries[uav_id] = label
        return True

    def state_vector(self, order: Optional[Iterable[int]] = None):
        ids = sorted(self.entries) if order is None else list(order)
        return [self.entries[i] for i in ids]

    def to_dict(self):
        return {"owner": self.owner, "entries": {str(k): v for k, v in sorted(self.entries.items())}}


@dataclass(frozen=True)
class ProtocolMessage:
    sender: int
    receiver: int
    kind: str
    payload: dict
    timestamp: float

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise ProtocolError(f"unknown message kind {self.kind!r}")

    def to_dict(self):
        return {"from": self.sender, "to": self.receiver, "kind": self.kind,
                "payload": self.payload, "timestamp": self.timestamp}


@dataclass(frozen=True)
class RecoveryDecision:
    failed_super_square: int
    chosen_uav: Optional[int]
    target_level: int
    kind: str
    target_square: Optional[int] = None
    donor_super_square: Optional[int] = None
    dropped: tuple = ()
    group: tuple = ()
    reason: str = ""

    def __post_init__(self):
        if self.kind not in DECISION_KINDS:
            raise ProtocolError(f"unknown decision kind {self.kind!r}")

    def to_dict(self):
        return {
            "failed_super_square": self.failed_super_square,
            "chosen_uav": self.chosen_uav,
            "target_level": self.target_level,
            "kind": self.kind,
            "target_square": self.target_square,
            "donor_super_square": self.donor_super_square,
            "dropped": list(self.dropped),
            "group": list(self.group),
            "reason": self.reason,
        }


@dataclass(frozen=True)
class DropEvent:
    uav_id: int
    observer: int


def _dist3(a, b):
    pa, pb = a.position, b.position
    return math.sqrt((pa.x - pb.x) ** 2 + (pa.y - pb.y) ** 2 + (pa.h - pb.h) ** 2)


def build_neighborhood(agent, fleet, r_com: float, config=None) -> NeighborTable:
    """Table of every other agent within ``r_com`` (3D distance, inclusive)."""
    if config is not None and r_com < config.r_com_bound * (1 - 1e-12):
        raise InvalidConfigError(f"r_com {r_com} is below sqrt(2) * r_l_max = {config.r_com_bound:.6g}")
    if not r_com > 0:
        raise InvalidConfigError("r_com must be positive")
    entries = {}
    for other in fleet:
        if other.id == agent.id or _dist3(agent, other) > r_com:
            continue
        if other.mode == DROPPED:
            entries[other.id] = LABEL_DROPPED
        elif other.level > 1:
            entries[other.id] = LABEL_PROMOTED
        else:
            entries[other.id] = LABEL_ACTIVE
    return NeighborTable(agent.id, entries)


def detect_failures(tables, heartbeats) -> frozenset:
    """Flip to 0 every live entry whose heartbeat is missing.

    ``tables`` maps owner id to NeighborTable; only tables whose owner is itself
    alive (in ``heartbeats``) observe anything.
    """
    heartbeats = set(heartbeats)
    events = set()
    for owner in sorted(tables):
        if owner not in heartbeats:
            continue
        table = tables[owner]
        for nid in sorted(table.entries.keys() - heartbeats):
            if table.entries[nid] != LABEL_DROPPED:
                table.mark(nid, LABEL_DROPPED)
                events.add(DropEvent(nid, owner))
    return frozenset(events)


def dropped_ids(events) -> set:
    return {e.uav_id for e in events}


def select_recovery_uav(
    group,
    failed=(),
    policy: str = "effective-coverage",
    effective: Optional[dict] = None,
    transfer_length: Optional[Callable] = None,
):
    """Pick the survivor to move; None when no survivor remains.

    ``effective`` maps uav id to E_k and ``transfer_length`` maps an agent to its
    planned transfer length. Either may be omitted, in which case that criterion
    ties and the lowest id wins.
    """
    if policy not in POLICIES:
        raise InvalidConfigError(f"policy must be one of {POLICIES}")
    failed = set(failed)
    cands = sorted((a for a in group if a.id not in failed and a.mode != DROPPED), key=lambda a: a.id)
    if not cands:
        return None
    if len(cands) == 1:
        return cands[0].id
    if policy == "effective-coverage" and effective is not None:
        e_min = min(effective[a.id] for a in cands)
        tol = _E_RTOL * max(1.0, abs(e_min))
        cands = [a for a in cands if effective[a.id] <= e_min + tol]
        if len(cands) == 1:
            return cands[0].id
    if transfer_length is None:
        return cands[0].id
    lengths = [(transfer_length(a), a.id) for a in cands]
    best = min(lengths)
    return best[1]


class TransitionPlanner:
    """Caches synchronized transition plans for one resolution instant ``t``."""

    def __init__(self, config, packing, t: float = 0.0, denied=()):
        self.config = config
        self.packing = packing
        self.t = t
        self.denied = tuple(denied)
        self.clocks = level_clocks(config)
        self._cache = {}

    def target_circle(self, square_id: int) -> Circle:
        sq = self.packing[square_id]
        return Circle(sq.center, sq.circle_radius)

    def plan(self, agent, square_id: int):
        from .dubins import plan_level_transition

        key = (agent.id, square_id)
        if key not in self._cache:
            sq = self.packing[square_id]
            clock = self.clocks[sq.level]
            try:
                self._cache[key] = plan_level_transition(
                    agent, self.target_circle(square_id), sq.level, clock.phase_at, self.config,
                    t0=self.t, denied=self.denied, target_square=square_id,
                )
            except PlanningError as exc:
                self._cache[key] = exc
        res = self._cache[key]
        if isinstance(res, Exception):
            raise res
        return res

    def transfer_length(self, agent, square_id: int) -> float:
        try:
            return self.plan(agent, square_id).path.length
        except PlanningError:
            return math.inf


def _effective_map(cands, live, poly, config):
    from .coverage import effective_coverage

    out = {}
    for a in cands:
        nbs = [
            b for b in live
            if b.id != a.id and b.mode == LOITERING and b.level == a.level
            and math.hypot(b.loiter_circle.center.x - a.loiter_circle.center.x,
                           b.loiter_circle.center.y - a.loiter_circle.center.y) <= config.r_com
        ]
        out[a.id] = effective_coverage(a, nbs, poly)
    return out


class _Work:
    """Mutable view of who is responsible for which square during one resolution pass."""

    def __init__(self, packing, fleet, drops):
        self.packing = packing
        self.agents = {a.id: a for a in fleet}
        self.dropped = {a.id for a in fleet if a.mode == DROPPED} | set(drops)
        self.square = {a.id: a.assigned_square for a in fleet}
        self.level = {a.id: a.level for a in fleet}
        self.busy = {a.id for a in fleet if a.mode == TRANSITIONING}

    def live_ids(self):
        return sorted(i for i in self.agents if i not in self.dropped)

    def responsible(self, square_id):
        return [i for i in self.live_ids() if self.square[i] == square_id]

    def covered_by_ancestor(self, square_id):
        return any(self.responsible(a) for a in [square_id] + self.packing.ancestors(square_id))

    def survivors_inside(self, region):
        """Idle live agents whose square lies strictly inside ``region``, grouped by level (high first)."""
        out = {}
        for i in self.live_ids():
            if i in self.busy:
                continue
            s = self.square[i]
            if s != region and self.packing.is_within(s, region):
                out.setdefault(self.level[i], []).append(i)
        return dict(sorted(out.items(), reverse=True))

    def move(self, uav_id, square_id):
        self.square[uav_id] = square_id
        self.level[uav_id] = self.packing[square_id].level
        self.busy.add(uav_id)


def resolve_failures(
    packing,
    fleet,
    drops,
    policy: str = "effective-coverage",
    planner: Optional[TransitionPlanner] = None,
    config=None,
):
    """Recovery decisions for the agents in ``drops``.

    Returns one decision per affected super-square (two for a lending). Lost
    levels are handled lowest first.
    """
    if policy not in POLICIES:
        raise InvalidConfigError(f"policy must be one of {POLICIES}")
    config = config or packing.config
    fleet = list(fleet)
    ids = {a.id for a in fleet}
    drops = set(drops)
    unknown = drops - ids
    if unknown:
        raise ProtocolError(f"unknown uav ids {sorted(unknown)}")
    if not drops:
        return []
    already = {a.id for a in fleet if a.mode == DROPPED} & drops
    if already:
        raise ProtocolError(f"uav ids {sorted(already)} were already dropped")

    w = _Work(packing, fleet, drops)
    live = [a for a in fleet if a.id not in w.dropped]
    poly = packing.polygon
    decisions = []
    handled = set()

    def choose(cand_ids, square_id):
        cands = [w.agents[i] for i in cand_ids]
        eff = _effective_map(cands, live, poly, config) if policy == "effective-coverage" else None
        tl = (lambda a: planner.transfer_length(a, square_id)) if planner is not None else None
        return select_recovery_uav(cands, (), policy, eff, tl)

    by_level = {}
    for i in sorted(drops):
        by_level.setdefault(w.level[i], []).append(i)

    for lvl in sorted(by_level):
        # group lost agents of this level by super-square
        groups = {}
        orphans = []
        for i in by_level[lvl]:
            s = w.square[i]
            try:
                groups.setdefault(packing.super_square_of(s), []).append(i)
            except NoSuperSquareError:
                orphans.append((s, i))
        for s, i in orphans:
            if w.covered_by_ancestor(s):
                continue
            decisions.append(RecoveryDecision(s, None, lvl + 1, UNRECOVERABLE, dropped=(i,),
                                              reason="no super-square above the top level"))
        for S in sorted(groups):
            lost = tuple(sorted(groups[S]))
            if S in handled or w.covered_by_ancestor(S):
                continue
            handled.add(S)
            target_level = packing[S].level
            if target_level > config.max_level:
                decisions.append(RecoveryDecision(S, None, target_level, UNRECOVERABLE, dropped=lost,
                                                  reason="target level above max_level"))
                continue

            # a lost higher-level agent is first replaced inside its own square
            if lvl >= 2:
                done = False
                for i in lost:
                    s = w.square[i]
                    if w.responsible(s):
                        continue
                    inner = w.survivors_inside(s)
                    if inner:
                        pool = next(iter(inner.values()))
                        c = choose(pool, s)
                        w.move(c, s)
                        decisions.append(RecoveryDecision(s, c, lvl, PROMOTION, target_square=s,
                                                          dropped=(i,), group=tuple(pool)))
                        done = True
                if done and all(w.responsible(w.square[i]) for i in lost):
                    continue

            inside = w.survivors_inside(S)
            if inside:
                pool = next(iter(inside.values()))
                c = choose(pool, S)
                w.move(c, S)
                decisions.append(RecoveryDecision(S, c, target_level, PROMOTION, target_square=S,
                                                  dropped=lost, group=tuple(pool)))
                continue

            # lending from the nearest adjacent super-square with at least two idle survivors
            cS = packing[S].center
            donors = []
            for D in packing.adjacent_squares(S):
                if w.covered_by_ancestor(D):
                    continue
                pool = [i for lv in w.survivors_inside(D).values() for i in lv]
                if len(pool) >= 2:
                    d = math.hypot(packing[D].center.x - cS.x, packing[D].center.y - cS.y)
                    donors.append((d, D, pool))
            if not donors or target_level > config.max_level:
                decisions.append(RecoveryDecision(S, None, target_level, UNRECOVERABLE, dropped=lost,
                                                  reason="no adjacent super-square with two survivors"))
                continue
            donors.sort(key=lambda x: (x[0], x[1]))
            _, D, _ = donors[0]
            inside_d = w.survivors_inside(D)
            pool = [i for lv in inside_d.values() for i in lv]
            x1 = choose(pool, S)
            w.move(x1, S)
            rest = [i for i in pool if i != x1]
            x2 = choose(rest, D)
            w.move(x2, D)
            handled.add(D)
            decisions.append(RecoveryDecision(S, x1, target_level, LEND_PRIMARY, target_square=S,
                                              donor_super_square=D, dropped=lost, group=tuple(pool)))
            decisions.append(RecoveryDecision(S, x2, target_level, LEND_DEFICIT, target_square=D,
                                              donor_super_square=D, dropped=lost, group=tuple(pool)))
    return decisions


def apply_decision(decision: RecoveryDecision, fleet, planner: TransitionPlanner):
    """Switch the chosen agent to transitioning toward the decision's target square.

    Returns ``(new_fleet, plan)``. Planning failures raise PlanningError.
    """
    if decision.kind == UNRECOVERABLE or decision.chosen_uav is None:
        raise ProtocolError("cannot apply an unrecoverable decision")
    fleet = list(fleet)
    idx = next((k for k, a in enumerate(fleet) if a.id == decision.chosen_uav), None)
    if idx is None:
        raise ProtocolError(f"uav {decision.chosen_uav} not in fleet")
    agent = fleet[idx]
    if agent.mode != LOITERING:
        raise ProtocolError(f"uav {agent.id} is {agent.mode}, not loitering")
    plan = planner.plan(agent, decision.target_square)
    sq = planner.packing[decision.target_square]
    fleet[idx] = replace(
        agent,
        mode=TRANSITIONING,
        level=sq.level,
        altitude=altitude_for_level(sq.level, planner.config),
        assigned_square=sq.id,
        loiter_circle=plan.target_circle,
        transition=plan,
    )
    return fleet, plan


def decision_messages(decision: RecoveryDecision, fleet, packing, t: float):
    """Messages exchanged to agree on ``decision``.

    Promotions stay inside the failed super-square. Lending requests and grants
    stay inside the donor super-square.
    """
    if decision.kind == UNRECOVERABLE:
        return []
    by_id = {a.id: a for a in fleet}
    group = [i for i in decision.group if i in by_id and by_id[i].mode != DROPPED]
    msgs = []
    payload = {"super_square": decision.failed_super_square, "dropped": list(decision.dropped)}
    if decision.kind in (PROMOTION, LEND_PRIMARY):
        for a in group:
            for b in group:
                if a != b:
                    msgs.append(ProtocolMessage(a, b, DROP_REPORT, dict(payload), t))
    if decision.kind == PROMOTION:
        claim = {"super_square": decision.target_square, "level": decision.target_level}
        for b in group:
            if b != decision.chosen_uav:
                msgs.append(ProtocolMessage(decision.chosen_uav, b, CLAIM_PROMOTION, dict(claim), t))
    else:
        coord = min(group)
        req = {"failed_super_square": decision.failed_super_square, "target_square": decision.target_square,
               "role": "x1" if decision.kind == LEND_PRIMARY else "x2"}
        if decision.chosen_uav != coord:
            msgs.append(ProtocolMessage(coord, decision.chosen_uav, LEND_REQUEST, dict(req), t))
            msgs.append(ProtocolMessage(decision.chosen_uav, coord, LEND_GRANT, dict(req), t))
    return msgs


def level_update_messages(agent, table: NeighborTable, t: float):
    payload = {"level": agent.level, "square": agent.assigned_square}
    return [
        ProtocolMessage(agent.id, nid, LEVEL_UPDATE, dict(payload), t)
        for nid in sorted(table.entries) if table.entries[nid] != LABEL_DROPPED
    ]


def deliver(messages, tables, fleet_by_id, r_com: float):
    """Apply messages to tables in (sender, timestamp) order; returns (delivered, undeliverable)."""
    delivered, lost = [], []
    for m in sorted(messages, key=lambda m: (m.sender, m.timestamp, m.receiver, m.kind)):
        a, b = fleet_by_id.get(m.sender), fleet_by_id.get(m.receiver)
        if a is None or b is None or b.mode == DROPPED or _dist3(a, b) > r_com:
            lost.append(m)
            continue
        delivered.append(m)
        if m.kind == LEVEL_UPDATE and m.receiver in tables:
            tables[m.receiver].mark(m.sender, LABEL_PROMOTED)
    return delivered, lost
