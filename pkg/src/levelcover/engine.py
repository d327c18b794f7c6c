"""Deterministic discrete-time simulation loop.

Each step at ``t = k * dt`` runs, in order: kinematics and arrivals, message
delivery, failure detection and recovery, event injection, heartbeats, and
bookkeeping (metrics row every step, snapshot at the configured cadence and
whenever something happened). Loitering agents are placed on their level clock
directly, so positions carry no integration drift.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .config import FleetConfig
from .coverage import verify_full_coverage
from .exceptions import PlanningError, ScenarioError
from .fleet import DROPPED, LOITERING, TRANSITIONING, level_clocks, loiter_pose, make_loiterer
from .geometry import Polygon
from .packing import CLASSIFICATIONS, build_packing
from .protocol import (
    HEARTBEAT,
    LABEL_DROPPED,
    LEND_DEFICIT,
    LEND_PRIMARY,
    POLICIES,
    PROMOTION,
    UNRECOVERABLE,
    ProtocolMessage,
    RecoveryDecision,
    TransitionPlanner,
    apply_decision,
    build_neighborhood,
    decision_messages,
    deliver,
    detect_failures,
    level_update_messages,
    resolve_failures,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScenarioEvent:
    time: float
    kind: str = "drop"
    uav_ids: Optional[tuple] = None
    count: Optional[int] = None
    seed: Optional[int] = None

    def to_dict(self):
        d = {"time": self.time, "kind": self.kind}
        if self.uav_ids is not None:
            d["uav_ids"] = list(self.uav_ids)
        if self.count is not None:
            d["count"] = self.count
        if self.seed is not None:
            d["seed"] = self.seed
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("kind", "drop") != "drop":
            raise ScenarioError(f"unsupported event kind {d.get('kind')!r}")
        ids = d.get("uav_ids")
        return cls(
            time=float(d["time"]),
            uav_ids=None if ids is None else tuple(int(i) for i in ids),
            count=None if d.get("count") is None else int(d["count"]),
            seed=None if d.get("seed") is None else int(d["seed"]),
        )


@dataclass
class Scenario:
    polygon: Polygon
    config: FleetConfig = field(default_factory=FleetConfig)
    duration: float = 300.0
    dt: float = 0.1
    events: list = field(default_factory=list)
    grid_resolution: Optional[float] = None
    classification: str = "vertex"
    anchor: object = "per-axis"
    policy: str = "effective-coverage"
    seed: int = 0
    snapshot_every: float = 5.0
    trace_heartbeats: bool = False
    name: str = "scenario"

    def __post_init__(self):
        if self.grid_resolution is None:
            self.grid_resolution = self.config.r_l_min / 20.0
        self.events = [e if isinstance(e, ScenarioEvent) else ScenarioEvent.from_dict(e) for e in self.events]
        self.validate()

    def validate(self):
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if not self.duration >= 0:
            raise ScenarioError("duration must be non-negative")
        if not self.snapshot_every > 0:
            raise ScenarioError("snapshot_every must be positive")
        if self.classification not in CLASSIFICATIONS:
            raise ScenarioError(f"classification must be one of {CLASSIFICATIONS}")
        if self.policy not in POLICIES:
            raise ScenarioError(f"policy must be one of {POLICIES}")
        if not 0 < self.grid_resolution <= self.config.r_l_min / 10.0:
            raise ScenarioError("grid_resolution must lie in (0, r_l_min/10]")
        for e in self.events:
            if not 0 <= e.time <= self.duration:
                raise ScenarioError(f"event time {e.time} outside [0, {self.duration}]")
            if (e.uav_ids is None) == (e.count is None):
                raise ScenarioError("a drop event needs exactly one of uav_ids or count")
            if e.count is not None and e.count < 0:
                raise ScenarioError("drop count must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "polygon": self.polygon.to_dict(),
            "config": self.config.to_dict(),
            "duration": self.duration,
            "dt": self.dt,
            "events": [e.to_dict() for e in self.events],
            "grid_resolution": self.grid_resolution,
            "classification": self.classification,
            "anchor": list(self.anchor) if isinstance(self.anchor, tuple) else self.anchor,
            "policy": self.policy,
            "seed": self.seed,
            "snapshot_every": self.snapshot_every,
            "trace_heartbeats": self.trace_heartbeats,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("schema_version", None)
        if "polygon" not in d:
            raise ScenarioError("scenario has no polygon")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        d["polygon"] = Polygon.from_dict(d["polygon"])
        d["config"] = FleetConfig.from_dict(d.get("config", {}))
        if isinstance(d.get("anchor"), list):
            d["anchor"] = tuple(d["anchor"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


@dataclass
class Snapshot:
    time: float
    fleet: list
    tables: dict
    pending: list
    coverage: Optional[dict] = None

    def to_dict(self):
        return {
            "type": "snapshot",
            "t": self.time,
            "fleet": [a.to_dict() for a in self.fleet],
            # only non-active labels; table membership is in the header record
            "tables": {
                str(o): {str(k): v for k, v in sorted(t.entries.items()) if v != 1}
                for o, t in sorted(self.tables.items())
            },
            "pending": self.pending,
            "coverage": self.coverage,
        }


@dataclass
class RunResult:
    scenario: Scenario
    packing: object
    trace: list
    metrics: list
    report: dict
    final_coverage: object
    fleet: list
    decisions: list
    plans: list
    snapshots: list

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.trace)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for row in self.metrics:
            w.writerow([_fmt(row[k]) for k in METRIC_FIELDS])
        return buf.getvalue()

    def report_json(self) -> str:
        return json.dumps(self.report, sort_keys=True, indent=2) + "\n"

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"trace": out / "trace.jsonl", "metrics": out / "metrics.csv", "report": out / "report.json"}
        paths["trace"].write_text(self.trace_jsonl())
        paths["metrics"].write_text(self.metrics_csv())
        paths["report"].write_text(self.report_json())
        return paths


METRIC_FIELDS = ("time", "fraction_covered", "live_count", "mean_quality", "loitering_count", "transitioning_count")


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def initial_deploy(packing, config, t0: float = 0.0):
    """One loitering level-1 agent per inside base square, ids in base-square order."""
    return [make_loiterer(i, 1, s, packing[s].center, config, t0) for i, s in enumerate(packing.base_squares)]


class _Sim:
    def __init__(self, scenario: Scenario, packing=None):
        self.sc = scenario
        self.cfg = scenario.config
        self.packing = packing or build_packing(
            scenario.polygon, self.cfg, scenario.classification, scenario.anchor
        )
        self.clocks = level_clocks(self.cfg)
        self.agents = {a.id: a for a in initial_deploy(self.packing, self.cfg)}
        self.tables = {
            a.id: build_neighborhood(a, self.agents.values(), self.cfg.r_com, self.cfg)
            for a in self.agents.values()
        }
        self.last_live = dict(self.agents)
        self.silent = set()
        self.detected = set()
        self.outbox = []
        self.heartbeats = set(self.agents)
        self.trace = []
        self.metrics = []
        self.snapshots = []
        self.decisions = []
        self.plans = []
        self.injected = set()
        self.dropped_total = 0
        self._cov_cache = {}
        self.cov_min = 1.0
        self.full_since = 0.0

    # kinematics
    def fleet_at(self, t):
        out = []
        for i in sorted(self.agents):
            a = self.agents[i]
            if a.mode == LOITERING:
                phi = self.clocks[a.level].phase_at(t)
                a = replace(a, phase=phi, position=loiter_pose(a.loiter_circle, phi, a.altitude))
            elif a.mode == TRANSITIONING:
                a = replace(a, position=a.transition.pose_at(t))
            out.append(a)
        return out

    def advance(self, t):
        events = []
        for i in sorted(self.agents):
            a = self.agents[i]
            if a.mode == TRANSITIONING and t >= a.transition.join_in_time - 1e-9:
                plan = a.transition
                phi = self.clocks[a.level].phase_at(t)
                a = replace(a, mode=LOITERING, transition=None, phase=phi,
                            position=loiter_pose(a.loiter_circle, phi, a.altitude))
                self.agents[i] = a
                self.last_live[i] = a
                events.append({"type": "arrival", "t": t, "uav": i, "join_in_time": plan.join_in_time,
                               "level": a.level, "square": a.assigned_square})
                self.outbox.extend(level_update_messages(a, self.tables[i], t))
        return events

    def _cov_key(self):
        return tuple((i, a.level, a.assigned_square) for i, a in sorted(self.agents.items()) if a.mode == LOITERING)

    def coverage(self, fleet, instantaneous=False):
        key = self._cov_key()
        if key not in self._cov_cache or instantaneous:
            rep = verify_full_coverage(fleet, self.sc.polygon, self.sc.grid_resolution, self.cfg,
                                       per_agent=False, instantaneous=instantaneous)
            if not instantaneous:
                if len(self._cov_cache) > 64:
                    self._cov_cache.clear()
                self._cov_cache[key] = rep
            return rep
        return self._cov_cache[key]

    def inject(self, t, k):
        recs = []
        for n, e in enumerate(self.sc.events):
            if n in self.injected:
                continue
            if e.time > t + 1e-9 * max(1.0, t):
                continue
            self.injected.add(n)
            live = sorted(i for i, a in self.agents.items() if a.mode != DROPPED)
            if e.uav_ids is not None:
                ids = sorted(set(e.uav_ids))
                bad = [i for i in ids if i not in self.agents]
                if bad:
                    raise ScenarioError(f"drop event references unknown uav ids {bad}")
                ids = [i for i in ids if i in live]
            else:
                rng = np.random.default_rng(self.sc.seed if e.seed is None else e.seed)
                cnt = min(e.count, len(live))
                ids = sorted(int(i) for i in rng.choice(np.array(live, dtype=int), size=cnt, replace=False)) if cnt else []
            for i in ids:
                self.last_live[i] = self._live_view(i, t)
                self.agents[i] = replace(self.agents[i], mode=DROPPED, transition=None)
                self.silent.add(i)
            self.dropped_total += len(ids)
            recs.append({"type": "event", "t": t, "kind": "drop", "uav_ids": ids, "event_time": e.time})
        return recs

    def _live_view(self, i, t):
        a = self.agents[i]
        if a.mode == LOITERING:
            phi = self.clocks[a.level].phase_at(t)
            return replace(a, phase=phi, position=loiter_pose(a.loiter_circle, phi, a.altitude))
        if a.mode == TRANSITIONING:
            return replace(a, position=a.transition.pose_at(t))
        return a

    def detect_and_resolve(self, t):
        recs = []
        if not (self.silent - self.detected):
            # nothing missing a heartbeat: a detection round changes no table
            return recs
        events = detect_failures(self.tables, self.heartbeats)
        seen = {e.uav_id for e in events}
        isolated = sorted(i for i in self.silent - self.detected - seen if i not in self.heartbeats)
        for i in isolated:
            recs.append({"type": "diagnostic", "t": t, "kind": "isolated_failure", "uav": i})
            self.detected.add(i)
        new = sorted(seen - self.detected)
        if not new:
            return recs
        self.detected |= set(new)
        observers = {}
        for e in events:
            observers.setdefault(e.uav_id, set()).add(e.observer)
        for i in new:
            recs.append({"type": "detection", "t": t, "uav": i, "observers": sorted(observers[i])})

        fleet = self.fleet_at(t)
        # resolution sees the newly lost agents as they were just before going silent
        view = [self.last_live[a.id] if a.id in new else a for a in fleet]
        planner = TransitionPlanner(self.cfg, self.packing, t)
        decisions = resolve_failures(self.packing, view, set(new), self.sc.policy, planner, self.cfg)
        for d in decisions:
            if d.kind != UNRECOVERABLE:
                try:
                    fleet, plan = apply_decision(d, fleet, planner)
                except PlanningError as exc:
                    d = RecoveryDecision(d.failed_super_square, d.chosen_uav, d.target_level, UNRECOVERABLE,
                                         d.target_square, d.donor_super_square, d.dropped, d.group,
                                         f"planning failed: {exc}")
                else:
                    self.plans.append(plan)
                    recs.append({"type": "transition", "t": t, "plan": plan.to_dict()})
                    self.outbox.extend(decision_messages(d, fleet, self.packing, t))
            self.decisions.append((t, d))
            recs.append({"type": "decision", "t": t, "decision": d.to_dict()})
        for a in fleet:
            if a.mode == TRANSITIONING and self.agents[a.id].mode == LOITERING:
                self.agents[a.id] = a
        return recs

    def send_heartbeats(self, t):
        live = sorted(i for i, a in self.agents.items() if a.mode != DROPPED)
        self.heartbeats = set(live)
        if not self.sc.trace_heartbeats:
            return []
        recs = []
        for i in live:
            for nid in sorted(self.tables[i].entries):
                if self.tables[i].entries[nid] != LABEL_DROPPED:
                    recs.append({"type": "message", "t": t,
                                 "message": ProtocolMessage(i, nid, HEARTBEAT, {}, t).to_dict()})
        return recs

    def deliver(self, t):
        if not self.outbox:
            return []
        by_id = {a.id: a for a in self.fleet_at(t)}
        delivered, lost = deliver(self.outbox, self.tables, by_id, self.cfg.r_com)
        self.outbox = []
        recs = [{"type": "message", "t": t, "message": m.to_dict()} for m in delivered]
        recs += [{"type": "undeliverable", "t": t, "message": m.to_dict()} for m in lost]
        return recs

    def record(self, t, k, force):
        every = max(1, int(round(self.sc.snapshot_every / self.sc.dt)))
        snap_due = force or k % every == 0 or k == self.sc.n_steps
        cached = self._cov_cache.get(self._cov_key())
        fleet = self.fleet_at(t) if (snap_due or cached is None) else list(self.agents.values())
        cov = cached if cached is not None else self.coverage(fleet)
        if cov.fraction_covered < self.cov_min:
            self.cov_min = cov.fraction_covered
        if cov.fraction_covered < 1.0:
            self.full_since = None
        elif self.full_since is None:
            self.full_since = t
        trans = sum(1 for a in fleet if a.mode == TRANSITIONING)
        self.metrics.append({
            "time": t, "fraction_covered": cov.fraction_covered, "live_count": cov.live_count,
            "mean_quality": cov.mean_quality, "loitering_count": cov.loitering_count,
            "transitioning_count": trans,
        })
        if snap_due:
            inst = self.coverage(fleet, instantaneous=True)
            snap = Snapshot(
                t, fleet, self.tables,
                [{"uav": a.id, "join_in_time": a.transition.join_in_time} for a in fleet if a.mode == TRANSITIONING],
                {"fraction_covered": cov.fraction_covered, "mean_quality": cov.mean_quality,
                 "instantaneous_fraction": inst.instantaneous_fraction, "n_uncovered": len(cov.uncovered_samples)},
            )
            self.snapshots.append(snap)
            self.trace.append(snap.to_dict())

    def header(self):
        return {
            "type": "header",
            "schema_version": SCHEMA_VERSION,
            "scenario": self.sc.to_dict(),
            "base_count": len(self.packing.base_squares),
            "neighbors": {str(o): sorted(t.entries) for o, t in sorted(self.tables.items())},
        }

    def run(self):
        self.trace.append(self.header())
        dt = self.sc.dt
        t = 0.0
        self.trace.extend(self.inject(0.0, 0))
        self.record(0.0, 0, True)
        for k in range(1, self.sc.n_steps + 1):
            t = k * dt
            recs = self.advance(t)
            recs += self.deliver(t)
            recs += self.detect_and_resolve(t)
            recs += self.inject(t, k)
            recs += self.send_heartbeats(t)
            self.trace.extend(recs)
            self.record(t, k, any(r["type"] in ("event", "decision", "arrival") for r in recs))
        return self.finish(t)

    def finish(self, t):
        fleet = self.fleet_at(t)
        final = verify_full_coverage(fleet, self.sc.polygon, self.sc.grid_resolution, self.cfg)
        kinds = [d.kind for _, d in self.decisions]
        arrivals = [r for r in self.trace if r["type"] == "arrival"]
        report = {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.sc.name,
            "initial": len(self.packing.base_squares),
            "lost": self.dropped_total,
            "promotions": kinds.count(PROMOTION),
            "lendings": kinds.count(LEND_PRIMARY) + kinds.count(LEND_DEFICIT),
            "lend_pairs": kinds.count(LEND_PRIMARY),
            "unrecoverable": kinds.count(UNRECOVERABLE),
            "transitions": len(self.plans),
            "arrivals": len(arrivals),
            "last_join_in": max((p.join_in_time for p in self.plans), default=None),
            "coverage_min": self.cov_min,
            "full_coverage_since": self.full_since,
            "final_time": t,
            "final_live": sum(1 for a in fleet if a.mode != DROPPED),
            "final_levels": {str(l): sum(1 for a in fleet if a.mode != DROPPED and a.level == l) for l in range(1, 5)},
            "final_coverage": final.to_dict(max_uncovered=1000),
            "decisions": [dict(d.to_dict(), t=tt) for tt, d in self.decisions],
        }
        return RunResult(self.sc, self.packing, self.trace, self.metrics, report, final, fleet,
                         [d for _, d in self.decisions], self.plans, self.snapshots)


def run(scenario: Scenario, packing=None) -> RunResult:
    """Run ``scenario`` and return trace, metrics, report and final coverage."""
    scenario.validate()
    return _Sim(scenario, packing).run()
