"""V2V/V2I cooperation harness: CDA session checks, SPAT, GLOSA, MEC warnings.

Cooperation messages travel the bus as tagged payloads; this module owns
their schemas, the per-level session validator, the consensus check over
priority proposals, fixed-cycle signal state, green-window speed advice,
and roadside hazard warnings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from .adversary import ttc_2d
from .mapdata import ScenarioMap
from .world import EntityState, WorldState

CDA_LEVELS = ("state_sharing", "intent_sharing", "coop_decision", "coop_control")
WARNING_KINDS = ("construction", "vru_alert", "nlos_hazard", "congestion", "green_wave")
NLOS_TTC = 6.0


class CooperationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# message payload schemas (tagged dicts on the bus)
# ---------------------------------------------------------------------------

def state_share(ent: EntityState, pose=None, speed: float | None = None) -> dict:
    """Basic state message; pose/speed overrides let twins publish their
    perception estimate instead of ground truth."""
    p = pose if pose is not None else ent.pose
    v = speed if speed is not None else ent.speed
    return {"type": "state_share", "id": ent.id, "x": p.x, "y": p.y,
            "heading": p.heading, "speed": v, "accel": ent.accel,
            "lane": ent.lane}


def intent_share(sender: str, maneuver: str, target_gap: float) -> dict:
    return {"type": "intent_share", "id": sender, "maneuver": maneuver,
            "target_gap": target_gap}


def decision_proposal(sender: str, order: list[tuple[str, str]]) -> dict:
    return {"type": "decision_proposal", "id": sender,
            "precedences": [[a, b] for a, b in order]}


def control_command(sender: str, target: str, accel: float,
                    valid_until: float) -> dict:
    return {"type": "control_command", "id": sender, "target": target,
            "accel": accel, "valid_until": valid_until}


def control_ack(sender: str, target: str, seq: int) -> dict:
    return {"type": "control_ack", "id": sender, "target": target, "ack_seq": seq}


# ---------------------------------------------------------------------------
# signal phase and timing
# ---------------------------------------------------------------------------

@dataclass
class Stage:
    phases: dict[str, str]   # approach -> green | yellow | red
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise CooperationError("stage duration must be > 0")
        for v in self.phases.values():
            if v not in ("green", "yellow", "red"):
                raise CooperationError(f"unknown phase {v!r}")


@dataclass
class Spat:
    signal_id: str
    stages: list[Stage]
    stage_idx: int = 0
    time_to_change: float = 0.0

    def __post_init__(self):
        if not self.stages:
            raise CooperationError("need >= 1 stage")
        approaches = set(self.stages[0].phases)
        for st in self.stages:
            if set(st.phases) != approaches:
                raise CooperationError("stages must cover the same approaches")
        if self.time_to_change <= 0:
            self.time_to_change = self.stages[self.stage_idx].duration

    @property
    def cycle_length(self) -> float:
        return sum(st.duration for st in self.stages)

    @property
    def phases(self) -> dict[str, str]:
        return self.stages[self.stage_idx].phases

    def phase_for(self, approach: str) -> str:
        return self.phases[approach]

    def payload(self) -> dict:
        return {"type": "spat", "signal": self.signal_id, "phases": dict(self.phases),
                "time_to_change": self.time_to_change}

    def to_dict(self) -> dict:
        return {"signal_id": self.signal_id,
                "stages": [{"phases": dict(s.phases), "duration": s.duration}
                           for s in self.stages],
                "stage_idx": self.stage_idx, "time_to_change": self.time_to_change}

    @classmethod
    def from_dict(cls, d: dict) -> "Spat":
        return cls(signal_id=d["signal_id"],
                   stages=[Stage(phases=dict(s["phases"]), duration=s["duration"])
                           for s in d["stages"]],
                   stage_idx=d.get("stage_idx", 0),
                   time_to_change=d.get("time_to_change", 0.0))

    def green_windows(self, approach: str, horizon: float) -> list[tuple[float, float]]:
        """[start, end) intervals (from now) when the approach shows green."""
        wins = []
        t = 0.0
        idx = self.stage_idx
        remain = self.time_to_change
        while t < horizon:
            if self.stages[idx].phases[approach] == "green":
                wins.append((t, t + remain))
            t += remain
            idx = (idx + 1) % len(self.stages)
            remain = self.stages[idx].duration
        merged = []
        for w in wins:
            if merged and abs(merged[-1][1] - w[0]) < 1e-9:
                merged[-1] = (merged[-1][0], w[1])
            else:
                merged.append(w)
        return merged


def spat_next(s: Spat, dt: float = 0.1) -> Spat:
    """Advance signal state by one tick; phases wrap cyclically."""
    remain = s.time_to_change - dt
    idx = s.stage_idx
    while remain <= 1e-9:
        idx = (idx + 1) % len(s.stages)
        remain += s.stages[idx].duration
    return Spat(signal_id=s.signal_id, stages=s.stages, stage_idx=idx,
                time_to_change=remain)


# ---------------------------------------------------------------------------
# GLOSA
# ---------------------------------------------------------------------------

@dataclass
class GlosaAdvice:
    kind: str               # "speed" | "stop"
    speed: float | None = None
    arrival: float | None = None


def glosa_advice(dist: float, spat: Spat, v_min: float, v_max: float,
                 approach: str | None = None, margin: float = 0.5) -> GlosaAdvice:
    """Highest legal speed whose constant-speed arrival lands strictly inside a
    green window (margin shrinks each window on both ends); stop advice when
    no window is reachable within [v_min, v_max]."""
    if dist <= 0:
        raise CooperationError("dist must be > 0")
    if v_min <= 0 or v_min > v_max:
        raise CooperationError("need 0 < v_min <= v_max")
    if approach is None:
        approach = sorted(spat.stages[0].phases)[0]
    horizon = max(dist / v_min + spat.cycle_length, 3 * spat.cycle_length)
    for (t0, t1) in spat.green_windows(approach, horizon):
        g0, g1 = t0 + margin, t1 - margin
        if g1 <= g0:
            continue
        v_hi = v_max if g0 <= 0 else min(v_max, dist / g0)
        v_lo = max(v_min, dist / g1)
        if v_lo <= v_hi:
            return GlosaAdvice(kind="speed", speed=v_hi, arrival=dist / v_hi)
        if g0 > 0 and dist / g0 < v_min:
            break  # later windows only recede further; no legal speed reaches green
    return GlosaAdvice(kind="stop")


# ---------------------------------------------------------------------------
# consensus over decision proposals
# ---------------------------------------------------------------------------

def consensus_check(proposals: list[dict]) -> tuple[str, list[str] | set[str]]:
    """Merge proposed precedences; ('order', [...]) if acyclic (ties broken
    lexicographically), else ('conflict', minimal cycle vertex set)."""
    if len(proposals) < 2:
        raise CooperationError("need >= 2 proposals")
    edges: set[tuple[str, str]] = set()
    nodes: set[str] = set()
    for p in proposals:
        for a, b in p.get("precedences", []):
            edges.add((a, b))
            nodes.update((a, b))
    succ: dict[str, set[str]] = {n: set() for n in nodes}
    indeg: dict[str, int] = {n: 0 for n in nodes}
    for a, b in edges:
        if b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    ready = sorted(n for n in nodes if indeg[n] == 0)
    order: list[str] = []
    indeg = dict(indeg)
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in sorted(succ[n]):
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
        ready.sort()
    if len(order) == len(nodes):
        return "order", order
    # find a minimal-length cycle by BFS from every node
    best: list[str] | None = None
    for start in sorted(nodes):
        parent = {start: None}
        queue = [start]
        while queue:
            u = queue.pop(0)
            for v in sorted(succ[u]):
                if v == start:
                    cyc = [u]
                    while parent[cyc[-1]] is not None:
                        cyc.append(parent[cyc[-1]])
                    cand = sorted(set(cyc))
                    if best is None or len(cand) < len(best):
                        best = cand
                    queue = []
                    break
                if v not in parent:
                    parent[v] = u
                    queue.append(v)
    return "conflict", set(best or [])


# ---------------------------------------------------------------------------
# CDA session validation
# ---------------------------------------------------------------------------

@dataclass
class SessionSpec:
    participants: list[str]
    duration: float                      # s covered by the trace
    required_hz: float = 10.0            # state sharing rate
    latency_bound: float = 0.2           # per-message delivery bound
    conflict_entries: dict[str, float] = field(default_factory=dict)
    # vehicle id -> sim time it entered the shared conflict zone


@dataclass
class Violation:
    level: str
    subject: str
    detail: str

    def to_dict(self) -> dict:
        return {"level": self.level, "subject": self.subject, "detail": self.detail}


def _delivered(trace: list) -> list:
    return [e for e in trace if getattr(e, "deliver_ts", None) is not None
            and not getattr(e, "dropped", False)]


def validate_cda_session(trace: list, level: str,
                         session: SessionSpec) -> tuple[bool, list[Violation]]:
    """Check one cooperation session's message trace at the given CDA level.

    The trace carries every published envelope (dropped ones included, with
    deliver_ts None), so loss always surfaces as a violation: the checks
    are monotone under message loss.
    """
    if level not in CDA_LEVELS:
        raise CooperationError(f"unknown CDA level {level!r}")
    v: list[Violation] = []
    delivered = _delivered(trace)

    if level == "state_sharing":
        need = math.floor(session.required_hz * session.duration)
        for pid in session.participants:
            good = [e for e in delivered
                    if e.sender == pid and e.payload.get("type") == "state_share"
                    and (e.deliver_ts - e.sim_send_ts) <= session.latency_bound + 1e-12]
            if len(good) < need:
                v.append(Violation(level, pid,
                                   f"{len(good)} compliant state messages, need {need}"))

    elif level == "intent_sharing":
        entered = session.conflict_entries
        for a in session.participants:
            for b in session.participants:
                if a >= b or a not in entered or b not in entered:
                    continue
                first_entry = min(entered[a], entered[b])
                for src, dst in ((a, b), (b, a)):
                    ok = any(e.sender == src and e.payload.get("type") == "intent_share"
                             and e.deliver_ts <= first_entry for e in delivered)
                    if not ok:
                        v.append(Violation(level, src,
                                           f"no intent delivered to {dst} before conflict entry"))

    elif level == "coop_decision":
        by_sender: dict[str, list] = {p: [] for p in session.participants}
        for e in delivered:
            if e.payload.get("type") == "decision_proposal" and e.sender in by_sender:
                by_sender[e.sender].append(e)
        for pid in session.participants:
            if len(by_sender[pid]) != 1:
                v.append(Violation(level, pid,
                                   f"expected exactly 1 delivered proposal, saw {len(by_sender[pid])}"))
        proposals = [e.payload for lst in by_sender.values() for e in lst]
        if len(proposals) >= 2:
            verdict, detail = consensus_check(proposals)
            if verdict == "conflict":
                v.append(Violation(level, ",".join(sorted(detail)),
                                   f"priority cycle among {sorted(detail)}"))

    elif level == "coop_control":
        sent_cmds = [e for e in trace if e.payload.get("type") == "control_command"]
        if not sent_cmds:
            v.append(Violation(level, "-", "no control commands in session"))
        acks = [e for e in delivered if e.payload.get("type") == "control_ack"]
        for cmd in sent_cmds:
            if cmd.deliver_ts is None or getattr(cmd, "dropped", False):
                v.append(Violation(level, cmd.sender, f"command seq {cmd.seq} lost"))
                continue
            acked = any(a.sender == cmd.payload["target"]
                        and a.payload.get("ack_seq") == cmd.seq
                        and a.deliver_ts <= cmd.payload["valid_until"] for a in acks)
            if not acked:
                v.append(Violation(level, cmd.payload["target"],
                                   f"command seq {cmd.seq} not acknowledged in window"))

    return (len(v) == 0), v


# ---------------------------------------------------------------------------
# MEC warnings
# ---------------------------------------------------------------------------

@dataclass
class Warning:
    kind: str
    target: str
    payload: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in WARNING_KINDS:
            raise CooperationError(f"unknown warning kind {self.kind!r}")

    def to_payload(self) -> dict:
        return {"type": "warning", "kind": self.kind, "target": self.target,
                **self.payload}


def _ahead_in_corridor(ego: EntityState, x: float, y: float,
                       ahead: float = 50.0, half_width: float = 3.5) -> bool:
    dx, dy = x - ego.pose.x, y - ego.pose.y
    h = ego.pose.heading
    lon = dx * math.cos(h) + dy * math.sin(h)
    lat = -dx * math.sin(h) + dy * math.cos(h)
    return 0.0 < lon <= ahead and abs(lat) <= half_width


def mec_warnings(world: WorldState, mapd: ScenarioMap, ego_id: str,
                 rsu_pose, rsu_range: float,
                 zones: list[dict] | None = None) -> list[Warning]:
    """Roadside-perception hazard warnings for one ego within RSU coverage."""
    ego = world.entities[ego_id]
    if ego.pose.distance_to(rsu_pose) > rsu_range:
        return []
    out: list[Warning] = []
    for eid in sorted(world.entities):
        ent = world.entities[eid]
        if eid == ego_id:
            continue
        if ent.kind == "pedestrian" and _ahead_in_corridor(ego, ent.pose.x, ent.pose.y):
            out.append(Warning(kind="vru_alert", target=ego_id,
                               payload={"x": ent.pose.x, "y": ent.pose.y,
                                        "advisory": "yield to pedestrian ahead"}))
    if ego.lane is not None:
        for cp in mapd.conflicts_for(ego.lane):
            if not cp.occluded:
                continue
            other_lane = cp.lanes[1] if cp.lanes[0] == ego.lane else cp.lanes[0]
            for eid in sorted(world.entities):
                ent = world.entities[eid]
                if ent.lane != other_lane or eid == ego_id:
                    continue
                t = ttc_2d(ego, ent, horizon=NLOS_TTC)
                if t is not None and t < NLOS_TTC:
                    out.append(Warning(kind="nlos_hazard", target=ego_id,
                                       payload={"vehicle": eid, "ttc": t,
                                                "advisory": "occluded crossing traffic"}))
    for z in zones or []:
        if z.get("kind") not in ("construction", "congestion"):
            continue
        if _ahead_in_corridor(ego, z["x"], z["y"], ahead=z.get("ahead", 120.0),
                              half_width=z.get("half_width", 6.0)):
            out.append(Warning(kind=z["kind"], target=ego_id,
                               payload={"x": z["x"], "y": z["y"],
                                        "advisory": z.get("advisory", z["kind"])}))
    return out
