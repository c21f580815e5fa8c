"""Virtual background traffic: car-following, lane changing, flow spawning.

Background vehicles follow the Intelligent Driver Model with MOBIL lane
changes. Externally controlled entities (the VUT, twins, remote vehicles)
are mapped into the flow so background vehicles react to them like any
leader or follower. Conflict points are handled by projecting the
conflicting vehicle onto a virtual lane ahead of the yielding vehicle
(approximation of priority-aware car following).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .geom import Pose
from .mapdata import ScenarioMap
from .world import EntityState, WorldState

B_HARD = 8.0  # emergency deceleration floor, m/s^2


class FlowError(ValueError):
    pass


class OverlapError(FlowError):
    """Gap <= 0: the vehicles already overlap."""


@dataclass
class IdmParams:
    v0: float = 15.0      # desired speed, m/s
    T: float = 1.5        # time headway, s
    a_max: float = 2.0    # max acceleration, m/s^2
    b_comf: float = 3.0   # comfortable braking, m/s^2
    s0: float = 2.0       # jam gap, m
    delta: float = 4.0

    def __post_init__(self):
        if min(self.v0, self.T, self.a_max, self.b_comf, self.s0) <= 0:
            raise FlowError("IDM parameters must be > 0")
        if self.delta < 1:
            raise FlowError("delta must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def idm_accel(gap: float, v: float, v_lead: float, p: IdmParams) -> float:
    """IDM acceleration, clamped to [-B_HARD, a_max]; gap=inf means free road.

    The dynamic part of the desired headway is floored at zero (standard
    form); without the floor a fast-receding leader would make the squared
    interaction term grow again.
    """
    if gap <= 0:
        raise OverlapError(f"gap {gap} <= 0")
    free = 1.0 - (v / p.v0) ** p.delta
    if math.isinf(gap):
        a = p.a_max * free
    else:
        dyn = v * p.T + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b_comf))
        s_star = p.s0 + max(0.0, dyn)
        a = p.a_max * (free - (s_star / gap) ** 2)
    return max(-B_HARD, min(p.a_max, a))


@dataclass
class Neighbor:
    gap: float          # net bumper gap, m (inf when absent)
    speed: float = 0.0

    @classmethod
    def none(cls) -> "Neighbor":
        return cls(gap=math.inf, speed=0.0)


@dataclass
class NeighborView:
    """Gaps around a vehicle on its own and adjacent lanes."""
    leader: Neighbor = field(default_factory=Neighbor.none)
    follower: Neighbor = field(default_factory=Neighbor.none)
    left_leader: Neighbor | None = None     # None = no adjacent lane
    left_follower: Neighbor | None = None
    right_leader: Neighbor | None = None
    right_follower: Neighbor | None = None


def _accel_or_floor(gap: float, v: float, v_lead: float, p: IdmParams) -> float:
    if gap <= 0:
        return -B_HARD
    return idm_accel(gap, v, v_lead, p)


def mobil_decide(v_ego: float, view: NeighborView, p: IdmParams,
                 politeness: float = 0.3, threshold: float = 0.2,
                 safe_decel: float = 4.0, ego_length: float = 4.5) -> str:
    """MOBIL criterion over both adjacent lanes: 'keep', 'change_left' or 'change_right'.

    A change requires the incentive (own gain plus politeness-weighted
    follower gains) to exceed `threshold`, vetoed when the new follower
    would be forced below -safe_decel.
    """
    a_now = _accel_or_floor(view.leader.gap, v_ego, view.leader.speed, p)
    best, best_gain = "keep", threshold

    for side, lead, foll in (("change_left", view.left_leader, view.left_follower),
                             ("change_right", view.right_leader, view.right_follower)):
        if lead is None or foll is None:
            continue
        a_new = _accel_or_floor(lead.gap, v_ego, lead.speed, p)
        # new follower closes on ego after the change
        a_foll_new = _accel_or_floor(foll.gap, foll.speed, v_ego, p)
        if a_foll_new < -safe_decel:
            continue
        follower_loss = 0.0
        if not math.isinf(foll.gap):
            combined = foll.gap + ego_length + lead.gap  # follower's gap without ego
            a_foll_old = _accel_or_floor(combined, foll.speed, lead.speed, p)
            follower_loss = a_foll_old - a_foll_new
        # releasing the old follower: it inherits ego's leader
        rel_gain = 0.0
        if not math.isinf(view.follower.gap):
            a_rel_now = _accel_or_floor(view.follower.gap, view.follower.speed, v_ego, p)
            a_rel_new = p.a_max if math.isinf(view.leader.gap) else _accel_or_floor(
                view.follower.gap + ego_length + view.leader.gap,
                view.follower.speed, view.leader.speed, p)
            rel_gain = a_rel_new - a_rel_now
        gain = (a_new - a_now) + politeness * (rel_gain - follower_loss)
        if gain > best_gain:
            best_gain = gain
            best = side
    return best


def conflict_views(world: WorldState, mapd: ScenarioMap, ego: EntityState,
                   visible=None) -> list[dict]:
    """Upcoming conflict points on the ego lane with a yield decision each.

    The conflicting vehicle is projected onto a virtual lane ahead of ego:
    yield when it reaches the point first (near-ties go to the lane listed
    first on the conflict). Within 1 m the ego counts as committed.
    """
    if ego.lane is None:
        return []
    out = []
    for cp in mapd.conflicts_for(ego.lane):
        s_me = cp.position_on(ego.lane)
        d_me = s_me - ego.s
        if d_me < 1.0 or d_me > 60.0:
            continue
        other_lane = cp.lanes[1] if cp.lanes[0] == ego.lane else cp.lanes[0]
        s_ot = cp.position_on(other_lane)
        must_yield = False
        for eid in sorted(world.entities):
            ent = world.entities[eid]
            if ent.lane != other_lane or ent.id == ego.id:
                continue
            if visible is not None and not visible(ent):
                continue
            d_ot = s_ot - ent.s
            if d_ot < -cp.radius or d_ot > 80.0:
                continue
            t_me = d_me / max(ego.speed, 0.5)
            t_ot = d_ot / max(ent.speed, 0.5)
            if t_ot < t_me + 2.0 and (t_ot < t_me or cp.lanes[0] != ego.lane):
                must_yield = True
                break
        out.append({"id": cp.id, "distance": d_me - cp.radius - 0.5 * ego.length,
                    "other_lane": other_lane, "yield": must_yield})
    return out


@dataclass
class FlowSpec:
    lane: str
    rate: float                 # veh/hour
    speed_init: float = 12.0
    params: IdmParams = field(default_factory=IdmParams)
    mix: float = 0.0            # fraction adversarial-eligible

    def __post_init__(self):
        if self.rate < 0:
            raise FlowError("rate must be >= 0")
        if not (0.0 <= self.mix <= 1.0):
            raise FlowError("mix must be in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FlowSpec":
        d = dict(d)
        d["params"] = IdmParams(**d.get("params", {}))
        return cls(**d)


def spawn_flow(spec: FlowSpec, world: WorldState, mapd: ScenarioMap, dt: float,
               rng: np.random.Generator, pending: int = 0,
               next_id: int = 0) -> tuple[list[EntityState], int, int]:
    """Poisson arrivals with an entry-headway guard.

    Arrivals that cannot enter (headway below s0 + v*T) stay pending and
    release once the entry clears. Returns (spawned, pending', next_id').
    """
    lane = mapd.lanes[spec.lane]
    arrivals = int(rng.poisson(spec.rate * dt / 3600.0)) if spec.rate > 0 else 0
    pending += arrivals
    spawned: list[EntityState] = []
    while pending > 0:
        v = spec.speed_init
        need = spec.params.s0 + v * spec.params.T
        blocked = False
        for ent in world.entities.values():
            if ent.lane == spec.lane and ent.s - 0.5 * ent.length < need + 2.25:
                blocked = True
                break
        if blocked:
            break
        x, y = lane.polyline.point_at(0.0)
        eligible = spec.mix > 0 and float(rng.uniform(0.0, 1.0)) < spec.mix
        ent = EntityState(
            id=f"bg_{spec.lane}_{next_id}", kind="background",
            pose=Pose(x, y, lane.polyline.heading_at(0.0)),
            speed=v, lane=spec.lane, s=0.0, control_mode="auto",
        )
        ent.adversarial_eligible = eligible  # plain attribute, serialized by engine
        world.add(ent)
        spawned.append(ent)
        next_id += 1
        pending -= 1
    return spawned, pending, next_id


class FlowEngine:
    """Owns background vehicles: spawning, IDM control, MOBIL changes, mapping."""

    def __init__(self, flows: list[FlowSpec], params: IdmParams | None = None,
                 change_cooldown: float = 5.0):
        self.flows = flows
        self.params = params or IdmParams()
        self.change_cooldown = change_cooldown
        self._pending = {i: 0 for i in range(len(flows))}
        self._next_id = 0
        self._mapped: set[str] = set()
        self._eligible: set[str] = set()
        self._cooldown: dict[str, float] = {}
        self._vehicle_params: dict[str, IdmParams] = {}

    # -- external mapping ---------------------------------------------------

    def map_external(self, entity_id: str) -> None:
        if entity_id in self._mapped:
            raise FlowError(f"{entity_id!r} already mapped into the flow")
        self._mapped.add(entity_id)

    def unmap_external(self, entity_id: str) -> None:
        self._mapped.discard(entity_id)

    def visible(self, ent: EntityState) -> bool:
        return ent.kind == "background" or ent.id in self._mapped

    # -- per-tick update ----------------------------------------------------

    def spawn(self, world: WorldState, mapd: ScenarioMap, dt: float,
              rng: np.random.Generator) -> list[EntityState]:
        out = []
        for i, spec in enumerate(self.flows):
            spawned, self._pending[i], self._next_id = spawn_flow(
                spec, world, mapd, dt, rng, self._pending[i], self._next_id)
            for ent in spawned:
                if getattr(ent, "adversarial_eligible", False):
                    self._eligible.add(ent.id)
                self._vehicle_params[ent.id] = spec.params
            out.extend(spawned)
        return out

    def params_for(self, vehicle_id: str) -> IdmParams:
        return self._vehicle_params.get(vehicle_id, self.params)

    def eligible_ids(self) -> set[str]:
        return set(self._eligible)

    def lane_order(self, world: WorldState, lane_id: str) -> list[EntityState]:
        ents = [e for e in world.entities.values()
                if e.lane == lane_id and self.visible(e) and e.kind not in ("rsu",)]
        return sorted(ents, key=lambda e: (e.s, e.id))

    def _neighbor(self, ordered: list[EntityState], ego: EntityState,
                  ahead: bool) -> Neighbor:
        cands = [e for e in ordered if e.id != ego.id and
                 ((e.s > ego.s) if ahead else (e.s < ego.s))]
        if not cands:
            return Neighbor.none()
        other = min(cands, key=lambda e: e.s) if ahead else max(cands, key=lambda e: e.s)
        gap = abs(other.s - ego.s) - 0.5 * (other.length + ego.length)
        return Neighbor(gap=gap, speed=other.speed)

    def neighbor_view(self, world: WorldState, mapd: ScenarioMap,
                      ego: EntityState) -> NeighborView:
        view = NeighborView()
        own = self.lane_order(world, ego.lane)
        view.leader = self._neighbor(own, ego, ahead=True)
        view.follower = self._neighbor(own, ego, ahead=False)
        lane = mapd.lanes[ego.lane]
        for side in ("left", "right"):
            adj = getattr(lane, side)
            if adj is None:
                continue
            frac = ego.s / lane.length
            probe = EntityState(id="__probe", kind="background", pose=ego.pose,
                                speed=ego.speed, lane=adj,
                                s=frac * mapd.lanes[adj].length,
                                length=ego.length, width=ego.width)
            ordered = self.lane_order(world, adj)
            setattr(view, f"{side}_leader", self._neighbor(ordered, probe, ahead=True))
            setattr(view, f"{side}_follower", self._neighbor(ordered, probe, ahead=False))
        return view

    def _conflict_gap(self, world: WorldState, mapd: ScenarioMap,
                      ego: EntityState) -> tuple[float, float] | None:
        """Nearest conflict demanding a yield, projected as a virtual leader."""
        yields = conflict_views(world, mapd, ego, visible=self.visible)
        gaps = [(max(c["distance"], 0.05), 0.0) for c in yields if c["yield"]]
        return min(gaps) if gaps else None

    def controls(self, world: WorldState, mapd: ScenarioMap, dt: float,
                 exclude: set[str] | None = None) -> dict[str, tuple[float, str | None]]:
        """(accel, lane intent) for every background vehicle not overridden."""
        exclude = exclude or set()
        out: dict[str, tuple[float, str | None]] = {}
        for eid in sorted(world.entities):
            ent = world.entities[eid]
            if ent.kind != "background" or eid in exclude:
                continue
            params = self.params_for(eid)
            view = self.neighbor_view(world, mapd, ent)
            lead_gap, lead_v = view.leader.gap, view.leader.speed
            conflict = self._conflict_gap(world, mapd, ent)
            if conflict is not None and conflict[0] < lead_gap:
                lead_gap, lead_v = conflict
            gap = max(lead_gap, 0.05)
            accel = idm_accel(gap, ent.speed, lead_v, params)
            intent = None
            cool = self._cooldown.get(eid, 0.0)
            if cool > 0:
                self._cooldown[eid] = cool - dt
            elif ent.change is None:
                decision = mobil_decide(ent.speed, view, params,
                                        ego_length=ent.length)
                if decision != "keep":
                    intent = "left" if decision == "change_left" else "right"
                    self._cooldown[eid] = self.change_cooldown
            out[eid] = (accel, intent)
        return out

    def despawn_completed(self, world: WorldState) -> list[str]:
        gone = []
        for eid in sorted(world.entities):
            ent = world.entities[eid]
            if ent.kind == "background" and ent.completed:
                world.remove(eid)
                self._eligible.discard(eid)
                self._cooldown.pop(eid, None)
                self._vehicle_params.pop(eid, None)
                gone.append(eid)
        return gone

    # -- snapshot -------------------------------------------------------------

    def state(self) -> dict:
        return {
            "pending": {str(k): v for k, v in self._pending.items()},
            "next_id": self._next_id,
            "mapped": sorted(self._mapped),
            "eligible": sorted(self._eligible),
            "cooldown": dict(sorted(self._cooldown.items())),
            "vehicle_params": {k: v.to_dict() for k, v in
                               sorted(self._vehicle_params.items())},
        }

    def restore(self, state: dict) -> None:
        self._pending = {int(k): v for k, v in state.get("pending", {}).items()}
        self._next_id = state.get("next_id", 0)
        self._mapped = set(state.get("mapped", []))
        self._eligible = set(state.get("eligible", []))
        self._cooldown = dict(state.get("cooldown", {}))
        self._vehicle_params = {k: IdmParams(**v) for k, v in
                                state.get("vehicle_params", {}).items()}
