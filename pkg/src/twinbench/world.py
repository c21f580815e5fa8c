"""Spatiotemporally aligned twin world: entities, clocks, tick advance, snapshots.

The world is owned by a single tick loop. Motion is point-mass with
lane-following lateral snap; a lane change blends laterally over a fixed
3 s window. Per-node clock skew is sampled once per run from the node's
sync-mode bound. Un-instrumented vehicles enter as twins whose pose carries
bounded perception noise.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, asdict
from typing import Any

import numpy as np

from .geom import Pose
from .mapdata import ScenarioMap

DT = 0.1                      # fixed tick, 10 Hz
LANE_CHANGE_DURATION = 3.0    # s, lateral blend window
TWIN_NOISE_BOUND = 0.10       # m, perception-to-twin discrepancy bound

ENTITY_KINDS = {
    "physical_cav", "cloud_controlled", "hdv_twin", "pedestrian", "rsu",
    "virtual_cav", "remote_hdv", "background",
}
CONTROL_MODES = {"auto", "manual", "adversarial", "scripted"}

# Kind -> transport class its state shares travel on. Physical-presence kinds
# reach the platform store; radio-equipped kinds also broadcast.
PLATFORM_KINDS = {"physical_cav", "cloud_controlled", "hdv_twin", "virtual_cav",
                  "remote_hdv", "background"}
BROADCAST_KINDS = {"physical_cav", "cloud_controlled", "rsu", "virtual_cav"}

CLOCK_OFFSET_BOUNDS = {"ntp": 1e-2, "ptp": 5e-8, "gnss": 1e-8}


class WorldError(ValueError):
    pass


class RejectedControlError(WorldError):
    pass


class TwinMissError(WorldError):
    pass


@dataclass
class ClockModel:
    mode: str = "ntp"
    node_offset: float = 0.0

    def __post_init__(self):
        if self.mode not in CLOCK_OFFSET_BOUNDS:
            raise WorldError(f"unknown clock mode {self.mode!r}")

    @property
    def offset_bound(self) -> float:
        return CLOCK_OFFSET_BOUNDS[self.mode]


def sample_clock_offset(model: ClockModel, rng: np.random.Generator) -> float:
    """Draw a static per-node skew, uniform within the mode's accuracy bound."""
    b = model.offset_bound
    off = float(rng.uniform(-b, b)) if b > 0 else 0.0
    model.node_offset = off
    return off


@dataclass
class LaneChange:
    from_lane: str
    to_lane: str
    elapsed: float = 0.0

    @property
    def progress(self) -> float:
        return min(self.elapsed / LANE_CHANGE_DURATION, 1.0)


@dataclass
class EntityState:
    id: str
    kind: str
    pose: Pose
    speed: float = 0.0
    accel: float = 0.0
    lane: str | None = None
    control_mode: str = "auto"
    length: float = 4.5
    width: float = 1.8
    s: float = 0.0                         # arc position on current lane
    route: list[str] = field(default_factory=list)
    route_idx: int = 0
    lateral: float = 0.0                   # current offset from lane center
    change: LaneChange | None = None
    clock: ClockModel = field(default_factory=ClockModel)
    completed: bool = False
    twin_pose: Pose | None = None          # hdv_twin: noisy perception estimate
    twin_speed: float = 0.0
    lat_bias: float = 0.0                  # held lateral offset (lane straddling)

    def __post_init__(self):
        if self.kind not in ENTITY_KINDS:
            raise WorldError(f"unknown entity kind {self.kind!r}")
        if self.control_mode not in CONTROL_MODES:
            raise WorldError(f"unknown control mode {self.control_mode!r}")
        if self.speed < 0:
            raise WorldError("speed must be >= 0")
        if self.length <= 0 or self.width <= 0:
            raise WorldError("length and width must be > 0")

    @property
    def velocity(self) -> tuple[float, float]:
        return (self.speed * math.cos(self.pose.heading),
                self.speed * math.sin(self.pose.heading))

    def remaining_route(self) -> list[str]:
        return self.route[self.route_idx:]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pose"] = self.pose.to_dict()
        d["change"] = asdict(self.change) if self.change else None
        d["clock"] = {"mode": self.clock.mode, "node_offset": self.clock.node_offset}
        d["twin_pose"] = self.twin_pose.to_dict() if self.twin_pose else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EntityState":
        d = dict(d)
        d["pose"] = Pose.from_dict(d["pose"])
        d["change"] = LaneChange(**d["change"]) if d.get("change") else None
        d["clock"] = ClockModel(**d["clock"]) if d.get("clock") else ClockModel()
        d["route"] = list(d.get("route", []))
        d["twin_pose"] = Pose.from_dict(d["twin_pose"]) if d.get("twin_pose") else None
        return cls(**d)


@dataclass
class WorldState:
    tick: int = 0
    entities: dict[str, EntityState] = field(default_factory=dict)
    signal_state: dict[str, Any] = field(default_factory=dict)

    @property
    def sim_time(self) -> float:
        return self.tick * DT

    def add(self, ent: EntityState) -> None:
        if ent.id in self.entities:
            raise WorldError(f"duplicate entity id {ent.id!r}")
        self.entities[ent.id] = ent

    def remove(self, entity_id: str) -> EntityState:
        return self.entities.pop(entity_id)

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "entities": {eid: e.to_dict() for eid, e in sorted(self.entities.items())},
            "signal_state": {k: (v.to_dict() if hasattr(v, "to_dict") else v)
                             for k, v in sorted(self.signal_state.items())},
        }


@dataclass
class Snapshot:
    """Self-contained copy of a live run: world + pending bus traffic + rng cursor.

    Resuming from a Snapshot with identical inputs reproduces the original
    run bit-exactly; `extra` carries subsystem state (flow, adversary,
    controllers) the resumed loop needs.
    """
    tick: int
    world: WorldState
    bus_state: dict
    rng_state: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "world": self.world.to_dict(),
            "bus_state": self.bus_state,
            "rng_state": self.rng_state,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Snapshot":
        w = WorldState(tick=d["world"]["tick"])
        for eid, ed in d["world"]["entities"].items():
            w.add(EntityState.from_dict(ed))
        w.signal_state = dict(d["world"].get("signal_state", {}))
        return cls(tick=d["tick"], world=w, bus_state=dict(d["bus_state"]),
                   rng_state=dict(d["rng_state"]), extra=dict(d.get("extra", {})))


def take_snapshot(world: WorldState, bus_state: dict | None = None,
                  rng_state: dict | None = None, extra: dict | None = None) -> Snapshot:
    """Deep, self-contained copy; mutating the live run never touches it."""
    return Snapshot(
        tick=world.tick,
        world=copy.deepcopy(world),
        bus_state=copy.deepcopy(bus_state or {}),
        rng_state=copy.deepcopy(rng_state or {}),
        extra=copy.deepcopy(extra or {}),
    )


def _displacement(speed: float, accel: float, dt: float) -> tuple[float, float]:
    """Advance speed/position with speed clamped at zero (braking never reverses)."""
    if accel < 0 and speed + accel * dt < 0:
        t_stop = speed / -accel if accel != 0 else 0.0
        return 0.0, speed * t_stop + 0.5 * accel * t_stop * t_stop
    v_next = speed + accel * dt
    return v_next, speed * dt + 0.5 * accel * dt * dt


def _next_lane(ent: EntityState, lane) -> str | None:
    rem = ent.remaining_route()
    if len(rem) > 1 and rem[0] == ent.lane:
        return rem[1]
    if rem and rem[0] != ent.lane:
        return rem[0]
    if lane.successors:
        return lane.successors[0]
    return None


def _lateral_between(mapd: ScenarioMap, from_lane: str, to_lane: str, s: float,
                     progress: float) -> tuple[float, float, float]:
    """Blend pose between two lanes at matched arc fraction."""
    a = mapd.lanes[from_lane].polyline
    b = mapd.lanes[to_lane].polyline
    frac = s / b.length if b.length > 0 else 0.0
    ax, ay = a.point_at(frac * a.length)
    bx, by = b.point_at(s)
    x = ax + (bx - ax) * progress
    y = ay + (by - ay) * progress
    heading = b.heading_at(s)
    return x, y, heading


def advance_tick(world: WorldState, controls: dict[str, tuple[float, str | None]],
                 dt: float = DT, mapd: ScenarioMap | None = None) -> WorldState:
    """One kinematic step for every entity; controls are (accel, lane_intent).

    Entities without a control entry keep their prior acceleration. Lane
    intents: None/"keep", "left", "right", or a target lane id. Unknown
    control ids are rejected before any state is touched.
    """
    if dt <= 0:
        raise WorldError("dt must be > 0")
    for eid in controls:
        if eid not in world.entities:
            raise RejectedControlError(f"control for unknown entity {eid!r}")

    for eid in sorted(world.entities):
        ent = world.entities[eid]
        accel, intent = controls.get(eid, (ent.accel, None))
        ent.accel = float(accel)

        target = None
        if intent in ("left", "right") and mapd is not None and ent.lane and ent.change is None:
            target = getattr(mapd.lanes[ent.lane], intent)
        elif intent not in (None, "keep", "left", "right") and mapd is not None \
                and intent in mapd.lanes and ent.lane != intent and ent.change is None:
            target = intent
        if target is not None:
            ent.change = LaneChange(from_lane=ent.lane, to_lane=target)
            if ent.route_idx < len(ent.route) and ent.route[ent.route_idx] == ent.lane:
                ent.route[ent.route_idx] = target  # route follows the new lane
            # arc position carries over at equal fraction of lane length
            frac = ent.s / mapd.lanes[ent.lane].length
            ent.lane = target
            ent.s = frac * mapd.lanes[target].length

        v_next, ds = _displacement(ent.speed, ent.accel, dt)
        ent.speed = v_next

        if ent.lane is not None and mapd is not None and ent.lane in mapd.lanes:
            ent.s += ds
            lane = mapd.lanes[ent.lane]
            # roll over to the next route lane when this one ends
            while ent.s > lane.length:
                nxt = _next_lane(ent, lane)
                if nxt is None:
                    ent.s = lane.length
                    ent.completed = True
                    break
                ent.s -= lane.length
                if ent.route_idx < len(ent.route) and ent.route[ent.route_idx] == ent.lane:
                    ent.route_idx += 1
                ent.lane = nxt
                lane = mapd.lanes[nxt]
                ent.change = None  # lane rolled over mid-change: snap
            if ent.change is not None:
                ent.change.elapsed += dt
                p = ent.change.progress
                x, y, h = _lateral_between(mapd, ent.change.from_lane, ent.lane, ent.s, p)
                ent.pose = Pose(x, y, h)
                bx, by = lane.polyline.point_at(ent.s)
                ent.lateral = math.hypot(x - bx, y - by)
                if p >= 1.0:
                    ent.change = None
                    ent.lateral = 0.0
            elif ent.lat_bias != 0.0:
                x, y = lane.polyline.offset_point_at(ent.s, ent.lat_bias)
                ent.pose = Pose(x, y, lane.polyline.heading_at(ent.s))
                ent.lateral = ent.lat_bias
            else:
                x, y = lane.polyline.point_at(ent.s)
                ent.pose = Pose(x, y, lane.polyline.heading_at(ent.s))
                ent.lateral = 0.0
            if ent.route and ent.lane == ent.route[-1] and ent.s >= lane.length:
                ent.completed = True
        else:
            h = ent.pose.heading
            ent.pose = Pose(ent.pose.x + ds * math.cos(h), ent.pose.y + ds * math.sin(h), h)

    world.tick += 1
    return world


def twin_update(observation: tuple[str, Pose, float], world: WorldState,
                rng: np.random.Generator, noise_bound: float = TWIN_NOISE_BOUND) -> EntityState:
    """Refresh an hdv twin from a roadside observation.

    The twin estimate is the observed pose plus perception noise drawn
    uniformly on a disk of radius <= noise_bound; it is what the platform
    publishes for this vehicle, kept beside the ground-truth motion state.
    """
    ent_id, pose, speed = observation
    ent = world.entities.get(ent_id)
    if ent is None or ent.kind != "hdv_twin":
        raise TwinMissError(f"{ent_id!r} is not a registered hdv_twin")
    if noise_bound > 0:
        r = noise_bound * math.sqrt(float(rng.uniform(0.0, 1.0)))
        theta = float(rng.uniform(0.0, 2.0 * math.pi))
        dx, dy = r * math.cos(theta), r * math.sin(theta)
    else:
        dx = dy = 0.0
    ent.twin_pose = Pose(pose.x + dx, pose.y + dy, pose.heading)
    ent.twin_speed = max(0.0, float(speed))
    return ent


def collision_pairs(world: WorldState, mapd: ScenarioMap | None = None) -> list[tuple[str, str]]:
    """Overlapping vehicle pairs: bumper overlap in-lane, body-width disc across lanes."""
    vehicles = [e for e in world.entities.values()
                if e.kind not in ("rsu", "pedestrian")]
    out = []
    for i, a in enumerate(vehicles):
        for b in vehicles[i + 1:]:
            if a.lane is not None and a.lane == b.lane and a.change is None and b.change is None:
                if abs(a.s - b.s) < 0.5 * (a.length + b.length):
                    out.append((a.id, b.id))
                continue
            if a.pose.distance_to(b.pose) < 0.5 * (a.width + b.width):
                out.append((a.id, b.id))
    return out
