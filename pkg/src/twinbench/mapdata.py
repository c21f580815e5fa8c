"""Versioned road-map schema: lanes, conflict points, signal heads.

Map files are JSON documents loaded read-only:

    {
      "version": 1,
      "name": "crossing",
      "lanes": [
        {"id": "main", "width": 3.5, "speed_limit": 15.0,
         "points": [[0,0],[200,0]],
         "left": null, "right": null, "successors": []}
      ],
      "conflict_points": [
        {"id": "c0", "lanes": ["main","cross"], "positions": [100.0, 80.0],
         "radius": 3.0, "occluded": false}
      ],
      "signals": [
        {"id": "sig0", "x": 100.0, "y": -5.0,
         "approaches": {"main": {"stop_s": 95.0}}}
      ]
    }

`positions` are arc-lengths of the conflict point along each lane; `stop_s`
is the stop-line arc position on the approach lane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .geom import Polyline

MAP_SCHEMA_VERSION = 1


class MapError(ValueError):
    pass


@dataclass
class Lane:
    id: str
    width: float
    speed_limit: float
    polyline: Polyline
    left: str | None = None
    right: str | None = None
    successors: list[str] = field(default_factory=list)

    @property
    def length(self) -> float:
        return self.polyline.length


@dataclass
class ConflictPoint:
    id: str
    lanes: tuple[str, str]
    positions: tuple[float, float]
    radius: float = 3.0
    occluded: bool = False

    def position_on(self, lane_id: str) -> float:
        if lane_id == self.lanes[0]:
            return self.positions[0]
        if lane_id == self.lanes[1]:
            return self.positions[1]
        raise KeyError(lane_id)


@dataclass
class SignalHead:
    id: str
    x: float
    y: float
    approaches: dict[str, dict]  # lane id -> {"stop_s": float}


class ScenarioMap:
    def __init__(self, name: str, lanes: list[Lane], conflict_points: list[ConflictPoint],
                 signals: list[SignalHead]):
        self.name = name
        self.lanes = {l.id: l for l in lanes}
        if len(self.lanes) != len(lanes):
            raise MapError("duplicate lane id")
        self.conflict_points = {c.id: c for c in conflict_points}
        self.signals = {s.id: s for s in signals}
        self._validate()

    def _validate(self):
        for lane in self.lanes.values():
            if lane.speed_limit <= 0:
                raise MapError(f"lane {lane.id}: speed limit must be > 0")
            if lane.width <= 0:
                raise MapError(f"lane {lane.id}: width must be > 0")
            for ref in [lane.left, lane.right, *lane.successors]:
                if ref is not None and ref not in self.lanes:
                    raise MapError(f"lane {lane.id}: dangling lane reference {ref!r}")
        for cp in self.conflict_points.values():
            for lane_id, s in zip(cp.lanes, cp.positions):
                if lane_id not in self.lanes:
                    raise MapError(f"conflict {cp.id}: dangling lane reference {lane_id!r}")
                if not (0.0 <= s <= self.lanes[lane_id].length):
                    raise MapError(f"conflict {cp.id}: position {s} outside lane {lane_id}")
        for sig in self.signals.values():
            for lane_id in sig.approaches:
                if lane_id not in self.lanes:
                    raise MapError(f"signal {sig.id}: dangling lane reference {lane_id!r}")

    def conflicts_for(self, lane_id: str) -> list[ConflictPoint]:
        return [c for c in self.conflict_points.values() if lane_id in c.lanes]

    def bounds(self) -> tuple[float, float, float, float]:
        xs, ys = [], []
        for lane in self.lanes.values():
            xs.extend(lane.polyline.points[:, 0])
            ys.extend(lane.polyline.points[:, 1])
        return min(xs), min(ys), max(xs), max(ys)

    def to_dict(self) -> dict:
        return {
            "version": MAP_SCHEMA_VERSION,
            "name": self.name,
            "lanes": [
                {"id": l.id, "width": l.width, "speed_limit": l.speed_limit,
                 "points": l.polyline.points.tolist(), "left": l.left,
                 "right": l.right, "successors": list(l.successors)}
                for l in self.lanes.values()
            ],
            "conflict_points": [
                {"id": c.id, "lanes": list(c.lanes), "positions": list(c.positions),
                 "radius": c.radius, "occluded": c.occluded}
                for c in self.conflict_points.values()
            ],
            "signals": [
                {"id": s.id, "x": s.x, "y": s.y, "approaches": s.approaches}
                for s in self.signals.values()
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioMap":
        if d.get("version") != MAP_SCHEMA_VERSION:
            raise MapError(f"unsupported map schema version {d.get('version')!r}")
        lanes = [
            Lane(id=ld["id"], width=float(ld["width"]), speed_limit=float(ld["speed_limit"]),
                 polyline=Polyline(ld["points"]), left=ld.get("left"), right=ld.get("right"),
                 successors=list(ld.get("successors", [])))
            for ld in d.get("lanes", [])
        ]
        conflicts = [
            ConflictPoint(id=cd["id"], lanes=tuple(cd["lanes"]), positions=tuple(cd["positions"]),
                          radius=float(cd.get("radius", 3.0)), occluded=bool(cd.get("occluded", False)))
            for cd in d.get("conflict_points", [])
        ]
        signals = [
            SignalHead(id=sd["id"], x=float(sd["x"]), y=float(sd["y"]),
                       approaches=dict(sd.get("approaches", {})))
            for sd in d.get("signals", [])
        ]
        return cls(d.get("name", "unnamed"), lanes, conflicts, signals)


def load_map(path: str | Path) -> ScenarioMap:
    with open(path, "r", encoding="utf-8") as f:
        return ScenarioMap.from_dict(json.load(f))


def save_map(m: ScenarioMap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(m.to_dict(), f, indent=1, sort_keys=True)
