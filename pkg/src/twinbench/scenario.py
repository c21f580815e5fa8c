"""Scenario files, risk-field element allocation, and spec validation.

A scenario is the unit of a test: map reference, element roster with
control sources, flow specs, channel configs, adversary block, scripted
events, explicit seed, and duration. Files are versioned JSON; parsing
reports the first offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .bus import ChannelConfig
from .flow import FlowSpec, IdmParams
from .geom import Pose
from .mapdata import ScenarioMap, load_map
from .world import ENTITY_KINDS, EntityState, WorldState

SCENARIO_SCHEMA_VERSION = 1
CONTROL_SOURCES = ("internal-baseline", "aut-endpoint", "console", "scripted")


class ScenarioError(ValueError):
    def __init__(self, field_path: str, message: str):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass
class ElementSpec:
    id: str
    kind: str
    lane: str | None = None
    s: float = 0.0
    x: float | None = None
    y: float | None = None
    heading: float = 0.0
    speed: float = 0.0
    route: list[str] = field(default_factory=list)
    control: str = "internal-baseline"
    adapter: str | None = None          # aut-endpoint only
    profile: list[dict] = field(default_factory=list)  # scripted only
    length: float = 4.5
    width: float = 1.8
    clock_mode: str = "ntp"
    idm: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SignalPlan:
    signal: str
    approaches: dict[str, list[str]]   # approach lane -> phase per stage
    durations: list[float]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdversaryConfig:
    enabled: bool = False
    intensity: float = 0.5
    interaction_range: float = 60.0
    maneuver_duration: float = 4.0
    window_ticks: int = 50

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScenarioSpec:
    scenario_id: str
    map_path: str
    duration: float
    seed: int
    roster: list[ElementSpec] = field(default_factory=list)
    flows: list[dict] = field(default_factory=list)        # FlowSpec dict + lane
    channels: list[ChannelConfig] = field(default_factory=list)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    events: list[dict] = field(default_factory=list)
    signal_plans: list[SignalPlan] = field(default_factory=list)
    zones: list[dict] = field(default_factory=list)
    halt_on_collision: bool = True
    vut: str | None = None

    def flow_specs(self) -> list[FlowSpec]:
        out = []
        for f in self.flows:
            d = dict(f)
            params = d.pop("params", {})
            out.append(FlowSpec(params=IdmParams(**params), **d))
        return out

    def to_dict(self) -> dict:
        return {
            "version": SCENARIO_SCHEMA_VERSION,
            "scenario_id": self.scenario_id,
            "map": self.map_path,
            "duration": self.duration,
            "seed": self.seed,
            "vut": self.vut,
            "halt_on_collision": self.halt_on_collision,
            "roster": [e.to_dict() for e in self.roster],
            "flows": [dict(f) for f in self.flows],
            "channels": [c.to_dict() for c in self.channels],
            "adversary": self.adversary.to_dict(),
            "events": [dict(e) for e in self.events],
            "signal_plans": [s.to_dict() for s in self.signal_plans],
            "zones": [dict(z) for z in self.zones],
        }


def emit_scenario(spec: ScenarioSpec, path: str | Path | None = None) -> str:
    text = json.dumps(spec.to_dict(), indent=1, sort_keys=True)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def parse_scenario_dict(d: dict, base_dir: Path | None = None) -> ScenarioSpec:
    if d.get("version") != SCENARIO_SCHEMA_VERSION:
        raise ScenarioError("version", f"unsupported version {d.get('version')!r}")
    for key in ("scenario_id", "map", "duration", "seed"):
        if key not in d:
            raise ScenarioError(key, "missing required field")
    roster = []
    for i, ed in enumerate(d.get("roster", [])):
        path = f"roster[{i}]"
        if ed.get("kind") not in ENTITY_KINDS:
            raise ScenarioError(f"{path}.kind", f"unknown kind {ed.get('kind')!r}")
        if ed.get("control", "internal-baseline") not in CONTROL_SOURCES:
            raise ScenarioError(f"{path}.control", f"unknown source {ed.get('control')!r}")
        if ed.get("control") == "aut-endpoint" and not ed.get("adapter"):
            raise ScenarioError(f"{path}.adapter", "aut-endpoint entry must name an adapter id")
        roster.append(ElementSpec(**ed))
    channels = [ChannelConfig(**cd) for cd in d.get("channels", [])]
    spec = ScenarioSpec(
        scenario_id=d["scenario_id"], map_path=d["map"], duration=float(d["duration"]),
        seed=int(d["seed"]), roster=roster, flows=list(d.get("flows", [])),
        channels=channels,
        adversary=AdversaryConfig(**d.get("adversary", {})),
        events=list(d.get("events", [])),
        signal_plans=[SignalPlan(**sp) for sp in d.get("signal_plans", [])],
        zones=list(d.get("zones", [])),
        halt_on_collision=bool(d.get("halt_on_collision", True)),
        vut=d.get("vut"),
    )
    mapd = resolve_map(spec, base_dir)
    _validate_against_map(spec, mapd)
    if base_dir is not None and not Path(spec.map_path).is_absolute():
        spec.map_path = str((Path(base_dir) / spec.map_path).resolve())
    return spec


def parse_scenario(path: str | Path) -> ScenarioSpec:
    p = Path(path)
    with open(p, "r", encoding="utf-8") as f:
        d = json.load(f)
    return parse_scenario_dict(d, base_dir=p.parent)


def resolve_map(spec: ScenarioSpec, base_dir: Path | None = None) -> ScenarioMap:
    p = Path(spec.map_path)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return load_map(p)


def _validate_against_map(spec: ScenarioSpec, mapd: ScenarioMap) -> None:
    for i, e in enumerate(spec.roster):
        if e.lane is not None and e.lane not in mapd.lanes:
            raise ScenarioError(f"roster[{i}].lane", f"unknown lane {e.lane!r}")
        for j, lid in enumerate(e.route):
            if lid not in mapd.lanes:
                raise ScenarioError(f"roster[{i}].route[{j}]", f"unknown lane {lid!r}")
    for i, f in enumerate(spec.flows):
        if f.get("lane") not in mapd.lanes:
            raise ScenarioError(f"flows[{i}].lane", f"unknown lane {f.get('lane')!r}")
    for i, sp in enumerate(spec.signal_plans):
        if sp.signal not in mapd.signals:
            raise ScenarioError(f"signal_plans[{i}].signal", f"unknown signal {sp.signal!r}")
    ids = [e.id for e in spec.roster]
    if len(ids) != len(set(ids)):
        raise ScenarioError("roster", "duplicate element ids")
    if spec.vut is not None and spec.vut not in ids:
        raise ScenarioError("vut", f"vut {spec.vut!r} not in roster")


def instantiate_roster(spec: ScenarioSpec, mapd: ScenarioMap) -> WorldState:
    world = WorldState()
    for e in spec.roster:
        if e.lane is not None:
            lane = mapd.lanes[e.lane]
            x, y = lane.polyline.point_at(e.s)
            pose = Pose(x, y, lane.polyline.heading_at(e.s))
        else:
            pose = Pose(e.x or 0.0, e.y or 0.0, e.heading)
        route = list(e.route) if e.route else ([e.lane] if e.lane else [])
        ent = EntityState(id=e.id, kind=e.kind, pose=pose, speed=e.speed,
                          lane=e.lane, s=e.s, route=route, length=e.length,
                          width=e.width,
                          control_mode="scripted" if e.control == "scripted" else "auto")
        ent.clock.mode = e.clock_mode
        world.add(ent)
    return world


# ---------------------------------------------------------------------------
# risk field
# ---------------------------------------------------------------------------

@dataclass
class RiskField:
    origin: tuple[float, float]
    res: float
    grid: np.ndarray
    contributions: dict[str, float]

    @property
    def total_mass(self) -> float:
        return float(self.grid.sum())


def _route_polyline_points(mapd: ScenarioMap, route: list[str], step: float) -> np.ndarray:
    pts = []
    for lid in route:
        poly = mapd.lanes[lid].polyline
        n = max(2, int(poly.length / step) + 1)
        for s in np.linspace(0.0, poly.length, n):
            pts.append(poly.point_at(float(s)))
    return np.array(pts) if pts else np.zeros((0, 2))


def risk_field(world: WorldState, ego_id: str, mapd: ScenarioMap,
               grid_res: float = 2.0, corridor_halfwidth: float = 6.0) -> RiskField:
    """Per-entity anisotropic risk kernels accumulated over the ego's route corridor.

    Kernel: amplitude (1 + speed/10), sigma 4 + 0.8*speed along the velocity
    direction, 2 m across it. Contribution = kernel mass restricted to the
    corridor; the field is exactly the sum of contributions.
    """
    ego = world.entities[ego_id]
    route = ego.remaining_route() or ([ego.lane] if ego.lane else [])
    x0, y0, x1, y1 = mapd.bounds()
    pad = 10.0
    xs = np.arange(x0 - pad, x1 + pad + grid_res, grid_res)
    ys = np.arange(y0 - pad, y1 + pad + grid_res, grid_res)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")

    rpts = _route_polyline_points(mapd, route, step=grid_res)
    if rpts.shape[0] == 0:
        mask = np.zeros(gx.shape, dtype=bool)
    else:
        d2 = ((gx[..., None] - rpts[:, 0]) ** 2 + (gy[..., None] - rpts[:, 1]) ** 2).min(axis=2)
        mask = d2 <= corridor_halfwidth ** 2

    grid = np.zeros(gx.shape)
    contributions: dict[str, float] = {}
    for eid in sorted(world.entities):
        if eid == ego_id:
            continue
        ent = world.entities[eid]
        if ent.kind in ("rsu",):
            continue
        amp = 1.0 + ent.speed / 10.0
        sig_along = 4.0 + 0.8 * ent.speed
        sig_perp = 2.0
        h = ent.pose.heading
        dx, dy = gx - ent.pose.x, gy - ent.pose.y
        along = dx * math.cos(h) + dy * math.sin(h)
        perp = -dx * math.sin(h) + dy * math.cos(h)
        kernel = amp * np.exp(-0.5 * ((along / sig_along) ** 2 + (perp / sig_perp) ** 2))
        kernel = np.where(mask, kernel, 0.0)
        grid += kernel
        contributions[eid] = float(kernel.sum())
    return RiskField(origin=(float(xs[0]), float(ys[0])), res=grid_res, grid=grid,
                     contributions=contributions)


def allocate_elements(contributions: dict[str, float],
                      physical_budget: int) -> dict[str, str]:
    """Top-k by risk contribution go physical (ties broken by id), rest virtual."""
    if physical_budget < 0:
        raise ValueError("physical_budget must be >= 0")
    ranked = sorted(contributions, key=lambda eid: (-contributions[eid], eid))
    top = set(ranked[:physical_budget])
    return {eid: ("physical" if eid in top else "virtual") for eid in contributions}
