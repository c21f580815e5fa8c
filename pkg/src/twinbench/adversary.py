"""Adaptive adversarial testing: maneuver selection, intensity control, 2D TTC.

Intensity climbs while the vehicle under test keeps a comfortable safety
margin and backs off after near-critical windows, so the harness pushes the
algorithm toward its capability boundary without camping in collision
states. Maneuvers are drawn from an intensity-weighted table and scale
their parameters with intensity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .world import EntityState, WorldState

T_SAFE = 4.0     # windowed min-TTC above this: escalate
T_CRIT = 2.0     # below this: back off
WINDOW_TICKS = 50
STEP_UP = 0.1
STEP_DOWN = 0.2
D_COL_DEFAULT = 4.0
HAZARD_TTC = 2.5

MANEUVER_KINDS = ("aggressive_overtake", "lane_straddle", "continuous_lane_change",
                  "emergency_brake", "rush_conflict", "merge_squeeze")

# kind -> (base weight, intensity gain); emergency braking only appears once
# intensity is non-zero.
_WEIGHTS = {
    "aggressive_overtake": (0.6, 0.6),
    "lane_straddle": (0.8, 0.2),
    "continuous_lane_change": (0.6, 0.4),
    "emergency_brake": (0.0, 1.6),
    "rush_conflict": (0.5, 1.2),
    "merge_squeeze": (0.5, 1.4),
}

# relation -> kinds that make sense from that geometry
_RELATION_KINDS = {
    "ahead_same_lane": ("emergency_brake", "lane_straddle"),
    "adjacent": ("merge_squeeze", "aggressive_overtake", "continuous_lane_change"),
    "conflicting": ("rush_conflict",),
}


class AdversaryError(ValueError):
    pass


class NoDataError(AdversaryError):
    pass


@dataclass
class Maneuver:
    kind: str
    duration: float
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MANEUVER_KINDS:
            raise AdversaryError(f"unknown maneuver kind {self.kind!r}")
        if self.duration <= 0:
            raise AdversaryError("duration must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdversarialState:
    intensity: float = 0.5
    active: dict[str, dict] = field(default_factory=dict)   # target id -> maneuver record
    window: list[float] = field(default_factory=list)       # per-tick min TTC ring
    window_len: int = WINDOW_TICKS

    def __post_init__(self):
        self.intensity = min(1.0, max(0.0, self.intensity))

    def push_ttc(self, ttc: float | None) -> None:
        self.window.append(math.inf if ttc is None else ttc)
        if len(self.window) > self.window_len:
            self.window.pop(0)

    def window_full(self) -> bool:
        return len(self.window) >= self.window_len

    def to_dict(self) -> dict:
        return {
            "intensity": self.intensity,
            "active": {k: dict(v) for k, v in sorted(self.active.items())},
            "window": [("inf" if math.isinf(v) else v) for v in self.window],
            "window_len": self.window_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdversarialState":
        st = cls(intensity=d.get("intensity", 0.5), window_len=d.get("window_len", WINDOW_TICKS))
        st.active = {k: dict(v) for k, v in d.get("active", {}).items()}
        st.window = [(math.inf if v == "inf" else float(v)) for v in d.get("window", [])]
        return st


def ttc_2d(a: EntityState, b: EntityState, horizon: float = 10.0,
           d_col: float = D_COL_DEFAULT) -> float | None:
    """Smallest t in [0, horizon] bringing the pair within d_col under
    constant-velocity extrapolation; closed-form quadratic; None if never."""
    if horizon <= 0 or d_col <= 0:
        raise AdversaryError("horizon and d_col must be > 0")
    pax, pay = a.pose.x, a.pose.y
    pbx, pby = b.pose.x, b.pose.y
    vax, vay = a.velocity
    vbx, vby = b.velocity
    px, py = pax - pbx, pay - pby
    vx, vy = vax - vbx, vay - vby
    dist0 = math.hypot(px, py)
    if dist0 <= d_col:
        return 0.0
    aa = vx * vx + vy * vy
    bb = 2.0 * (px * vx + py * vy)
    cc = px * px + py * py - d_col * d_col
    if aa == 0.0:
        return None  # same velocity, constant separation > d_col
    disc = bb * bb - 4.0 * aa * cc
    if disc < 0:
        return None
    t = (-bb - math.sqrt(disc)) / (2.0 * aa)
    if t < 0 or t > horizon:
        return None
    return t


def update_intensity(state: AdversarialState, ttc_min_window: float) -> AdversarialState:
    """Step intensity from the windowed min TTC: +0.1 when safe, -0.2 when critical."""
    if ttc_min_window > T_SAFE:
        state.intensity = min(1.0, state.intensity + STEP_UP)
    elif ttc_min_window < T_CRIT:
        state.intensity = max(0.0, state.intensity - STEP_DOWN)
    return state


def maneuver_params(kind: str, intensity: float) -> dict[str, float]:
    """Per-kind scalars scaled by intensity."""
    if kind == "emergency_brake":
        return {"decel": 3.0 + 5.0 * intensity}
    if kind == "rush_conflict":
        # speed boost toward the conflict; at full intensity a 9 km/h approach
        # becomes 12 km/h (factor 4/3)
        return {"speed_factor": 1.0 + intensity / 3.0, "accel": 1.0 + 1.5 * intensity}
    if kind == "merge_squeeze":
        return {"accel": 1.0 + 1.5 * intensity, "target_gap": max(0.5, 6.0 - 5.0 * intensity)}
    if kind == "lane_straddle":
        return {"offset_frac": 0.2 + 0.3 * intensity}
    if kind == "aggressive_overtake":
        return {"accel": 1.5 + 1.5 * intensity}
    if kind == "continuous_lane_change":
        return {"period": max(4.0, 8.0 - 4.0 * intensity)}
    raise AdversaryError(kind)


@dataclass
class Candidate:
    id: str
    relation: str          # ahead_same_lane | adjacent | conflicting
    contribution: float    # risk contribution to the VUT


def select_maneuver(intensity: float, candidates: list[Candidate],
                    rng: np.random.Generator,
                    duration: float = 4.0) -> tuple[str, Maneuver] | None:
    """Pick (target, maneuver) from the intensity-weighted table; the target is
    the eligible vehicle with the highest risk contribution. None when no
    candidate is in interaction range."""
    if not candidates:
        return None
    target = max(candidates, key=lambda c: (c.contribution, c.id))
    kinds = [k for k in _RELATION_KINDS[target.relation]]
    weights = np.array([_WEIGHTS[k][0] + _WEIGHTS[k][1] * intensity for k in kinds])
    total = float(weights.sum())
    if total <= 0:
        return None
    probs = weights / total
    kind = kinds[int(rng.choice(len(kinds), p=probs))]
    return target.id, Maneuver(kind=kind, duration=duration,
                               params=maneuver_params(kind, intensity))


def min_ttc_to_neighbors(world: WorldState, vut_id: str, horizon: float = 10.0,
                         d_col: float = D_COL_DEFAULT) -> float | None:
    vut = world.entities[vut_id]
    best = None
    for eid in sorted(world.entities):
        if eid == vut_id:
            continue
        ent = world.entities[eid]
        if ent.kind in ("rsu",):
            continue
        t = ttc_2d(vut, ent, horizon=horizon, d_col=d_col)
        if t is not None and (best is None or t < best):
            best = t
    return best


def hazard_fraction(min_ttc_series: list[float | None],
                    threshold: float = HAZARD_TTC) -> float:
    """Fraction of ticks whose min neighbor TTC fell below the hazard threshold."""
    if not min_ttc_series:
        raise NoDataError("empty log")
    hits = sum(1 for t in min_ttc_series if t is not None and t < threshold)
    return hits / len(min_ttc_series)


def hazard_csv(log, threshold: float = HAZARD_TTC) -> str:
    """Per-tick hazard table: tick, sim time, min TTC, hazardous flag."""
    lines = ["tick,now,min_ttc,hazardous"]
    for t in log.ticks:
        ttc = t.get("min_ttc")
        flag = int(ttc is not None and ttc < threshold)
        lines.append(f"{t['tick']},{t['now']},"
                     f"{'' if ttc is None else ttc},{flag}")
    frac = hazard_fraction([t.get("min_ttc") for t in log.ticks], threshold)
    lines.append(f"# hazard_fraction,{frac},threshold,{threshold}")
    return "\n".join(lines) + "\n"


class AdversaryEngine:
    """Drives eligible background vehicles against the VUT inside the tick loop."""

    def __init__(self, enabled: bool = True, intensity: float = 0.5,
                 interaction_range: float = 60.0, maneuver_duration: float = 4.0,
                 window_len: int = WINDOW_TICKS):
        self.enabled = enabled
        self.state = AdversarialState(intensity=intensity, window_len=window_len)
        self.interaction_range = interaction_range
        self.maneuver_duration = maneuver_duration

    def set_intensity(self, value: float) -> None:
        self.state.intensity = min(1.0, max(0.0, float(value)))

    def needs_selection(self, dt: float) -> bool:
        """True when this step will look for a new maneuver (risk field wanted)."""
        return not any(rec["remaining"] > dt for rec in self.state.active.values())

    def _relation(self, world: WorldState, mapd, vut: EntityState,
                  ent: EntityState) -> str | None:
        if ent.pose.distance_to(vut.pose) > self.interaction_range:
            return None
        if ent.lane is not None and ent.lane == vut.lane:
            return "ahead_same_lane" if ent.s > vut.s else None
        if ent.lane is not None and vut.lane is not None and mapd is not None:
            lane = mapd.lanes.get(vut.lane)
            if lane is not None and ent.lane in (lane.left, lane.right):
                return "adjacent"
            for cp in mapd.conflicts_for(vut.lane):
                if ent.lane in cp.lanes:
                    return "conflicting"
        return None

    def step(self, world: WorldState, mapd, vut_id: str, eligible: set[str],
             contributions: dict[str, float], rng: np.random.Generator,
             dt: float) -> dict[str, tuple[float, str | None]]:
        """Update window/intensity, keep or select maneuvers, emit control overrides."""
        if not self.enabled or vut_id not in world.entities:
            return {}
        vut = world.entities[vut_id]
        self.state.push_ttc(min_ttc_to_neighbors(world, vut_id))
        if self.state.window_full():
            update_intensity(self.state, min(self.state.window))

        # expire finished maneuvers deterministically
        for tid in sorted(self.state.active):
            rec = self.state.active[tid]
            rec["remaining"] = rec["remaining"] - dt
            if rec["remaining"] <= 0 or tid not in world.entities:
                del self.state.active[tid]
                ent = world.entities.get(tid)
                if ent is not None:
                    ent.lat_bias = 0.0
                    ent.control_mode = "auto"

        if not self.state.active:
            cands = []
            for eid in sorted(eligible):
                if eid not in world.entities:
                    continue
                rel = self._relation(world, mapd, vut, world.entities[eid])
                if rel is not None:
                    cands.append(Candidate(id=eid, relation=rel,
                                           contribution=contributions.get(eid, 0.0)))
            picked = select_maneuver(self.state.intensity, cands, rng,
                                     duration=self.maneuver_duration)
            if picked is not None:
                tid, mnv = picked
                self.state.active[tid] = {"kind": mnv.kind, "remaining": mnv.duration,
                                          **mnv.params}

        return self._controls(world, mapd, vut, dt)

    def _controls(self, world: WorldState, mapd, vut: EntityState,
                  dt: float) -> dict[str, tuple[float, str | None]]:
        out: dict[str, tuple[float, str | None]] = {}
        for tid in sorted(self.state.active):
            if tid not in world.entities:
                continue
            ent = world.entities[tid]
            ent.control_mode = "adversarial"
            rec = self.state.active[tid]
            kind = rec["kind"]
            if kind == "emergency_brake":
                out[tid] = (-rec["decel"], None)
            elif kind == "rush_conflict":
                out[tid] = (rec["accel"], None)
            elif kind == "merge_squeeze":
                intent = None
                if ent.change is None and ent.lane != vut.lane and mapd is not None:
                    lane = mapd.lanes.get(ent.lane)
                    if lane is not None:
                        if lane.left == vut.lane:
                            intent = "left"
                        elif lane.right == vut.lane:
                            intent = "right"
                out[tid] = (rec["accel"], intent)
            elif kind == "aggressive_overtake":
                out[tid] = (rec["accel"], None)
            elif kind == "continuous_lane_change":
                period = rec["period"]
                phase = rec.get("phase", 0.0) + dt
                rec["phase"] = phase
                intent = None
                if ent.change is None and phase >= period / 2.0:
                    rec["phase"] = 0.0
                    lane = mapd.lanes.get(ent.lane) if mapd is not None else None
                    if lane is not None:
                        intent = "left" if lane.left else ("right" if lane.right else None)
                out[tid] = (0.0, intent)
            elif kind == "lane_straddle":
                # hold speed while riding the lane marking
                if mapd is not None and ent.lane in mapd.lanes:
                    lane = mapd.lanes[ent.lane]
                    side = 1.0 if lane.left is not None else -1.0
                    ent.lat_bias = side * rec["offset_frac"] * lane.width
                out[tid] = (0.0, None)
        return out
