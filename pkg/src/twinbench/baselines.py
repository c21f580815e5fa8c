"""Shipped controllers: the internal driving baseline and test stubs.

Controllers consume the same observation digest the wire protocol carries,
so any of them can run in-process or behind a socket unchanged.
"""

from __future__ import annotations

import math

from .aut import ControlReply
from .flow import B_HARD, IdmParams, idm_accel


def leader_in_observation(obs: dict) -> tuple[float, float]:
    """(net gap, leader speed) on the ego lane, inf gap when free."""
    ego = obs["ego"]
    best_gap, best_v = math.inf, 0.0
    for n in obs.get("neighbors", []):
        if n.get("lane") != ego.get("lane") or n["s"] <= ego["s"]:
            continue
        gap = n["s"] - ego["s"] - 0.5 * (n["length"] + ego["length"])
        if gap < best_gap:
            best_gap, best_v = gap, n["speed"]
    return best_gap, best_v


class IdmBaseline:
    """Route-following IDM driver that yields at conflict points."""

    def __init__(self, params: IdmParams | None = None):
        self.params = params or IdmParams()

    def reset(self, vehicle_id: str) -> None:
        self.vehicle_id = vehicle_id

    def decide(self, obs: dict) -> ControlReply:
        ego = obs["ego"]
        gap, v_lead = leader_in_observation(obs)
        for c in obs.get("conflicts", []):
            # conflict payload: distance to the point and whether to yield
            if c.get("yield") and c["distance"] < gap:
                gap, v_lead = max(c["distance"], 0.05), 0.0
        for sig in obs.get("signals", []):
            # red or yellow stop line acts as a stopped leader
            if sig["phase"] in ("red", "yellow") and 0.0 < sig["distance"] < gap:
                gap, v_lead = max(sig["distance"] - 1.0, 0.05), 0.0
        gap = max(gap, 0.05) if not math.isinf(gap) else gap
        accel = idm_accel(gap, ego["speed"], v_lead, self.params)
        return ControlReply(accel=accel)


class ZeroAccelStub:
    """Echoes zero acceleration; the vehicle coasts at its initial speed."""

    def decide(self, obs: dict) -> ControlReply:
        return ControlReply(accel=0.0)


class AlwaysCollideStub:
    """Floors the accelerator and ignores everything; guaranteed to hit a
    leader placed on its route."""

    def decide(self, obs: dict) -> ControlReply:
        return ControlReply(accel=3.0)


class AlwaysCompleteStub(IdmBaseline):
    """Safe completer: IDM following straight to the route end."""


class HardBrakeStub:
    """Stops and stays stopped (stall case for deduction verdicts)."""

    def decide(self, obs: dict) -> ControlReply:
        return ControlReply(accel=-B_HARD)


class ScriptedProfile:
    """Replays (tick, accel, lane_intent) rows; holds the last row between rows."""

    def __init__(self, rows: list[dict]):
        self.rows = sorted(rows, key=lambda r: r["tick"])

    def decide(self, obs: dict) -> ControlReply:
        accel, intent = 0.0, None
        for r in self.rows:
            if r["tick"] <= obs["tick"]:
                accel = r.get("accel", 0.0)
                intent = r.get("lane_intent")
            else:
                break
        return ControlReply(accel=accel, lane_intent=intent)


BUILTIN_CONTROLLERS = {
    "idm": IdmBaseline,
    "zero": ZeroAccelStub,
    "collide": AlwaysCollideStub,
    "complete": AlwaysCompleteStub,
    "brake": HardBrakeStub,
}
