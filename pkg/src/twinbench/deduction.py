"""Parallel deduction: judge whether the algorithm could have handled the
scene that triggered a takeover.

On takeover the live run snapshots and continues under manual control; the
deduction branch restores that snapshot offline, hands the vehicle back to
the algorithm, lets background traffic evolve, and renders a verdict from
what happens inside the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .aut import AutAdapter
from .runlog import RunLogData
from .world import DT, Snapshot


class DeductionError(ValueError):
    pass


@dataclass
class TakeoverEvent:
    vehicle: str
    tick: int
    initiator: str = "operator"     # operator | scripted
    reason: str = ""

    def to_dict(self) -> dict:
        return {"vehicle": self.vehicle, "tick": self.tick,
                "initiator": self.initiator, "reason": self.reason}


@dataclass
class DeductionVerdict:
    outcome: str                    # capable | incapable | inconclusive
    branch_log: RunLogData
    evidence: dict = field(default_factory=dict)

    def __post_init__(self):
        ev = self.evidence
        if self.outcome == "incapable":
            if not (ev.get("collision") or not ev.get("task_completed")):
                raise DeductionError("incapable requires collision or task failure")
        if self.outcome == "capable":
            if not (ev.get("task_completed") and not ev.get("collision")):
                raise DeductionError("capable requires completion without collision")

    def to_dict(self) -> dict:
        return {"outcome": self.outcome, "evidence": dict(self.evidence)}


def on_takeover(sim, ev: TakeoverEvent) -> Snapshot:
    """Route a takeover through the live loop: snapshot, then manual mode."""
    rec = sim.takeover(ev.vehicle, initiator=ev.initiator, reason=ev.reason)
    return rec.snapshot


def fork_simulation(spec, snap: Snapshot, vehicle: str, adapter: AutAdapter,
                    mapd=None, seed: int | None = None):
    """Branch simulation: snapshot state, algorithm back in control."""
    from .runner import Simulation  # runner imports deduction types transitively

    branch = Simulation(spec, mapd=mapd, seed=seed if seed is not None else spec.seed,
                        adapters=_adapters_for(spec, vehicle, adapter),
                        algorithm_id="deduction-branch")
    branch.restore(snap)
    branch.manual.discard(vehicle)
    ent = branch.world.entities.get(vehicle)
    if ent is None:
        raise DeductionError(f"{vehicle!r} missing from snapshot")
    ent.control_mode = "auto"
    if branch.controllers.get(vehicle) is not adapter:
        adapter.handshake(vehicle)
        branch.controllers[vehicle] = adapter
    # the branch replays no takeover/release of the deduction vehicle
    for tick in list(branch._events_by_tick):
        kept = [e for e in branch._events_by_tick[tick]
                if not (e.get("type") in ("takeover", "release")
                        and e.get("vehicle") == vehicle)]
        if kept:
            branch._events_by_tick[tick] = kept
        else:
            del branch._events_by_tick[tick]
    branch.writer = _branch_writer(spec, branch, snap.tick)
    return branch


def _adapters_for(spec, vehicle: str, adapter: AutAdapter) -> dict:
    out = {}
    for e in spec.roster:
        if e.control == "aut-endpoint":
            out[e.adapter] = adapter if e.id == vehicle else _NullAdapter()
    return out


class _NullAdapter(AutAdapter):
    def handshake(self, vehicle_id: str) -> None:
        pass

    def step(self, observation, deadline_ms):
        from .aut import ControlReply
        return ControlReply(accel=0.0)


def _branch_writer(spec, branch, fork_tick: int):
    from .runlog import RunLogWriter, spec_hash

    w = RunLogWriter()
    w.header(scenario_id=spec.scenario_id, seed=branch.seed,
             spec_digest=spec_hash(spec.to_dict()), vut=spec.vut,
             algorithm_id="deduction-branch", dt=DT, branch_of=fork_tick)
    return w


def run_deduction(spec, snap: Snapshot, vehicle: str, adapter: AutAdapter,
                  horizon: float = 30.0, mapd=None,
                  seed: int | None = None) -> DeductionVerdict:
    """Advance the branch up to `horizon` seconds past the fork and judge it.

    incapable: collision, or the vehicle stalls without finishing its route.
    capable: route completed, no collision. inconclusive: horizon elapsed
    mid-maneuver (still moving, route unfinished) or the algorithm timed out.
    """
    branch = fork_simulation(spec, snap, vehicle, adapter, mapd=mapd, seed=seed)
    branch.spec = _extended(spec, snap.tick * DT + horizon)
    horizon_ticks = snap.tick + int(round(horizon / DT))

    while branch.world.tick < horizon_ticks and branch.step():
        pass
    log = branch.finish().log

    collision = any(ev.get("type") == "collision"
                    for t in log.ticks for ev in t.get("events", []))
    timed_out = any(ev.get("type") == "aut_timeout" and ev.get("vehicle") == vehicle
                    for t in log.ticks for ev in t.get("events", []))
    completed = any(t["entities"].get(vehicle, {}).get("completed")
                    for t in log.ticks)
    ttcs = [t.get("min_ttc") for t in log.ticks if t.get("min_ttc") is not None]
    min_ttc = min(ttcs) if ttcs else None
    max_decel = 0.0
    moved = 0.0
    last_pos = None
    stopped_tail = 0
    for t in log.ticks:
        e = t["entities"].get(vehicle)
        if e is None:
            continue
        if e["accel"] < -max_decel:
            max_decel = -e["accel"]
        if last_pos is not None:
            moved += math.hypot(e["x"] - last_pos[0], e["y"] - last_pos[1])
        last_pos = (e["x"], e["y"])
        stopped_tail = stopped_tail + 1 if e["speed"] <= 1e-9 else 0
    dt = log.header.get("dt", DT)
    branch_ticks = max(1, len(log.ticks))
    stalled = (stopped_tail * dt >= 2.0
               and stopped_tail >= 0.5 * branch_ticks)

    evidence = {"collision": collision, "task_completed": completed,
                "min_ttc": min_ttc, "max_decel": max_decel,
                "timed_out": timed_out, "fork_tick": snap.tick,
                "moved_m": moved}
    if collision:
        outcome = "incapable"
    elif completed:
        outcome = "capable"
    elif timed_out:
        outcome = "inconclusive"
        evidence["task_completed"] = False
    elif stalled:
        outcome = "incapable"          # parked for the bulk of the horizon
        evidence["task_completed"] = False
    else:
        outcome = "inconclusive"       # horizon elapsed mid-maneuver
    return DeductionVerdict(outcome=outcome, branch_log=log, evidence=evidence)


def _extended(spec, new_duration: float):
    from copy import deepcopy

    out = deepcopy(spec)
    out.duration = max(spec.duration, new_duration)
    return out


def compare_outcomes(manual_log: RunLogData, branch_log: RunLogData,
                     vehicle: str) -> dict:
    """Per-metric deltas between the human continuation and the branch."""
    fork = branch_log.header.get("branch_of")
    if fork is None:
        raise DeductionError("branch log lacks a fork origin")
    m = _segment_metrics(manual_log, vehicle, after=fork)
    b = _segment_metrics(branch_log, vehicle, after=fork)
    deltas = {k: (None if (m[k] is None or b[k] is None) else b[k] - m[k])
              for k in m}
    flags = []
    if deltas.get("min_ttc") is not None and deltas["min_ttc"] < -0.5:
        flags.append("safety_regression")
    if deltas.get("task_time") is not None and deltas["task_time"] < 0:
        flags.append("efficiency_gain")
    return {"manual": m, "branch": b, "delta": deltas, "flags": flags,
            "fork_tick": fork}


def _segment_metrics(log: RunLogData, vehicle: str, after: int) -> dict:
    ticks = [t for t in log.ticks if t["tick"] > after]
    if not ticks:
        raise DeductionError("log has no records past the fork origin")
    speeds, accels, ttcs = [], [], []
    task_time = None
    dt = log.header.get("dt", DT)
    for t in ticks:
        e = t["entities"].get(vehicle)
        if e is None:
            continue
        speeds.append(e["speed"])
        accels.append(e["accel"])
        if t.get("min_ttc") is not None:
            ttcs.append(t["min_ttc"])
        if task_time is None and e.get("completed"):
            task_time = t["now"] - after * dt
    jerks = [abs(a2 - a1) / dt for a1, a2 in zip(accels, accels[1:])]
    return {
        "task_time": task_time,
        "min_ttc": min(ttcs) if ttcs else None,
        "max_decel": max((-a for a in accels if a < 0), default=0.0),
        "max_jerk": max(jerks) if jerks else 0.0,
    }
