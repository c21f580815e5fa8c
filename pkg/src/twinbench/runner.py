"""Run orchestration: the deterministic tick loop realizing the data pipeline.

Per tick: drain the ordered command queue, deliver due bus messages, query
attached algorithms (observation out / control in, per-tick deadline),
update adversary and background flow, publish state shares and roadside
messages, advance the world, log. External inputs only enter at tick
boundaries, so (scenario, seed) -> log is a pure function.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from . import adversary as adv
from .aut import AutAdapter, AutTimeout, ControlReply, LocalAdapter, ProtocolError
from .baselines import IdmBaseline, ScriptedProfile
from .bus import Bus, ChannelConfig, MessageEnvelope
from .cooperation import Spat, Stage, mec_warnings, spat_next, state_share
from .flow import FlowEngine, IdmParams, conflict_views
from .geom import Pose
from .mapdata import ScenarioMap
from .rng import RngBank
from .runlog import RunLogData, RunLogWriter, spec_hash
from .scenario import ScenarioSpec, instantiate_roster, resolve_map, risk_field
from .world import (BROADCAST_KINDS, DT, PLATFORM_KINDS, EntityState, Snapshot,
                    WorldState, advance_tick, collision_pairs, sample_clock_offset,
                    take_snapshot, twin_update)

PLATFORM_CHANNEL = "platform"
V2X_CHANNEL = "v2x"
OBSERVE_RANGE = 100.0


class RunError(RuntimeError):
    pass


class HandshakeError(RunError):
    pass


def default_channels() -> list[ChannelConfig]:
    return [
        ChannelConfig(name=PLATFORM_CHANNEL, klass="platform", base_latency=0.02,
                      jitter=0.01, drop_prob=0.0),
        ChannelConfig(name=V2X_CHANNEL, klass="broadcast", base_latency=0.05,
                      jitter=0.15, drop_prob=0.0, range_m=1000.0),
    ]


@dataclass
class TakeoverRecord:
    vehicle: str
    tick: int
    initiator: str
    reason: str
    snapshot: Snapshot


@dataclass
class RunResult:
    log: RunLogData
    text: str
    takeovers: list[TakeoverRecord] = field(default_factory=list)


class Simulation:
    def __init__(self, spec: ScenarioSpec, mapd: ScenarioMap | None = None,
                 seed: int | None = None, adapters: dict[str, AutAdapter] | None = None,
                 algorithm_id: str = "baseline"):
        self.spec = spec
        self.mapd = mapd if mapd is not None else resolve_map(spec)
        self.seed = spec.seed if seed is None else int(seed)
        self.algorithm_id = algorithm_id
        self.rng = RngBank(self.seed)
        self.world: WorldState = instantiate_roster(spec, self.mapd)
        clock_rng = self.rng.stream("clock")
        for eid in sorted(self.world.entities):
            sample_clock_offset(self.world.entities[eid].clock, clock_rng)

        self.bus = Bus(spec.channels or default_channels())
        if PLATFORM_CHANNEL not in self.bus.configs or V2X_CHANNEL not in self.bus.configs:
            for cfg in default_channels():
                self.bus.configs.setdefault(cfg.name, cfg)
                self.bus.subscribers.setdefault(cfg.name, set())
        for eid in sorted(self.world.entities):
            ent = self.world.entities[eid]
            if ent.kind in PLATFORM_KINDS or ent.kind == "rsu":
                self.bus.subscribe(PLATFORM_CHANNEL, eid)
            if ent.kind in BROADCAST_KINDS:
                self.bus.subscribe(V2X_CHANNEL, eid)

        self.flow = FlowEngine(spec.flow_specs())
        for eid in sorted(self.world.entities):
            if self.world.entities[eid].kind not in ("rsu", "pedestrian", "background"):
                self.flow.map_external(eid)

        acfg = spec.adversary
        self.adversary = adv.AdversaryEngine(
            enabled=acfg.enabled, intensity=acfg.intensity,
            interaction_range=acfg.interaction_range,
            maneuver_duration=acfg.maneuver_duration, window_len=acfg.window_ticks)

        self.spats: dict[str, Spat] = {}
        for plan in spec.signal_plans:
            stages = [Stage(phases={l: plan.approaches[l][i] for l in plan.approaches},
                            duration=plan.durations[i])
                      for i in range(len(plan.durations))]
            self.spats[plan.signal] = Spat(signal_id=plan.signal, stages=stages)
        self.world.signal_state = {k: v for k, v in self.spats.items()}

        self.controllers: dict[str, AutAdapter] = {}
        self._attach_controllers(adapters or {})
        self.manual: set[str] = set()
        self._released: set[str] = set()
        self._last_reply: dict[str, ControlReply] = {}
        self._events_by_tick: dict[int, list[dict]] = {}
        for ev in spec.events:
            self._events_by_tick.setdefault(int(ev["tick"]), []).append(dict(ev))
        self._commands: list[dict] = []
        self._cmd_lock = threading.Lock()
        self.takeovers: list[TakeoverRecord] = []
        self.paused = False
        self._halted: str | None = None
        self._tick_events: list[dict] = []
        self._crossed: dict[tuple[str, str], bool] = {}
        self._frame_listeners: list = []

        self.writer = RunLogWriter()
        self.writer.header(scenario_id=spec.scenario_id, seed=self.seed,
                           spec_digest=spec_hash(spec.to_dict()), vut=spec.vut,
                           algorithm_id=algorithm_id, dt=DT)

    # -- wiring ---------------------------------------------------------------

    def _attach_controllers(self, adapters: dict[str, AutAdapter]) -> None:
        for e in self.spec.roster:
            if e.kind in ("rsu", "pedestrian"):
                continue
            if e.control == "aut-endpoint":
                adapter = adapters.get(e.adapter)
                if adapter is None:
                    raise HandshakeError(f"no adapter connected for {e.adapter!r}")
                try:
                    adapter.handshake(e.id)
                except ProtocolError as exc:
                    raise HandshakeError(f"handshake with {e.adapter!r} failed: {exc}") from exc
                self.controllers[e.id] = adapter
            elif e.control == "scripted" and e.profile:
                a = LocalAdapter(ScriptedProfile(e.profile))
                a.handshake(e.id)
                self.controllers[e.id] = a
            elif e.kind != "background":
                params = IdmParams(**e.idm) if e.idm else IdmParams()
                a = LocalAdapter(IdmBaseline(params))
                a.handshake(e.id)
                self.controllers[e.id] = a

    def add_frame_listener(self, fn) -> None:
        self._frame_listeners.append(fn)

    # -- console command queue -------------------------------------------------

    def enqueue_command(self, cmd: dict) -> None:
        with self._cmd_lock:
            self._commands.append(dict(cmd))

    def _drain_commands(self) -> list[dict]:
        with self._cmd_lock:
            cmds, self._commands = self._commands, []
        return cmds

    # -- takeover / release ------------------------------------------------------

    def takeover(self, vehicle: str, initiator: str = "operator",
                 reason: str = "") -> TakeoverRecord:
        ent = self.world.entities.get(vehicle)
        if ent is None:
            raise RunError(f"unknown vehicle {vehicle!r}")
        if vehicle in self.manual or ent.control_mode == "manual":
            raise RunError(f"{vehicle!r} is already under manual control")
        snap = self.snapshot()
        ent.control_mode = "manual"
        self.manual.add(vehicle)
        rec = TakeoverRecord(vehicle=vehicle, tick=self.world.tick,
                             initiator=initiator, reason=reason, snapshot=snap)
        self.takeovers.append(rec)
        self._tick_events.append({"type": "takeover", "vehicle": vehicle,
                                  "initiator": initiator, "reason": reason,
                                  "tick": self.world.tick})
        # the cloud side announces the mode change to every participant
        self.bus.publish(PLATFORM_CHANNEL, "cloud", {
            "type": "takeover_event", "vehicle": vehicle, "tick": self.world.tick,
            "initiator": initiator}, self.world.sim_time, ent.pose,
            self.rng.stream("bus"))
        return rec

    def release(self, vehicle: str) -> None:
        if vehicle not in self.manual:
            raise RunError(f"{vehicle!r} is not under manual control")
        self.manual.discard(vehicle)
        self.world.entities[vehicle].control_mode = "auto"
        self._tick_events.append({"type": "release", "vehicle": vehicle,
                                  "tick": self.world.tick})

    def set_intensity(self, value: float) -> None:
        self.adversary.set_intensity(value)
        self._tick_events.append({"type": "set_intensity",
                                  "value": self.adversary.state.intensity,
                                  "tick": self.world.tick})

    # -- snapshot / restore -----------------------------------------------------

    def snapshot(self) -> Snapshot:
        extra = {
            "flow": self.flow.state(),
            "adversary": self.adversary.state.to_dict(),
            "adversary_enabled": self.adversary.enabled,
            "manual": sorted(self.manual),
            "spats": {k: v.to_dict() for k, v in sorted(self.spats.items())},
            "crossed": {f"{k[0]}|{k[1]}": v for k, v in sorted(self._crossed.items())},
        }
        return take_snapshot(self.world, self.bus.state(), self.rng.state(), extra)

    def restore(self, snap: Snapshot) -> None:
        # the snapshot stays immutable: copy everything out of it
        import copy as _copy

        self.world = _copy.deepcopy(snap.world)
        self.bus.restore(_copy.deepcopy(snap.bus_state))
        self.rng = RngBank.restore(snap.rng_state)
        self.flow.restore(_copy.deepcopy(snap.extra.get("flow", {})))
        st = snap.extra.get("adversary")
        if st:
            self.adversary.state = adv.AdversarialState.from_dict(st)
        self.adversary.enabled = snap.extra.get("adversary_enabled", self.adversary.enabled)
        self.manual = set(snap.extra.get("manual", []))
        self.spats = {k: Spat.from_dict(v)
                      for k, v in snap.extra.get("spats", {}).items()}
        self.world.signal_state = {k: v for k, v in self.spats.items()}
        self._crossed = {}
        for k, v in snap.extra.get("crossed", {}).items():
            a, b = k.split("|", 1)
            self._crossed[(a, b)] = v

    # -- observation --------------------------------------------------------------

    def _entity_public_view(self, ent: EntityState) -> dict:
        pose = ent.twin_pose if (ent.kind == "hdv_twin" and ent.twin_pose) else ent.pose
        speed = ent.twin_speed if (ent.kind == "hdv_twin" and ent.twin_pose) else ent.speed
        return {"id": ent.id, "kind": ent.kind, "x": pose.x, "y": pose.y,
                "heading": pose.heading, "speed": speed, "lane": ent.lane,
                "s": ent.s, "length": ent.length, "width": ent.width}

    def build_observation(self, eid: str, inbox: dict[str, list[dict]]) -> dict:
        ent = self.world.entities[eid]
        lane = self.mapd.lanes.get(ent.lane) if ent.lane else None
        neighbors = []
        for oid in sorted(self.world.entities):
            other = self.world.entities[oid]
            if oid == eid or other.kind == "rsu":
                continue
            if other.pose.distance_to(ent.pose) <= OBSERVE_RANGE:
                neighbors.append(self._entity_public_view(other))
        return {
            "tick": self.world.tick,
            "now": self.world.sim_time,
            "vehicle_id": eid,
            "ego": {"id": eid, "x": ent.pose.x, "y": ent.pose.y,
                    "heading": ent.pose.heading, "speed": ent.speed,
                    "accel": ent.accel, "lane": ent.lane, "s": ent.s,
                    "length": ent.length, "width": ent.width,
                    "speed_limit": lane.speed_limit if lane else None},
            "neighbors": neighbors,
            "messages": inbox.get(eid, []),
            "route": ent.remaining_route(),
            "conflicts": conflict_views(self.world, self.mapd, ent),
            "signals": self._signal_views(ent),
        }

    def _signal_views(self, ent: EntityState) -> list[dict]:
        """Upcoming signal stop lines on the ego lane with live phase state."""
        if ent.lane is None:
            return []
        out = []
        for sig_id in sorted(self.spats):
            head = self.mapd.signals.get(sig_id)
            if head is None or ent.lane not in head.approaches:
                continue
            stop_s = head.approaches[ent.lane].get("stop_s")
            if stop_s is None:
                continue
            dist = stop_s - ent.s
            if dist < -2.0 or dist > 150.0:
                continue
            sp = self.spats[sig_id]
            out.append({"signal": sig_id, "distance": dist,
                        "phase": sp.phase_for(ent.lane),
                        "time_to_change": sp.time_to_change})
        return out

    # -- tick pipeline ---------------------------------------------------------

    def _apply_event(self, ev: dict) -> None:
        kind = ev.get("type") or ev.get("cmd")
        try:
            if kind == "takeover":
                self.takeover(ev["vehicle"], initiator=ev.get("initiator", "scripted"),
                              reason=ev.get("reason", ""))
            elif kind == "release":
                self.release(ev["vehicle"])
            elif kind == "set_intensity":
                self.set_intensity(float(ev["value"]))
            elif kind == "pause":
                self.paused = True
            elif kind == "resume":
                self.paused = False
        except RunError as exc:
            self._tick_events.append({"type": "rejected_command", "command": kind,
                                      "reason": str(exc), "tick": self.world.tick})

    def step(self) -> bool:
        """One tick; returns False once the run has terminated."""
        if self._halted:
            return False
        t = self.world.tick
        now = self.world.sim_time

        if t == 0:
            self.bus.publish(PLATFORM_CHANNEL, "cloud", {
                "type": "task_control", "action": "start",
                "scenario": self.spec.scenario_id, "seed": self.seed},
                now, Pose(0.0, 0.0, 0.0), self.rng.stream("bus"))
        for ev in self._events_by_tick.get(t, []):
            self._apply_event(ev)
        for cmd in self._drain_commands():
            self._apply_event(cmd)

        positions = {eid: (e.pose.x, e.pose.y)
                     for eid, e in self.world.entities.items()}
        delivered = self.bus.deliver_due(now, positions)
        inbox: dict[str, list[dict]] = {}
        for rid, env in delivered:
            inbox.setdefault(rid, []).append(
                {"channel": env.channel, "sender": env.sender, "seq": env.seq,
                 "payload": env.payload})

        controls: dict[str, tuple[float, str | None]] = {}
        emitted: list[tuple[str, dict]] = []
        for eid in sorted(self.controllers):
            ent = self.world.entities.get(eid)
            if ent is None or ent.completed:
                continue
            if eid in self.manual:
                controls[eid] = (0.0, None)  # manual hold: speed kept, stop on command
                continue
            obs = self.build_observation(eid, inbox)
            try:
                reply = self.controllers[eid].step(obs, deadline_ms=50.0)
                self._last_reply[eid] = reply
            except AutTimeout:
                reply = self._last_reply.get(eid, ControlReply())
                self._tick_events.append({"type": "aut_timeout", "vehicle": eid,
                                          "tick": t})
            except ProtocolError as exc:
                reply = self._last_reply.get(eid, ControlReply())
                self._tick_events.append({"type": "protocol_error", "vehicle": eid,
                                          "detail": str(exc), "tick": t})
            controls[eid] = (reply.accel, reply.lane_intent)
            for payload in reply.emit:
                emitted.append((eid, payload))

        adv_controls: dict[str, tuple[float, str | None]] = {}
        if self.adversary.enabled and self.spec.vut in self.world.entities:
            contributions: dict[str, float] = {}
            if self.adversary.needs_selection(DT):
                contributions = risk_field(self.world, self.spec.vut, self.mapd,
                                           grid_res=4.0).contributions
            adv_controls = self.adversary.step(
                self.world, self.mapd, self.spec.vut, self.flow.eligible_ids(),
                contributions, self.rng.stream("adversary"), DT)

        flow_controls = self.flow.controls(self.world, self.mapd, DT,
                                           exclude=set(adv_controls))
        merged = {**flow_controls, **adv_controls, **controls}

        # state publishing; twins share their latest perception estimate
        pub_rng = self.rng.stream("bus")
        for eid in sorted(self.world.entities):
            ent = self.world.entities[eid]
            if ent.kind in PLATFORM_KINDS:
                share = state_share(ent, ent.twin_pose, ent.twin_speed) \
                    if ent.kind == "hdv_twin" and ent.twin_pose else state_share(ent)
                self.bus.publish(PLATFORM_CHANNEL, eid, share, now,
                                 ent.pose, pub_rng, ent.clock.node_offset)
            if ent.kind in BROADCAST_KINDS and ent.kind != "rsu":
                self.bus.publish(V2X_CHANNEL, eid, state_share(ent), now,
                                 ent.pose, pub_rng, ent.clock.node_offset)
            if ent.kind == "rsu":
                for sig_id in sorted(self.spats):
                    self.bus.publish(V2X_CHANNEL, eid, self.spats[sig_id].payload(),
                                     now, ent.pose, pub_rng, ent.clock.node_offset)
                for vid in sorted(self.world.entities):
                    v = self.world.entities[vid]
                    if v.kind not in ("physical_cav", "virtual_cav", "cloud_controlled"):
                        continue
                    for warn in mec_warnings(self.world, self.mapd, vid, ent.pose,
                                             rsu_range=1000.0, zones=self.spec.zones):
                        self.bus.publish(V2X_CHANNEL, eid, warn.to_payload(), now,
                                         ent.pose, pub_rng, ent.clock.node_offset)
        for sender, payload in emitted:
            ent = self.world.entities[sender]
            channel = payload.pop("channel", None) or (
                V2X_CHANNEL if ent.kind in BROADCAST_KINDS else PLATFORM_CHANNEL)
            self.bus.publish(channel, sender, payload, now, ent.pose, pub_rng,
                             ent.clock.node_offset)

        pre_phase = {sid: dict(sp.phases) for sid, sp in self.spats.items()}
        pre_s = {eid: e.s for eid, e in self.world.entities.items()}

        spawned = self.flow.spawn(self.world, self.mapd, DT, self.rng.stream("flow"))
        for ent in spawned:
            self._tick_events.append({"type": "spawn", "vehicle": ent.id, "tick": t})
            self.bus.subscribe(PLATFORM_CHANNEL, ent.id)

        advance_tick(self.world, merged, DT, self.mapd)
        for sid in sorted(self.spats):
            self.spats[sid] = spat_next(self.spats[sid], DT)
        self.world.signal_state = {k: v for k, v in self.spats.items()}

        # roadside perception refreshes each twin against the advanced truth
        twin_rng = self.rng.stream("twin")
        for eid in sorted(self.world.entities):
            ent = self.world.entities[eid]
            if ent.kind == "hdv_twin":
                twin_update((eid, ent.pose, ent.speed), self.world, twin_rng)

        self._detect_red_light(pre_phase, pre_s)
        self._detect_yields()

        collisions = collision_pairs(self.world, self.mapd)
        for a, b in collisions:
            self._tick_events.append({"type": "collision", "a": a, "b": b,
                                      "tick": self.world.tick})

        despawned = self.flow.despawn_completed(self.world)
        for eid in despawned:
            self._tick_events.append({"type": "despawn", "vehicle": eid,
                                      "tick": self.world.tick})

        min_ttc = None
        if self.spec.vut and self.spec.vut in self.world.entities:
            min_ttc = adv.min_ttc_to_neighbors(self.world, self.spec.vut)

        rec = self._tick_record(delivered, min_ttc)
        self.writer.tick(rec)
        for fn in self._frame_listeners:
            fn(rec)
        self._tick_events = []

        if collisions and self.spec.halt_on_collision:
            self._halted = "collision"
        elif self.world.tick * DT >= self.spec.duration - 1e-9:
            self._halted = "duration"
        elif (self.spec.vut and self.spec.vut in self.world.entities
              and self.world.entities[self.spec.vut].completed):
            self._halted = "route_completed"
        return self._halted is None

    def _detect_red_light(self, pre_phase: dict, pre_s: dict) -> None:
        for sig_id, sp in self.spats.items():
            head = self.mapd.signals.get(sig_id)
            if head is None:
                continue
            for lane_id, info in head.approaches.items():
                stop_s = info.get("stop_s")
                if stop_s is None or pre_phase[sig_id].get(lane_id) != "red":
                    continue
                for eid in sorted(self.world.entities):
                    ent = self.world.entities[eid]
                    if ent.lane != lane_id:
                        continue
                    before = pre_s.get(eid)
                    if before is not None and before <= stop_s < ent.s:
                        self._tick_events.append(
                            {"type": "red_light_entry", "vehicle": eid,
                             "signal": sig_id, "tick": self.world.tick})

    def _detect_yields(self) -> None:
        vid = self.spec.vut
        if not vid or vid not in self.world.entities:
            return
        ego = self.world.entities[vid]
        if ego.lane is None or ego.accel > -1.5:
            return
        for cp in self.mapd.conflicts_for(ego.lane):
            key = (vid, cp.id)
            if self._crossed.get(key):
                continue
            d_me = cp.position_on(ego.lane) - ego.s
            if not (0.0 < d_me < 30.0):
                continue
            other_lane = cp.lanes[1] if cp.lanes[0] == ego.lane else cp.lanes[0]
            s_ot = cp.position_on(other_lane)
            for eid in sorted(self.world.entities):
                ent = self.world.entities[eid]
                if ent.lane == other_lane and abs(ent.s - s_ot) <= cp.radius:
                    self._crossed[key] = True
                    self._tick_events.append({"type": "yield", "vehicle": vid,
                                              "conflict": cp.id,
                                              "tick": self.world.tick})
                    break

    def _tick_record(self, delivered: list[tuple[str, MessageEnvelope]],
                     min_ttc: float | None) -> dict:
        entities = {}
        for eid in sorted(self.world.entities):
            e = self.world.entities[eid]
            ent_rec = {
                "id": eid, "kind": e.kind, "x": e.pose.x, "y": e.pose.y,
                "heading": e.pose.heading, "speed": e.speed, "accel": e.accel,
                "lane": e.lane, "s": e.s, "lateral": e.lateral,
                "mode": e.control_mode, "changing": e.change is not None,
                "completed": e.completed,
            }
            if e.kind == "hdv_twin" and e.twin_pose is not None:
                ent_rec["twin_err"] = e.pose.distance_to(e.twin_pose)
            entities[eid] = ent_rec
        messages = [
            {"channel": env.channel, "sender": env.sender, "receiver": rid,
             "seq": env.seq, "send_ts": env.send_ts, "deliver_ts": env.deliver_ts,
             "ptype": env.payload.get("type")}
            for rid, env in delivered
        ]
        signals = {sid: {"phases": dict(sp.phases),
                         "time_to_change": round(sp.time_to_change, 9)}
                   for sid, sp in sorted(self.spats.items())}
        return {
            "tick": self.world.tick,
            "now": round(self.world.tick * DT, 9),
            "entities": entities,
            "messages": messages,
            "events": list(self._tick_events),
            "signals": signals,
            "min_ttc": None if min_ttc is None else round(min_ttc, 9),
            "intensity": self.adversary.state.intensity,
        }

    def finish(self) -> RunResult:
        self.writer.footer(self._halted or "duration")
        for adapter in self.controllers.values():
            adapter.close()
        text = self.writer.getvalue()
        return RunResult(log=RunLogData.parse(text), text=text,
                         takeovers=self.takeovers)

    def run_to_completion(self) -> RunResult:
        while self.step():
            pass
        return self.finish()


def run(spec: ScenarioSpec, adapters: dict[str, AutAdapter] | None = None,
        seed: int | None = None, mapd: ScenarioMap | None = None,
        algorithm_id: str = "baseline") -> RunResult:
    sim = Simulation(spec, mapd=mapd, seed=seed, adapters=adapters,
                     algorithm_id=algorithm_id)
    return sim.run_to_completion()
