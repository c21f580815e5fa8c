"""Console service: live session over WebSocket, one frame per tick.

Server to client: {"type": "frame", tick, now, entities, signals, intensity,
events, paused} at tick rate, plus {"type": "ack"/"nack", cmd_seq, ...}
replies. Client to server: {"type": "command", "cmd": takeover | release |
set_intensity | pause | resume, "cmd_seq": n, ...}. The server is
authoritative; commands enter the simulation's ordered queue and take
effect at the next tick boundary.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time

from websockets.asyncio.server import serve as ws_serve

from .runlog import canonical_json
from .runner import Simulation

FRAME_COMMANDS = ("takeover", "release", "set_intensity", "pause", "resume")


def state_frame(sim: Simulation, rec: dict | None = None) -> dict:
    """Bird's-eye frame mirroring the authoritative world state."""
    entities = []
    for eid in sorted(sim.world.entities):
        e = sim.world.entities[eid]
        entities.append({"id": eid, "kind": e.kind, "x": e.pose.x, "y": e.pose.y,
                         "heading": e.pose.heading, "speed": e.speed,
                         "control_mode": e.control_mode, "lane": e.lane})
    return {
        "type": "frame",
        "tick": sim.world.tick,
        "now": round(sim.world.sim_time, 9),
        "entities": entities,
        "signals": {sid: dict(sp.phases) for sid, sp in sorted(sim.spats.items())},
        "intensity": sim.adversary.state.intensity,
        "events": list(rec.get("events", [])) if rec else [],
        "paused": sim.paused,
    }


class ConsoleServer:
    """Runs the tick loop paced to wall clock while serving console sessions."""

    def __init__(self, sim: Simulation, host: str = "127.0.0.1", port: int = 8700,
                 realtime: bool = True):
        self.sim = sim
        self.host, self.port = host, port
        self.realtime = realtime
        self._loop: asyncio.AbstractEventLoop | None = None
        self._clients: set = set()
        self._started = threading.Event()
        self._finished = threading.Event()
        self._thread: threading.Thread | None = None
        self.result = None

    # -- websocket side ------------------------------------------------------

    async def _handler(self, websocket):
        self._clients.add(websocket)
        try:
            await websocket.send(canonical_json(state_frame(self.sim)))
            async for raw in websocket:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await websocket.send(canonical_json(
                        {"type": "nack", "reason": "malformed frame", "cmd_seq": None}))
                    continue
                await self._handle_command(websocket, msg)
        finally:
            self._clients.discard(websocket)

    async def _handle_command(self, websocket, msg: dict) -> None:
        seq = msg.get("cmd_seq")
        cmd = msg.get("cmd")
        if msg.get("type") != "command" or cmd not in FRAME_COMMANDS:
            await websocket.send(canonical_json(
                {"type": "nack", "cmd_seq": seq, "reason": f"unknown command {cmd!r}"}))
            return
        # validate against current state so the operator gets a reason now;
        # the actual effect is applied at the next tick boundary
        reason = self._validate(cmd, msg)
        if reason is not None:
            await websocket.send(canonical_json(
                {"type": "nack", "cmd_seq": seq, "cmd": cmd, "reason": reason}))
            return
        self.sim.enqueue_command({"cmd": cmd, "vehicle": msg.get("vehicle"),
                                  "value": msg.get("value"),
                                  "initiator": "operator"})
        await websocket.send(canonical_json({"type": "ack", "cmd_seq": seq, "cmd": cmd}))

    def _validate(self, cmd: str, msg: dict) -> str | None:
        if cmd in ("takeover", "release"):
            vid = msg.get("vehicle")
            if vid not in self.sim.world.entities:
                return f"unknown vehicle {vid!r}"
            manual = vid in self.sim.manual
            if cmd == "takeover" and manual:
                return f"{vid!r} already manual"
            if cmd == "release" and not manual:
                return f"{vid!r} not manual"
        if cmd == "set_intensity":
            v = msg.get("value")
            if not isinstance(v, (int, float)) or not (0.0 <= v <= 1.0):
                return "value must be in [0, 1]"
        return None

    def _broadcast(self, frame: dict) -> None:
        if self._loop is None:
            return
        data = canonical_json(frame)

        def _send():
            for ws in list(self._clients):
                try:
                    asyncio.ensure_future(ws.send(data))
                except RuntimeError:
                    pass

        self._loop.call_soon_threadsafe(_send)

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> "ConsoleServer":
        self._thread = threading.Thread(target=self._run_ws_loop, daemon=True)
        self._thread.start()
        if not self._started.wait(timeout=5.0):
            raise RuntimeError("console server failed to start")
        return self

    def _run_ws_loop(self) -> None:
        self._loop = asyncio.new_event_loop()
        asyncio.set_event_loop(self._loop)

        async def main():
            async with ws_serve(self._handler, self.host, self.port) as server:
                self.port = server.sockets[0].getsockname()[1]
                self._started.set()
                await asyncio.get_event_loop().create_future()  # run until cancelled

        try:
            self._loop.run_until_complete(main())
        except asyncio.CancelledError:
            pass
        finally:
            self._loop.close()

    def run_session(self) -> None:
        """Drive the simulation; scripted events run with or without a console."""
        sim = self.sim
        sim.add_frame_listener(lambda rec: self._broadcast(state_frame(sim, rec)))
        tick_wall = 0.1 if self.realtime else 0.0
        alive = True
        while alive:
            t0 = time.monotonic()
            if sim.paused:
                time.sleep(0.05)
                # drain console commands (resume) even while paused
                for cmd in sim._drain_commands():
                    sim._apply_event(cmd)
                continue
            alive = sim.step()
            if tick_wall:
                lag = tick_wall - (time.monotonic() - t0)
                if lag > 0:
                    time.sleep(lag)
        self.result = sim.finish()
        self._finished.set()

    def stop(self) -> None:
        if self._loop is not None:
            self._loop.call_soon_threadsafe(
                lambda: [t.cancel() for t in asyncio.all_tasks(self._loop)])
        if self._thread is not None:
            self._thread.join(timeout=2.0)


def serve(sim: Simulation, host: str = "127.0.0.1", port: int = 8700,
          realtime: bool = True) -> ConsoleServer:
    """Start the console endpoint and run the session on the calling thread."""
    server = ConsoleServer(sim, host=host, port=port, realtime=realtime).start()
    try:
        server.run_session()
    finally:
        server.stop()
    return server
