"""Algorithm-under-test attachment: in-process adapters and the wire protocol.

The wire protocol frames canonical-JSON records as "<byte length>\\n<body>"
over a stream socket, synchronous per tick:

    client (harness)                    server (algorithm under test)
    ----------------                    ------------------------------
    hello {version, vehicle_id}    ->
                                   <-   welcome {version}  | error {reason}
    observe {tick, now, ego, ...}  ->
                                   <-   control {accel, lane_intent, emit}
    bye                            ->

A malformed reply or a missed deadline never silently applies: the harness
holds the previous control and flags the tick.
"""

from __future__ import annotations

import json
import socket
import threading
from dataclasses import dataclass, field

from .runlog import canonical_json

PROTOCOL_VERSION = 1
MAX_FRAME = 1 << 20
DEFAULT_DEADLINE_MS = 50.0


class ProtocolError(ValueError):
    pass


class AutTimeout(TimeoutError):
    pass


@dataclass
class ControlReply:
    accel: float = 0.0
    lane_intent: str | None = None
    emit: list[dict] = field(default_factory=list)   # cooperation payloads to publish

    def to_dict(self) -> dict:
        return {"type": "control", "accel": self.accel,
                "lane_intent": self.lane_intent, "emit": list(self.emit)}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlReply":
        if d.get("type") != "control":
            raise ProtocolError(f"expected control record, got {d.get('type')!r}")
        accel = d.get("accel")
        if not isinstance(accel, (int, float)):
            raise ProtocolError("control.accel must be a number")
        intent = d.get("lane_intent")
        if intent is not None and not isinstance(intent, str):
            raise ProtocolError("control.lane_intent must be a string or null")
        emit = d.get("emit", [])
        if not isinstance(emit, list) or not all(isinstance(e, dict) for e in emit):
            raise ProtocolError("control.emit must be a list of records")
        return cls(accel=float(accel), lane_intent=intent, emit=emit)


# ---------------------------------------------------------------------------
# framing
# ---------------------------------------------------------------------------

def write_frame(sock: socket.socket, record: dict) -> None:
    body = canonical_json(record).encode("utf-8")
    sock.sendall(f"{len(body)}\n".encode("ascii") + body)


def read_frame(sock: socket.socket) -> dict:
    head = b""
    while not head.endswith(b"\n"):
        ch = sock.recv(1)
        if not ch:
            raise ProtocolError("connection closed mid-frame")
        head += ch
        if len(head) > 16:
            raise ProtocolError("oversized length header")
    try:
        length = int(head.strip())
    except ValueError as e:
        raise ProtocolError(f"bad length header {head!r}") from e
    if length < 2 or length > MAX_FRAME:
        raise ProtocolError(f"frame length {length} out of bounds")
    body = b""
    while len(body) < length:
        chunk = sock.recv(length - len(body))
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        body += chunk
    try:
        rec = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(f"frame body is not valid JSON: {e}") from e
    if not isinstance(rec, dict) or "type" not in rec:
        raise ProtocolError("frame must be an object with a type tag")
    return rec


# ---------------------------------------------------------------------------
# adapters
# ---------------------------------------------------------------------------

class AutAdapter:
    """One attached algorithm controlling one vehicle."""

    def handshake(self, vehicle_id: str) -> None:
        raise NotImplementedError

    def step(self, observation: dict, deadline_ms: float) -> ControlReply:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LocalAdapter(AutAdapter):
    """Wraps an in-process controller object with decide(observation)->ControlReply."""

    def __init__(self, controller):
        self.controller = controller
        self.vehicle_id = None

    def handshake(self, vehicle_id: str) -> None:
        self.vehicle_id = vehicle_id
        if hasattr(self.controller, "reset"):
            self.controller.reset(vehicle_id)

    def step(self, observation: dict, deadline_ms: float) -> ControlReply:
        out = self.controller.decide(observation)
        return out if isinstance(out, ControlReply) else ControlReply(*out)


class SocketAdapter(AutAdapter):
    """Remote algorithm over the framed stream protocol."""

    def __init__(self, host: str, port: int, connect_timeout: float = 5.0):
        self.host, self.port = host, port
        self._sock = socket.create_connection((host, port), timeout=connect_timeout)

    def handshake(self, vehicle_id: str) -> None:
        write_frame(self._sock, {"type": "hello", "version": PROTOCOL_VERSION,
                                 "vehicle_id": vehicle_id})
        reply = read_frame(self._sock)
        if reply.get("type") == "error":
            raise ProtocolError(f"handshake rejected: {reply.get('reason')}")
        if reply.get("type") != "welcome" or reply.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"bad handshake reply {reply!r}")

    def step(self, observation: dict, deadline_ms: float = DEFAULT_DEADLINE_MS) -> ControlReply:
        write_frame(self._sock, {"type": "observe", **observation,
                                 "deadline_ms": deadline_ms})
        self._sock.settimeout(deadline_ms / 1000.0)
        try:
            reply = read_frame(self._sock)
        except socket.timeout as e:
            raise AutTimeout(f"no control within {deadline_ms} ms") from e
        finally:
            self._sock.settimeout(None)
        return ControlReply.from_dict(reply)

    def close(self) -> None:
        try:
            write_frame(self._sock, {"type": "bye"})
        except OSError:
            pass
        self._sock.close()


class AutServer:
    """Serves one controller over the wire protocol; used to attach external
    stubs and by tests to exercise the transport end to end."""

    def __init__(self, controller_factory, host: str = "127.0.0.1", port: int = 0):
        self.controller_factory = controller_factory
        self._listener = socket.create_server((host, port))
        self.port = self._listener.getsockname()[1]
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._stop = threading.Event()

    def start(self) -> "AutServer":
        self._thread.start()
        return self

    def _serve(self) -> None:
        self._listener.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            threading.Thread(target=self._session, args=(conn,), daemon=True).start()

    def _session(self, conn: socket.socket) -> None:
        controller = None
        try:
            hello = read_frame(conn)
            if hello.get("type") != "hello":
                write_frame(conn, {"type": "error", "reason": "expected hello"})
                return
            if hello.get("version") != PROTOCOL_VERSION:
                write_frame(conn, {"type": "error",
                                   "reason": f"unsupported version {hello.get('version')}"})
                return
            controller = self.controller_factory()
            if hasattr(controller, "reset"):
                controller.reset(hello.get("vehicle_id"))
            write_frame(conn, {"type": "welcome", "version": PROTOCOL_VERSION})
            while True:
                rec = read_frame(conn)
                if rec.get("type") == "bye":
                    return
                if rec.get("type") != "observe":
                    write_frame(conn, {"type": "error", "reason": "expected observe"})
                    return
                reply = controller.decide(rec)
                if not isinstance(reply, ControlReply):
                    reply = ControlReply(*reply)
                write_frame(conn, reply.to_dict())
        except (ProtocolError, OSError):
            pass
        finally:
            conn.close()

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=2.0)
        self._listener.close()
