"""Latency-modeled message bus with two transport classes.

`platform` channels emulate the cloud data path every simulated element
reaches (lossless by default); `broadcast` channels emulate roadside/vehicle
radio with a coverage range checked at delivery time. Delivery is
FIFO-per-(sender, channel): deliver_ts is clamped to never precede an
earlier message from the same sender on the same channel, so jitter can
widen spacing but never reorder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Any

import numpy as np

from .geom import Pose


class BusError(ValueError):
    pass


class NoDataError(BusError):
    pass


@dataclass
class ChannelConfig:
    name: str
    klass: str = "platform"            # "platform" | "broadcast"
    base_latency: float = 0.02
    jitter: float = 0.0
    drop_prob: float = 0.0
    range_m: float | None = None       # broadcast coverage; None = unlimited

    def __post_init__(self):
        if self.klass not in ("platform", "broadcast"):
            raise BusError(f"unknown channel class {self.klass!r}")
        if self.base_latency < 0 or self.jitter < 0:
            raise BusError("latency parameters must be >= 0")
        if not (0.0 <= self.drop_prob <= 1.0):
            raise BusError("drop_prob must be in [0, 1]")
        if self.range_m is not None and self.range_m <= 0:
            raise BusError("range must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)


# RSU defaults follow the modeled radio: sub-200 ms latency, 1 km coverage.
RSU_BROADCAST = ChannelConfig(name="v2x", klass="broadcast", base_latency=0.05,
                              jitter=0.15, drop_prob=0.0, range_m=1000.0)


@dataclass
class MessageEnvelope:
    channel: str
    sender: str
    seq: int
    send_ts: float                 # sender clock = sim_time + node_offset
    deliver_ts: float | None       # None once dropped
    payload: dict[str, Any]
    sim_send_ts: float = 0.0       # simulator clock at publish, for latency stats
    sender_pose: tuple[float, float] = (0.0, 0.0)
    dropped: bool = False

    def to_dict(self) -> dict:
        return {
            "channel": self.channel, "sender": self.sender, "seq": self.seq,
            "send_ts": self.send_ts, "deliver_ts": self.deliver_ts,
            "payload": self.payload, "sim_send_ts": self.sim_send_ts,
            "sender_pose": list(self.sender_pose), "dropped": self.dropped,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MessageEnvelope":
        d = dict(d)
        d["sender_pose"] = tuple(d.get("sender_pose", (0.0, 0.0)))
        d["payload"] = dict(d["payload"])
        return cls(**d)


class Bus:
    def __init__(self, configs: list[ChannelConfig]):
        self.configs = {c.name: c for c in configs}
        self._queues: dict[tuple[str, str], list[MessageEnvelope]] = {}
        self._seq: dict[tuple[str, str], int] = {}
        self._last_deliver_ts: dict[tuple[str, str], float] = {}
        self.subscribers: dict[str, set[str]] = {c.name: set() for c in configs}
        self.delivered: list[tuple[str, MessageEnvelope]] = []
        self.drop_log: list[MessageEnvelope] = []

    def subscribe(self, channel: str, entity_id: str) -> None:
        if channel not in self.configs:
            raise BusError(f"unknown channel {channel!r}")
        self.subscribers[channel].add(entity_id)

    def publish(self, channel: str, sender: str, payload: dict, now: float,
                sender_pose: Pose, rng: np.random.Generator,
                sender_clock_offset: float = 0.0) -> MessageEnvelope:
        """Queue a message for delayed delivery, or drop it per channel loss."""
        cfg = self.configs.get(channel)
        if cfg is None:
            raise BusError(f"unknown channel {channel!r}")
        key = (sender, channel)
        seq = self._seq.get(key, 0) + 1
        self._seq[key] = seq
        env = MessageEnvelope(
            channel=channel, sender=sender, seq=seq,
            send_ts=now + sender_clock_offset, deliver_ts=None, payload=payload,
            sim_send_ts=now, sender_pose=(sender_pose.x, sender_pose.y),
        )
        dropped = cfg.drop_prob > 0 and float(rng.uniform(0.0, 1.0)) < cfg.drop_prob
        if dropped:
            env.dropped = True
            self.drop_log.append(env)
            return env
        raw = now + cfg.base_latency + (float(rng.uniform(0.0, cfg.jitter)) if cfg.jitter > 0 else 0.0)
        # FIFO hold-back: never schedule before an earlier message from this sender
        env.deliver_ts = max(raw, self._last_deliver_ts.get(key, 0.0))
        self._last_deliver_ts[key] = env.deliver_ts
        self._queues.setdefault(key, []).append(env)
        return env

    def deliver_due(self, now: float,
                    positions: dict[str, tuple[float, float]] | None = None
                    ) -> list[tuple[str, MessageEnvelope]]:
        """All (receiver, envelope) due by `now`, ordered by (deliver_ts, sender, seq).

        Broadcast-class messages reach only subscribers within the channel
        range of the sender at delivery time; a receiver never sees its own
        messages.
        """
        released: list[MessageEnvelope] = []
        for key in sorted(self._queues):
            q = self._queues[key]
            n = 0
            while n < len(q) and q[n].deliver_ts <= now:
                n += 1
            if n:
                released.extend(q[:n])
                del q[:n]
        released.sort(key=lambda e: (e.deliver_ts, e.sender, e.seq))

        out: list[tuple[str, MessageEnvelope]] = []
        for env in released:
            cfg = self.configs[env.channel]
            for rid in sorted(self.subscribers.get(env.channel, ())):
                if rid == env.sender:
                    continue
                if cfg.klass == "broadcast" and cfg.range_m is not None:
                    pos = (positions or {}).get(rid)
                    if pos is None:
                        continue
                    src = (positions or {}).get(env.sender, env.sender_pose)
                    if math.hypot(pos[0] - src[0], pos[1] - src[1]) > cfg.range_m:
                        continue
                out.append((rid, env))
        self.delivered.extend(out)
        return out

    def pending_count(self) -> int:
        return sum(len(q) for q in self._queues.values())

    def state(self) -> dict:
        return {
            "queues": {f"{k[0]}|{k[1]}": [e.to_dict() for e in q]
                       for k, q in sorted(self._queues.items()) if q},
            "seq": {f"{k[0]}|{k[1]}": v for k, v in sorted(self._seq.items())},
            "last_deliver_ts": {f"{k[0]}|{k[1]}": v
                                for k, v in sorted(self._last_deliver_ts.items())},
            "subscribers": {ch: sorted(s) for ch, s in sorted(self.subscribers.items())},
        }

    def restore(self, state: dict) -> None:
        self._queues = {}
        for k, envs in state.get("queues", {}).items():
            sender, channel = k.split("|", 1)
            self._queues[(sender, channel)] = [MessageEnvelope.from_dict(d) for d in envs]
        self._seq = {tuple(k.split("|", 1)): v for k, v in state.get("seq", {}).items()}
        self._last_deliver_ts = {tuple(k.split("|", 1)): v
                                 for k, v in state.get("last_deliver_ts", {}).items()}
        self.subscribers = {ch: set(s) for ch, s in state.get("subscribers", {}).items()}
        self.delivered = []
        self.drop_log = []


def latency_stats(delivered: list[tuple[str, MessageEnvelope]] | list[MessageEnvelope]
                  ) -> tuple[float, float, float]:
    """(mean, p99, max) of simulator-clock delivery latency; p99 is nearest-rank."""
    envs = [e[1] if isinstance(e, tuple) else e for e in delivered]
    lats = sorted(e.deliver_ts - e.sim_send_ts for e in envs if e.deliver_ts is not None)
    if not lats:
        raise NoDataError("no delivered messages")
    mean = sum(lats) / len(lats)
    rank = max(1, math.ceil(0.99 * len(lats)))
    return mean, lats[rank - 1], lats[-1]
