"""Message bus: latency, jitter, loss, range, FIFO hold-back."""

import numpy as np
import pytest

from twinbench.bus import (Bus, BusError, ChannelConfig, NoDataError,
                           latency_stats)
from twinbench.geom import Pose

POSE = Pose(0.0, 0.0, 0.0)


def make_bus(**cfg):
    defaults = dict(name="ch", klass="platform", base_latency=0.05, jitter=0.0,
                    drop_prob=0.0)
    defaults.update(cfg)
    bus = Bus([ChannelConfig(**defaults)])
    bus.subscribe("ch", "rx")
    return bus


class TestPublish:
    def test_fixed_latency(self, rng):
        bus = make_bus()
        env = bus.publish("ch", "tx", {"type": "state_share"}, now=1.0,
                          sender_pose=POSE, rng=rng)
        assert env.deliver_ts == pytest.approx(1.05)

    def test_drop_prob_one_always_drops(self, rng):
        bus = make_bus(drop_prob=1.0)
        for _ in range(100):
            env = bus.publish("ch", "tx", {"type": "x"}, 0.0, POSE, rng)
            assert env.dropped and env.deliver_ts is None
        assert bus.pending_count() == 0

    def test_unknown_channel_is_config_error(self, rng):
        bus = make_bus()
        with pytest.raises(BusError):
            bus.publish("nope", "tx", {}, 0.0, POSE, rng)

    def test_seq_monotone_per_sender_channel(self, rng):
        bus = make_bus()
        seqs = [bus.publish("ch", "tx", {}, 0.0, POSE, rng).seq for _ in range(5)]
        assert seqs == [1, 2, 3, 4, 5]


class TestDeliver:
    def test_empty_queue(self, rng):
        bus = make_bus()
        assert bus.deliver_due(10.0, {}) == []

    def test_not_due_until_deliver_ts(self, rng):
        bus = make_bus(base_latency=0.15)
        bus.publish("ch", "tx", {}, now=0.0, sender_pose=POSE, rng=rng)
        assert bus.deliver_due(0.1, {"rx": (0, 0)}) == []
        out = bus.deliver_due(0.2, {"rx": (0, 0)})
        assert len(out) == 1 and out[0][0] == "rx"

    def test_same_deliver_ts_ordered_by_seq(self, rng):
        bus = make_bus()
        e3 = bus.publish("ch", "tx", {"n": 3}, 0.0, POSE, rng)
        e4 = bus.publish("ch", "tx", {"n": 4}, 0.0, POSE, rng)
        assert e3.deliver_ts == e4.deliver_ts
        out = bus.deliver_due(1.0, {"rx": (0, 0)})
        assert [env.seq for _, env in out] == [e3.seq, e4.seq]

    def test_no_duplicate_delivery(self, rng):
        bus = make_bus()
        bus.publish("ch", "tx", {}, 0.0, POSE, rng)
        assert len(bus.deliver_due(1.0, {"rx": (0, 0)})) == 1
        assert bus.deliver_due(2.0, {"rx": (0, 0)}) == []

    def test_broadcast_range_cutoff(self, rng):
        bus = Bus([ChannelConfig(name="ch", klass="broadcast", base_latency=0.05,
                                 jitter=0.0, drop_prob=0.0, range_m=1000.0)])
        bus.subscribe("ch", "near")
        bus.subscribe("ch", "far")
        bus.publish("ch", "tx", {}, 0.0, POSE, rng)
        out = bus.deliver_due(1.0, {"near": (999.0, 0.0), "far": (1200.0, 0.0),
                                    "tx": (0.0, 0.0)})
        assert [r for r, _ in out] == ["near"]

    def test_range_exactly_at_boundary_delivers(self, rng):
        bus = Bus([ChannelConfig(name="ch", klass="broadcast", base_latency=0.0,
                                 jitter=0.0, range_m=1000.0)])
        bus.subscribe("ch", "edge")
        bus.publish("ch", "tx", {}, 0.0, POSE, rng)
        out = bus.deliver_due(0.0, {"edge": (1000.0, 0.0), "tx": (0.0, 0.0)})
        assert len(out) == 1

    def test_sender_never_receives_own(self, rng):
        bus = make_bus()
        bus.subscribe("ch", "tx")
        bus.publish("ch", "tx", {}, 0.0, POSE, rng)
        out = bus.deliver_due(1.0, {"rx": (0, 0), "tx": (0, 0)})
        assert [r for r, _ in out] == ["rx"]


class TestFifo:
    def test_holdback_under_jitter_fuzz(self):
        # 10^4 messages across senders with heavy jitter: per-(sender, channel)
        # delivery must follow seq order, with no delivery before send
        rng = np.random.Generator(np.random.PCG64(99))
        bus = Bus([ChannelConfig(name="ch", klass="platform", base_latency=0.01,
                                 jitter=0.5, drop_prob=0.0)])
        bus.subscribe("ch", "rx")
        senders = [f"s{i}" for i in range(10)]
        now = 0.0
        delivered: list = []
        for k in range(10_000):
            now = k * 0.01
            bus.publish("ch", senders[k % 10], {"k": k}, now, POSE, rng)
            delivered.extend(bus.deliver_due(now, {"rx": (0, 0)}))
        delivered.extend(bus.deliver_due(now + 10.0, {"rx": (0, 0)}))
        assert len(delivered) == 10_000
        last_seq: dict = {}
        for _, env in delivered:
            assert env.deliver_ts >= env.sim_send_ts
            prev = last_seq.get(env.sender, 0)
            assert env.seq == prev + 1, "seq order broken"
            last_seq[env.sender] = env.seq

    def test_all_delivered_exactly_once_no_loss(self, rng):
        bus = make_bus(jitter=0.2)
        n = 500
        for k in range(n):
            bus.publish("ch", "tx", {"k": k}, k * 0.01, POSE, rng)
        out = bus.deliver_due(100.0, {"rx": (0, 0)})
        assert len(out) == n
        assert sorted(env.payload["k"] for _, env in out) == list(range(n))


class TestLatencyStats:
    def test_constant_latency(self, rng):
        bus = make_bus()
        for k in range(10):
            bus.publish("ch", "tx", {}, k * 1.0, POSE, rng)
        envs = bus.deliver_due(100.0, {"rx": (0, 0)})
        mean, p99, mx = latency_stats(envs)
        assert mean == pytest.approx(0.05)
        assert p99 == pytest.approx(0.05)
        assert mx == pytest.approx(0.05)

    def test_single_message(self, rng):
        bus = make_bus(base_latency=0.123)
        bus.publish("ch", "tx", {}, 0.0, POSE, rng)
        stats = latency_stats(bus.deliver_due(1.0, {"rx": (0, 0)}))
        assert stats == pytest.approx((0.123, 0.123, 0.123))

    def test_rsu_default_bounded_200ms(self):
        rng = np.random.Generator(np.random.PCG64(5))
        bus = Bus([ChannelConfig(name="v2x", klass="broadcast", base_latency=0.05,
                                 jitter=0.15, drop_prob=0.0, range_m=1000.0)])
        bus.subscribe("v2x", "rx")
        for k in range(2000):
            bus.publish("v2x", "tx", {}, k * 0.1, POSE, rng)
        _, _, mx = latency_stats(bus.deliver_due(1e9, {"rx": (0, 0)}))
        assert mx <= 0.2

    def test_empty_is_no_data_error(self):
        with pytest.raises(NoDataError):
            latency_stats([])


class TestSnapshotState:
    def test_state_restore_roundtrip(self, rng):
        bus = make_bus(jitter=0.1)
        for k in range(20):
            bus.publish("ch", "tx", {"k": k}, k * 0.01, POSE, rng)
        bus.deliver_due(0.05, {"rx": (0, 0)})
        st = bus.state()
        bus2 = make_bus(jitter=0.1)
        bus2.restore(st)
        a = bus.deliver_due(10.0, {"rx": (0, 0)})
        b = bus2.deliver_due(10.0, {"rx": (0, 0)})
        assert [(r, e.seq, e.deliver_ts) for r, e in a] == \
               [(r, e.seq, e.deliver_ts) for r, e in b]
