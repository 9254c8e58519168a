import socket
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from senseflow.agent import (
    GatewayAgent,
    MemorySink,
    OrderingError,
    PeriodError,
    RoutingError,
    SpoolSink,
    StreamSink,
    open_sink,
    run_agent,
    spool_name,
)
from senseflow.capture import iter_capture
from senseflow.domain import CollectionConfig, MacAddress, ProbeEvent, deserialize_packet, quantize_rssi

from oracles import expected_records, random_stream


def drive(events, config, gn=1, start=0.0):
    """Feed events through one agent, flushing on event-time boundaries."""
    agent = GatewayAgent(config, gn, start)
    packets = []
    for e in events:
        while e.ts >= agent.period_end:
            packets.append(agent.flush_period(agent.period_end))
        agent.ingest_probe(e)
    packets.append(agent.close())
    return agent, packets


def records_by_key(packets, start=0.0, t_dataset=600.0):
    out = {}
    for p in packets:
        k = round((p.period_start - start) / t_dataset)
        for r in p.records:
            out.setdefault((k, r.mac), []).append((r.first_ts, r.last_ts, r.avg_rssi))
    return out


def oracle_by_key(events, t_dataset, t_interval, start=0.0):
    return {
        key: [(a, b, quantize_rssi(m)) for a, b, _, m in rows]
        for key, rows in expected_records(events, t_dataset, t_interval, start).items()
    }


class TestIngest:
    def test_gap_below_threshold_extends(self, event):
        agent, packets = drive([event(0.0), event(100.0)], CollectionConfig(600, 300))
        (r,) = packets[0].records
        assert (r.first_ts, r.last_ts) == (0.0, 100.0)
        assert agent.probes_emitted == 2 and agent.records_emitted == 1

    def test_gap_above_threshold_splits(self, event):
        _, packets = drive([event(0.0), event(400.0)], CollectionConfig(600, 300))
        assert [(r.first_ts, r.last_ts) for r in packets[0].records] == [(0.0, 0.0), (400.0, 400.0)]

    def test_gap_equal_to_threshold_splits(self, event):
        _, packets = drive([event(0.0), event(300.0)], CollectionConfig(600, 300))
        assert len(packets[0].records) == 2

    def test_average_rssi(self, event):
        evs = [event(0.0, rssi=-50.0), event(1.0, rssi=-60.0), event(2.0, rssi=-70.0)]
        _, packets = drive(evs, CollectionConfig(600, 300))
        assert packets[0].records[0].avg_rssi == -60.0

    def test_first_probe_opens_record(self, event):
        agent = GatewayAgent(CollectionConfig(600, 300), 1)
        agent.ingest_probe(event(42.0))
        (rec,) = agent.open_records.values()
        assert (rec.first_ts, rec.last_ts, rec.probe_count) == (42.0, 42.0, 1)
        assert agent.current_period_start == 0.0

    def test_routing_error(self, event):
        agent = GatewayAgent(CollectionConfig(600, 300), 1)
        with pytest.raises(RoutingError):
            agent.ingest_probe(event(1.0, gn=2))

    def test_ordering_error(self, event):
        agent = GatewayAgent(CollectionConfig(600, 300), 1)
        agent.ingest_probe(event(5.0))
        with pytest.raises(OrderingError):
            agent.ingest_probe(event(4.0))

    def test_event_past_period_needs_flush(self, event):
        agent = GatewayAgent(CollectionConfig(600, 300), 1, 0.0)
        with pytest.raises(PeriodError):
            agent.ingest_probe(event(600.0))


class TestFlush:
    def test_empty_period(self):
        agent = GatewayAgent(CollectionConfig(600, 300), 1, 0.0)
        p = agent.flush_period(600.0)
        assert p.records == () and (p.period_start, p.period_end) == (0.0, 600.0)
        assert agent.current_period_start == 600.0

    def test_flush_too_early(self):
        agent = GatewayAgent(CollectionConfig(600, 300), 1, 0.0)
        with pytest.raises(PeriodError):
            agent.flush_period(599.0)

    def test_record_split_at_boundary(self, event):
        _, packets = drive([event(590.0), event(605.0)], CollectionConfig(600, 300))
        assert [(r.first_ts, r.last_ts) for p in packets for r in p.records] == [(590.0, 590.0), (605.0, 605.0)]

    def test_three_periods(self, event):
        evs = [event(t) for t in (10.0, 700.0, 1500.0)]
        _, packets = drive(evs, CollectionConfig(600, 300))
        assert len(packets) == 3
        for p in packets:
            for r in p.records:
                assert p.period_start <= r.first_ts <= r.last_ts <= p.period_end

    def test_close_shortens_last_packet(self, event):
        agent = GatewayAgent(CollectionConfig(600, 300), 1, 0.0)
        agent.ingest_probe(event(10.0))
        p = agent.close(until=100.0)
        assert p.period_end == 100.0


def test_oracle_random_streams():
    rng = np.random.default_rng(7)
    for _ in range(50):
        cfg = CollectionConfig(float(rng.choice([60, 600, 1800])), float(rng.integers(1, 400)))
        events = random_stream(rng, int(rng.integers(0, 400)), int(rng.integers(1, 8)))
        agent, packets = drive(events, cfg)
        assert records_by_key(packets, 0.0, cfg.t_dataset) == oracle_by_key(events, cfg.t_dataset, cfg.t_interval)
        assert agent.probes_emitted == len(events)


ms_streams = st.lists(
    st.tuples(st.integers(0, 3_600_000), st.integers(0, 4), st.integers(-1000, -100)), max_size=120
).map(
    lambda rows: [
        ProbeEvent(MacAddress.from_int(0x020000000000 + w), t / 1000, r / 10, 1) for t, w, r in sorted(rows)
    ]
)


@settings(max_examples=150, deadline=None)
@given(ms_streams, st.integers(1, 900), st.sampled_from([300, 600, 1800]))
def test_segmentation_property(events, t_interval, t_dataset):
    cfg = CollectionConfig(t_dataset, t_interval)
    agent, packets = drive(events, cfg)
    assert records_by_key(packets, 0.0, t_dataset) == oracle_by_key(events, t_dataset, t_interval)
    assert agent.probes_emitted == len(events)


@settings(max_examples=100, deadline=None)
@given(ms_streams, st.integers(1, 600), st.integers(1, 600))
def test_monotone_merging(events, a, b):
    lo, hi = sorted((a, b))
    n_lo = drive(events, CollectionConfig(600, lo))[0].records_emitted
    n_hi = drive(events, CollectionConfig(600, hi))[0].records_emitted
    assert n_hi <= n_lo


class TestRunAgent:
    def test_empty_source(self):
        s = run_agent(CollectionConfig(600, 300), 1, [], MemorySink())
        assert (s.packets_emitted, s.events_ingested, s.bytes_uploaded) == (0, 0, 0)
        assert s.ok

    def test_summary_counts_bytes(self):
        events = random_stream(np.random.default_rng(3), 500, 5, horizon=2000)
        sink = MemorySink()
        s = run_agent(CollectionConfig(600, 60), 1, events, sink, start=0.0)
        assert s.events_ingested == 500
        assert s.packets_emitted == len(sink.packets) == 4
        assert s.bytes_uploaded == sum(len(b) for b in sink.payloads)
        assert [deserialize_packet(b) for b in sink.payloads] == sink.packets

    def test_two_gateways_is_routing_error(self, event):
        with pytest.raises(RoutingError):
            run_agent(CollectionConfig(600, 300), 1, [event(1.0, gn=1), event(2.0, gn=2)], MemorySink())

    def test_until_emits_trailing_empty_periods(self, event):
        sink = MemorySink()
        run_agent(CollectionConfig(600, 300), 1, [event(10.0)], sink, start=0.0, until=1500.0)
        assert [(p.period_start, p.period_end) for p in sink.packets] == [(0, 600), (600, 1200), (1200, 1500)]

    def test_event_at_until_rejected(self, event):
        with pytest.raises(PeriodError):
            run_agent(CollectionConfig(600, 300), 1, [event(100.0)], MemorySink(), start=0.0, until=100.0)

    def test_deterministic_bytes(self):
        events = random_stream(np.random.default_rng(5), 800, 10)
        runs = []
        for _ in range(2):
            sink = MemorySink()
            run_agent(CollectionConfig(600, 120), 1, events, sink)
            runs.append(b"".join(sink.payloads))
        assert runs[0] == runs[1]

    def test_sink_failure_sets_error(self, event):
        class Broken:
            def send(self, packet, payload):
                raise OSError("disk full")

            def close(self):
                pass

        s = run_agent(CollectionConfig(600, 300), 1, [event(1.0), event(700.0)], Broken())
        assert not s.ok and "disk full" in s.error
        assert s.packets_emitted == 0

    def test_source_failure_sets_error(self, tmp_path):
        s = run_agent(CollectionConfig(600, 300), 1, iter_capture(tmp_path / "missing.csv"), MemorySink())
        assert not s.ok and s.events_ingested == 0


class TestSinks:
    def test_spool_layout(self, tmp_path, event):
        run_agent(CollectionConfig(600, 300), 7, [event(10.0, gn=7), event(650.0, gn=7)], SpoolSink(tmp_path))
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == [spool_name(7, 0.0), spool_name(7, 600.0)] == ["7_0.000.ndjson", "7_600.000.ndjson"]

    def test_concurrent_agents_share_spool(self, tmp_path):
        rng = np.random.default_rng(11)
        streams = {gn: random_stream(rng, 300, 4, gn=gn, horizon=3000) for gn in range(1, 6)}
        threads = [
            threading.Thread(target=run_agent, args=(CollectionConfig(600, 60), gn, ev, SpoolSink(tmp_path), 0.0))
            for gn, ev in streams.items()
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(list(tmp_path.glob("*.ndjson"))) == 25
        assert not list(tmp_path.glob(".tmp-*"))

    def test_stream_sink(self, event):
        srv = socket.create_server(("127.0.0.1", 0))
        port = srv.getsockname()[1]
        received = []

        def accept():
            conn, _ = srv.accept()
            with conn, conn.makefile("rb") as fh:
                received.extend(fh.readlines())

        t = threading.Thread(target=accept)
        t.start()
        sink = open_sink(f"tcp://127.0.0.1:{port}")
        assert isinstance(sink, StreamSink)
        s = run_agent(CollectionConfig(600, 300), 1, [event(1.0), event(900.0)], sink)
        t.join(5)
        srv.close()
        assert s.ok and len(received) == 2
        assert deserialize_packet(received[1]).period_start == 600.0

    def test_open_sink_directory(self, tmp_path):
        assert isinstance(open_sink(str(tmp_path / "spool")), SpoolSink)
        assert isinstance(open_sink("localhost:9000"), StreamSink)
