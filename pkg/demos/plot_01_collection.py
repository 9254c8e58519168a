"""
Collecting contact records at one gateway
=========================================

A gateway agent turns raw probe requests into compact contact records: one
record per phone per stretch of consecutive sightings, closed when the phone
stays silent for ``t_interval`` seconds. Every ``t_dataset`` seconds the
records of the period are uploaded as one packet.
"""

from senseflow import CollectionConfig, MacAddress, MemorySink, ProbeEvent, run_agent

# Two phones. The first probes every few seconds, leaves for six minutes and
# comes back; the second is only seen twice.
a = MacAddress.parse("02:00:00:00:00:0a")
b = MacAddress.parse("02:00:00:00:00:0b")
events = sorted(
    [ProbeEvent(a, t, -55.0 - (t % 7), 1) for t in (5, 9, 14, 20, 31, 400, 404, 411)]
    + [ProbeEvent(b, t, -80.0, 1) for t in (60, 700)],
    key=lambda e: e.ts,
)

# With t_interval = 5 minutes the six-minute silence of phone A splits its
# sightings into two records; the second sighting of B falls in the next
# ten-minute period.
sink = MemorySink()
summary = run_agent(CollectionConfig(t_dataset=600, t_interval=300), 1, events, sink, start=0.0)
for packet in sink.packets:
    print(f"period [{packet.period_start:.0f}, {packet.period_end:.0f})")
    for r in packet.records:
        print(f"  {r.mac}  first {r.first_ts:6.1f}  last {r.last_ts:6.1f}  mean rssi {r.avg_rssi:6.1f}")

# Ten probe events became four records; the wire format is one JSON line
# per packet.
print(f"{summary.events_ingested} events -> {summary.packets_emitted} packets, {summary.bytes_uploaded} bytes")
print(sink.payloads[0].decode().strip())

# A longer t_interval merges phone A's two visits into one record.
sink = MemorySink()
run_agent(CollectionConfig(t_dataset=600, t_interval=600), 1, events, sink, start=0.0)
print("records with t_interval = 10 min:", sum(len(p.records) for p in sink.packets))
