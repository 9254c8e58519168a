"""
Live upload to the flow server
==============================

Gateway agents stream packets over TCP as newline-delimited JSON. The server
stores each packet once, however often it is resent, and answers density
queries from whatever has arrived.
"""

import threading

from senseflow import CollectionConfig, PacketStore, StreamSink, run_agent
from senseflow.experiments import group_by_gateway
from senseflow.server import PacketServer, density
from senseflow.sim import simulate
from senseflow.sim.scenarios import classroom_scenario

scenario = classroom_scenario(rooms=2, sessions=1, duration=3600.0)
events = group_by_gateway(simulate(scenario).events())

store = PacketStore()
server = PacketServer(("127.0.0.1", 0), store)
threading.Thread(target=server.serve_forever, daemon=True).start()
host, port = server.server_address

# One thread per gateway, as if each ran on its own device.
threads = [
    threading.Thread(target=run_agent, args=(CollectionConfig(600, 300), gn, evs, StreamSink(host, port), 0.0, 3600.0))
    for gn, evs in sorted(events.items())
]
for t in threads:
    t.start()
for t in threads:
    t.join()
server.shutdown()
server.server_close()

print(f"server received {server.received} packets, stored {len(store)}")
d = density(store, 600.0, 0.0, 3600.0)
for name, counts in d.grouped({r.name: r.gateways for r in scenario.regions}).items():
    print(name, counts.tolist())
