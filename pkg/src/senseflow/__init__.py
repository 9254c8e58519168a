"""Passive Wi-Fi probe-request people tracking.

Gateway-side collection (:mod:`senseflow.agent`), server-side analytics
(:mod:`senseflow.server`, :mod:`senseflow.trajectory`,
:mod:`senseflow.metrics`), a phone and mobility simulator
(:mod:`senseflow.sim`) and the end-to-end pipeline
(:mod:`senseflow.pipeline`).
"""

from .agent import AgentSummary, GatewayAgent, MemorySink, SpoolSink, StreamSink, run_agent
from .capture import iter_capture, read_capture, write_capture
from .domain import (
    CollectionConfig,
    ContactRecord,
    DatasetPacket,
    Gateway,
    MacAddress,
    ProbeEvent,
    RecordView,
    deserialize_packet,
    serialize_packet,
)
from .metrics import ZeroTruthError, detection_error, tracking_accuracy
from .server import (
    PacketStore,
    Placement,
    density,
    dwell_durations,
    observed_trajectory,
    resolve_placements,
)
from .trajectory import Trajectory, lcs, lcs_length, matches_trajectory, recognize_trajectory

__version__ = "0.1.0"
