import sys
from pathlib import Path

import pytest

from senseflow.domain import DatasetPacket, MacAddress, ProbeEvent, RecordView

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def mac():
    def make(i: int) -> MacAddress:
        return MacAddress.from_int(0x02AB00000000 + i)

    return make


@pytest.fixture
def event(mac):
    def make(ts, who=0, rssi=-60.0, gn=1) -> ProbeEvent:
        return ProbeEvent(mac(who), ts, rssi, gn)

    return make


@pytest.fixture
def packet(mac):
    def make(gn, start, end, *records) -> DatasetPacket:
        return DatasetPacket(gn, start, end, tuple(RecordView(mac(w), a, b, r) for w, a, b, r in records))

    return make
