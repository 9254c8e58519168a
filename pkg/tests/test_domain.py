import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from senseflow.domain import (
    CollectionConfig,
    ContactRecord,
    DatasetPacket,
    InvariantViolationError,
    MacAddress,
    MalformedPacketError,
    ProbeEvent,
    RecordView,
    SchemaVersionError,
    deserialize_packet,
    serialize_packet,
)

octets = st.binary(min_size=6, max_size=6)


class TestMacAddress:
    def test_canonical_text(self):
        m = MacAddress.parse("AA:BB:cc:DD:ee:FF")
        assert str(m) == "aa:bb:cc:dd:ee:ff"
        assert m == MacAddress.parse("aa-bb-cc-dd-ee-ff")

    @given(octets)
    def test_text_round_trip(self, raw):
        m = MacAddress(raw)
        text = str(m)
        assert MacAddress.parse(text) == m
        assert str(MacAddress.parse(text)) == text
        assert text == text.lower()

    @given(octets, octets)
    def test_canonical_text_unique_per_bytes(self, a, b):
        assert (str(MacAddress(a)) == str(MacAddress(b))) == (a == b)

    def test_hash_ignores_text_case(self):
        assert hash(MacAddress.parse("AA:00:00:00:00:01")) == hash(MacAddress.parse("aa:00:00:00:00:01"))

    @pytest.mark.parametrize("bad", ["", "aa:bb", "aa:bb:cc:dd:ee:gg", "aabbccddeeff", "aa:bb:cc:dd:ee:ff:00"])
    def test_rejects_bad_text(self, bad):
        with pytest.raises(ValueError):
            MacAddress.parse(bad)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            MacAddress(b"\x00" * 5)


def test_probe_event_rssi_bounds(mac):
    ProbeEvent(mac(1), 0.0, -120.0, 1)
    ProbeEvent(mac(1), 0.0, 0.0, 1)
    with pytest.raises(ValueError):
        ProbeEvent(mac(1), 0.0, 0.5, 1)
    with pytest.raises(ValueError):
        ProbeEvent(mac(1), 0.0, -121.0, 1)


def test_contact_record_accumulates(event):
    r = ContactRecord.start(event(0.0, rssi=-50.0))
    r = r.extend(event(1.0, rssi=-60.0)).extend(event(2.0, rssi=-70.0))
    assert (r.first_ts, r.last_ts, r.probe_count) == (0.0, 2.0, 3)
    assert r.avg_rssi == -60.0
    assert r.finalize() == RecordView(r.mac, 0.0, 2.0, -60.0)


def test_contact_record_invariants(mac):
    with pytest.raises(ValueError):
        ContactRecord(mac(0), 5.0, 4.0, -60.0)
    with pytest.raises(ValueError):
        ContactRecord(mac(0), 1.0, 1.0, -60.0, 0)


def test_collection_config_positive():
    with pytest.raises(ValueError):
        CollectionConfig(0, 10)
    with pytest.raises(ValueError):
        CollectionConfig(10, -1)


class TestPacketInvariants:
    def test_record_outside_period(self, packet):
        with pytest.raises(InvariantViolationError):
            packet(1, 0.0, 600.0, (0, 590.0, 601.0, -60.0))

    def test_overlapping_records_same_mac(self, packet):
        with pytest.raises(InvariantViolationError) as err:
            packet(1, 0.0, 600.0, (0, 0.0, 100.0, -60.0), (0, 50.0, 200.0, -60.0))
        assert err.value.index == 1

    def test_disjoint_records_same_mac(self, packet):
        p = packet(1, 0.0, 600.0, (0, 0.0, 100.0, -60.0), (0, 400.0, 500.0, -60.0))
        assert len(p.records) == 2

    def test_values_snap_to_wire_precision(self, mac):
        v = RecordView(mac(0), 1.23456, 2.0004, -60.04)
        assert (v.first_ts, v.last_ts, v.avg_rssi) == (1.235, 2.0, -60.0)


class TestSerialization:
    def test_empty_packet(self):
        data = serialize_packet(DatasetPacket(3, 0.0, 600.0))
        assert data.endswith(b"\n") and data.count(b"\n") == 1
        obj = json.loads(data)
        assert obj == {"v": 1, "gn": 3, "period_start": 0.0, "period_end": 600.0, "records": []}

    def test_single_record_round_trip(self):
        rec = RecordView(MacAddress.parse("aa:bb:cc:dd:ee:ff"), 100.0, 160.0, -60.0)
        p = DatasetPacket(1, 0.0, 600.0, (rec,))
        assert deserialize_packet(serialize_packet(p)) == p

    def test_field_order_and_format(self, packet):
        p = packet(2, 1200.0, 1800.0, (5, 1210.5, 1300.25, -61.26))
        text = serialize_packet(p).decode()
        assert text.startswith('{"v":1,"gn":2,"period_start":1200.000,"period_end":1800.000,"records":[{"mac":')
        assert '"first_ts":1210.500,"last_ts":1300.250,"avg_rssi":-61.3}' in text

    def test_no_probe_count_on_wire(self, packet):
        text = serialize_packet(packet(1, 0.0, 600.0, (0, 1.0, 2.0, -50.0))).decode()
        assert "count" not in text

    def test_first_after_last_is_invariant_violation(self):
        line = (
            '{"v":1,"gn":1,"period_start":0,"period_end":600,"records":['
            '{"mac":"aa:bb:cc:dd:ee:01","first_ts":1,"last_ts":2,"avg_rssi":-50},'
            '{"mac":"aa:bb:cc:dd:ee:02","first_ts":9,"last_ts":3,"avg_rssi":-50}]}'
        )
        with pytest.raises(InvariantViolationError) as err:
            deserialize_packet(line)
        assert err.value.index == 1

    def test_truncated_input_is_malformed(self, packet):
        data = serialize_packet(packet(1, 0.0, 600.0, (0, 1.0, 2.0, -50.0)))
        for cut in (1, len(data) // 2, len(data) - 3):
            with pytest.raises(MalformedPacketError):
                deserialize_packet(data[:cut])

    @pytest.mark.parametrize(
        "mutate, field",
        [
            (lambda o: o.pop("gn"), "gn"),
            (lambda o: o.update(period_start="0"), "period_start"),
            (lambda o: o.update(records={}), "records"),
            (lambda o: o["records"][0].pop("avg_rssi"), "records[0].avg_rssi"),
            (lambda o: o["records"][0].update(mac="zz"), "records[0].mac"),
            (lambda o: o["records"][0].update(first_ts=True), "records[0].first_ts"),
        ],
    )
    def test_malformed_names_field(self, packet, mutate, field):
        obj = json.loads(serialize_packet(packet(1, 0.0, 600.0, (0, 1.0, 2.0, -50.0))))
        mutate(obj)
        with pytest.raises(MalformedPacketError) as err:
            deserialize_packet(json.dumps(obj))
        assert err.value.field == field

    def test_schema_version(self):
        with pytest.raises(SchemaVersionError):
            deserialize_packet('{"v":2,"gn":1,"period_start":0,"period_end":1,"records":[]}')


@st.composite
def packets(draw):
    gn = draw(st.integers(0, 500))
    start_ms = draw(st.integers(0, 2_000_000_000_000))
    length_ms = draw(st.integers(1, 7_200_000))
    start, end = start_ms / 1000, (start_ms + length_ms) / 1000
    n_macs = draw(st.integers(0, 5))
    macs = draw(st.lists(octets, min_size=n_macs, max_size=n_macs, unique=True))
    records = []
    for raw in macs:
        cuts = sorted(draw(st.lists(st.integers(start_ms, start_ms + length_ms), min_size=2, max_size=6, unique=True)))
        for a, b in zip(cuts[::2], cuts[1::2]):
            rssi = draw(st.integers(-1200, 0)) / 10
            records.append(RecordView(MacAddress(raw), a / 1000, b / 1000, rssi))
    records.sort(key=lambda r: (r.first_ts, r.mac.octets))
    return DatasetPacket(gn, start, end, tuple(records))


@settings(max_examples=300, deadline=None)
@given(packets())
def test_round_trip_property(p):
    data = serialize_packet(p)
    assert deserialize_packet(data) == p
    # deterministic: same value, same bytes
    assert serialize_packet(deserialize_packet(data)) == data
