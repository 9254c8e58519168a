import io

import numpy as np
import pytest

from senseflow.capture import CaptureFormatError, capture_text, iter_capture, read_capture, write_capture

from oracles import random_stream


def test_round_trip_file(tmp_path):
    events = random_stream(np.random.default_rng(1), 300, 7)
    path = tmp_path / "c.csv"
    assert write_capture(events, path) == 300
    assert read_capture(path) == events
    assert path.read_text().splitlines()[0] == "ts,mac,rssi,gn"


def test_line_format(event):
    text = capture_text([event(12.5, who=3, rssi=-61.25, gn=4)])
    assert text.splitlines()[1] == "12.500,02:ab:00:00:00:03,-61.2,4"


def test_filter_by_gateway(event):
    text = capture_text([event(1.0, gn=1), event(2.0, gn=2), event(3.0, gn=1)])
    assert [e.ts for e in iter_capture(io.StringIO(text), gn=1)] == [1.0, 3.0]


def test_empty_file_and_header_only(tmp_path):
    (tmp_path / "a.csv").write_text("")
    (tmp_path / "b.csv").write_text("ts,mac,rssi,gn\n")
    assert read_capture(tmp_path / "a.csv") == []
    assert read_capture(tmp_path / "b.csv") == []


@pytest.mark.parametrize(
    "text",
    [
        "time,mac,rssi,gn\n",
        "ts,mac,rssi,gn\n1.0,aa:bb:cc:dd:ee:ff,-50\n",
        "ts,mac,rssi,gn\nx,aa:bb:cc:dd:ee:ff,-50,1\n",
        "ts,mac,rssi,gn\n1.0,nope,-50,1\n",
        "ts,mac,rssi,gn\n1.0,aa:bb:cc:dd:ee:ff,-500,1\n",
    ],
)
def test_bad_input(text):
    with pytest.raises(CaptureFormatError):
        read_capture(io.StringIO(text))
