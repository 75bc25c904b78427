import numpy as np
import pytest

from chernlab import snapshot
from chernlab.corpus import random_trig
from chernlab.errors import ConfigError
from chernlab.flow import concentrating_family

from conftest import disk_map


def test_round_trip_is_byte_identical(tmp_path):
    ms = disk_map(random_trig("Hopf", 7), "Hopf", N=16)
    path = tmp_path / "m.clsn"
    snapshot.save(ms, path, meta={"note": "x"})
    back = snapshot.load(path)
    assert np.array_equal(back.points, ms.points)
    assert snapshot.to_bytes(back, meta={"note": "x"}) == path.read_bytes()


def test_mixed_chart_ids_survive(tmp_path):
    ms = concentrating_family("FSProductBubble", [2.0], N=16)[0]
    assert len(np.unique(ms.chart_ids)) > 1
    back = snapshot.from_bytes(snapshot.to_bytes(ms))
    assert np.array_equal(back.chart_ids, ms.chart_ids)
    assert back.domain.kind == "SpherePair" and back.target.id == "FSProduct"


def test_payload_size():
    data = snapshot.to_bytes(disk_map(random_trig("FlatC2", 1), "FlatC2", N=16))
    head, off = snapshot.read_header(data)
    assert len(data) - off == 2 * 2 * 8 * 16**2
    assert head["chart_ids"] == {"encoding": "per_patch", "ids": [0]}


def test_truncated_payload_rejected():
    data = snapshot.to_bytes(disk_map(random_trig("FlatC2", 1), "FlatC2", N=16))
    with pytest.raises(ConfigError, match="payload"):
        snapshot.from_bytes(data[:-8])
    with pytest.raises(ConfigError):
        snapshot.from_bytes(b"NOPE" + data[4:])


def test_info_reports_header(tmp_path):
    path = tmp_path / "m.clsn"
    snapshot.save(disk_map(random_trig("FlatC2", 1), "FlatC2", N=16), path)
    info = snapshot.info(path)
    assert info["domain"]["N"] == 16
    assert info["payload_bytes"] == 2 * 2 * 8 * 16**2
