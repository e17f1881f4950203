import json
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sendees import io as sio
from sendees.exceptions import (
    ManifestError,
    SnapshotError,
    SnapshotMagicError,
    SnapshotTruncatedError,
    SnapshotVersionError,
)
from sendees.send import CheckpointRecord, RunLog
from sendees.sensitivity import CheckpointSeries, DropoutMask


class TestSnapshot:
    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(arrays(np.float64, st.tuples(st.integers(1, 9), st.integers(1, 9)),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
    def test_round_trip_bit_exact(self, tmp_path, E):
        path = tmp_path / "m.emb"
        sio.write_snapshot(path, E)
        assert sio.read_snapshot(path).tobytes() == np.ascontiguousarray(E).tobytes()

    def test_layout_is_column_major(self, tmp_path):
        path = tmp_path / "m.emb"
        sio.write_snapshot(path, np.array([[1.0, 2.0], [3.0, 4.0]]))
        data = path.read_bytes()
        assert data[:4] == b"EMB1"
        assert struct.unpack("<III", data[4:16]) == (1, 2, 2)
        assert struct.unpack("<4d", data[16:]) == (1.0, 3.0, 2.0, 4.0)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "m.emb"
        sio.write_snapshot(path, np.ones((3, 3)))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(SnapshotTruncatedError):
            sio.read_snapshot(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "m.emb"
        path.write_bytes(b"EMB1\x01")
        with pytest.raises(SnapshotTruncatedError):
            sio.read_snapshot(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.emb"
        path.write_bytes(struct.pack("<4sIII", b"NOPE", 1, 1, 1) + b"\0" * 8)
        with pytest.raises(SnapshotMagicError):
            sio.read_snapshot(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "m.emb"
        path.write_bytes(struct.pack("<4sIII", b"EMB1", 2, 1, 1) + b"\0" * 8)
        with pytest.raises(SnapshotVersionError):
            sio.read_snapshot(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "m.emb"
        sio.write_snapshot(path, np.ones((1, 1)))
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(SnapshotError):
            sio.read_snapshot(path)


def make_series(n=6, ckpts=(0, 10, 20), ids=("a", "b"), seed=0):
    rng = np.random.default_rng(seed)
    return [CheckpointSeries(i, list(ckpts), rng.standard_normal((len(ckpts), n))) for i in ids]


class TestManifest:
    def test_round_trip(self, tmp_path):
        series = make_series()
        back = sio.read_manifest(sio.write_manifest(tmp_path, series))
        assert [s.datapoint_id for s in back] == ["a", "b"]
        for s, b in zip(series, back):
            assert b.checkpoint_indices == [0, 10, 20]
            assert b.embeddings.tobytes() == s.embeddings.tobytes()

    def rewrite(self, tmp_path, edit):
        path = sio.write_manifest(tmp_path, make_series())
        doc = json.loads(path.read_text())
        edit(doc)
        path.write_text(json.dumps(doc))
        return path

    def test_schema_error_names_field(self, tmp_path):
        path = self.rewrite(tmp_path, lambda d: d["datapoints"][1].pop("id"))
        with pytest.raises(ManifestError, match="datapoints/1"):
            sio.read_manifest(path)

    def test_non_increasing_checkpoints(self, tmp_path):
        path = self.rewrite(tmp_path, lambda d: d.update(checkpoints=[0, 20, 10]))
        with pytest.raises(ManifestError, match="increasing"):
            sio.read_manifest(path)

    def test_missing_snapshot(self, tmp_path):
        path = self.rewrite(tmp_path, lambda d: d["datapoints"][0]["snapshots"].__setitem__(1, "gone.emb"))
        with pytest.raises(ManifestError, match="missing"):
            sio.read_manifest(path)

    def test_snapshot_count_mismatch(self, tmp_path):
        path = self.rewrite(tmp_path, lambda d: d["datapoints"][0]["snapshots"].pop())
        with pytest.raises(ManifestError):
            sio.read_manifest(path)

    def test_bad_snapshot_inside(self, tmp_path):
        path = sio.write_manifest(tmp_path, make_series())
        (tmp_path / "a_ckpt10.emb").write_bytes(b"EMB1")
        with pytest.raises(ManifestError, match="snapshots/1"):
            sio.read_manifest(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{")
        with pytest.raises(ManifestError):
            sio.read_manifest(path)


def test_run_log_round_trip(tmp_path):
    mask = DropoutMask(4, (1, 3))
    log = RunLog(mode="send", seed=3, records=[
        CheckpointRecord(i, 0.5 / (i + 1), -1.0, -2.0, mask, 0.01) for i in range(3)
    ])
    sio.write_run_log(tmp_path / "r.jsonl", log)
    rows = sio.read_run_log(tmp_path / "r.jsonl")
    assert len(rows) == 3 and rows[2]["checkpoint"] == 2
    assert rows[0]["active_mask"] == [1, 3] and rows[0]["mode"] == "send" and rows[0]["seed"] == 3


def test_write_json_atomic(tmp_path):
    sio.write_json(tmp_path / "x.json", {"b": 1, "a": [1.5]})
    assert json.loads((tmp_path / "x.json").read_text()) == {"a": [1.5], "b": 1}
    assert not (tmp_path / "x.json.tmp").exists()


def test_bench_csv_round_trip(tmp_path):
    rows = [
        dict(rows=10, cols=20, elements=200, M=5, exact_seconds=0.1, ees_seconds=0.05,
             exact_value=-1.0, ees_value=-0.1, error=None),
        dict(rows=10, cols=20, elements=200, M=50, exact_seconds=None, ees_seconds=None,
             exact_value=None, ees_value=None, error="MemoryError: boom"),
    ]
    sio.write_bench_csv(tmp_path / "b.csv", rows)
    assert sio.read_bench_csv(tmp_path / "b.csv") == rows


def test_bench_csv_bad_header(tmp_path):
    (tmp_path / "b.csv").write_text("x,y\n1,2\n")
    with pytest.raises(ValueError):
        sio.read_bench_csv(tmp_path / "b.csv")
