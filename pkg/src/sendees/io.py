"""File formats: EMB1 snapshots, checkpoint manifests, run logs, bench CSV.

EMB1 layout (all little-endian)::

    offset  size          field
    0       4             magic  b"EMB1"
    4       4   u32       version = 1
    8       4   u32       rows
    12      4   u32       cols
    16      rows*cols*8   float64 payload, column-major
"""

import csv
import json
import os
import struct
from pathlib import Path

import jsonschema
import numpy as np

from ._validation import check_matrix
from .exceptions import (
    ManifestError,
    SnapshotError,
    SnapshotMagicError,
    SnapshotTruncatedError,
    SnapshotVersionError,
)
from .sensitivity import CheckpointSeries

MAGIC = b"EMB1"
VERSION = 1
_HEADER = struct.Struct("<4sIII")

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["checkpoints", "datapoints"],
    "additionalProperties": False,
    "properties": {
        "checkpoints": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
        },
        "datapoints": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "snapshots"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "snapshots": {"type": "array", "items": {"type": "string"}},
                },
            },
        },
    },
}

BENCH_COLUMNS = (
    "rows", "cols", "elements", "M", "exact_seconds", "ees_seconds", "exact_value", "ees_value",
)


def write_snapshot(path, E):
    E = check_matrix(E, "snapshot")
    rows, cols = E.shape
    if rows >= 2**32 or cols >= 2**32:
        raise SnapshotError(f"shape {E.shape} does not fit the u32 header")
    payload = np.asarray(E, dtype="<f8").tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(payload)


def read_snapshot(path):
    """Read an EMB1 file into a ``(rows, cols)`` float64 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        if len(data) >= 4 and data[:4] != MAGIC:
            raise SnapshotMagicError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
        raise SnapshotTruncatedError(f"{path}: {len(data)} bytes is shorter than the header")
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotMagicError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise SnapshotVersionError(f"{path}: unsupported version {version}, expected {VERSION}")
    expected = rows * cols * 8
    payload = data[_HEADER.size:]
    if len(payload) < expected:
        raise SnapshotTruncatedError(
            f"{path}: payload has {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise SnapshotError(f"{path}: {len(payload) - expected} trailing bytes after payload")
    flat = np.frombuffer(payload, dtype="<f8")
    return flat.reshape((rows, cols), order="F").astype(np.float64)


def _schema_error(exc, where):
    path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
    return f"{where}: at {path}: {exc.message}"


def read_manifest(path):
    """Load a checkpoint manifest into one :class:`CheckpointSeries` per datapoint.

    Snapshot paths are resolved relative to the manifest's directory; each
    file holds one embedding as an ``n x 1`` (or ``1 x n``) matrix.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ManifestError(_schema_error(exc, str(path))) from exc

    checkpoints = doc["checkpoints"]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ManifestError(f"{path}: checkpoint indices must be strictly increasing")
    base = path.parent
    series = []
    for i, dp in enumerate(doc["datapoints"]):
        if len(dp["snapshots"]) != len(checkpoints):
            raise ManifestError(
                f"{path}: datapoints/{i} lists {len(dp['snapshots'])} snapshots "
                f"for {len(checkpoints)} checkpoints"
            )
        rows = []
        for j, rel in enumerate(dp["snapshots"]):
            file = base / rel
            if not file.is_file():
                raise ManifestError(f"{path}: datapoints/{i}/snapshots/{j}: missing file {file}")
            try:
                vec = read_snapshot(file)
            except SnapshotError as exc:
                raise ManifestError(f"{path}: datapoints/{i}/snapshots/{j}: {exc}") from exc
            if 1 not in vec.shape:
                raise ManifestError(
                    f"{path}: datapoints/{i}/snapshots/{j}: expected a vector, got shape {vec.shape}"
                )
            rows.append(vec.ravel())
        if len({r.shape[0] for r in rows}) != 1:
            raise ManifestError(f"{path}: datapoints/{i}: embedding lengths differ across checkpoints")
        series.append(CheckpointSeries(dp["id"], list(checkpoints), np.stack(rows)))
    if len({s.n for s in series}) != 1:
        raise ManifestError(f"{path}: datapoints have different embedding lengths")
    return series


def write_manifest(directory, series_list, checkpoint_indices=None):
    """Write snapshots plus ``manifest.json`` for a list of checkpoint series."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    checkpoint_indices = list(checkpoint_indices or series_list[0].checkpoint_indices)
    doc = {"checkpoints": checkpoint_indices, "datapoints": []}
    for s in series_list:
        files = []
        for ckpt, vec in zip(checkpoint_indices, s.embeddings):
            name = f"{s.datapoint_id}_ckpt{ckpt}.emb"
            write_snapshot(directory / name, vec[:, None])
            files.append(name)
        doc["datapoints"].append({"id": s.datapoint_id, "snapshots": files})
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps(doc, indent=2))
    return manifest


def write_run_log(path, log):
    """One JSON object per checkpoint record, one per line."""
    with open(path, "w") as fh:
        for rec in log.records:
            fh.write(json.dumps({"mode": log.mode, "seed": log.seed, **rec.to_dict()}))
            fh.write("\n")


def read_run_log(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(path, obj):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_bench_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS + ("error",), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_bench_csv(path):
    """Parse a bench CSV back into typed dicts; failed cells keep ``error`` text."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames[:len(BENCH_COLUMNS)]) != BENCH_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for raw in reader:
            row = {}
            for key in ("rows", "cols", "elements", "M"):
                row[key] = int(raw[key])
            for key in ("exact_seconds", "ees_seconds", "exact_value", "ees_value"):
                row[key] = float(raw[key]) if raw[key] != "" else None
            row["error"] = raw.get("error") or None
            out.append(row)
    return out
