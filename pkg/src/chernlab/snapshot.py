"""Binary map snapshots.

Layout: ``b"CLSN"``, a little-endian ``uint32`` header length, the header as
canonical JSON (sorted keys, no whitespace), then the payload.  The payload
holds, patch by patch and row-major over the grid, the two target coordinates
``z^1, z^2`` of every point as little-endian float64 pairs (real, imaginary):
``n_patches * 2 * 2 * 8 * N^2`` bytes.

Chart ids are stored in the header: one id per patch when uniform, otherwise a
base64 string of one byte per grid point.
"""
from __future__ import annotations

import base64
import json
import struct
from pathlib import Path

import numpy as np

from .domains import DomainChart
from .errors import ConfigError
from .pullback import MapState
from .targets import make_target

MAGIC = b"CLSN"
FORMAT_VERSION = 1


def _header(ms: MapState, meta: dict | None) -> dict:
    dom = ms.domain
    ids = ms.chart_ids
    per_patch = [int(ids[p].flat[0]) for p in range(dom.n_patches)]
    if all(np.all(ids[p] == c) for p, c in enumerate(per_patch)):
        charts = {"encoding": "per_patch", "ids": per_patch}
    else:
        charts = {"encoding": "per_point", "ids": base64.b64encode(ids.astype(np.uint8).tobytes()).decode()}
    return {"format_version": FORMAT_VERSION,
            "domain": {"kind": dom.kind, "N": dom.N, "size": dom.size, "background": dom.background},
            "target": ms.target.id, "chart_ids": charts, "meta": meta or {}}


def to_bytes(ms: MapState, meta: dict | None = None) -> bytes:
    head = json.dumps(_header(ms, meta), sort_keys=True, separators=(",", ":")).encode()
    pts = np.ascontiguousarray(ms.points, dtype="<c16")
    return MAGIC + struct.pack("<I", len(head)) + head + pts.tobytes()


def save(ms: MapState, path, meta: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(ms, meta))


def read_header(data: bytes) -> tuple[dict, int]:
    if data[:4] != MAGIC:
        raise ConfigError("not a map snapshot")
    (n,) = struct.unpack("<I", data[4:8])
    head = json.loads(data[8:8 + n].decode())
    if head.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported snapshot version {head.get('format_version')}")
    return head, 8 + n


def from_bytes(data: bytes) -> MapState:
    head, off = read_header(data)
    d = head["domain"]
    dom = DomainChart(d["kind"], d["N"], size=d["size"], background=d["background"])
    payload = data[off:]
    expected = dom.n_patches * 2 * 2 * 8 * dom.N**2
    if len(payload) != expected:
        raise ConfigError(f"payload has {len(payload)} bytes, expected {expected}")
    pts = np.frombuffer(payload, dtype="<c16").reshape(dom.shape + (2,)).astype(complex)
    ch = head["chart_ids"]
    if ch["encoding"] == "per_patch":
        ids = np.asarray(ch["ids"], dtype=int)
    else:
        ids = np.frombuffer(base64.b64decode(ch["ids"]), dtype=np.uint8).reshape(dom.shape).astype(int)
    return MapState(dom, make_target(head["target"]), pts, ids)


def load(path) -> MapState:
    return from_bytes(Path(path).read_bytes())


def info(path) -> dict:
    """Header plus payload size of a snapshot file."""
    data = Path(path).read_bytes()
    head, off = read_header(data)
    head["payload_bytes"] = len(data) - off
    return head
