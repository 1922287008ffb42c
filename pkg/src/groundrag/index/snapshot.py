"""Binary snapshot container.

Layout (all integers little-endian)::

    b"DRK1"  u32 version  u32 n_sections
    n_sections x (16-byte ascii name, u64 offset, u64 length)
    section payloads
    u64 checksum      # blake2b-64 over every preceding byte

Payload encodings are owned by the caller; this module only frames them.
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

from ..errors import ChecksumMismatch, SnapshotError, VersionMismatch

MAGIC = b"DRK1"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_ENTRY = struct.Struct("<16sQQ")
_CHECKSUM = struct.Struct("<Q")


def checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def pack(sections: dict[str, bytes], version: int = VERSION) -> bytes:
    names = list(sections)
    offset = _HEADER.size + _ENTRY.size * len(names)
    table = []
    for name in names:
        raw = name.encode("ascii")
        if len(raw) > 16:
            raise ValueError(f"section name too long: {name}")
        table.append(_ENTRY.pack(raw, offset, len(sections[name])))
        offset += len(sections[name])
    body = b"".join([_HEADER.pack(MAGIC, version, len(names)), *table, *(sections[n] for n in names)])
    return body + _CHECKSUM.pack(checksum(body))


def unpack(data: bytes) -> dict[str, bytes]:
    if len(data) < _HEADER.size + _CHECKSUM.size:
        raise ChecksumMismatch("snapshot truncated")
    body, (stored,) = data[:-_CHECKSUM.size], _CHECKSUM.unpack(data[-_CHECKSUM.size:])
    if checksum(body) != stored:
        raise ChecksumMismatch("snapshot checksum does not match contents")
    magic, version, count = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise SnapshotError("not a snapshot file (bad magic)")
    if version != VERSION:
        raise VersionMismatch(f"snapshot version {version}, this build reads {VERSION}")
    sections = {}
    for i in range(count):
        raw, offset, length = _ENTRY.unpack_from(body, _HEADER.size + i * _ENTRY.size)
        if offset + length > len(body):
            raise SnapshotError("section extends past end of file")
        sections[raw.rstrip(b"\0").decode("ascii")] = body[offset:offset + length]
    return sections


def write_file(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
