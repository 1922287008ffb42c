"""Append-only JSON-lines audit log with a strictly increasing sequence number."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from filelock import FileLock

ACTIONS = ("ingest", "index", "query", "answer", "eval")


def content_hash(text: str | None) -> str | None:
    if text is None:
        return None
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


@dataclass(frozen=True)
class AuditEvent:
    action: str
    status: str = "ok"
    query_hash: str | None = None
    snippet_chunk_ids: list[str] = field(default_factory=list)
    answer_hash: str | None = None
    detail: dict = field(default_factory=dict)
    timestamp: str = field(default_factory=utc_now)
    seq: int = 0

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown audit action {self.action!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "AuditEvent":
        return cls(**json.loads(line))


def _last_seq(path: Path) -> int:
    if not path.exists() or path.stat().st_size == 0:
        return 0
    with open(path, "rb") as fh:
        fh.seek(0, os.SEEK_END)
        pos = fh.tell()
        buf = b""
        while pos > 0:
            step = min(4096, pos)
            pos -= step
            fh.seek(pos)
            buf = fh.read(step) + buf
            lines = buf.rstrip(b"\n").split(b"\n")
            if len(lines) > 1 or pos == 0:
                return int(json.loads(lines[-1])["seq"])
    return 0


def append_audit(event: AuditEvent, log_path: str | Path) -> AuditEvent:
    """Append ``event`` with the next sequence number; returns the stored event."""
    path = Path(log_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with FileLock(str(path) + ".lock"):
        stored = replace(event, seq=_last_seq(path) + 1)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(stored.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
    return stored


def read_audit(log_path: str | Path) -> list[AuditEvent]:
    with open(log_path, encoding="utf-8") as fh:
        return [AuditEvent.from_json(line) for line in fh if line.strip()]
