"""Checkpoint blobs: event-log prefix + state snapshot + integrity seal.

Blob layout, one JSON object per line:
    {"kind": "event", ...}          x N (wire-format event records)
    {"kind": "snapshot", "version": 1, "state": {...}}
    {"kind": "seal", "sha256": <hex over all preceding bytes>}

Restoring verifies the seal first (truncation or bit-rot surfaces as
CorruptCheckpoint), then the format version, then reconstructs the state
and log. Re-serializing a restored checkpoint is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Optional

from ..errors import CorruptCheckpoint, VersionMismatch
from ..jsonutil import atomic_write_bytes, canonical_dumps, sha256_hex
from .events import EventRecord
from .state import SharedState

if TYPE_CHECKING:  # pragma: no cover
    from .runner import RunContext

CHECKPOINT_VERSION = 1
CHECKPOINT_FILE = "checkpoint.bin"
EVENT_LOG_FILE = "events.jsonl"


def checkpoint_save(state: SharedState, log: list[EventRecord]) -> bytes:
    lines = []
    for event in log:
        payload = event.to_dict()
        payload["kind"] = "event"
        lines.append(canonical_dumps(payload))
    lines.append(
        canonical_dumps(
            {"kind": "snapshot", "version": CHECKPOINT_VERSION, "state": state.to_dict()}
        )
    )
    body = ("\n".join(lines) + "\n").encode("utf-8")
    seal = canonical_dumps({"kind": "seal", "sha256": sha256_hex(body)}) + "\n"
    return body + seal.encode("utf-8")


def checkpoint_restore(blob: bytes) -> tuple[SharedState, list[EventRecord]]:
    text = blob.decode("utf-8", errors="replace")
    lines = text.splitlines(keepends=True)
    if not lines:
        raise CorruptCheckpoint("empty checkpoint blob")
    try:
        seal = json.loads(lines[-1])
    except json.JSONDecodeError as exc:
        raise CorruptCheckpoint(f"unparseable seal line: {exc}") from exc
    if not isinstance(seal, dict) or seal.get("kind") != "seal":
        raise CorruptCheckpoint("checkpoint blob has no seal record")
    body = "".join(lines[:-1]).encode("utf-8")
    if sha256_hex(body) != seal.get("sha256"):
        raise CorruptCheckpoint("checkpoint digest mismatch")

    events: list[EventRecord] = []
    state: Optional[SharedState] = None
    for line in lines[:-1]:
        record = json.loads(line)
        kind = record.pop("kind", None)
        if kind == "event":
            events.append(EventRecord.from_dict(record))
        elif kind == "snapshot":
            if record.get("version") != CHECKPOINT_VERSION:
                raise VersionMismatch(
                    f"checkpoint version {record.get('version')} unsupported"
                )
            state = SharedState.from_dict(record["state"])
        else:
            raise CorruptCheckpoint(f"unknown record kind {kind!r}")
    if state is None:
        raise CorruptCheckpoint("checkpoint blob lacks a snapshot record")
    return state, events


def persist_run_files(ctx: "RunContext", state: SharedState, log: list[EventRecord]) -> None:
    """Mirror the live run into its directory: full event log (rewritten
    append-equivalently) and an atomic checkpoint of the current state."""
    if ctx.run_dir is None:
        return
    run_dir = Path(ctx.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    log_text = "".join(e.to_json() + "\n" for e in log)
    atomic_write_bytes(run_dir / EVENT_LOG_FILE, log_text.encode("utf-8"))
    atomic_write_bytes(run_dir / CHECKPOINT_FILE, checkpoint_save(state, log))


def load_checkpoint(run_dir: Path) -> tuple[SharedState, list[EventRecord]]:
    path = Path(run_dir) / CHECKPOINT_FILE
    if not path.exists():
        raise CorruptCheckpoint(f"no checkpoint at {path}")
    return checkpoint_restore(path.read_bytes())
