"""Append-only event records.

Wire format (one JSON object per line, UTF-8): fields exactly
``{seq, node, input_digest, output_digest, decision?, ts, outcome}`` where
digests are lowercase hex SHA-256 and outcome is ``ok``, ``retried`` or
``error:<kind>``. ``ts`` is the only nondeterministic field and is excluded
from all digest/replay comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from ..jsonutil import canonical_dumps
from .state import NodeId, RouterDecision

OUTCOME_OK = "ok"
OUTCOME_RETRIED = "retried"


def outcome_error(kind: str) -> str:
    return f"error:{kind}"


@dataclass(frozen=True)
class EventRecord:
    seq: int
    node: NodeId
    input_digest: str
    output_digest: str
    outcome: str
    ts: str
    decision: Optional[RouterDecision] = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "seq": self.seq,
            "node": self.node,
            "input_digest": self.input_digest,
            "output_digest": self.output_digest,
            "ts": self.ts,
            "outcome": self.outcome,
        }
        if self.decision is not None:
            d["decision"] = self.decision.to_dict()
        return d

    def to_json(self) -> str:
        return canonical_dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EventRecord:
        return cls(
            seq=int(d["seq"]),
            node=d["node"],
            input_digest=d["input_digest"],
            output_digest=d["output_digest"],
            outcome=d["outcome"],
            ts=d["ts"],
            decision=RouterDecision.from_dict(d["decision"]) if "decision" in d else None,
        )


def encode_log(events: Iterable[EventRecord]) -> str:
    return "".join(e.to_json() + "\n" for e in events)


def decode_log(text: str) -> list[EventRecord]:
    events = []
    for line in text.splitlines():
        if line.strip():
            events.append(EventRecord.from_dict(json.loads(line)))
    return events


def digest_sequence(events: Iterable[EventRecord]) -> list[tuple[str, str, str]]:
    """(node, input_digest, output_digest) triples — the replay-comparable
    projection of a log (timestamps dropped)."""
    return [(e.node, e.input_digest, e.output_digest) for e in events]
