"""Shared run state: the single record every agent node reads and writes.

The state is owned by exactly one run at a time and mutated in place by
node functions; the runner digests a canonical serialization before and
after each node, so anything that must be reproducible has to live here
(and must serialize without wall-clock or filesystem-absolute content).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from ..errors import StateInvariantViolation
from ..jsonutil import canonical_dumps, digest_obj
from ..plan import ResearchPlan

NodeId = str
ArtifactId = str

#: Router target sentinel meaning "terminate the run".
STOP: NodeId = "__STOP__"


class RunStatus(str, Enum):
    RUNNING = "running"
    STOPPED = "stopped"
    FAILED = "failed"


class Verdict(str, Enum):
    """Closed set of routing verdicts; anything else is a routing error."""

    CONTINUE = "continue"
    REDO = "redo"
    FIX = "fix"
    ALTER_PLAN = "alter_plan"
    RETURN = "return"
    POLISH = "polish"
    END = "end"


@dataclass(frozen=True)
class RouterDecision:
    verdict: Verdict
    rationale: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"verdict": self.verdict.value, "rationale": self.rationale}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RouterDecision:
        return cls(verdict=Verdict(d["verdict"]), rationale=d.get("rationale", ""))


@dataclass
class Message:
    """One audit entry in the shared conversation record."""

    role: str
    content: str
    meta: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role, "content": self.content, "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Message:
        return cls(role=d["role"], content=d["content"], meta=d.get("meta", {}))


@dataclass
class Artifact:
    """Typed intermediate product with provenance links.

    ``digest`` addresses the content bytes in the artifact store; ``meta``
    accumulates vision verdicts and supersession flags (append-only in
    spirit: artifacts never vanish from the state map).
    """

    id: ArtifactId
    kind: str
    name: str
    media_type: str
    digest: str
    size: int
    provenance: tuple[ArtifactId, ...] = ()
    meta: dict[str, Any] = field(default_factory=dict)

    def verdicts(self) -> list[dict[str, Any]]:
        return list(self.meta.get("verdicts", ()))

    def approved(self) -> Optional[bool]:
        """Latest vision verdict wins; None when never reviewed."""
        vs = self.verdicts()
        if not vs:
            return None
        return bool(vs[-1]["approved"])

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "name": self.name,
            "media_type": self.media_type,
            "digest": self.digest,
            "size": self.size,
            "provenance": list(self.provenance),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Artifact:
        return cls(
            id=d["id"],
            kind=d["kind"],
            name=d["name"],
            media_type=d["media_type"],
            digest=d["digest"],
            size=int(d["size"]),
            provenance=tuple(d.get("provenance", ())),
            meta=d.get("meta", {}),
        )


@dataclass
class SharedState:
    run_id: str
    plan: Optional[ResearchPlan] = None
    subtask_index: int = 0
    cursor: Optional[NodeId] = None
    messages: list[Message] = field(default_factory=list)
    artifacts: dict[ArtifactId, Artifact] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    status: RunStatus = RunStatus.RUNNING
    failure: Optional[dict[str, Any]] = None
    scratch: dict[str, Any] = field(default_factory=dict)

    def bump(self, counter: str, by: int = 1) -> int:
        if by < 0:
            raise StateInvariantViolation("counters never decrease", counter=counter)
        value = self.counters.get(counter, 0) + by
        self.counters[counter] = value
        return value

    def counter(self, name: str) -> int:
        return self.counters.get(name, 0)

    def add_artifact(self, artifact: Artifact) -> Artifact:
        existing = self.artifacts.get(artifact.id)
        if existing is not None:
            if existing.digest != artifact.digest:
                raise StateInvariantViolation(
                    "artifact id already bound to different content",
                    artifact=artifact.id,
                )
            return existing
        self.artifacts[artifact.id] = artifact
        return artifact

    def artifact_by_name(self, name: str) -> Optional[Artifact]:
        """Latest non-superseded artifact registered under ``name``."""
        found = None
        for art in self.artifacts.values():
            if art.name == name and not art.meta.get("superseded"):
                found = art
        return found

    def record_message(self, role: str, content: str, **meta: Any) -> None:
        self.messages.append(Message(role=role, content=content, meta=dict(meta)))

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        """Deep canonical form: every nested mapping key-sorted and fully
        decoupled from the live objects (safe as a rollback snapshot)."""
        shallow = {
            "run_id": self.run_id,
            "plan": self.plan.to_dict() if self.plan else None,
            "subtask_index": self.subtask_index,
            "cursor": self.cursor,
            "messages": [m.to_dict() for m in self.messages],
            "artifacts": {k: v.to_dict() for k, v in sorted(self.artifacts.items())},
            "counters": dict(sorted(self.counters.items())),
            "status": self.status.value,
            "failure": self.failure,
            "scratch": self.scratch,
        }
        return json.loads(canonical_dumps(shallow))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SharedState:
        return cls(
            run_id=d["run_id"],
            plan=ResearchPlan.from_dict(d["plan"]) if d.get("plan") else None,
            subtask_index=int(d.get("subtask_index", 0)),
            cursor=d.get("cursor"),
            messages=[Message.from_dict(m) for m in d.get("messages", ())],
            artifacts={
                k: Artifact.from_dict(v) for k, v in d.get("artifacts", {}).items()
            },
            counters={k: int(v) for k, v in d.get("counters", {}).items()},
            status=RunStatus(d.get("status", "running")),
            failure=d.get("failure"),
            scratch=d.get("scratch", {}),
        )

    def digest(self) -> str:
        return digest_obj(self.to_dict())

    def clone(self) -> SharedState:
        return SharedState.from_dict(self.to_dict())


def check_state_invariants(before: SharedState, after: SharedState) -> None:
    """Post-node guard: counters monotone, artifact map append-only."""
    for name, value in before.counters.items():
        if after.counters.get(name, 0) < value:
            raise StateInvariantViolation("counter decreased", counter=name)
    for art_id in before.artifacts:
        if art_id not in after.artifacts:
            raise StateInvariantViolation("artifact removed", artifact=art_id)
