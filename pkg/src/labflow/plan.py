"""Research plan data types: idea, subtasks, and their declared I/O.

Kept free of engine imports so both the shared state and the supervisor can
depend on them without cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class SubtaskKind(str, Enum):
    LITERATURE = "literature"
    DATA_ANALYSIS = "data_analysis"
    CODING = "coding"
    WRITING = "writing"


@dataclass(frozen=True)
class ArtifactDescriptor:
    """(name, kind, media_type) triple; downstream matching is by name."""

    name: str
    kind: str = "artifact"
    media_type: str = "application/octet-stream"

    def to_dict(self) -> dict[str, str]:
        return {"name": self.name, "kind": self.kind, "media_type": self.media_type}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ArtifactDescriptor:
        return cls(
            name=d["name"],
            kind=d.get("kind", "artifact"),
            media_type=d.get("media_type", "application/octet-stream"),
        )


@dataclass(frozen=True)
class ResearchIdea:
    statement: str
    dataset_paths: tuple[str, ...] = ()
    constraints: str = ""

    def __post_init__(self) -> None:
        if not self.statement.strip():
            raise ValueError("research idea statement must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "statement": self.statement,
            "dataset_paths": list(self.dataset_paths),
            "constraints": self.constraints,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ResearchIdea:
        return cls(
            statement=d["statement"],
            dataset_paths=tuple(d.get("dataset_paths", ())),
            constraints=d.get("constraints", ""),
        )


@dataclass(frozen=True)
class Subtask:
    id: int
    title: str
    kind: SubtaskKind
    expected_inputs: tuple[ArtifactDescriptor, ...] = ()
    expected_outputs: tuple[ArtifactDescriptor, ...] = ()
    acceptance_note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "title": self.title,
            "kind": self.kind.value,
            "expected_inputs": [d.to_dict() for d in self.expected_inputs],
            "expected_outputs": [d.to_dict() for d in self.expected_outputs],
            "acceptance_note": self.acceptance_note,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Subtask:
        return cls(
            id=int(d["id"]),
            title=d["title"],
            kind=SubtaskKind(d["kind"]),
            expected_inputs=tuple(
                ArtifactDescriptor.from_dict(x) for x in d.get("expected_inputs", ())
            ),
            expected_outputs=tuple(
                ArtifactDescriptor.from_dict(x) for x in d.get("expected_outputs", ())
            ),
            acceptance_note=d.get("acceptance_note", ""),
        )


@dataclass(frozen=True)
class ResearchPlan:
    idea: ResearchIdea
    subtasks: tuple[Subtask, ...] = field(default=())
    created_at: str = ""

    def subtasks_of(self, kind: SubtaskKind) -> tuple[Subtask, ...]:
        return tuple(s for s in self.subtasks if s.kind is kind)

    def subtask(self, ordinal: int) -> Subtask:
        for s in self.subtasks:
            if s.id == ordinal:
                return s
        raise KeyError(f"no subtask with id {ordinal}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "idea": self.idea.to_dict(),
            "subtasks": [s.to_dict() for s in self.subtasks],
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ResearchPlan:
        return cls(
            idea=ResearchIdea.from_dict(d["idea"]),
            subtasks=tuple(Subtask.from_dict(x) for x in d.get("subtasks", ())),
            created_at=d.get("created_at", ""),
        )
