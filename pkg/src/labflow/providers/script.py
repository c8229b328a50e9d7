"""Scripted deterministic gateway: the test double every pipeline runs on.

Script files are line-delimited JSON, one entry per canned exchange:

    {"match": {"contains": "plan"}, "respond": {"text": "..."}}
    {"match": {"contains": "search"}, "respond": {"tool_calls": [{"name": "arxiv_search", "args": {...}}]}}
    {"match": {"contains": "figure"}, "respond": {"vision": {"issues": []}}}

Entries are consumed strictly in order per role; the cursor is the role's
call counter in the shared state, so a restored run resumes mid-script
without hidden gateway state. In strict mode (the test default) a request
whose rendered text does not contain the matcher substring — or that runs
past the script — raises UnmatchedRequest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from ..errors import ScriptParseError, UnmatchedRequest
from ..engine.state import Artifact, SharedState
from .base import (
    CallBudget,
    ChatRequest,
    ChatResponse,
    Gateway,
    Role,
    ToolCallRequest,
    VisionIssue,
    VisionVerdict,
    call_counter,
)


@dataclass(frozen=True)
class ScriptEntry:
    contains: str
    respond: dict[str, Any]

    def matches(self, rendered: str) -> bool:
        return self.contains in rendered


@dataclass
class ProviderScript:
    entries: list[ScriptEntry] = field(default_factory=list)
    strict: bool = True


def load_script(path: Path, *, strict: bool = True) -> ProviderScript:
    """Parse a JSONL script file; any bad line is a ScriptParseError."""
    entries: list[ScriptEntry] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScriptParseError(f"cannot read script {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScriptParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "respond" not in obj:
            raise ScriptParseError(f"{path}:{lineno}: entry needs a 'respond' object")
        match = obj.get("match", {})
        entries.append(ScriptEntry(contains=match.get("contains", ""), respond=obj["respond"]))
    return ProviderScript(entries=entries, strict=strict)


def dump_script(entries: list[dict[str, Any]], path: Path) -> Path:
    """Write entries (already in wire shape) to a JSONL script file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(json.dumps(e, ensure_ascii=False) + "\n" for e in entries),
        encoding="utf-8",
    )
    return path


class ScriptedGateway(Gateway):
    def __init__(
        self,
        scripts: dict[Role, ProviderScript],
        budgets: Optional[dict[Role, CallBudget]] = None,
    ) -> None:
        super().__init__(budgets)
        self.scripts = dict(scripts)

    def _next_entry(self, state: SharedState, role: Role, rendered: str) -> Optional[ScriptEntry]:
        script = self.scripts.get(role)
        if script is None:
            raise UnmatchedRequest(f"no script installed for role {role.value}")
        cursor = state.counter(call_counter(role))
        if cursor >= len(script.entries):
            if script.strict:
                raise UnmatchedRequest(
                    f"script for role {role.value} exhausted at call {cursor}"
                )
            return None
        entry = script.entries[cursor]
        if not entry.matches(rendered):
            if script.strict:
                raise UnmatchedRequest(
                    f"request for role {role.value} does not contain "
                    f"{entry.contains!r} (call {cursor})",
                    rendered=rendered[:200],
                )
            return None
        return entry

    def _complete(
        self, state: SharedState, role: Role, request: ChatRequest
    ) -> tuple[ChatResponse, dict[str, int]]:
        entry = self._next_entry(state, role, request.rendered())
        if entry is None:
            return ChatResponse(text="ok"), {"prompt_tokens": 0, "completion_tokens": 0}
        respond = entry.respond
        tool_calls = [
            ToolCallRequest(name=c["name"], args=c.get("args", {}))
            for c in respond.get("tool_calls", ())
        ]
        response = ChatResponse(text=respond.get("text", ""), tool_calls=tool_calls)
        usage = respond.get("usage", {"prompt_tokens": 0, "completion_tokens": 0})
        return response, usage

    def _review(self, state: SharedState, artifact: Artifact, rubric: str) -> VisionVerdict:
        rendered = f"{rubric}\n{artifact.name}\n{artifact.id}"
        entry = self._next_entry(state, Role.VISION, rendered)
        if entry is None:
            return VisionVerdict.from_issues((), artifact.id)
        payload = entry.respond.get("vision", {})
        issues = tuple(
            VisionIssue(severity=i["severity"], description=i.get("description", ""))
            for i in payload.get("issues", ())
        )
        verdict = VisionVerdict.from_issues(issues, artifact.id)
        if "approved" in payload and bool(payload["approved"]) != verdict.approved:
            raise ScriptParseError(
                "scripted vision verdict contradicts its issues",
                artifact=artifact.id,
            )
        return verdict
