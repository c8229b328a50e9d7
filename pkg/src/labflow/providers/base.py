"""Model gateway contracts: role-addressed chat and vision review.

Agents never name physical models; they resolve a handle by role (search,
write, base, router, vision) and the gateway maps roles onto endpoints.
Every exchange is accounted in the shared state (per-role call counters and
an audit message), which is what makes scripted runs replayable: a resumed
run re-derives its script cursor from those counters.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Optional, Sequence

from ..errors import BudgetExhausted, MalformedResponse, RouterParseFailure, UnreadableImage
from ..jsonutil import digest_obj
from ..engine.state import Artifact, ArtifactId, RouterDecision, SharedState, Verdict

if TYPE_CHECKING:  # pragma: no cover
    from ..toolkit.registry import ToolSchema


class Role(str, Enum):
    SEARCH = "search"
    WRITE = "write"
    BASE = "base"
    ROUTER = "router"
    VISION = "vision"


@dataclass(frozen=True)
class CallBudget:
    max_calls: int = 200


@dataclass(frozen=True)
class RoleConfig:
    """Indirection entry mapping one logical role onto a physical endpoint."""

    role: Role
    model_name: str = "scripted"
    endpoint: str = ""
    api_key_env: str = ""
    budget: CallBudget = CallBudget()


@dataclass(frozen=True)
class ToolCallRequest:
    name: str
    args: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "args": self.args}


@dataclass
class ChatRequest:
    system: str = ""
    messages: list[dict[str, str]] = field(default_factory=list)
    tools_offered: Sequence["ToolSchema"] = ()

    def rendered(self) -> str:
        """Flat text the scripted matchers run against."""
        parts = [self.system]
        parts.extend(m.get("content", "") for m in self.messages)
        parts.extend(t.name for t in self.tools_offered)
        return "\n".join(p for p in parts if p)

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system,
            "messages": self.messages,
            "tools_offered": [t.name for t in self.tools_offered],
        }


@dataclass
class ChatResponse:
    text: str = ""
    tool_calls: list[ToolCallRequest] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.text and not self.tool_calls:
            raise MalformedResponse("response carries neither text nor tool calls")

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "tool_calls": [c.to_dict() for c in self.tool_calls]}


@dataclass
class ChatExchange:
    request: ChatRequest
    response: ChatResponse
    usage: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class VisionIssue:
    severity: str  # blocking | minor
    description: str

    def to_dict(self) -> dict[str, str]:
        return {"severity": self.severity, "description": self.description}


@dataclass(frozen=True)
class VisionVerdict:
    """approved is derived: true iff no blocking issue."""

    approved: bool
    issues: tuple[VisionIssue, ...]
    target: ArtifactId

    @classmethod
    def from_issues(cls, issues: Iterable[VisionIssue], target: ArtifactId) -> VisionVerdict:
        issue_tuple = tuple(issues)
        blocked = any(i.severity == "blocking" for i in issue_tuple)
        return cls(approved=not blocked, issues=issue_tuple, target=target)

    def to_dict(self) -> dict[str, Any]:
        return {
            "approved": self.approved,
            "issues": [i.to_dict() for i in self.issues],
            "target": self.target,
        }


REVIEWABLE_MEDIA = {"image/png", "application/pdf"}

DEFAULT_VISION_RUBRIC = (
    "Review the rendered artifact for readability: axis labels, legends, "
    "font sizes, overlap, and layout. Report blocking issues that must be "
    "fixed and minor issues worth improving."
)


def call_counter(role: Role) -> str:
    return f"calls:{role.value}"


class Gateway:
    """Base gateway: budget accounting + audit recording around a transport."""

    def __init__(self, budgets: Optional[dict[Role, CallBudget]] = None) -> None:
        self.budgets = dict(budgets or {})
        self._lock = threading.Lock()

    # transport hooks -----------------------------------------------------

    def _complete(self, state: SharedState, role: Role, request: ChatRequest) -> tuple[ChatResponse, dict[str, int]]:
        raise NotImplementedError

    def _review(self, state: SharedState, artifact: Artifact, rubric: str) -> VisionVerdict:
        raise NotImplementedError

    # public operations ----------------------------------------------------

    def chat(self, state: SharedState, role: Role, request: ChatRequest) -> ChatExchange:
        with self._lock:
            budget = self.budgets.get(role, CallBudget())
            counter = call_counter(role)
            if state.counter(counter) >= budget.max_calls:
                raise BudgetExhausted(
                    f"budget of {budget.max_calls} calls spent for role {role.value}"
                )
            response, usage = self._complete(state, role, request)
            state.bump(counter)
            summary = response.text or "; ".join(
                f"tool_call {c.name}" for c in response.tool_calls
            )
            state.record_message(
                role=f"model:{role.value}",
                content=summary,
                request_digest=digest_obj(request.to_dict()),
                usage=usage,
            )
            return ChatExchange(request=request, response=response, usage=usage)

    def vision_review(
        self,
        state: SharedState,
        artifact: Artifact,
        rubric: str = DEFAULT_VISION_RUBRIC,
    ) -> VisionVerdict:
        """Review an image artifact; the verdict is appended to the artifact
        metadata so the latest verdict wins while history stays recorded."""
        if artifact.media_type not in REVIEWABLE_MEDIA:
            raise UnreadableImage(
                f"media type {artifact.media_type!r} not reviewable", artifact=artifact.id
            )
        with self._lock:
            budget = self.budgets.get(Role.VISION, CallBudget())
            counter = call_counter(Role.VISION)
            if state.counter(counter) >= budget.max_calls:
                raise BudgetExhausted(
                    f"budget of {budget.max_calls} calls spent for role vision"
                )
            verdict = self._review(state, artifact, rubric)
            state.bump(counter)
            artifact.meta.setdefault("verdicts", []).append(verdict.to_dict())
            state.record_message(
                role="model:vision",
                content=f"{'approved' if verdict.approved else 'rejected'} {artifact.id}",
                issues=[i.to_dict() for i in verdict.issues],
            )
            return verdict


DECISION_PREFIX = "DECISION:"

ROUTER_RUBRIC = (
    "You are the workflow router. Inspect the progress summary and answer "
    "with your reasoning, then end your reply with a final line of the form "
    f"`{DECISION_PREFIX} <verdict>` using exactly one allowed verdict."
)


def parse_decision(text: str, allowed: Optional[Iterable[Verdict]] = None) -> RouterDecision:
    """Strictly parse the trailing ``DECISION: <verdict>`` line.

    Raises ValueError when no such line exists or the verdict is outside
    the closed set; free text is never coerced.
    """
    allowed_set = set(allowed) if allowed is not None else set(Verdict)
    verdict_line = None
    for line in text.splitlines():
        if line.strip().startswith(DECISION_PREFIX):
            verdict_line = line.strip()
    if verdict_line is None:
        raise ValueError("no DECISION line in router output")
    token = verdict_line[len(DECISION_PREFIX):].strip().lower()
    try:
        verdict = Verdict(token)
    except ValueError:
        raise ValueError(f"unknown verdict {token!r}") from None
    if verdict not in allowed_set:
        raise ValueError(f"verdict {verdict.value!r} not allowed here")
    rationale = text[: text.rfind(verdict_line)].strip()
    return RouterDecision(verdict=verdict, rationale=rationale)


def request_decision(
    state: SharedState,
    gateway: Gateway,
    prompt: str,
    *,
    role: Role = Role.ROUTER,
    allowed: Optional[Iterable[Verdict]] = None,
) -> RouterDecision:
    """Ask the router model for a verdict; retry the call once on a parse
    failure, then raise RouterParseFailure."""
    allowed_list = list(allowed) if allowed is not None else list(Verdict)
    menu = ", ".join(v.value for v in allowed_list)
    request = ChatRequest(
        system=ROUTER_RUBRIC,
        messages=[{"role": "user", "content": f"{prompt}\nAllowed verdicts: {menu}"}],
    )
    last_error = ""
    for attempt in range(2):
        exchange = gateway.chat(state, role, request)
        try:
            return parse_decision(exchange.response.text, allowed_list)
        except ValueError as exc:
            last_error = str(exc)
            request = ChatRequest(
                system=ROUTER_RUBRIC,
                messages=[
                    {
                        "role": "user",
                        "content": (
                            f"{prompt}\nAllowed verdicts: {menu}\n"
                            f"Your previous reply could not be parsed ({exc}). "
                            f"End with `{DECISION_PREFIX} <verdict>`."
                        ),
                    }
                ],
            )
    raise RouterParseFailure(f"router output unparseable after retry: {last_error}")
