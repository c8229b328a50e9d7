"""Supervisor: decomposes a research idea into an ordered subtask plan.

The model must answer with a fenced JSON block carrying the subtask
schema; parsing is strict with one retry. A plan only reaches the shared
state after ``validate_plan`` returns no findings, so every persisted plan
satisfies id contiguity, kind closure, and dependency closure.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .engine.runner import RunContext
from .engine.state import SharedState
from .errors import EmptyPlan, InvalidPlan, ModelRefusal, OversizedPlan
from .jsonutil import atomic_write_text
from .plan import ArtifactDescriptor, ResearchIdea, ResearchPlan, Subtask, SubtaskKind
from .providers.base import ChatRequest, Role

MIN_SUBTASKS = 2
MAX_SUBTASKS = 12

PLAN_ECHO_FILE = "plan.json"

_FENCE_RE = re.compile(r"```json\s*(.+?)```", re.DOTALL)

PLAN_PROMPT = """You are the research supervisor. Decompose the idea below into an
ordered plan of subtasks, specifying for every subtask its expected inputs
and expected outputs as artifact descriptors.

Idea: {statement}
Available datasets: {datasets}
Constraints: {constraints}

Answer with one fenced JSON block:
```json
{{"subtasks": [{{"id": 1, "title": "...", "kind": "literature|data_analysis|coding|writing",
  "expected_inputs": [{{"name": "...", "kind": "...", "media_type": "..."}}],
  "expected_outputs": [{{"name": "...", "kind": "...", "media_type": "..."}}],
  "acceptance_note": "..."}}]}}
```
Each subtask input must be an available dataset or an output of an earlier subtask."""


@dataclass(frozen=True)
class PlanFinding:
    code: str  # non_contiguous_ids | unknown_kind | missing_outputs | broken_dependency
    detail: str
    subtask_id: Optional[int] = None

    def __str__(self) -> str:
        where = f" (subtask {self.subtask_id})" if self.subtask_id is not None else ""
        return f"{self.code}{where}: {self.detail}"


def validate_plan(plan: ResearchPlan) -> list[PlanFinding]:
    """Return every structural finding; an empty list means the plan holds
    id contiguity, kind closure, non-empty outputs, and dependency closure."""
    findings: list[PlanFinding] = []

    ids = [s.id for s in plan.subtasks]
    if ids != list(range(1, len(ids) + 1)):
        findings.append(
            PlanFinding("non_contiguous_ids", f"ids are {ids}, expected 1..{len(ids)}")
        )

    for sub in plan.subtasks:
        if not isinstance(sub.kind, SubtaskKind):
            findings.append(
                PlanFinding("unknown_kind", f"kind {sub.kind!r}", subtask_id=sub.id)
            )
        if not sub.expected_outputs:
            findings.append(
                PlanFinding("missing_outputs", "expected_outputs empty", subtask_id=sub.id)
            )

    available = {Path(p).name for p in plan.idea.dataset_paths}
    for sub in sorted(plan.subtasks, key=lambda s: s.id):
        for dep in sub.expected_inputs:
            if dep.name not in available:
                findings.append(
                    PlanFinding(
                        "broken_dependency",
                        f"input {dep.name!r} is neither a user dataset nor an "
                        "output of an earlier subtask",
                        subtask_id=sub.id,
                    )
                )
        available.update(out.name for out in sub.expected_outputs)

    return findings


def _parse_plan_block(text: str, idea: ResearchIdea, created_at: str) -> ResearchPlan:
    match = _FENCE_RE.search(text)
    if match is None:
        raise ValueError("no fenced JSON block in plan output")
    payload = json.loads(match.group(1))
    subtasks = []
    for raw in payload["subtasks"]:
        subtasks.append(
            Subtask(
                id=int(raw["id"]),
                title=raw["title"],
                kind=SubtaskKind(raw["kind"]),
                expected_inputs=tuple(
                    ArtifactDescriptor.from_dict(d) for d in raw.get("expected_inputs", ())
                ),
                expected_outputs=tuple(
                    ArtifactDescriptor.from_dict(d) for d in raw.get("expected_outputs", ())
                ),
                acceptance_note=raw.get("acceptance_note", ""),
            )
        )
    return ResearchPlan(idea=idea, subtasks=tuple(subtasks), created_at=created_at)


def decompose(state: SharedState, ctx: RunContext, idea: ResearchIdea) -> ResearchPlan:
    """Ask the base model for a plan, validate it, persist it into the
    shared state (and the ``plan.json`` echo file when a run dir exists)."""
    if ctx.gateway is None:
        raise ModelRefusal("no gateway available for plan decomposition")
    prompt = PLAN_PROMPT.format(
        statement=idea.statement,
        datasets=", ".join(Path(p).name for p in idea.dataset_paths) or "none",
        constraints=idea.constraints or "none",
    )
    request = ChatRequest(system="plan the research", messages=[{"role": "user", "content": prompt}])

    plan: Optional[ResearchPlan] = None
    last_error = ""
    for attempt in range(2):
        exchange = ctx.gateway.chat(state, Role.BASE, request)
        try:
            plan = _parse_plan_block(exchange.response.text, idea, ctx.clock())
            break
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            last_error = str(exc)
            request = ChatRequest(
                system="plan the research",
                messages=[
                    {
                        "role": "user",
                        "content": (
                            f"{prompt}\nYour previous answer was unusable ({exc}). "
                            "Reply with exactly one fenced JSON block."
                        ),
                    }
                ],
            )
    if plan is None:
        raise ModelRefusal(f"plan output unparseable after retry: {last_error}")

    if len(plan.subtasks) < MIN_SUBTASKS:
        raise EmptyPlan(f"{len(plan.subtasks)} subtasks, need at least {MIN_SUBTASKS}")
    if len(plan.subtasks) > MAX_SUBTASKS:
        raise OversizedPlan(f"{len(plan.subtasks)} subtasks, cap is {MAX_SUBTASKS}")
    findings = validate_plan(plan)
    if findings:
        raise InvalidPlan(findings)

    state.plan = plan
    if ctx.run_dir is not None:
        atomic_write_text(
            Path(ctx.run_dir) / PLAN_ECHO_FILE,
            json.dumps(plan.to_dict(), indent=2, ensure_ascii=False) + "\n",
        )
    return plan
