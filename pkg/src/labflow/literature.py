"""Literature reviewer: ReAct search loop plus report consolidation.

The loop alternates model reasoning with tool invocations until the
tool-call count reaches the configured minimum (``k_min``); a hard ceiling
of react steps (``k_max``) guarantees termination even if the model never
acts. Consolidation merges duplicate candidates (DOI, else normalized
title) and appends a machine-readable citation block the writer's
bibliography is assembled from.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from .engine.graph import GraphBuilder
from .engine.runner import RunContext
from .engine.state import NodeId, RouterDecision, SharedState, Verdict
from .errors import ModelRefusal
from .jsonutil import canonical_dumps
from .plan import SubtaskKind
from .providers.base import ChatRequest, Role
from .toolkit.reports import persist_report
from .toolkit.search import SearchResult

DEFAULT_K_MIN = 3

SCRATCH_KEY = "literature"

_CITE_RE = re.compile(r"\[@([^\]\s]+)\]")
_KEY_SANITIZE = re.compile(r"[^A-Za-z0-9:./\-]+")


class ReviewPhase(str, Enum):
    SEARCHING = "searching"
    WRITING = "writing"
    DONE = "done"


@dataclass
class ReviewState:
    query: str
    transcript: list[dict[str, Any]] = field(default_factory=list)
    tool_calls: int = 0
    candidates: list[dict[str, Any]] = field(default_factory=list)
    phase: ReviewPhase = ReviewPhase.SEARCHING
    skip: bool = False
    report_artifact: Optional[str] = None

    def react_steps(self) -> int:
        return sum(1 for e in self.transcript if "thought" in e or "action" in e)

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "transcript": self.transcript,
            "tool_calls": self.tool_calls,
            "candidates": self.candidates,
            "phase": self.phase.value,
            "skip": self.skip,
            "report_artifact": self.report_artifact,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ReviewState:
        return cls(
            query=d["query"],
            transcript=d.get("transcript", []),
            tool_calls=int(d.get("tool_calls", 0)),
            candidates=d.get("candidates", []),
            phase=ReviewPhase(d.get("phase", "searching")),
            skip=bool(d.get("skip", False)),
            report_artifact=d.get("report_artifact"),
        )


def load_review(state: SharedState) -> Optional[ReviewState]:
    raw = state.scratch.get(SCRATCH_KEY)
    return ReviewState.from_dict(raw) if raw else None


def save_review(state: SharedState, review: ReviewState) -> None:
    state.scratch[SCRATCH_KEY] = review.to_dict()


def citation_key(result: SearchResult) -> str:
    return _KEY_SANITIZE.sub("-", result.dedup_key()).strip("-")[:60]


def should_stop(review: ReviewState, k_min: int) -> bool:
    """Stopping criterion: enough successful tool calls accumulated."""
    if k_min < 1:
        raise ValueError("k_min must be a positive integer")
    return review.tool_calls >= k_min


def react_step(state: SharedState, ctx: RunContext) -> ReviewState:
    """One loop iteration: appends exactly one thought or one
    (action, observation) pair; only actions advance the tool-call count."""
    review = load_review(state)
    if review is None or review.phase is not ReviewPhase.SEARCHING:
        phase = review.phase.value if review else "uninitialized"
        raise ValueError(f"react_step requires phase=searching, got {phase}")
    assert ctx.gateway is not None and ctx.tools is not None

    history = "\n".join(
        f"- {next(iter(e))}: {canonical_dumps(e[next(iter(e))])[:160]}"
        for e in review.transcript
    )
    request = ChatRequest(
        system=(
            "You are the literature search agent. Either reason about what to "
            "search next, or call one search tool."
        ),
        messages=[
            {
                "role": "user",
                "content": f"query: {review.query}\ntool calls so far: {review.tool_calls}\n{history}",
            }
        ],
        tools_offered=ctx.tools.schemas(),
    )
    exchange = ctx.gateway.chat(state, Role.SEARCH, request)
    if exchange.response.tool_calls:
        call = exchange.response.tool_calls[0]
        result = ctx.tools.invoke(call, state, ctx.store)
        review.transcript.append({"action": {"tool": call.name, "args": call.args}})
        review.transcript.append({"observation": result.payload})
        review.tool_calls += 1
        if isinstance(result.payload, list):
            review.candidates.extend(result.payload)
    else:
        review.transcript.append({"thought": exchange.response.text})
    save_review(state, review)
    return review


@dataclass
class ReviewReport:
    body: str
    cited: list[SearchResult]
    dedup_note: str


def _dedup(candidates: list[dict[str, Any]]) -> tuple[list[SearchResult], str]:
    seen: dict[str, SearchResult] = {}
    merged = 0
    for raw in candidates:
        result = SearchResult.from_dict(raw)
        key = result.dedup_key()
        if key in seen:
            merged += 1
        else:
            seen[key] = result
    note = f"{len(candidates)} candidates, {merged} merged as duplicates"
    return list(seen.values()), note


def write_report(state: SharedState, ctx: RunContext, *, output_name: str = "") -> ReviewReport:
    """Consolidate candidates into the review report and persist it.

    Requires the phase to have transitioned to writing (stop criterion
    met). Every inline ``[@key]`` citation must resolve against the
    deduplicated candidate set.
    """
    review = load_review(state)
    if review is None or review.phase is not ReviewPhase.WRITING:
        phase = review.phase.value if review else "uninitialized"
        raise ValueError(f"write_report requires phase=writing, got {phase}")
    assert ctx.gateway is not None

    cited, dedup_note = _dedup(review.candidates)
    keys = {citation_key(r): r for r in cited}

    if not cited:
        body = (
            "No relevant literature found for this query; the review "
            "proceeded with zero retrievable candidates."
        )
    else:
        listing = "\n".join(
            f"- [@{key}] {r.title} ({r.venue} {r.year})" for key, r in keys.items()
        )
        request = ChatRequest(
            system=(
                "You are the report-writing agent. Consolidate the retrieved "
                "candidates into a coherent review, merging redundancies and "
                "emphasizing novel contributions. Cite with [@key] markers."
            ),
            messages=[
                {"role": "user", "content": f"query: {review.query}\ncandidates:\n{listing}"}
            ],
        )
        exchange = ctx.gateway.chat(state, Role.WRITE, request)
        body = exchange.response.text
        unresolved = sorted(set(_CITE_RE.findall(body)) - set(keys))
        if unresolved:
            raise ModelRefusal(
                f"report cites unknown keys: {', '.join(unresolved)}"
            )

    citation_block = [dict(r.to_dict(), key=key) for key, r in keys.items()]
    report_md = (
        f"{body}\n\n## Citations\n\n```json\n"
        f"{json.dumps(citation_block, indent=2, ensure_ascii=False)}\n```\n"
    )
    artifact_id = persist_report(
        state, ctx.store, report_md, "literature", name=output_name or "literature_report"
    )
    review.report_artifact = artifact_id
    review.phase = ReviewPhase.DONE
    save_review(state, review)
    return ReviewReport(body=body, cited=cited, dedup_note=dedup_note)


def parse_citation_block(report_md: str) -> list[dict[str, Any]]:
    """Recover the machine-readable citation block from a review report."""
    match = re.search(r"## Citations\s+```json\s*(.+?)```", report_md, re.DOTALL)
    if not match:
        return []
    return json.loads(match.group(1))


# --- pipeline wiring ---------------------------------------------------------

NODE_SEARCH = "lit_search"
NODE_WRITE = "lit_write"
NODE_REPORT = "lit_report"


def _init_review(state: SharedState) -> ReviewState:
    subtasks = state.plan.subtasks_of(SubtaskKind.LITERATURE) if state.plan else ()
    if not subtasks:
        review = ReviewState(query="", skip=True, phase=ReviewPhase.DONE)
    else:
        sub = subtasks[0]
        state.subtask_index = max(state.subtask_index, sub.id)
        query = sub.title
        if state.plan is not None:
            query = f"{sub.title} — {state.plan.idea.statement}"
        review = ReviewState(query=query)
    save_review(state, review)
    return review


def add_literature_pipeline(
    builder: GraphBuilder,
    *,
    exit_to: Optional[NodeId],
    k_min: int = DEFAULT_K_MIN,
    k_max: Optional[int] = None,
) -> NodeId:
    """Wire START -> search ->(tool calls)-> write -> report -> exit/END.

    Returns the entry node id. ``exit_to=None`` marks the report node as a
    graph exit (standalone pipeline); otherwise an edge leads onward.
    """
    ceiling = k_max if k_max is not None else 3 * k_min

    def search_node(state: SharedState, ctx: RunContext) -> None:
        review = load_review(state)
        if review is None:
            review = _init_review(state)
        if review.skip:
            return
        react_step(state, ctx)

    def search_decide(state: SharedState, ctx: RunContext) -> RouterDecision:
        review = load_review(state)
        assert review is not None
        if review.skip:
            return RouterDecision(Verdict.END, "no literature subtask in plan")
        if should_stop(review, k_min):
            return RouterDecision(
                Verdict.END, f"stop: tool calls {review.tool_calls} >= k_min {k_min}"
            )
        if review.react_steps() >= ceiling:
            return RouterDecision(
                Verdict.END, f"forced stop: react steps reached ceiling {ceiling}"
            )
        return RouterDecision(Verdict.CONTINUE, "stopping criterion not met")

    def write_node(state: SharedState, ctx: RunContext) -> None:
        review = load_review(state)
        assert review is not None
        if review.skip:
            return
        review.phase = ReviewPhase.WRITING
        save_review(state, review)
        output = "literature_report"
        if state.plan is not None:
            subs = state.plan.subtasks_of(SubtaskKind.LITERATURE)
            if subs and subs[0].expected_outputs:
                output = subs[0].expected_outputs[0].name
        write_report(state, ctx, output_name=output)

    def report_node(state: SharedState, ctx: RunContext) -> None:
        review = load_review(state)
        assert review is not None
        if review.skip or review.report_artifact is None:
            return
        state.scratch.setdefault("outputs", {})
        artifact = state.artifacts[review.report_artifact]
        state.scratch["outputs"][artifact.name] = review.report_artifact

    builder.add_node(NODE_SEARCH, search_node)
    builder.add_node(NODE_WRITE, write_node)
    builder.add_node(NODE_REPORT, report_node)
    builder.add_router(
        NODE_SEARCH, search_decide, {"continue": NODE_SEARCH, "end": NODE_WRITE}
    )
    builder.add_edge(NODE_WRITE, NODE_REPORT)
    if exit_to is None:
        builder.add_exit(NODE_REPORT)
    else:
        builder.add_edge(NODE_REPORT, exit_to)
    return NODE_SEARCH


def build_literature_graph(k_min: int = DEFAULT_K_MIN, k_max: Optional[int] = None):
    builder = GraphBuilder()
    entry = add_literature_pipeline(builder, exit_to=None, k_min=k_min, k_max=k_max)
    builder.set_entry(entry)
    return builder.build()
