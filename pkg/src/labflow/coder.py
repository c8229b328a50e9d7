"""Coder: iterates plan subtasks through generate-execute-validate loops.

Topology: plan reader -> coding -> vision validation -> concluder, with the
router bound on the concluder choosing among continue / redo / fix /
alter-plan. A failed execution or a blocking vision verdict forces the redo
case regardless of the model's verdict. Redo restores the pre-subtask
workspace snapshot; fix keeps the workspace and prefixes the failing
diagnostics — that file-level distinction is the observable difference.
Refinements per subtask are capped; exceeding the cap raises
RefinementBudgetExhausted and the subtask is flagged unresolved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .engine.graph import GraphBuilder
from .engine.runner import RunContext
from .engine.state import STOP, ArtifactId, NodeId, RouterDecision, SharedState, Verdict
from .errors import EmptyPlan, RefinementBudgetExhausted
from .jsonutil import canonical_dumps
from .plan import ResearchPlan, Subtask, SubtaskKind
from .providers.base import ChatRequest, Role, request_decision
from .toolkit.sandbox import CodeTask, ExecutionResult, sandbox_execute, snapshot_files

DEFAULT_MAX_REFINEMENTS = 2

SCRATCH_KEY = "coder"

_IMAGE_SUFFIXES = {".png": "image/png", ".pdf": "application/pdf"}

SUMMARY_NAME = "coder_summary"


@dataclass
class CoderState:
    queue: list[int] = field(default_factory=list)
    current: int = 0
    refinements: dict[str, int] = field(default_factory=dict)
    attempts: dict[str, int] = field(default_factory=dict)
    last_failure: Optional[dict[str, str]] = None
    last_vision: Optional[dict[str, Any]] = None
    completed: list[int] = field(default_factory=list)
    unresolved: list[int] = field(default_factory=list)
    snapshots: dict[str, str] = field(default_factory=dict)
    pending_action: str = "first"  # first | redo | fix
    pending_decision: Optional[dict[str, str]] = None
    current_outcome: Optional[dict[str, Any]] = None
    outcomes: list[dict[str, Any]] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    stop_reason: str = ""
    summary_artifact: Optional[str] = None
    skip: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "queue": self.queue,
            "current": self.current,
            "refinements": self.refinements,
            "attempts": self.attempts,
            "last_failure": self.last_failure,
            "last_vision": self.last_vision,
            "completed": self.completed,
            "unresolved": self.unresolved,
            "snapshots": self.snapshots,
            "pending_action": self.pending_action,
            "pending_decision": self.pending_decision,
            "current_outcome": self.current_outcome,
            "outcomes": self.outcomes,
            "errors": self.errors,
            "stop_reason": self.stop_reason,
            "summary_artifact": self.summary_artifact,
            "skip": self.skip,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CoderState:
        return cls(
            queue=d.get("queue", []),
            current=int(d.get("current", 0)),
            refinements=d.get("refinements", {}),
            attempts=d.get("attempts", {}),
            last_failure=d.get("last_failure"),
            last_vision=d.get("last_vision"),
            completed=d.get("completed", []),
            unresolved=d.get("unresolved", []),
            snapshots=d.get("snapshots", {}),
            pending_action=d.get("pending_action", "first"),
            pending_decision=d.get("pending_decision"),
            current_outcome=d.get("current_outcome"),
            outcomes=d.get("outcomes", []),
            errors=d.get("errors", []),
            stop_reason=d.get("stop_reason", ""),
            summary_artifact=d.get("summary_artifact"),
            skip=bool(d.get("skip", False)),
        )


def load_coder(state: SharedState) -> Optional[CoderState]:
    raw = state.scratch.get(SCRATCH_KEY)
    return CoderState.from_dict(raw) if raw else None


def save_coder(state: SharedState, cstate: CoderState) -> None:
    state.scratch[SCRATCH_KEY] = cstate.to_dict()


@dataclass
class SubtaskOutcome:
    subtask: int
    execution: ExecutionResult
    figures: list[ArtifactId]
    verdict: Optional[RouterDecision] = None

    def vision_blocked(self, state: SharedState) -> bool:
        for fig_id in self.figures:
            artifact = state.artifacts.get(fig_id)
            if artifact is not None and artifact.approved() is False:
                return True
        return False


def read_plan(plan: ResearchPlan) -> CoderState:
    """Extract the coding subtask queue; the cursor starts at the first
    coding subtask with all refinement counters zeroed."""
    queue = [s.id for s in plan.subtasks_of(SubtaskKind.CODING)]
    if not queue:
        raise EmptyPlan("plan has no coding subtasks")
    return CoderState(queue=queue, current=queue[0])


# --- workspace snapshots ------------------------------------------------------

def store_workspace_snapshot(state: SharedState, ctx: RunContext, ordinal: int) -> str:
    """Content-addressed directory manifest; file bytes land in the store."""
    assert ctx.workspace is not None
    manifest = {}
    for rel_path in sorted(snapshot_files(Path(ctx.workspace))):
        content = (Path(ctx.workspace) / rel_path).read_bytes()
        manifest[rel_path] = ctx.store.put_bytes(content)
    artifact = ctx.store.put(
        canonical_dumps(manifest).encode("utf-8"),
        kind="workspace_snapshot",
        name=f"ws_snapshot_s{ordinal}",
        media_type="application/json",
    )
    state.add_artifact(artifact)
    return artifact.id


def restore_workspace_snapshot(state: SharedState, ctx: RunContext, snapshot_id: str) -> None:
    assert ctx.workspace is not None
    workspace = Path(ctx.workspace)
    manifest = json.loads(ctx.store.get_bytes(state.artifacts[snapshot_id]).decode("utf-8"))
    for rel_path in snapshot_files(workspace):
        if rel_path not in manifest:
            (workspace / rel_path).unlink()
    for rel_path, digest in manifest.items():
        target = workspace / rel_path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(ctx.store.get_bytes(digest))


# --- operations ---------------------------------------------------------------

def _instructions_prompt(cstate: CoderState, subtask: Subtask) -> str:
    parts = [
        f"subtask {subtask.id}: {subtask.title}",
        f"inputs: {', '.join(d.name for d in subtask.expected_inputs) or 'none'}",
        f"outputs: {', '.join(d.name for d in subtask.expected_outputs)}",
    ]
    if subtask.acceptance_note:
        parts.append(f"acceptance: {subtask.acceptance_note}")
    if cstate.pending_action == "fix" and cstate.last_failure:
        parts.append(
            "fix the previous attempt in place; failing diagnostics:\n"
            + cstate.last_failure.get("detail", "")
        )
    elif cstate.last_failure:
        parts.append("previous attempt failed:\n" + cstate.last_failure.get("detail", ""))
    if cstate.last_vision and cstate.last_vision.get("issues"):
        issues = "; ".join(
            f"[{i['severity']}] {i['description']}" for i in cstate.last_vision["issues"]
        )
        parts.append(f"vision feedback on prior figures: {issues}")
    return "\n".join(parts)


def attempt_subtask(state: SharedState, ctx: RunContext, subtask: Subtask) -> SubtaskOutcome:
    """One coding attempt: generate script, execute, register outputs, and
    send newly produced images through the vision gateway."""
    from .analyzer import register_produced_files  # shared artifact plumbing

    cstate = load_coder(state)
    assert cstate is not None and ctx.gateway is not None and ctx.workspace is not None
    if subtask.id != cstate.current:
        raise ValueError(f"subtask {subtask.id} is not the current subtask {cstate.current}")

    key = str(subtask.id)
    if cstate.pending_action == "redo" and key in cstate.snapshots:
        restore_workspace_snapshot(state, ctx, cstate.snapshots[key])
    if key not in cstate.snapshots:
        cstate.snapshots[key] = store_workspace_snapshot(state, ctx, subtask.id)

    request = ChatRequest(
        system=(
            "You are the coding agent. Reply with a single Python script (no "
            "fences) that accomplishes the subtask in the working directory."
        ),
        messages=[{"role": "user", "content": _instructions_prompt(cstate, subtask)}],
    )
    exchange = ctx.gateway.chat(state, Role.BASE, request)

    file_outputs = tuple(d.name for d in subtask.expected_outputs if "." in d.name)
    task = CodeTask(
        instructions=exchange.response.text,
        workspace=Path(ctx.workspace),
        declared_inputs=tuple(d.name for d in subtask.expected_inputs if "." in d.name),
        declared_outputs=file_outputs,
        timeout=float(ctx.setting("sandbox_timeout_s", 60.0)),
    )
    result = sandbox_execute(task)

    attempt_no = cstate.attempts.get(key, 0) + 1
    cstate.attempts[key] = attempt_no
    run_artifact = ctx.store.put(
        canonical_dumps(result.to_dict()).encode("utf-8"),
        kind="code_run",
        name=f"coding_run_s{subtask.id}_{attempt_no}",
        media_type="application/json",
    )
    state.add_artifact(run_artifact)

    figures: list[ArtifactId] = []
    if result.validated:
        artifacts = register_produced_files(
            state, ctx, result.produced_files, provenance=(run_artifact.id,)
        )
        for artifact in artifacts:
            if artifact.media_type in _IMAGE_SUFFIXES.values():
                artifact.meta.setdefault("caption", subtask.title)
                ctx.store.write_sidecar(artifact)
                figures.append(artifact.id)
        cstate.last_failure = None
    else:
        cstate.last_failure = {
            "kind": "execution",
            "detail": result.stderr_tail or f"exit status {result.exit_status}",
        }

    outcome = SubtaskOutcome(subtask=subtask.id, execution=result, figures=figures)
    cstate.current_outcome = {
        "subtask": subtask.id,
        "attempt": attempt_no,
        "execution": result.to_dict(),
        "figures": figures,
        "verdict": None,
    }
    save_coder(state, cstate)
    return outcome


def review_figures(state: SharedState, ctx: RunContext) -> None:
    """Vision-validate figures produced by the latest attempt (diff-detected:
    only newly registered images are reviewed)."""
    cstate = load_coder(state)
    assert cstate is not None and ctx.gateway is not None
    if not cstate.current_outcome:
        return
    blocking = None
    for fig_id in cstate.current_outcome["figures"]:
        artifact = state.artifacts[fig_id]
        verdict = ctx.gateway.vision_review(state, artifact)
        cstate.last_vision = verdict.to_dict()
        if not verdict.approved:
            blocking = verdict
    if blocking is not None:
        cstate.last_failure = {
            "kind": "vision",
            "detail": "; ".join(i.description for i in blocking.issues),
        }
    save_coder(state, cstate)


def route(
    state: SharedState,
    ctx: RunContext,
    outcome: SubtaskOutcome,
    router_output: RouterDecision,
    *,
    max_refinements: int = DEFAULT_MAX_REFINEMENTS,
) -> RouterDecision:
    """Map the router verdict onto the four state-update cases.

    continue -> advance the cursor (END when the queue is exhausted);
    redo/fix -> bounded re-attempt of the current subtask; alter_plan ->
    STOP. A validation failure (execution or blocking vision) forces redo.
    """
    cstate = load_coder(state)
    assert cstate is not None
    verdict = router_output.verdict
    rationale = router_output.rationale

    failed = not outcome.execution.validated or outcome.vision_blocked(state)
    if failed and verdict not in (Verdict.ALTER_PLAN,):
        verdict = Verdict.REDO
        rationale = "validation failure overrides router verdict"

    key = str(cstate.current)
    if verdict is Verdict.CONTINUE:
        if cstate.current not in cstate.completed:
            cstate.completed.append(cstate.current)
        remaining = [o for o in cstate.queue if o > cstate.current]
        if not remaining:
            cstate.stop_reason = "all_done"
            decision = RouterDecision(Verdict.END, "all subtasks completed")
        else:
            cstate.current = remaining[0]
            state.subtask_index = max(state.subtask_index, cstate.current)
            cstate.pending_action = "first"
            cstate.last_failure = None
            cstate.last_vision = None
            decision = RouterDecision(Verdict.CONTINUE, rationale or "continue next subtask")
    elif verdict in (Verdict.REDO, Verdict.FIX):
        spent = cstate.refinements.get(key, 0)
        if spent >= max_refinements:
            save_coder(state, cstate)
            raise RefinementBudgetExhausted(
                f"subtask {cstate.current} already used {spent} of "
                f"{max_refinements} refinements"
            )
        cstate.refinements[key] = spent + 1
        cstate.pending_action = "redo" if verdict is Verdict.REDO else "fix"
        decision = RouterDecision(verdict, rationale or f"{verdict.value} last subtask")
    elif verdict is Verdict.ALTER_PLAN:
        cstate.stop_reason = "alter_plan"
        decision = RouterDecision(Verdict.ALTER_PLAN, rationale or "plan change requested")
    else:
        decision = RouterDecision(verdict, rationale)

    if cstate.current_outcome is not None:
        cstate.current_outcome["verdict"] = decision.to_dict()
        cstate.outcomes.append(cstate.current_outcome)
        cstate.current_outcome = None
    save_coder(state, cstate)
    return decision


@dataclass
class CoderSummary:
    completed: list[int]
    unresolved: list[int]
    refinements: dict[str, int]
    stop_reason: str
    figures: list[ArtifactId]
    outcomes: list[dict[str, Any]]
    errors: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "completed": self.completed,
            "unresolved": self.unresolved,
            "refinements": self.refinements,
            "stop_reason": self.stop_reason,
            "figures": self.figures,
            "outcomes": self.outcomes,
            "errors": self.errors,
        }


def conclude(state: SharedState, ctx: RunContext) -> CoderSummary:
    """Persist the per-subtask outcome summary consumed by the writer and
    the quality passes."""
    cstate = load_coder(state)
    assert cstate is not None
    figures = sorted(
        {fig for outcome in cstate.outcomes for fig in outcome.get("figures", ())}
    )
    summary = CoderSummary(
        completed=sorted(cstate.completed),
        unresolved=sorted(cstate.unresolved),
        refinements=dict(sorted(cstate.refinements.items())),
        stop_reason=cstate.stop_reason or "all_done",
        figures=figures,
        outcomes=cstate.outcomes,
        errors=cstate.errors,
    )
    artifact = ctx.store.put(
        canonical_dumps(summary.to_dict()).encode("utf-8"),
        kind="summary",
        name=SUMMARY_NAME,
        media_type="application/json",
    )
    state.add_artifact(artifact)
    cstate.summary_artifact = artifact.id
    save_coder(state, cstate)
    return summary


# --- pipeline wiring ---------------------------------------------------------

NODE_PLAN_READ = "coder_plan_read"
NODE_CODING = "coder_coding"
NODE_VISION = "coder_vision_check"
NODE_CONCLUDE = "coder_concluder"

ROUTER_TARGETS = {
    "continue": NODE_CODING,
    "redo": NODE_CODING,
    "fix": NODE_CODING,
}


def add_coder_pipeline(
    builder: GraphBuilder,
    *,
    exit_to: Optional[NodeId],
    max_refinements: int = DEFAULT_MAX_REFINEMENTS,
) -> NodeId:
    """Wire plan reader -> coding -> vision validation -> concluder with the
    router on the concluder looping subtasks until the STOP cases."""

    def plan_read(state: SharedState, ctx: RunContext) -> None:
        if load_coder(state) is not None:
            return
        try:
            cstate = read_plan(state.plan) if state.plan else CoderState(skip=True)
        except EmptyPlan:
            cstate = CoderState(skip=True, stop_reason="no_coding_subtasks")
        if not cstate.skip:
            state.subtask_index = max(state.subtask_index, cstate.current)
        save_coder(state, cstate)

    def coding(state: SharedState, ctx: RunContext) -> None:
        cstate = load_coder(state)
        assert cstate is not None
        if cstate.skip:
            return
        subtask = state.plan.subtask(cstate.current)
        attempt_subtask(state, ctx, subtask)

    def vision_check(state: SharedState, ctx: RunContext) -> None:
        cstate = load_coder(state)
        assert cstate is not None
        if cstate.skip:
            return
        review_figures(state, ctx)

    def concluder(state: SharedState, ctx: RunContext) -> None:
        cstate = load_coder(state)
        assert cstate is not None
        if cstate.skip:
            cstate.pending_decision = RouterDecision(
                Verdict.END, "no coding subtasks"
            ).to_dict()
            save_coder(state, cstate)
            conclude(state, ctx)
            return

        raw = cstate.current_outcome or {}
        exec_raw = raw.get("execution", {})
        execution = ExecutionResult(
            exit_status=exec_raw.get("exit_status", 1),
            stdout_tail=exec_raw.get("stdout_tail", ""),
            stderr_tail=exec_raw.get("stderr_tail", ""),
            produced_files=tuple(tuple(p) for p in exec_raw.get("produced_files", ())),
            duration=0.0,
            validated=exec_raw.get("validated", False),
        )
        outcome = SubtaskOutcome(
            subtask=raw.get("subtask", cstate.current),
            execution=execution,
            figures=list(raw.get("figures", ())),
        )
        assert ctx.gateway is not None
        model_decision = request_decision(
            state,
            ctx.gateway,
            prompt=(
                f"coding subtask {cstate.current} attempt finished. "
                f"validated={execution.validated}, "
                f"figures={len(outcome.figures)}, "
                f"refinements_used={cstate.refinements.get(str(cstate.current), 0)}. "
                "Choose: continue next subtask, redo last subtask, fix last "
                "subtask, or alter plan."
            ),
            allowed=(Verdict.CONTINUE, Verdict.REDO, Verdict.FIX, Verdict.ALTER_PLAN),
        )
        try:
            decision = route(
                state, ctx, outcome, model_decision, max_refinements=max_refinements
            )
        except RefinementBudgetExhausted as exc:
            cstate = load_coder(state)
            assert cstate is not None
            if cstate.current not in cstate.unresolved:
                cstate.unresolved.append(cstate.current)
            cstate.errors.append(f"{exc.kind}: {exc.message}")
            if cstate.current_outcome is not None:
                cstate.current_outcome["verdict"] = RouterDecision(
                    Verdict.END, str(exc)
                ).to_dict()
                cstate.outcomes.append(cstate.current_outcome)
                cstate.current_outcome = None
            remaining = [o for o in cstate.queue if o > cstate.current]
            if remaining:
                cstate.current = remaining[0]
                state.subtask_index = max(state.subtask_index, cstate.current)
                cstate.pending_action = "first"
                cstate.last_failure = None
                cstate.last_vision = None
                decision = RouterDecision(
                    Verdict.CONTINUE, "refinement budget exhausted; moving on"
                )
            else:
                cstate.stop_reason = "refinement_budget_exhausted"
                decision = RouterDecision(Verdict.END, str(exc))
            save_coder(state, cstate)

        cstate = load_coder(state)
        assert cstate is not None
        cstate.pending_decision = decision.to_dict()
        save_coder(state, cstate)
        if decision.verdict in (Verdict.END, Verdict.ALTER_PLAN):
            conclude(state, ctx)

    def concluder_decide(state: SharedState, ctx: RunContext) -> RouterDecision:
        cstate = load_coder(state)
        assert cstate is not None and cstate.pending_decision is not None
        decision = RouterDecision.from_dict(cstate.pending_decision)
        cstate.pending_decision = None
        save_coder(state, cstate)
        return decision

    builder.add_node(NODE_PLAN_READ, plan_read)
    builder.add_node(NODE_CODING, coding)
    builder.add_node(NODE_VISION, vision_check)
    builder.add_node(NODE_CONCLUDE, concluder)
    builder.add_edge(NODE_PLAN_READ, NODE_CODING)
    builder.add_edge(NODE_CODING, NODE_VISION)
    builder.add_edge(NODE_VISION, NODE_CONCLUDE)

    # alter_plan always maps to engine STOP: the run terminates for external
    # handling instead of rewriting the graph mid-run.
    targets = dict(ROUTER_TARGETS)
    targets["alter_plan"] = STOP
    targets["end"] = STOP if exit_to is None else exit_to
    builder.add_router(NODE_CONCLUDE, concluder_decide, targets)
    return NODE_PLAN_READ


def build_coder_graph(max_refinements: int = DEFAULT_MAX_REFINEMENTS):
    builder = GraphBuilder()
    entry = add_coder_pipeline(builder, exit_to=None, max_refinements=max_refinements)
    builder.set_entry(entry)
    return builder.build()
