"""Data analyzer: sandbox processing alternating with narrative reporting.

The processing node generates and executes an analysis script; the gate to
the narrative node is mechanical ("data missing" is defined purely by
declared-input resolution) combined with the router model's verdict. Every
processing pass counts against a hard loop cap — breaching it surfaces
AnalyzerStalled rather than silently truncating.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .engine.graph import GraphBuilder
from .engine.runner import RunContext
from .engine.state import Artifact, ArtifactId, NodeId, RouterDecision, SharedState, Verdict
from .errors import AnalyzerStalled, DanglingReference, ModelRefusal, RouterParseFailure
from .jsonutil import canonical_dumps
from .plan import SubtaskKind
from .providers.base import ChatRequest, Role, parse_decision, request_decision
from .toolkit.reports import persist_report
from .toolkit.sandbox import CodeTask, sandbox_execute

DEFAULT_LOOP_CAP = 4

SCRATCH_KEY = "analyzer"

_REF_RE = re.compile(r"\[\[artifact:([^\]]+)\]\]")

_MEDIA_BY_SUFFIX = {
    ".csv": ("dataset", "text/csv"),
    ".json": ("dataset", "application/json"),
    ".png": ("figure", "image/png"),
    ".pdf": ("figure", "application/pdf"),
    ".md": ("report", "text/markdown"),
}


@dataclass
class AnalysisState:
    subtask_id: int
    required_inputs: list[dict[str, str]] = field(default_factory=list)
    processed: Optional[ArtifactId] = None
    narrative: Optional[str] = None
    loops: int = 0
    report_artifact: Optional[str] = None
    last_failure: str = ""
    pending: list[int] = field(default_factory=list)
    skip: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "subtask_id": self.subtask_id,
            "required_inputs": self.required_inputs,
            "processed": self.processed,
            "narrative": self.narrative,
            "loops": self.loops,
            "report_artifact": self.report_artifact,
            "last_failure": self.last_failure,
            "pending": self.pending,
            "skip": self.skip,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AnalysisState:
        return cls(
            subtask_id=int(d.get("subtask_id", 0)),
            required_inputs=d.get("required_inputs", []),
            processed=d.get("processed"),
            narrative=d.get("narrative"),
            loops=int(d.get("loops", 0)),
            report_artifact=d.get("report_artifact"),
            last_failure=d.get("last_failure", ""),
            pending=d.get("pending", []),
            skip=bool(d.get("skip", False)),
        )


def load_analysis(state: SharedState) -> Optional[AnalysisState]:
    raw = state.scratch.get(SCRATCH_KEY)
    return AnalysisState.from_dict(raw) if raw else None


def save_analysis(state: SharedState, astate: AnalysisState) -> None:
    state.scratch[SCRATCH_KEY] = astate.to_dict()


def _resolves(state: SharedState, ctx: RunContext, name: str) -> bool:
    if state.artifact_by_name(name) is not None:
        return True
    if ctx.workspace is not None and (Path(ctx.workspace) / name).is_file():
        return True
    if state.plan is not None:
        for p in state.plan.idea.dataset_paths:
            if Path(p).name == name and Path(p).is_file():
                return True
    return False


def data_ready(state: SharedState, ctx: RunContext) -> bool:
    """True iff every declared input of the active analysis subtask resolves
    to an existing artifact or workspace file."""
    astate = load_analysis(state)
    if astate is None or astate.skip:
        return True
    return all(_resolves(state, ctx, d["name"]) for d in astate.required_inputs)


def register_produced_files(
    state: SharedState,
    ctx: RunContext,
    produced: tuple[tuple[str, str], ...],
    provenance: tuple[ArtifactId, ...],
) -> list[Artifact]:
    """Content-address every produced workspace file into the store."""
    assert ctx.workspace is not None
    artifacts = []
    for rel_path, _digest in produced:
        kind, media = _MEDIA_BY_SUFFIX.get(Path(rel_path).suffix, ("file", "application/octet-stream"))
        content = (Path(ctx.workspace) / rel_path).read_bytes()
        artifact = ctx.store.put(
            content, kind=kind, name=Path(rel_path).name, media_type=media, provenance=provenance
        )
        state.add_artifact(artifact)
        artifacts.append(artifact)
    return artifacts


def process_node(state: SharedState, ctx: RunContext) -> AnalysisState:
    """One processing pass: generate the analysis script, execute it in the
    sandbox, and register validated outputs as artifacts."""
    astate = load_analysis(state)
    assert astate is not None and not astate.skip
    assert ctx.gateway is not None and ctx.workspace is not None

    cap = int(ctx.setting("analyzer_loop_cap", DEFAULT_LOOP_CAP))
    if astate.loops >= cap:
        raise AnalyzerStalled(
            f"analyzer loop cap {cap} reached for subtask {astate.subtask_id}"
        )

    subtask = state.plan.subtask(astate.subtask_id) if state.plan else None
    outputs = [d.name for d in subtask.expected_outputs] if subtask else []
    file_outputs = [o for o in outputs if "." in o]
    failure_note = f"\nPrevious failure to fix:\n{astate.last_failure}" if astate.last_failure else ""
    request = ChatRequest(
        system=(
            "You are the data processing agent. Reply with a single Python "
            "script (no fences) that reads the declared inputs from the "
            "working directory and writes the declared outputs. Tabular "
            "outputs are CSV files with a <name>.schema.json sidecar listing "
            "their columns."
        ),
        messages=[
            {
                "role": "user",
                "content": (
                    f"subtask: {subtask.title if subtask else 'analysis'}\n"
                    f"inputs: {', '.join(d['name'] for d in astate.required_inputs) or 'none'}\n"
                    f"outputs: {', '.join(file_outputs) or 'none'}{failure_note}"
                ),
            }
        ],
    )
    exchange = ctx.gateway.chat(state, Role.BASE, request)

    task = CodeTask(
        instructions=exchange.response.text,
        workspace=Path(ctx.workspace),
        declared_inputs=tuple(d["name"] for d in astate.required_inputs if "." in d["name"]),
        declared_outputs=tuple(file_outputs),
        timeout=float(ctx.setting("sandbox_timeout_s", 60.0)),
    )
    result = sandbox_execute(task)

    run_artifact = ctx.store.put(
        canonical_dumps(result.to_dict()).encode("utf-8"),
        kind="code_run",
        name=f"analysis_run_s{astate.subtask_id}_{astate.loops}",
        media_type="application/json",
    )
    state.add_artifact(run_artifact)

    astate.loops += 1
    if result.validated:
        artifacts = register_produced_files(
            state, ctx, result.produced_files, provenance=(run_artifact.id,)
        )
        primary = next((a for a in artifacts if a.name in file_outputs), None)
        if primary is not None:
            astate.processed = primary.id
        astate.last_failure = ""
    else:
        astate.last_failure = result.stderr_tail or f"exit status {result.exit_status}"
    save_analysis(state, astate)
    return astate


@dataclass
class AnalysisReport:
    body: str
    figures: tuple[ArtifactId, ...]
    stats_tables: tuple[ArtifactId, ...]


def _processed_row_count(state: SharedState, ctx: RunContext, astate: AnalysisState) -> Optional[int]:
    if astate.processed is None:
        return None
    artifact = state.artifacts.get(astate.processed)
    if artifact is None or artifact.media_type != "text/csv":
        return None
    text = ctx.store.get_bytes(artifact).decode("utf-8", errors="replace")
    rows = list(csv.reader(io.StringIO(text)))
    return max(0, len(rows) - 1)


def narrate_node(state: SharedState, ctx: RunContext) -> AnalysisReport:
    """Produce the narrative analysis report; every ``[[artifact:name]]``
    reference must resolve to a stored artifact."""
    if not data_ready(state, ctx):
        raise ValueError("narrate_node requires data_ready = true")
    astate = load_analysis(state)
    assert astate is not None and ctx.gateway is not None

    available = sorted(
        a.name for a in state.artifacts.values() if a.kind in ("dataset", "figure")
    )
    request = ChatRequest(
        system=(
            "You are the narrative analysis agent. Write a descriptive report "
            "of the processed data, referencing artifacts as [[artifact:name]]."
        ),
        messages=[
            {
                "role": "user",
                "content": f"available artifacts: {', '.join(available) or 'none'}",
            }
        ],
    )
    exchange = ctx.gateway.chat(state, Role.BASE, request)
    body = exchange.response.text
    if not body.strip():
        raise ModelRefusal("empty narrative")

    figures: list[ArtifactId] = []
    tables: list[ArtifactId] = []
    for name in _REF_RE.findall(body):
        artifact = state.artifact_by_name(name)
        if artifact is None or not ctx.store.has(artifact.digest):
            raise DanglingReference(f"narrative references unknown artifact {name!r}")
        if artifact.kind == "figure":
            figures.append(artifact.id)
        else:
            tables.append(artifact.id)

    rows = _processed_row_count(state, ctx, astate)
    if rows == 0:
        body += (
            "\n\n## Caveats\n\nThe processed data table is empty; findings "
            "below are stated without observational support.\n"
        )

    report = AnalysisReport(body=body, figures=tuple(figures), stats_tables=tuple(tables))
    output_name = "analysis_report"
    subtask = state.plan.subtask(astate.subtask_id) if state.plan else None
    if subtask is not None:
        for out in subtask.expected_outputs:
            if out.kind == "report" or "." not in out.name:
                output_name = out.name
                break
    astate.report_artifact = persist_report(
        state,
        ctx.store,
        body,
        "analysis",
        name=output_name,
        provenance=tuple(figures) + tuple(tables),
    )
    astate.narrative = body
    save_analysis(state, astate)
    return report


def route(state: SharedState, ctx: RunContext, router_output: str) -> RouterDecision:
    """The analyzer state-update guard: missing data forces `return`; with
    data ready the router model's verdict decides (continue/return/end)."""
    if not data_ready(state, ctx):
        return RouterDecision(Verdict.RETURN, "data missing")
    try:
        return parse_decision(
            router_output, allowed=(Verdict.RETURN, Verdict.CONTINUE, Verdict.END)
        )
    except ValueError as exc:
        raise RouterParseFailure(str(exc)) from exc


# --- pipeline wiring ---------------------------------------------------------

NODE_PROCESS = "an_process"
NODE_NARRATE = "an_narrate"
NODE_REPORT = "an_report"


def _init_analysis(state: SharedState) -> AnalysisState:
    subtasks = state.plan.subtasks_of(SubtaskKind.DATA_ANALYSIS) if state.plan else ()
    if not subtasks:
        astate = AnalysisState(subtask_id=0, skip=True)
    else:
        current, *rest = subtasks
        astate = AnalysisState(
            subtask_id=current.id,
            required_inputs=[d.to_dict() for d in current.expected_inputs],
            pending=[s.id for s in rest],
        )
        state.subtask_index = max(state.subtask_index, current.id)
    save_analysis(state, astate)
    return astate


def _advance_subtask(state: SharedState, astate: AnalysisState) -> bool:
    if not astate.pending or state.plan is None:
        return False
    next_id = astate.pending[0]
    subtask = state.plan.subtask(next_id)
    fresh = AnalysisState(
        subtask_id=next_id,
        required_inputs=[d.to_dict() for d in subtask.expected_inputs],
        pending=astate.pending[1:],
    )
    state.subtask_index = max(state.subtask_index, next_id)
    save_analysis(state, fresh)
    return True


def add_analyzer_pipeline(
    builder: GraphBuilder, *, exit_to: Optional[NodeId]
) -> NodeId:
    """Wire START -> process ->(data processed)-> narrate -> report
    ->(router)-> END or loop back."""

    def process(state: SharedState, ctx: RunContext) -> None:
        astate = load_analysis(state)
        if astate is None:
            astate = _init_analysis(state)
        if astate.skip:
            return
        process_node(state, ctx)

    def gate_decide(state: SharedState, ctx: RunContext) -> RouterDecision:
        astate = load_analysis(state)
        assert astate is not None
        if astate.skip:
            return RouterDecision(Verdict.CONTINUE, "no analysis subtask in plan")
        if not data_ready(state, ctx):
            return RouterDecision(Verdict.RETURN, "data missing")
        if astate.last_failure:
            return RouterDecision(Verdict.RETURN, "last processing pass failed validation")
        assert ctx.gateway is not None
        decision = request_decision(
            state,
            ctx.gateway,
            prompt=(
                f"analysis subtask {astate.subtask_id}: data ready, processing "
                f"pass {astate.loops} complete. Proceed to narrative analysis "
                "(continue) or reprocess (return)?"
            ),
            allowed=(Verdict.CONTINUE, Verdict.RETURN),
        )
        return decision

    def narrate(state: SharedState, ctx: RunContext) -> None:
        astate = load_analysis(state)
        assert astate is not None
        if astate.skip:
            return
        narrate_node(state, ctx)

    def report(state: SharedState, ctx: RunContext) -> None:
        astate = load_analysis(state)
        assert astate is not None
        if astate.skip or astate.report_artifact is None:
            return
        artifact = state.artifacts[astate.report_artifact]
        state.scratch.setdefault("outputs", {})[artifact.name] = astate.report_artifact

    def done_decide(state: SharedState, ctx: RunContext) -> RouterDecision:
        astate = load_analysis(state)
        assert astate is not None
        if astate.skip:
            return RouterDecision(Verdict.END, "no analysis subtask in plan")
        assert ctx.gateway is not None
        decision = request_decision(
            state,
            ctx.gateway,
            prompt=(
                f"analysis subtask {astate.subtask_id} reported. Finish the "
                "analysis stage (end) or loop back for reprocessing (return)?"
            ),
            allowed=(Verdict.END, Verdict.RETURN),
        )
        if decision.verdict is Verdict.END and _advance_subtask(state, astate):
            return RouterDecision(Verdict.RETURN, "next analysis subtask queued")
        return decision

    builder.add_node(NODE_PROCESS, process)
    builder.add_node(NODE_NARRATE, narrate)
    builder.add_node(NODE_REPORT, report)
    builder.add_router(
        NODE_PROCESS, gate_decide, {"return": NODE_PROCESS, "continue": NODE_NARRATE}
    )
    builder.add_edge(NODE_NARRATE, NODE_REPORT)
    if exit_to is None:
        terminal = "an_end"
        builder.add_node(terminal, lambda state, ctx: None)
        builder.add_router(
            NODE_REPORT, done_decide, {"return": NODE_PROCESS, "end": terminal}
        )
        builder.add_exit(terminal)
    else:
        builder.add_router(
            NODE_REPORT, done_decide, {"return": NODE_PROCESS, "end": exit_to}
        )
    return NODE_PROCESS


def build_analyzer_graph():
    builder = GraphBuilder()
    entry = add_analyzer_pipeline(builder, exit_to=None)
    builder.set_entry(entry)
    return builder.build()
