from __future__ import annotations

import base64
from pathlib import Path

import pytest

from labflow.engine.runner import RunContext
from labflow.engine.state import SharedState
from labflow.engine.store import ArtifactStore
from labflow.providers.base import CallBudget, Role
from labflow.providers.script import ProviderScript, ScriptEntry, ScriptedGateway
from labflow.toolkit.registry import ToolRegistry

# 1x1 transparent PNG, valid magic and structure.
PNG_1PX = base64.b64decode(
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8z8BQ"
    "DwAEhQGAhKmMIQAAAABJRU5ErkJggg=="
)


def scripted(entries_by_role: dict[Role, list[dict]], *, strict: bool = True,
             budgets: dict[Role, int] | None = None) -> ScriptedGateway:
    """Build a scripted gateway from in-memory entry dicts."""
    scripts = {
        role: ProviderScript(
            entries=[
                ScriptEntry(contains=e.get("match", {}).get("contains", ""), respond=e["respond"])
                for e in entries
            ],
            strict=strict,
        )
        for role, entries in entries_by_role.items()
    }
    budget_map = {role: CallBudget(n) for role, n in (budgets or {}).items()}
    return ScriptedGateway(scripts, budget_map)


def text_entry(text: str, contains: str = "") -> dict:
    return {"match": {"contains": contains}, "respond": {"text": text}}


def tool_entry(name: str, args: dict, contains: str = "") -> dict:
    return {"match": {"contains": contains}, "respond": {"tool_calls": [{"name": name, "args": args}]}}


def vision_entry(issues: list[dict] | None = None, contains: str = "") -> dict:
    return {"match": {"contains": contains}, "respond": {"vision": {"issues": issues or []}}}


def decision_entry(verdict: str, contains: str = "") -> dict:
    return text_entry(f"Considering the state.\nDECISION: {verdict}", contains)


@pytest.fixture
def ctx_factory(tmp_path: Path):
    """RunContext factory rooted in the test's tmp dir; sleeps are no-ops."""

    def make(gateway=None, tools=None, settings=None, subdir: str = "run") -> RunContext:
        root = tmp_path / subdir
        workspace = root / "workspace"
        workspace.mkdir(parents=True, exist_ok=True)
        return RunContext(
            store=ArtifactStore(root / "artifacts"),
            gateway=gateway,
            tools=tools or ToolRegistry(),
            workspace=workspace,
            run_dir=root,
            settings=dict(settings or {}),
            sleep=lambda s: None,
        )

    return make


@pytest.fixture
def state() -> SharedState:
    return SharedState(run_id="test-run")


# --- plan & artifact seeding helpers -----------------------------------------

from labflow.jsonutil import canonical_dumps  # noqa: E402
from labflow.plan import (  # noqa: E402
    ArtifactDescriptor,
    ResearchIdea,
    ResearchPlan,
    Subtask,
    SubtaskKind,
)


def desc(name: str, kind: str = "artifact", media: str = "application/octet-stream"):
    return ArtifactDescriptor(name=name, kind=kind, media_type=media)


def subtask(sid: int, kind: str, title: str = "", inputs=(), outputs=("out",)):
    return Subtask(
        id=sid,
        title=title or f"subtask {sid}",
        kind=SubtaskKind(kind),
        expected_inputs=tuple(d if isinstance(d, ArtifactDescriptor) else desc(d) for d in inputs),
        expected_outputs=tuple(
            d if isinstance(d, ArtifactDescriptor) else desc(d) for d in outputs
        ),
    )


def make_plan(*subtasks_: Subtask, statement: str = "a research idea", datasets=()):
    return ResearchPlan(
        idea=ResearchIdea(statement=statement, dataset_paths=tuple(datasets)),
        subtasks=tuple(subtasks_),
        created_at="1970-01-01T00:00:00+00:00",
    )


def write_search_fixture(path: Path, entries: dict[str, list[dict]]) -> Path:
    import json

    payload = [{"query": q, "results": rs} for q, rs in entries.items()]
    path.write_text(json.dumps(payload))
    return path


def seed_coder_summary(state: SharedState, ctx: RunContext, figures: list[tuple[str, bool]]):
    """Create figure artifacts with recorded verdicts plus the coder summary."""
    ids = []
    for name, approved in figures:
        artifact = ctx.store.put(
            PNG_1PX + name.encode(), kind="figure", name=name, media_type="image/png"
        )
        issues = [] if approved else [
            {"severity": "blocking", "description": f"{name} unreadable"}
        ]
        artifact.meta["verdicts"] = [
            {"approved": approved, "issues": issues, "target": artifact.id}
        ]
        artifact.meta["caption"] = f"Figure {name}"
        state.add_artifact(artifact)
        ids.append(artifact.id)
    summary = {
        "completed": [1],
        "unresolved": [],
        "refinements": {},
        "stop_reason": "all_done",
        "figures": ids,
        "outcomes": [],
        "errors": [],
    }
    artifact = ctx.store.put(
        canonical_dumps(summary).encode(), kind="summary", name="coder_summary",
        media_type="application/json",
    )
    state.add_artifact(artifact)
    return ids


def seed_literature_report(state: SharedState, ctx: RunContext, cited: list[dict]) -> str:
    import json

    body = "Reviewed prior work.\n\n## Citations\n\n```json\n" + json.dumps(cited) + "\n```\n"
    artifact = ctx.store.put(
        body.encode(), kind="report", name="literature_report",
        media_type="text/markdown", meta={"report_kind": "literature"},
    )
    state.add_artifact(artifact)
    return artifact.id
