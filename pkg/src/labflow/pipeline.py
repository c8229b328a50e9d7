"""Full-run composition: the five agent pipelines plus quality as one graph.

    plan -> literature -> analyzer -> coder -> writer -> quality -> END

Each sub-pipeline skips itself gracefully when the plan has no subtask of
its kind; the coder's alter-plan verdict terminates the run (STOP) for
external handling rather than rewriting the graph.
"""

from __future__ import annotations

import shutil
from pathlib import Path
from typing import Optional

from . import analyzer, coder, literature, writer
from .config import RunConfig, save_snapshot
from .engine.graph import GraphBuilder, WorkflowGraph
from .engine.runner import RetryPolicy, RunContext, RunLimits, run
from .engine.state import RunStatus, SharedState
from .engine.store import ArtifactStore
from .engine.checkpoint import load_checkpoint
from .errors import ConfigError
from .plan import ResearchIdea
from .providers.base import CallBudget, Role, RoleConfig
from .providers.live import HttpGateway
from .providers.script import ScriptedGateway, load_script
from .quality import run_quality_checks
from .supervisor import decompose
from .toolkit.registry import ToolRegistry
from .toolkit.search import register_search_tools

NODE_PLAN = "plan"
NODE_QUALITY = "quality"


def compose_graph(cfg: RunConfig) -> WorkflowGraph:
    builder = GraphBuilder()

    def plan_node(state: SharedState, ctx: RunContext) -> None:
        if state.plan is not None:
            return
        idea = ResearchIdea(
            statement=cfg.idea,
            dataset_paths=tuple(cfg.dataset_paths),
            constraints=cfg.constraints,
        )
        decompose(state, ctx, idea)

    def quality_node(state: SharedState, ctx: RunContext) -> None:
        run_quality_checks(state, ctx)

    builder.add_node(NODE_PLAN, plan_node)
    builder.set_entry(NODE_PLAN)
    builder.add_edge(NODE_PLAN, literature.NODE_SEARCH)
    literature.add_literature_pipeline(
        builder,
        exit_to=analyzer.NODE_PROCESS,
        k_min=int(cfg.limit("k_min")),
        k_max=cfg.k_max(),
    )
    analyzer.add_analyzer_pipeline(builder, exit_to=coder.NODE_PLAN_READ)
    coder.add_coder_pipeline(
        builder,
        exit_to=writer.NODE_COLLECT,
        max_refinements=int(cfg.limit("max_refinements")),
    )
    writer.add_writer_pipeline(
        builder, exit_to=NODE_QUALITY, max_polish=int(cfg.limit("max_polish"))
    )
    builder.add_node(NODE_QUALITY, quality_node)
    builder.add_exit(NODE_QUALITY)
    return builder.build()


def build_gateway(cfg: RunConfig, store: ArtifactStore):
    budgets = {Role(r): CallBudget(max_calls=n) for r, n in cfg.budgets.items()}
    if cfg.mode == "scripted":
        scripts = {
            Role(role): load_script(Path(path))
            for role, path in cfg.script_paths.items()
        }
        return ScriptedGateway(scripts, budgets)
    roles = {}
    default_entry = cfg.providers.get("default")
    for role_name, entry in cfg.providers.items():
        if role_name == "default":
            continue
        role = Role(role_name)
        roles[role] = RoleConfig(
            role=role,
            model_name=entry.get("model_name", ""),
            endpoint=entry.get("endpoint", ""),
            api_key_env=entry.get("api_key_env", ""),
            budget=budgets.get(role, CallBudget()),
        )
    if default_entry:
        # one physical endpoint may serve every text role; vision stays explicit
        for role in (Role.SEARCH, Role.WRITE, Role.BASE, Role.ROUTER):
            roles.setdefault(
                role,
                RoleConfig(
                    role=role,
                    model_name=default_entry.get("model_name", ""),
                    endpoint=default_entry.get("endpoint", ""),
                    api_key_env=default_entry.get("api_key_env", ""),
                    budget=budgets.get(role, CallBudget()),
                ),
            )
    if not roles:
        raise ConfigError("live mode requires provider endpoints")
    return HttpGateway(roles, store, budgets)


def build_context(cfg: RunConfig, run_dir: Path) -> RunContext:
    run_dir = Path(run_dir)
    store = ArtifactStore(run_dir / "artifacts")
    workspace = run_dir / "workspace"
    workspace.mkdir(parents=True, exist_ok=True)
    for dataset in cfg.dataset_paths:
        target = workspace / Path(dataset).name
        if not target.exists():
            shutil.copyfile(dataset, target)

    tools = ToolRegistry()
    register_search_tools(
        tools, {name: Path(path) for name, path in cfg.tool_fixtures.items()}
    )

    settings = {
        "mode": cfg.mode,
        "sandbox_timeout_s": float(cfg.limit("sandbox_timeout_s")),
        "analyzer_loop_cap": int(cfg.limit("analyzer_loop_cap")),
        "latex_timeout_s": float(cfg.limit("latex_timeout_s")),
        "registry_fixtures": cfg.registry_fixtures,
        "k_min": int(cfg.limit("k_min")),
    }
    if cfg.latex_command:
        settings["latex_command"] = cfg.latex_command

    return RunContext(
        store=store,
        gateway=build_gateway(cfg, store),
        tools=tools,
        workspace=workspace,
        run_dir=run_dir,
        settings=settings,
    )


def run_pipeline(
    cfg: RunConfig,
    run_dir: Path,
    *,
    pause_after: Optional[int] = None,
):
    """Fresh full run into ``run_dir``; returns (state, events)."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_snapshot(cfg, run_dir)
    ctx = build_context(cfg, run_dir)
    graph = compose_graph(cfg)
    state = SharedState(run_id=cfg.run_id)
    limits = RunLimits(
        max_total_steps=int(cfg.limit("max_total_steps")), pause_after=pause_after
    )
    return run(graph, state, RetryPolicy(), limits, ctx)


def resume_pipeline(
    cfg: RunConfig,
    run_dir: Path,
    *,
    pause_after: Optional[int] = None,
):
    """Continue an interrupted run from its checkpoint; the first
    un-executed node runs next and digests reproduce the uninterrupted run."""
    run_dir = Path(run_dir)
    state, events = load_checkpoint(run_dir)
    if state.status is not RunStatus.RUNNING:
        return state, events
    ctx = build_context(cfg, run_dir)
    graph = compose_graph(cfg)
    limits = RunLimits(
        max_total_steps=int(cfg.limit("max_total_steps")), pause_after=pause_after
    )
    return run(graph, state, RetryPolicy(), limits, ctx, events=events)
