"""Command-line entry point: run, resume, trace, judge.

Exit codes are a stable contract: 0 success, 1 run failure (failing node
named on stderr), 2 configuration error.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import click

from .config import load_config, load_snapshot
from .engine.checkpoint import EVENT_LOG_FILE
from .engine.state import RunStatus
from .errors import ConfigError, LabflowError
from .judge import (
    DEFAULT_RUBRIC,
    BenchmarkTask,
    DimensionScore,
    EvaluationReport,
    aggregate,
    get_task,
    judge_run,
    load_task_catalog,
)
from .pipeline import resume_pipeline, run_pipeline
from .providers.base import Role
from .providers.script import ScriptedGateway, load_script

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_CONFIG = 2


def _finish(state, events) -> int:
    if state.status is RunStatus.STOPPED:
        click.echo(f"run {state.run_id}: stopped after {len(events)} events")
        return EXIT_OK
    if state.status is RunStatus.RUNNING:
        click.echo(f"run {state.run_id}: paused after {len(events)} events")
        return EXIT_OK
    failure = state.failure or {}
    click.echo(
        f"run {state.run_id} failed at node {failure.get('node', '?')}: "
        f"{failure.get('kind', 'unknown')} — {failure.get('detail', '')}",
        err=True,
    )
    return EXIT_RUN_FAILED


@click.group()
def main() -> None:
    """Checkpointable multi-agent research workflow runner."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="TOML config file.")
@click.option("--run-dir", type=click.Path(path_type=Path), required=True)
@click.option("--idea", default=None, help="Research idea (overrides config).")
@click.option("--run-id", default=None)
@click.option("--mode", type=click.Choice(["scripted", "live"]), default=None)
@click.option("--max-total-steps", type=int, default=None)
@click.option("--k-min", type=int, default=None)
@click.option("--max-refinements", type=int, default=None)
@click.option("--max-polish", type=int, default=None)
@click.option("--pause-after", type=int, default=None, help="Pause cleanly after N events.")
@click.option("--jobs", type=int, default=1, help="Run N isolated copies concurrently.")
def cmd_run(
    config_path: Optional[Path],
    run_dir: Path,
    idea: Optional[str],
    run_id: Optional[str],
    mode: Optional[str],
    max_total_steps: Optional[int],
    k_min: Optional[int],
    max_refinements: Optional[int],
    max_polish: Optional[int],
    pause_after: Optional[int],
    jobs: int,
) -> None:
    """Execute the full pipeline into RUN_DIR."""
    overrides = {
        "idea": idea,
        "run_id": run_id,
        "mode": mode,
        "max_total_steps": max_total_steps,
        "k_min": k_min,
        "max_refinements": max_refinements,
        "max_polish": max_polish,
    }
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    try:
        if jobs <= 1:
            state, events = run_pipeline(cfg, run_dir, pause_after=pause_after)
            sys.exit(_finish(state, events))
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(run_pipeline, cfg, Path(f"{run_dir}-{n}"), pause_after=pause_after)
                for n in range(1, jobs + 1)
            ]
            codes = [_finish(*f.result()) for f in futures]
        sys.exit(max(codes))
    except LabflowError as exc:
        click.echo(f"run aborted: {exc.kind}: {exc}", err=True)
        sys.exit(EXIT_RUN_FAILED)


@main.command("resume")
@click.argument("run_dir", type=click.Path(path_type=Path))
@click.option("--pause-after", type=int, default=None)
def cmd_resume(run_dir: Path, pause_after: Optional[int]) -> None:
    """Continue an interrupted run from its checkpoint."""
    try:
        cfg = load_snapshot(run_dir)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        state, events = resume_pipeline(cfg, run_dir, pause_after=pause_after)
    except LabflowError as exc:
        click.echo(f"resume aborted: {exc.kind}: {exc}", err=True)
        sys.exit(EXIT_RUN_FAILED)
    sys.exit(_finish(state, events))


@main.command("trace")
@click.argument("run_dir", type=click.Path(path_type=Path))
@click.option("--node", "node_filter", default=None)
@click.option("--outcome", "outcome_filter", default=None)
def cmd_trace(run_dir: Path, node_filter: Optional[str], outcome_filter: Optional[str]) -> None:
    """Render the event log as a table (stops at the first corrupt line)."""
    log_path = Path(run_dir) / EVENT_LOG_FILE
    if not log_path.is_file():
        click.echo(f"no such run: no event log under {run_dir}", err=True)
        sys.exit(EXIT_RUN_FAILED)
    click.echo(f"{'seq':>4}  {'node':<22} {'outcome':<28} {'decision':<12} digest")
    last_good = -1
    for lineno, line in enumerate(log_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            seq, node, outcome = record["seq"], record["node"], record["outcome"]
        except (json.JSONDecodeError, KeyError):
            click.echo(
                f"-- corrupt event at line {lineno}; rendering stopped "
                f"(last good seq {last_good})",
                err=True,
            )
            break
        last_good = seq
        if node_filter and node_filter not in node:
            continue
        if outcome_filter and not outcome.startswith(outcome_filter):
            continue
        verdict = record.get("decision", {}).get("verdict", "")
        click.echo(
            f"{seq:>4}  {node:<22} {outcome:<28} {verdict:<12} {record['output_digest'][:12]}"
        )


def _load_reports(run_dirs: list[Path]) -> list[EvaluationReport]:
    reports = []
    for run_dir in run_dirs:
        payload = json.loads((run_dir / "evaluation.json").read_text(encoding="utf-8"))
        task = BenchmarkTask(
            id=payload["task"]["id"],
            difficulty=payload["task"]["difficulty"],
            prompt=payload["task"]["prompt"],
            dataset=payload["task"]["dataset"],
        )
        scores = [
            DimensionScore(s["dimension"], int(s["score"]), s.get("rationale", ""))
            for s in payload["scores"]
        ]
        reports.append(EvaluationReport.build(task, scores))
    return reports


@main.command("judge")
@click.argument("run_dir", type=click.Path(path_type=Path))
@click.option("--task", "task_id", default=None, help="Benchmark task id, e.g. E2.")
@click.option("--dataset", default=None, help="eicu_demo or mimic_iv_icu.")
@click.option("--script", "script_path", type=click.Path(path_type=Path), default=None,
              help="Scripted judge transcript (JSONL) for deterministic scoring.")
@click.option("--all", "all_runs", is_flag=True,
              help="Aggregate evaluation.json files from RUN_DIR's subdirectories.")
def cmd_judge(
    run_dir: Path,
    task_id: Optional[str],
    dataset: Optional[str],
    script_path: Optional[Path],
    all_runs: bool,
) -> None:
    """Score a run bundle (or aggregate many already-scored runs)."""
    if all_runs:
        run_dirs = sorted(
            p for p in Path(run_dir).iterdir() if (p / "evaluation.json").is_file()
        )
        if not run_dirs:
            click.echo(f"no evaluation.json files under {run_dir}", err=True)
            sys.exit(EXIT_RUN_FAILED)
        summary = aggregate(_load_reports(run_dirs))
        click.echo(summary.render_text())
        sys.exit(EXIT_OK)

    if not task_id or not dataset:
        click.echo("--task and --dataset are required without --all", err=True)
        sys.exit(EXIT_CONFIG)
    if script_path is None:
        click.echo("scripted judging requires --script (live judging not configured)", err=True)
        sys.exit(EXIT_CONFIG)
    task = get_task(load_task_catalog(), task_id, dataset)
    gateway = ScriptedGateway({Role.BASE: load_script(script_path)})
    try:
        report = judge_run(Path(run_dir), task, gateway, DEFAULT_RUBRIC)
    except LabflowError as exc:
        click.echo(f"judging failed: {exc.kind}: {exc}", err=True)
        sys.exit(EXIT_RUN_FAILED)
    click.echo(aggregate([report]).render_text())
    sys.exit(EXIT_OK)


if __name__ == "__main__":  # pragma: no cover
    main()
