"""LLM-as-Judge harness: five-dimension, three-point scoring of a run.

One model call per dimension keeps scripting and failure isolation clean;
each call must end with a ``SCORE: <1|2|3>`` line. The rendered average is
the half-up one-decimal rounding of the dimension mean. The shipped task
catalog carries the nine benchmark prompts across two datasets (18
instances) with a reconstructed default rubric.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence

from .engine.state import SharedState
from .errors import CatalogMissing, MissingArtifacts, ModelRefusal, ScoreOutOfRange
from .providers.base import ChatRequest, Gateway, Role

DIMENSIONS = (
    "plan_completion",
    "code_execution",
    "result_validity",
    "paper_completeness",
    "conclusion_quality",
)

DIMENSION_COLUMNS = {
    "plan_completion": "Plan",
    "code_execution": "Code",
    "result_validity": "Result",
    "paper_completeness": "Paper",
    "conclusion_quality": "Conclusion",
}

DIFFICULTY_ORDER = {"easy": 0, "medium": 1, "hard": 2}

DEFAULT_RUBRIC = (
    "Score the research run on a three-point scale: 1 = severe issues that "
    "make the research fundamentally wrong, 2 = moderate issues that still "
    "allow the research to be valid, 3 = minor or no issues. Judge only the "
    "requested dimension. End your reply with a line `SCORE: <1|2|3>`."
)

_SCORE_RE = re.compile(r"^\s*SCORE:\s*(-?\d+)\s*$", re.MULTILINE)

REQUIRED_BUNDLE_FILES = ("plan.json", "events.jsonl", "artifacts", "paper.pdf")


@dataclass(frozen=True)
class BenchmarkTask:
    id: str
    difficulty: str
    prompt: str
    dataset: str

    def instance_key(self) -> str:
        return f"{self.id}:{self.dataset}"


def load_task_catalog(path: Optional[Path] = None) -> list[BenchmarkTask]:
    """All task instances (9 prompts x 2 datasets), prompts byte-identical
    to the shipped catalog file."""
    try:
        if path is not None:
            raw = Path(path).read_text(encoding="utf-8")
        else:
            raw = resources.files("labflow.benchmark").joinpath("tasks.json").read_text("utf-8")
    except (OSError, FileNotFoundError) as exc:
        raise CatalogMissing(f"task catalog unreadable: {exc}") from exc
    payload = json.loads(raw)
    instances = []
    for task in payload["tasks"]:
        for dataset in payload["datasets"]:
            instances.append(
                BenchmarkTask(
                    id=task["id"],
                    difficulty=task["difficulty"],
                    prompt=task["prompt"],
                    dataset=dataset,
                )
            )
    return instances


def dataset_label(dataset: str) -> str:
    payload = json.loads(
        resources.files("labflow.benchmark").joinpath("tasks.json").read_text("utf-8")
    )
    return payload.get("dataset_labels", {}).get(dataset, dataset)


def get_task(catalog: Sequence[BenchmarkTask], task_id: str, dataset: str) -> BenchmarkTask:
    for task in catalog:
        if task.id == task_id and task.dataset == dataset:
            return task
    raise CatalogMissing(f"no task {task_id!r} for dataset {dataset!r} in catalog")


@dataclass(frozen=True)
class DimensionScore:
    dimension: str
    score: int
    rationale: str = ""

    def __post_init__(self) -> None:
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"unknown dimension {self.dimension!r}")
        if self.score not in (1, 2, 3):
            raise ScoreOutOfRange(f"score {self.score} outside {{1,2,3}}")

    def to_dict(self) -> dict[str, Any]:
        return {"dimension": self.dimension, "score": self.score, "rationale": self.rationale}


def round_half_up_mean(scores: Sequence[int]) -> float:
    """Mean rounded half-up to one decimal — the Avg-column rule."""
    mean = Decimal(sum(scores)) / Decimal(len(scores))
    return float(mean.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class EvaluationReport:
    task: BenchmarkTask
    scores: tuple[DimensionScore, ...]
    average: float

    def __post_init__(self) -> None:
        names = [s.dimension for s in self.scores]
        if names != list(DIMENSIONS):
            raise ValueError(f"scores must cover {DIMENSIONS} exactly once, got {names}")

    @classmethod
    def build(cls, task: BenchmarkTask, scores: Sequence[DimensionScore]) -> EvaluationReport:
        return cls(
            task=task,
            scores=tuple(scores),
            average=round_half_up_mean([s.score for s in scores]),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "task": {
                "id": self.task.id,
                "difficulty": self.task.difficulty,
                "dataset": self.task.dataset,
                "prompt": self.task.prompt,
            },
            "scores": [s.to_dict() for s in self.scores],
            "average": self.average,
        }


def check_bundle(run_dir: Path) -> None:
    missing = [
        name for name in REQUIRED_BUNDLE_FILES if not (Path(run_dir) / name).exists()
    ]
    if missing:
        raise MissingArtifacts(
            f"run bundle lacks: {', '.join(missing)}", run_dir=str(run_dir)
        )


def _score_one(
    state: SharedState,
    gateway: Gateway,
    rubric: str,
    dimension: str,
    context: str,
) -> DimensionScore:
    request = ChatRequest(
        system=rubric,
        messages=[
            {"role": "user", "content": f"dimension: {dimension}\nrun summary:\n{context}"}
        ],
    )
    last = ""
    for attempt in range(2):
        exchange = gateway.chat(state, Role.BASE, request)
        text = exchange.response.text
        match = _SCORE_RE.search(text)
        if match is None:
            last = "no SCORE line"
        else:
            value = int(match.group(1))
            if value in (1, 2, 3):
                rationale = text[: match.start()].strip()
                return DimensionScore(dimension=dimension, score=value, rationale=rationale)
            last = f"score {value} outside scale"
        request = ChatRequest(
            system=rubric,
            messages=[
                {
                    "role": "user",
                    "content": (
                        f"dimension: {dimension}\nrun summary:\n{context}\n"
                        f"Previous reply invalid ({last}); end with SCORE: 1, 2 or 3."
                    ),
                }
            ],
        )
    if last.startswith("score"):
        raise ScoreOutOfRange(f"{dimension}: {last} after retry")
    raise ModelRefusal(f"{dimension}: {last} after retry")


def judge_run(
    run_dir: Path,
    task: BenchmarkTask,
    gateway: Gateway,
    rubric: str = DEFAULT_RUBRIC,
) -> EvaluationReport:
    """Score one completed run bundle: five sequential calls, one per
    dimension, then persist evaluation.json into the run directory."""
    run_dir = Path(run_dir)
    check_bundle(run_dir)
    state = SharedState(run_id=f"judge:{task.instance_key()}")

    plan_text = (run_dir / "plan.json").read_text(encoding="utf-8")
    events_text = (run_dir / "events.jsonl").read_text(encoding="utf-8")
    context = (
        f"task: {task.prompt}\ndataset: {task.dataset}\n"
        f"plan:\n{plan_text[:2000]}\nevents: {len(events_text.splitlines())} records"
    )
    scores = [
        _score_one(state, gateway, rubric, dimension, context) for dimension in DIMENSIONS
    ]
    report = EvaluationReport.build(task, scores)
    (run_dir / "evaluation.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return report


def aggregate(reports: Sequence[EvaluationReport]) -> "Summary":
    if not reports:
        raise ValueError("aggregate requires at least one report")
    ordered = sorted(
        reports,
        key=lambda r: (
            DIFFICULTY_ORDER.get(r.task.difficulty, 99),
            r.task.id,
            r.task.dataset,
        ),
    )
    return Summary(reports=tuple(ordered))


@dataclass(frozen=True)
class Summary:
    reports: tuple[EvaluationReport, ...]

    def averages(self) -> list[float]:
        return [r.average for r in self.reports]

    def to_dict(self) -> dict[str, Any]:
        return {"rows": [r.to_dict() for r in self.reports]}

    def render_text(self, glyphs: Optional[dict[int, str]] = None) -> str:
        def cell(score: int) -> str:
            return glyphs[score] if glyphs else str(score)

        headers = ["Difficulty", "ID", "Dataset", *DIMENSION_COLUMNS.values(), "Avg"]
        rows = [headers]
        for report in self.reports:
            rows.append(
                [
                    report.task.difficulty,
                    report.task.id,
                    dataset_label(report.task.dataset),
                    *[cell(s.score) for s in report.scores],
                    f"{report.average:.1f}",
                ]
            )
        widths = [max(len(row[i]) for row in rows) for i in range(len(headers))]
        lines = []
        for index, row in enumerate(rows):
            lines.append("  ".join(col.ljust(widths[i]) for i, col in enumerate(row)).rstrip())
            if index == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)
