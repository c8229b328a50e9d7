"""Manuscript writer: section drafting, figure inclusion, compile, polish.

Starts by clearing its own drafting state, collects only vision-approved
figures (rejected ones land in a skip report), drafts the five sections,
compiles with a configurable command template (run twice for references),
then validates source and rendered pages through the vision gateway. The
polish loop is capped: a blocking finding triggers a polish pass only while
the budget lasts, after which the run concludes with the findings on
record. The final source references approved figure files only.
"""

from __future__ import annotations

import re
import shlex
import shutil
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .bibtex import BibEntry, emit_bibtex
from .engine.graph import GraphBuilder
from .engine.runner import RunContext
from .engine.state import ArtifactId, NodeId, RouterDecision, SharedState, Verdict
from .errors import CompilerUnavailable, DanglingReference, ModelRefusal, UnknownLabel
from .literature import parse_citation_block
from .plan import SubtaskKind
from .providers.base import ChatRequest, Role
from .texcheck import check_source, count_pdf_pages, strip_comments
from .coder import SUMMARY_NAME

DEFAULT_MAX_POLISH = 2
PAGE_REVIEW_CAP = 30

SCRATCH_KEY = "writer"

SECTION_ORDER = ("introduction", "related_works", "methods", "experiments", "conclusion")
SECTION_TITLES = {
    "introduction": "Introduction",
    "related_works": "Related Works",
    "methods": "Methods",
    "experiments": "Experiments",
    "conclusion": "Conclusion",
}

_FIGURE_PLACEHOLDER = re.compile(r"\{\{figure:([^}]+)\}\}")
_ARTIFACT_PLACEHOLDER = re.compile(r"\{\{artifact:([^}]+)\}\}")
_FIG_REF = re.compile(r"\\ref\{(fig:[^}]+)\}")
_CITE_RE = re.compile(r"\\cite\{([^}]+)\}")
_LABEL_SANITIZE = re.compile(r"[^A-Za-z0-9:-]+")

_TEX_ESCAPES = {"&": r"\&", "%": r"\%", "#": r"\#", "_": r"\_", "$": r"\$"}


def tex_escape(text: str) -> str:
    return "".join(_TEX_ESCAPES.get(ch, ch) for ch in text)


@dataclass(frozen=True)
class FigureAsset:
    artifact: ArtifactId
    name: str
    caption: str
    label: str
    approved: bool
    verdict: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return {
            "artifact": self.artifact,
            "name": self.name,
            "caption": self.caption,
            "label": self.label,
            "approved": self.approved,
            "verdict": self.verdict,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FigureAsset:
        return cls(
            artifact=d["artifact"],
            name=d["name"],
            caption=d.get("caption", ""),
            label=d["label"],
            approved=bool(d.get("approved", False)),
            verdict=d.get("verdict", {}),
        )


@dataclass
class CompileResult:
    success: bool
    pdf: Optional[ArtifactId]
    log_tail: str
    error_lines: list[str]

    def __post_init__(self) -> None:
        assert self.success == (self.pdf is not None), "success iff pdf present"

    def to_dict(self) -> dict[str, Any]:
        return {
            "success": self.success,
            "pdf": self.pdf,
            "log_tail": self.log_tail,
            "error_lines": self.error_lines,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CompileResult:
        return cls(
            success=bool(d["success"]),
            pdf=d.get("pdf"),
            log_tail=d.get("log_tail", ""),
            error_lines=d.get("error_lines", []),
        )


@dataclass
class ManuscriptState:
    sections: dict[str, dict[str, Any]] = field(
        default_factory=lambda: {
            name: {"draft": "", "feedback": [], "history": []} for name in SECTION_ORDER
        }
    )
    figures: list[dict[str, Any]] = field(default_factory=list)
    skip_report: list[str] = field(default_factory=list)
    polish_count: int = 0
    compile: Optional[dict[str, Any]] = None
    pending_decision: Optional[dict[str, str]] = None
    items: list[dict[str, str]] = field(default_factory=list)
    stop_reason: str = ""
    manuscript_artifact: Optional[str] = None

    def assets(self) -> list[FigureAsset]:
        return [FigureAsset.from_dict(d) for d in self.figures]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sections": self.sections,
            "figures": self.figures,
            "skip_report": self.skip_report,
            "polish_count": self.polish_count,
            "compile": self.compile,
            "pending_decision": self.pending_decision,
            "items": self.items,
            "stop_reason": self.stop_reason,
            "manuscript_artifact": self.manuscript_artifact,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ManuscriptState:
        fresh = cls()
        fresh.sections = d.get("sections", fresh.sections)
        fresh.figures = d.get("figures", [])
        fresh.skip_report = d.get("skip_report", [])
        fresh.polish_count = int(d.get("polish_count", 0))
        fresh.compile = d.get("compile")
        fresh.pending_decision = d.get("pending_decision")
        fresh.items = d.get("items", [])
        fresh.stop_reason = d.get("stop_reason", "")
        fresh.manuscript_artifact = d.get("manuscript_artifact")
        return fresh


def load_manuscript(state: SharedState) -> Optional[ManuscriptState]:
    raw = state.scratch.get(SCRATCH_KEY)
    return ManuscriptState.from_dict(raw) if raw else None


def save_manuscript(state: SharedState, mstate: ManuscriptState) -> None:
    state.scratch[SCRATCH_KEY] = mstate.to_dict()


def reset_writer_state(state: SharedState) -> ManuscriptState:
    """State-clearing entry: fresh sections, zero polish counter, no figures.
    Only the writer's drafting context resets — the artifact store and the
    run-wide audit record stay untouched."""
    mstate = ManuscriptState()
    save_manuscript(state, mstate)
    return mstate


def collect_figures(state: SharedState, ctx: RunContext) -> list[FigureAsset]:
    """Exactly the figures whose latest vision verdict approves them;
    everything else lands in the skip report."""
    summary = state.artifact_by_name(SUMMARY_NAME)
    if summary is None:
        raise ValueError("collect_figures requires the coder summary artifact")
    import json as _json

    figure_ids = _json.loads(ctx.store.get_bytes(summary).decode("utf-8")).get("figures", [])

    mstate = load_manuscript(state) or reset_writer_state(state)
    assets: list[FigureAsset] = []
    taken: set[str] = set()
    for fig_id in figure_ids:
        artifact = state.artifacts.get(fig_id)
        if artifact is None:
            continue
        verdicts = artifact.verdicts()
        approved = artifact.approved()
        if not approved:
            mstate.skip_report.append(artifact.name)
            continue
        stem = _LABEL_SANITIZE.sub("-", Path(artifact.name).stem).strip("-")
        label = f"fig:{stem}"
        bump = 2
        while label in taken:
            label = f"fig:{stem}-{bump}"
            bump += 1
        taken.add(label)
        assets.append(
            FigureAsset(
                artifact=fig_id,
                name=artifact.name,
                caption=artifact.meta.get("caption", artifact.name),
                label=label,
                approved=True,
                verdict=verdicts[-1] if verdicts else {},
            )
        )
    mstate.figures = [a.to_dict() for a in assets]
    save_manuscript(state, mstate)
    return assets


def draft_section(
    state: SharedState, ctx: RunContext, name: str, feedback: list[str]
) -> str:
    """Draft one section; the fragment must balance its environments, and
    every figure placeholder/label must name a collected approved asset."""
    if name not in SECTION_ORDER:
        raise ValueError(f"unknown section {name!r}")
    mstate = load_manuscript(state)
    assert mstate is not None and ctx.gateway is not None
    assets = {a.name: a for a in mstate.assets()}
    labels = {a.label for a in mstate.assets()}

    context_names = sorted(
        a.name for a in state.artifacts.values() if a.kind in ("report", "summary", "dataset")
    )
    feedback_text = "\n".join(f"- {f}" for f in feedback) if feedback else "none"
    request = ChatRequest(
        system=(
            "You are the manuscript drafting agent. Write the LaTeX body for "
            "the requested section. Reference figures as "
            "\\includegraphics{{{figure:<name>}}} with \\ref{fig:...} labels, "
            "cite with \\cite{key}, and annotate result paragraphs with "
            "`% evidence: {{artifact:<name>}}` comments."
        ),
        messages=[
            {
                "role": "user",
                "content": (
                    f"section: {name}\navailable figures: "
                    f"{', '.join(assets) or 'none'}\n"
                    f"available artifacts: {', '.join(context_names) or 'none'}\n"
                    f"feedback to incorporate:\n{feedback_text}"
                ),
            }
        ],
    )
    exchange = ctx.gateway.chat(state, Role.WRITE, request)
    draft = exchange.response.text
    if not draft.strip():
        raise ModelRefusal(f"empty draft for section {name}")

    balance_errors = [
        e for e in check_source(draft, Path(".")) if "never closed" in e or "without matching" in e or "ended by" in e
    ]
    if balance_errors:
        raise ModelRefusal(f"section {name} has unbalanced environments: {balance_errors[0]}")

    for fig_name in _FIGURE_PLACEHOLDER.findall(draft):
        if fig_name not in assets:
            raise UnknownLabel(
                f"section {name} references figure {fig_name!r} which is not an approved asset"
            )
    for label in _FIG_REF.findall(strip_comments(draft)):
        if label not in labels:
            raise UnknownLabel(f"section {name} references undeclared label {label!r}")
    for art_name in _ARTIFACT_PLACEHOLDER.findall(draft):
        if state.artifact_by_name(art_name) is None:
            raise DanglingReference(
                f"section {name} evidence names unknown artifact {art_name!r}"
            )

    slot = mstate.sections[name]
    if slot["draft"]:
        slot["history"].append(slot["draft"])
    slot["draft"] = draft
    save_manuscript(state, mstate)
    return draft


def _bibliography_entries(state: SharedState, ctx: RunContext) -> list[BibEntry]:
    entries: list[BibEntry] = []
    for artifact in state.artifacts.values():
        if artifact.kind == "report" and artifact.meta.get("report_kind") == "literature":
            block = parse_citation_block(ctx.store.get_bytes(artifact).decode("utf-8"))
            for cited in block:
                fields = {
                    "author": " and ".join(cited.get("authors", ())),
                    "title": cited.get("title", ""),
                    "journal": cited.get("venue", ""),
                    "year": str(cited.get("year", "")),
                }
                doi = cited.get("identifier", {}).get("doi")
                if doi:
                    fields["doi"] = doi
                entries.append(BibEntry(key=cited["key"], fields=fields))
    return entries


def assemble_source(state: SharedState, ctx: RunContext) -> str:
    """Resolve placeholders and wrap the drafted sections in the article
    template; approved figures missing from the drafts are appended to the
    experiments section so every approved asset appears exactly once."""
    mstate = load_manuscript(state)
    assert mstate is not None
    assets = mstate.assets()
    by_name = {a.name: a for a in assets}

    referenced: set[str] = set()
    for slot in mstate.sections.values():
        referenced.update(_FIGURE_PLACEHOLDER.findall(slot["draft"]))

    def _artifact_id(name: str) -> str:
        artifact = state.artifact_by_name(name)
        if artifact is None:
            raise DanglingReference(f"evidence names unknown artifact {name!r}")
        return artifact.id

    def resolve(text: str) -> str:
        text = _FIGURE_PLACEHOLDER.sub(lambda m: f"figures/{m.group(1)}", text)
        return _ARTIFACT_PLACEHOLDER.sub(lambda m: _artifact_id(m.group(1)), text)

    title = "Automated Research Report"
    if state.plan is not None:
        title = state.plan.idea.statement
    lines = [
        r"\documentclass{article}",
        r"\usepackage{graphicx}",
        f"\\title{{{tex_escape(title)}}}",
        r"\begin{document}",
        r"\maketitle",
        "",
    ]
    for name in SECTION_ORDER:
        lines.append(f"\\section{{{SECTION_TITLES[name]}}}")
        lines.append("")
        lines.append(resolve(mstate.sections[name]["draft"]))
        if name == "experiments":
            for asset in assets:
                if asset.name in referenced:
                    continue
                lines.extend(
                    [
                        "",
                        r"\begin{figure}",
                        r"\centering",
                        f"% evidence: {asset.artifact}",
                        f"\\includegraphics[width=0.8\\linewidth]{{figures/{asset.name}}}",
                        f"\\caption{{{tex_escape(asset.caption)}}}",
                        f"\\label{{{asset.label}}}",
                        r"\end{figure}",
                    ]
                )
        lines.append("")
    lines.extend([r"\bibliographystyle{plain}", r"\bibliography{ref}", r"\end{document}", ""])
    return "\n".join(lines)


def compile_manuscript(state: SharedState, ctx: RunContext) -> CompileResult:
    """Write paper.tex / ref.bib / figures, then run the configured compiler
    command twice (for references) with a per-pass timeout."""
    mstate = load_manuscript(state)
    assert mstate is not None
    missing = [n for n in SECTION_ORDER if not mstate.sections[n]["draft"]]
    if missing:
        raise ValueError(f"sections not drafted yet: {', '.join(missing)}")

    out_dir = Path(ctx.run_dir) if ctx.run_dir is not None else Path(ctx.workspace or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    figures_dir = out_dir / "figures"
    figures_dir.mkdir(exist_ok=True)
    for asset in mstate.assets():
        artifact = state.artifacts[asset.artifact]
        (figures_dir / asset.name).write_bytes(ctx.store.get_bytes(artifact))

    source = assemble_source(state, ctx)
    tex_path = out_dir / "paper.tex"
    tex_path.write_text(source, encoding="utf-8")
    (out_dir / "ref.bib").write_text(
        emit_bibtex(_bibliography_entries(state, ctx)), encoding="utf-8"
    )

    template = ctx.setting(
        "latex_command", f"{sys.executable} -m labflow.texcheck {{tex}} {{pdf}}"
    )
    pdf_path = out_dir / "paper.pdf"
    argv = [
        part.format(tex=str(tex_path), pdf=str(pdf_path))
        for part in shlex.split(template)
    ]
    if shutil.which(argv[0]) is None and not Path(argv[0]).exists():
        raise CompilerUnavailable(f"compiler command {argv[0]!r} not found")

    timeout = float(ctx.setting("latex_timeout_s", 120.0))
    log_tail = ""
    returncode = 1
    for _pass in range(2):  # second pass settles references
        completed = subprocess.run(
            argv, cwd=out_dir, capture_output=True, text=True, timeout=timeout
        )
        log_tail = (completed.stdout + completed.stderr)[-16384:]
        returncode = completed.returncode
        if returncode != 0:
            break

    error_lines = [line for line in log_tail.splitlines() if line.startswith("! ")]
    success = returncode == 0 and pdf_path.is_file()
    pdf_id: Optional[str] = None
    if success:
        artifact = ctx.store.put(
            pdf_path.read_bytes(),
            kind="manuscript",
            name="paper.pdf",
            media_type="application/pdf",
        )
        state.add_artifact(artifact)
        pdf_id = artifact.id
        mstate.manuscript_artifact = pdf_id
    elif not error_lines:
        error_lines = [f"! Compile failed with exit status {returncode}."]

    result = CompileResult(
        success=success, pdf=pdf_id, log_tail=log_tail, error_lines=error_lines
    )
    mstate.compile = result.to_dict()
    save_manuscript(state, mstate)
    return result


def validate_manuscript(
    state: SharedState,
    ctx: RunContext,
    *,
    max_polish: int = DEFAULT_MAX_POLISH,
) -> dict[str, Any]:
    """Vision-review every rendered page (capped), lint the source, and
    decide: polish while blocking items remain and budget lasts, else end."""
    mstate = load_manuscript(state)
    assert mstate is not None
    if mstate.compile is None:
        raise ValueError("validate_manuscript requires a compile attempt")
    compile_result = CompileResult.from_dict(mstate.compile)
    items: list[dict[str, str]] = []

    if not compile_result.success:
        items.extend(
            {"severity": "blocking", "source": "compile", "detail": line}
            for line in compile_result.error_lines
        )
    else:
        assert ctx.gateway is not None and compile_result.pdf is not None
        pdf_artifact = state.artifacts[compile_result.pdf]
        pages = count_pdf_pages(ctx.store.get_bytes(pdf_artifact))
        for page in range(1, min(pages, PAGE_REVIEW_CAP) + 1):
            verdict = ctx.gateway.vision_review(
                state,
                pdf_artifact,
                rubric=(
                    f"Review rendered page {page} of {pages} for layout, figure "
                    "sizing, and readability."
                ),
            )
            for issue in verdict.issues:
                items.append(
                    {"severity": issue.severity, "source": f"page {page}", "detail": issue.description}
                )

        source = (Path(ctx.run_dir or ctx.workspace or ".") / "paper.tex").read_text(
            encoding="utf-8"
        )
        bib_keys = {e.key for e in _bibliography_entries(state, ctx)}
        cited = {
            key.strip()
            for group in _CITE_RE.findall(strip_comments(source))
            for key in group.split(",")
        }
        for key in sorted(cited - bib_keys):
            items.append(
                {"severity": "blocking", "source": "lint", "detail": f"citation key {key} missing from bibliography"}
            )
        if "Overfull" in compile_result.log_tail:
            items.append({"severity": "minor", "source": "lint", "detail": "overfull boxes in log"})

    mstate.items = items
    blocking = [i for i in items if i["severity"] == "blocking"]
    if not blocking:
        decision = RouterDecision(Verdict.END, "manuscript approved")
    elif mstate.polish_count < max_polish:
        mstate.polish_count += 1
        state.bump("polish_count")
        for slot in mstate.sections.values():
            slot["feedback"] = [i["detail"] for i in blocking]
        decision = RouterDecision(
            Verdict.POLISH,
            f"{len(blocking)} blocking items; polish pass {mstate.polish_count} of {max_polish}",
        )
    else:
        mstate.stop_reason = "polish_limit_reached"
        decision = RouterDecision(
            Verdict.END,
            f"polish limit reached with {len(blocking)} blocking items outstanding",
        )
    mstate.pending_decision = decision.to_dict()
    save_manuscript(state, mstate)
    return {"verdict": decision, "items": items}


# --- pipeline wiring ---------------------------------------------------------

NODE_COLLECT = "wr_collect"
NODE_WRITE = "wr_write"
NODE_VALIDATE = "wr_validate"
NODE_CONCLUDE = "wr_conclude"


def add_writer_pipeline(
    builder: GraphBuilder,
    *,
    exit_to: Optional[NodeId],
    max_polish: int = DEFAULT_MAX_POLISH,
) -> NodeId:
    """Wire collect figures -> write sections -> validator ->(router)->
    concluder or polish loop."""

    def collect(state: SharedState, ctx: RunContext) -> None:
        reset_writer_state(state)
        if state.plan is not None:
            writing = state.plan.subtasks_of(SubtaskKind.WRITING)
            if writing:
                state.subtask_index = max(state.subtask_index, writing[0].id)
        collect_figures(state, ctx)

    def write_sections(state: SharedState, ctx: RunContext) -> None:
        mstate = load_manuscript(state)
        assert mstate is not None
        for name in SECTION_ORDER:
            draft_section(state, ctx, name, mstate.sections[name]["feedback"])
            mstate = load_manuscript(state)
            assert mstate is not None

    def validate(state: SharedState, ctx: RunContext) -> None:
        compile_manuscript(state, ctx)
        validate_manuscript(state, ctx, max_polish=max_polish)

    def validate_decide(state: SharedState, ctx: RunContext) -> RouterDecision:
        mstate = load_manuscript(state)
        assert mstate is not None and mstate.pending_decision is not None
        decision = RouterDecision.from_dict(mstate.pending_decision)
        mstate.pending_decision = None
        save_manuscript(state, mstate)
        return decision

    def conclude(state: SharedState, ctx: RunContext) -> None:
        mstate = load_manuscript(state)
        assert mstate is not None
        compile_result = CompileResult.from_dict(mstate.compile) if mstate.compile else None
        # Completeness: a finished run yields a PDF artifact or a compile
        # failure with non-empty error lines — never neither.
        assert compile_result is not None
        assert compile_result.pdf is not None or compile_result.error_lines
        if mstate.manuscript_artifact:
            artifact = state.artifacts[mstate.manuscript_artifact]
            state.scratch.setdefault("outputs", {})[artifact.name] = artifact.id
            if state.plan is not None:
                writing = state.plan.subtasks_of(SubtaskKind.WRITING)
                if writing and writing[0].expected_outputs:
                    state.scratch["outputs"][
                        writing[0].expected_outputs[0].name
                    ] = artifact.id

    builder.add_node(NODE_COLLECT, collect)
    builder.add_node(NODE_WRITE, write_sections)
    builder.add_node(NODE_VALIDATE, validate)
    builder.add_node(NODE_CONCLUDE, conclude)
    builder.add_edge(NODE_COLLECT, NODE_WRITE)
    builder.add_edge(NODE_WRITE, NODE_VALIDATE)
    builder.add_router(
        NODE_VALIDATE, validate_decide, {"polish": NODE_WRITE, "end": NODE_CONCLUDE}
    )
    if exit_to is None:
        builder.add_exit(NODE_CONCLUDE)
    else:
        builder.add_edge(NODE_CONCLUDE, exit_to)
    return NODE_COLLECT


def build_writer_graph(max_polish: int = DEFAULT_MAX_POLISH):
    builder = GraphBuilder()
    entry = add_writer_pipeline(builder, exit_to=None, max_polish=max_polish)
    builder.set_entry(entry)
    return builder.build()
